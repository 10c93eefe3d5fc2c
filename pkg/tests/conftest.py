import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / 'packages'))

from opdomain.core import DiagonalSpec, OperatorSpec  # noqa: E402

EXAMPLES = ROOT / 'data' / 'examples'


@pytest.fixture
def examples_dir() -> Path:
    return EXAMPLES


@pytest.fixture
def c_k() -> DiagonalSpec:
    """The default diagonal ``c_k = k``."""
    return DiagonalSpec.from_expression('k')


@pytest.fixture
def jacobi_k() -> OperatorSpec:
    """Unbounded Jacobi matrix ``a_{k,k+1} = a_{k+1,k} = k``."""
    return OperatorSpec.family('jacobi', diag='0', offdiag='k', symmetry='hermitian')


@pytest.fixture
def free_jacobi() -> OperatorSpec:
    return OperatorSpec.family('jacobi', diag='0', offdiag='1', symmetry='hermitian')
