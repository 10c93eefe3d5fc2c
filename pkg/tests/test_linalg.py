import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from scipy import sparse

from opdomain.core import DiagonalSpec, OperatorSpec, Window
from opdomain.errors import ContractViolation, PreconditionError, SingularResolventError
from opdomain.linalg import (
    BANDED_EIG,
    EXHAUSTIVE_SVD,
    POWER_ITERATION,
    herm_eig_bounds,
    norm_curve,
    op_norm,
    pencil_bound,
    resolvent_diag,
    schur_bound,
)


def test_small_sections_use_the_svd():
    estimate = op_norm(np.diag([3.0, -5.0, 1.0]))
    assert estimate.value == pytest.approx(5.0)
    assert estimate.method == EXHAUSTIVE_SVD
    assert estimate.converged


def test_sparse_banded_sections_use_the_banded_eigensolver():
    m = sparse.diags(np.arange(1.0, 201.0)).tocsr()
    estimate = op_norm(m)
    assert estimate.method == BANDED_EIG
    assert estimate.value == pytest.approx(200.0)


def test_power_iteration_agrees_with_the_svd():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((100, 100))
    estimate = op_norm(m, method=POWER_ITERATION)
    assert estimate.method == POWER_ITERATION
    assert estimate.value == pytest.approx(scipy.linalg.svdvals(m)[0], rel=1e-6)


def test_empty_and_invalid_input():
    assert op_norm(np.zeros((0, 3))).value == 0.0
    with pytest.raises(PreconditionError):
        op_norm(np.eye(2), tol=0)
    with pytest.raises(PreconditionError):
        op_norm(np.array([[np.inf]]))


def _band(seed: int, size: int, p: int) -> sparse.csr_matrix:
    rng = np.random.default_rng(seed)
    offsets = list(range(-p, p + 1))
    diagonals = [rng.standard_normal(size - abs(o)) + 1j * rng.standard_normal(size - abs(o)) for o in offsets]
    return sparse.diags(diagonals, offsets, shape=(size, size), format='csr')


band_cases = st.tuples(st.integers(0, 2 ** 16), st.integers(8, 160), st.integers(1, 3))


@settings(max_examples=30, deadline=None)
@given(band_cases)
def test_norm_is_invariant_under_the_adjoint(case):
    m = _band(*case)
    assert op_norm(m).value == pytest.approx(op_norm(m.conj().T.tocsr()).value, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(band_cases, st.integers(0, 2 ** 16))
def test_norm_is_submultiplicative(case, other_seed):
    seed, size, p = case
    a, b = _band(seed, size, p), _band(other_seed, size, p)
    product = op_norm((a @ b).tocsr()).value
    assert product <= op_norm(a).value * op_norm(b).value * (1 + 1e-8)


def test_free_jacobi_norm_curve(free_jacobi):
    curve = norm_curve(free_jacobi, [16, 32, 100])
    for point in curve:
        assert point.norm == pytest.approx(2 * math.cos(math.pi / (point.window + 1)), abs=1e-10)


def test_unbanded_curve_drops_oversized_windows():
    spec = OperatorSpec.from_expression('1/(k+l)')
    curve = norm_curve(spec, [8, 4096])
    assert [p.window for p in curve] == [8]


def test_herm_eig_bounds():
    assert herm_eig_bounds(np.diag([-1.0, 3.0])) == pytest.approx((-1.0, 3.0))
    with pytest.raises(ContractViolation):
        herm_eig_bounds(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_pencil_bound():
    assert pencil_bound(np.diag([1.0, 2.0]), np.diag([2.0, 1.0])) == pytest.approx(2.0)
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert pencil_bound(a, a) == 1.0
    assert pencil_bound(np.diag([0.0, 1.0]), np.diag([1.0, 0.0])) is None
    assert pencil_bound(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0


def test_pencil_rejects_indefinite_or_non_hermitian_input():
    with pytest.raises(ContractViolation):
        pencil_bound(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(ContractViolation):
        pencil_bound(np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2))


def test_resolvent_diag(c_k):
    np.testing.assert_allclose(resolvent_diag(c_k, 1j, Window.leading(3)), 1 / (np.arange(1, 4) - 1j))
    with pytest.raises(SingularResolventError):
        resolvent_diag(c_k, 2.0, Window.leading(3))


def test_schur_bound_on_a_nonnegative_band(free_jacobi):
    bound = schur_bound(free_jacobi, None, Window.leading(128))
    assert bound.conclusive
    assert bound.value == pytest.approx(2.0)


def test_schur_bound_needs_a_nonnegative_kernel():
    kernel = OperatorSpec.family('jacobi', diag='0', offdiag='-1')
    with pytest.raises(PreconditionError):
        schur_bound(kernel, None, Window.leading(16))


def test_schur_bound_flags_growing_sums(jacobi_k):
    bound = schur_bound(jacobi_k, None, Window.leading(128))
    assert not bound.conclusive
    assert 'divergent' in bound.note
