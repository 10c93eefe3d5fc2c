"""
Infinite matrices on l2(N), truncation windows and exact finite sections.

Indices follow l2(N) with N = {1, 2, ...}: a :class:`Window` ``[lo, hi]``
refers to rows/columns ``lo..hi`` inclusive and section arrays are stored
0-based with ``lo`` as the offset.

Banded specs are sectioned sparsely (CSR), only the band is evaluated.
Unbanded specs are evaluated densely, up to :data:`DENSE_LIMIT` indices per
side.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from opdomain import exprlang
from opdomain.errors import (
    EvaluationError,
    ExactnessError,
    PreconditionError,
)

logger = logging.getLogger(__name__)

INDEX_BASE = 1
DENSE_LIMIT = 2048          # max rows/cols of a dense section of an unbanded spec
SPOT_CHECK_SAMPLES = 256
NEAR_BAND_DIAGONALS = 8
HERMITIAN_RTOL = 1e-14

DenseMatrix = np.ndarray
Section = Union[np.ndarray, sparse.spmatrix]


class Symmetry(str, Enum):
    NONE = 'none'
    HERMITIAN = 'hermitian'
    REAL = 'real'


@dataclass(frozen=True)
class Window:
    """
    A square truncation region ``[lo, hi] x [lo, hi]`` of index space.

    :param lo: First index (>= 1).
    :param hi: Last index, inclusive.
    :param pad: Extra indices used so interior products are exact. ``None``
                means "the declared bandwidth of the banded factor".
    """

    lo: int
    hi: int
    pad: Optional[int] = None

    def __post_init__(self) -> None:
        if self.lo < INDEX_BASE:
            raise PreconditionError(f'window starts at {self.lo}, indices start at 1')
        if self.lo > self.hi:
            raise PreconditionError(f'empty window [{self.lo}, {self.hi}]')
        if self.pad is not None and self.pad < 0:
            raise PreconditionError(f'negative pad {self.pad}')

    @classmethod
    def leading(cls, size: int, pad: Optional[int] = None) -> 'Window':
        """The window ``[1, size]``."""
        return cls(INDEX_BASE, size, pad)

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def bounds(self) -> Tuple[int, int]:
        return self.lo, self.hi

    def indices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)


# --------------------------------------------------------------------------
# Entry generators
# --------------------------------------------------------------------------

class EntryGen(ABC):
    """Deterministic map ``(k, l) -> a_{k,l}`` over N x N."""

    kind = 'family'

    @property
    def bandwidth(self) -> Optional[int]:
        """Structural bandwidth, when the generator knows it."""
        return None

    @abstractmethod
    def evaluate(self, k: np.ndarray, l: np.ndarray) -> np.ndarray:
        """Vectorised evaluation over broadcast-compatible index arrays."""

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        kk, ll = np.meshgrid(rows, cols, indexing='ij')
        return self.evaluate(kk, ll)

    def sparse_block(
        self, r0: int, r1: int, c0: int, c1: int
    ) -> Optional[sparse.spmatrix]:
        """Optional fast path for banded sections; ``None`` means not provided."""
        return None

    def __call__(self, k: int, l: int) -> complex:
        return complex(self.evaluate(np.array([k]), np.array([l]))[0])


def _sequence(source: Union[str, float, int], name: str) -> exprlang.Expr:
    expr = exprlang.parse(str(source))
    extra = exprlang.free_variables(expr) - {'k'}
    if extra:
        raise PreconditionError(
            f'parameter {name!r} may only use the variable k, found {sorted(extra)}'
        )
    return expr


def _eval_sequence(expr: exprlang.Expr, k: np.ndarray) -> np.ndarray:
    if k.size == 0:
        return np.zeros(k.shape, dtype=np.complex128)
    return np.asarray(exprlang.evaluate(expr, {'k': k}), dtype=np.complex128) * np.ones(k.shape)


def _as_index_arrays(k, l) -> Tuple[np.ndarray, np.ndarray]:
    k, l = np.broadcast_arrays(np.asarray(k, dtype=np.int64), np.asarray(l, dtype=np.int64))
    return k, l


@dataclass(frozen=True)
class ZeroGen(EntryGen):
    @property
    def bandwidth(self) -> Optional[int]:
        return 0

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        return np.zeros(k.shape, dtype=np.complex128)


@dataclass(frozen=True)
class IdentityGen(EntryGen):
    @property
    def bandwidth(self) -> Optional[int]:
        return 0

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        return (k == l).astype(np.complex128)


@dataclass(frozen=True)
class DiagonalGen(EntryGen):
    """``a_{k,k} = c(ceil(k / block))``, zero elsewhere."""

    c: Union[str, float] = 'k'
    block: int = 1
    _expr: exprlang.Expr = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.block < 1:
            raise PreconditionError(f'diagonal block size must be >= 1, got {self.block}')
        object.__setattr__(self, '_expr', _sequence(self.c, 'c'))

    @property
    def bandwidth(self) -> Optional[int]:
        return 0

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        out = np.zeros(k.shape, dtype=np.complex128)
        mask = k == l
        out[mask] = _eval_sequence(self._expr, (k[mask] - 1) // self.block + 1)
        return out


@dataclass(frozen=True)
class JacobiGen(EntryGen):
    """Tridiagonal ``a_{k,k} = diag(k)``, ``a_{k,k+1} = a_{k+1,k} = offdiag(k)``."""

    diag: Union[str, float] = '0'
    offdiag: Union[str, float] = '1'
    _diag: exprlang.Expr = field(init=False, repr=False, compare=False)
    _off: exprlang.Expr = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, '_diag', _sequence(self.diag, 'diag'))
        object.__setattr__(self, '_off', _sequence(self.offdiag, 'offdiag'))

    @property
    def bandwidth(self) -> Optional[int]:
        return 1

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        out = np.zeros(k.shape, dtype=np.complex128)
        on = k == l
        up = l == k + 1
        down = k == l + 1
        out[on] = _eval_sequence(self._diag, k[on])
        out[up] = _eval_sequence(self._off, k[up])
        out[down] = _eval_sequence(self._off, l[down])
        return out


@dataclass(frozen=True)
class ShiftGen(EntryGen):
    """Single off-diagonal ``a_{k,k+offset} = weight(k)``."""

    weight: Union[str, float] = '1'
    offset: int = 1
    _weight: exprlang.Expr = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, '_weight', _sequence(self.weight, 'weight'))

    @property
    def bandwidth(self) -> Optional[int]:
        return abs(self.offset)

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        out = np.zeros(k.shape, dtype=np.complex128)
        mask = l == k + self.offset
        out[mask] = _eval_sequence(self._weight, k[mask])
        return out


@dataclass(frozen=True)
class PowerBandGen(EntryGen):
    """
    The extremal matrix of the power-decay bound::

        a_{k,l} = d (1 + k + l) / |k - l|^alpha   (k != l)
        a_{k,k} = d (k + 1)^s
    """

    d: float = 1.0
    s: float = 0.0
    alpha: float = 3.0

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        kf = k.astype(float)
        lf = l.astype(float)
        gap = np.abs(kf - lf)
        with np.errstate(divide='ignore', invalid='ignore'):
            off = self.d * (1.0 + kf + lf) / gap ** self.alpha
        on = self.d * (kf + 1.0) ** self.s
        return np.where(k == l, on, off).astype(np.complex128)


@dataclass(frozen=True)
class AntidiagonalBlockGen(EntryGen):
    """
    Block-diagonal matrix whose blocks are ``sign * J`` with ``J`` the
    anti-diagonal identity. Block sizes and signs repeat cyclically.
    """

    sizes: Tuple[int, ...] = (2,)
    signs: Tuple[int, ...] = (1,)
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _cycle_sizes: np.ndarray = field(init=False, repr=False, compare=False)
    _cycle_signs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.sizes)
        signs = tuple(int(s) for s in self.signs)
        if not sizes or min(sizes) < 1:
            raise PreconditionError(f'block sizes must be positive, got {sizes}')
        if not signs or any(s not in (-1, 1) for s in signs):
            raise PreconditionError(f'block signs must be +1 or -1, got {signs}')
        object.__setattr__(self, 'sizes', sizes)
        object.__setattr__(self, 'signs', signs)
        cycle = len(sizes) * len(signs) // math.gcd(len(sizes), len(signs))
        cycle_sizes = np.array([sizes[j % len(sizes)] for j in range(cycle)])
        cycle_signs = np.array([signs[j % len(signs)] for j in range(cycle)])
        object.__setattr__(self, '_cycle_sizes', cycle_sizes)
        object.__setattr__(self, '_cycle_signs', cycle_signs)
        object.__setattr__(self, '_starts', np.concatenate(([0], np.cumsum(cycle_sizes))))

    @property
    def bandwidth(self) -> Optional[int]:
        return max(self.sizes) - 1

    def _locate(self, idx: np.ndarray):
        period = int(self._starts[-1])
        q, r = np.divmod(idx - 1, period)
        b = np.searchsorted(self._starts, r, side='right') - 1
        start = q * period + self._starts[b]
        return q * len(self._cycle_sizes) + b, start, self._cycle_sizes[b], self._cycle_signs[b]

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        block_k, start, size, sign = self._locate(k)
        block_l = self._locate(l)[0]
        hit = (block_k == block_l) & ((k - 1 - start) + (l - 1 - start) == size - 1)
        return np.where(hit, sign, 0).astype(np.complex128)


@dataclass(frozen=True)
class BlockConstantGen(EntryGen):
    """Block-diagonal matrix with constant ``value`` on blocks of ``size``."""

    size: int = 2
    value: complex = 1.0

    def __post_init__(self) -> None:
        if self.size < 1:
            raise PreconditionError(f'block size must be >= 1, got {self.size}')

    @property
    def bandwidth(self) -> Optional[int]:
        return self.size - 1

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        same = (k - 1) // self.size == (l - 1) // self.size
        return np.where(same, complex(self.value), 0).astype(np.complex128)


@dataclass(frozen=True)
class TableGen(EntryGen):
    """Explicit finite table with zero tail; ``values[0, 0]`` is ``a_{1,1}``."""

    values: np.ndarray
    kind = 'table'

    def __post_init__(self) -> None:
        table = np.array(self.values, dtype=np.complex128, copy=True)
        if table.ndim != 2:
            raise PreconditionError('table must be two-dimensional')
        if not np.all(np.isfinite(table)):
            raise PreconditionError('table entries must be finite')
        table.setflags(write=False)
        object.__setattr__(self, 'values', table)

    @classmethod
    def from_entries(
        cls, entries: Sequence[Tuple[int, int, complex]]
    ) -> 'TableGen':
        rows = max((k for k, _, _ in entries), default=0)
        cols = max((l for _, l, _ in entries), default=0)
        table = np.zeros((rows, cols), dtype=np.complex128)
        for k, l, value in entries:
            if k < INDEX_BASE or l < INDEX_BASE:
                raise PreconditionError(f'table index ({k}, {l}) outside N x N')
            table[k - 1, l - 1] = value
        return cls(table)

    @property
    def bandwidth(self) -> Optional[int]:
        rows, cols = np.nonzero(self.values)
        return int(np.max(np.abs(rows - cols))) if rows.size else 0

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        out = np.zeros(k.shape, dtype=np.complex128)
        rows, cols = self.values.shape
        inside = (k >= 1) & (l >= 1) & (k <= rows) & (l <= cols)
        out[inside] = self.values[k[inside] - 1, l[inside] - 1]
        return out

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TableGen) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class ExpressionGen(EntryGen):
    """Entries given by an expression in ``k`` and ``l``."""

    source: str
    kind = 'expression'
    _expr: exprlang.Expr = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        expr = exprlang.parse(self.source)
        extra = exprlang.free_variables(expr) - {'k', 'l'}
        if extra:
            raise PreconditionError(
                f'entry expression may only use k and l, found {sorted(extra)}'
            )
        object.__setattr__(self, '_expr', expr)

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        if k.size == 0:
            return np.zeros(k.shape, dtype=np.complex128)
        value = exprlang.evaluate(self._expr, {'k': k, 'l': l})
        return np.asarray(value, dtype=np.complex128) * np.ones(k.shape)


@dataclass(frozen=True)
class FunctionGen(EntryGen):
    """Derived generator wrapping a vectorised callable (kernels, weights)."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    label: str = 'derived'
    band: Optional[int] = None
    kind = 'derived'

    @property
    def bandwidth(self) -> Optional[int]:
        return self.band

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        return np.asarray(self.fn(k, l), dtype=np.complex128) * np.ones(k.shape)


def _gather(block: sparse.spmatrix, k: np.ndarray, l: np.ndarray, r0: int, c0: int) -> np.ndarray:
    if k.size == 0:
        return np.zeros(k.shape, dtype=np.complex128)
    csr = sparse.csr_matrix(block)
    picked = np.asarray(csr[(k - r0).ravel(), (l - c0).ravel()]).ravel()
    return picked.astype(np.complex128).reshape(k.shape)


@dataclass(frozen=True)
class ProductGen(EntryGen):
    """Entries of the product of banded operators, computed exactly."""

    factors: Tuple['OperatorSpec', ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'factors', tuple(self.factors))
        if not self.factors:
            raise PreconditionError('product needs at least one factor')
        if any(not f.banded for f in self.factors):
            raise ExactnessError('no exactness certificate: product factors must be banded')

    @property
    def bandwidth(self) -> Optional[int]:
        return sum(f.bandwidth for f in self.factors)

    def sparse_block(self, r0, r1, c0, c1):
        if len(self.factors) == 1:
            return section(self.factors[0], (r0, r1), (c0, c1), sparse_output=True)
        reach = self.bandwidth
        inner = (max(INDEX_BASE, min(r0, c0) - reach), max(r1, c1) + reach)
        result = section(self.factors[0], (r0, r1), inner, sparse_output=True)
        for middle in self.factors[1:-1]:
            result = result @ section(middle, inner, inner, sparse_output=True)
        return sparse.csr_matrix(
            result @ section(self.factors[-1], inner, (c0, c1), sparse_output=True)
        )

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        if k.size == 0:
            return np.zeros(k.shape, dtype=np.complex128)
        r0, r1, c0, c1 = int(k.min()), int(k.max()), int(l.min()), int(l.max())
        return _gather(self.sparse_block(r0, r1, c0, c1), k, l, r0, c0)


@dataclass(frozen=True)
class SumGen(EntryGen):
    """Entrywise sum of operator specs."""

    terms: Tuple['OperatorSpec', ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'terms', tuple(self.terms))
        if not self.terms:
            raise PreconditionError('sum needs at least one term')

    @property
    def bandwidth(self) -> Optional[int]:
        if all(t.banded for t in self.terms):
            return max(t.bandwidth for t in self.terms)
        return None

    def sparse_block(self, r0, r1, c0, c1):
        if self.bandwidth is None:
            return None
        total = None
        for term in self.terms:
            part = section(term, (r0, r1), (c0, c1), sparse_output=True)
            total = part if total is None else total + part
        return sparse.csr_matrix(total)

    def evaluate(self, k, l):
        k, l = _as_index_arrays(k, l)
        total = np.zeros(k.shape, dtype=np.complex128)
        for term in self.terms:
            total = total + term.values(k, l)
        return total


FAMILIES: Dict[str, Callable[..., EntryGen]] = {
    'zero': ZeroGen,
    'identity': IdentityGen,
    'diagonal': DiagonalGen,
    'jacobi': JacobiGen,
    'shift': ShiftGen,
    'power-band': PowerBandGen,
    'antidiagonal-block': AntidiagonalBlockGen,
    'block-constant': BlockConstantGen,
    'product': ProductGen,
    'sum': SumGen,
}


def make_family(name: str, **params) -> EntryGen:
    """
    Build a built-in generator family by name.

    :param name: One of :data:`FAMILIES`.
    :param params: Family parameters.
    :raises PreconditionError: Unknown family or bad parameters.
    """
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise PreconditionError(
            f'unknown family {name!r}; known: {", ".join(sorted(FAMILIES))}'
        ) from None
    if name == 'antidiagonal-block':
        params = {key: tuple(value) for key, value in params.items()}
    try:
        return factory(**params)
    except TypeError as exc:
        raise PreconditionError(f'bad parameters for family {name!r}: {exc}') from None


# --------------------------------------------------------------------------
# Operator specs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorSpec:
    """
    An infinite matrix given by an entry generator plus structural metadata.

    :param entries: The generator of ``a_{k,l}``.
    :param bandwidth: Declared ``p`` with ``a_{k,l} = 0`` for ``|k-l| > p``;
                      defaults to the generator's structural bandwidth.
    :param declared_symmetry: ``none``, ``hermitian`` or ``real``.
    :param label: Name used in reports.
    """

    entries: EntryGen
    bandwidth: Optional[int] = None
    declared_symmetry: Symmetry = Symmetry.NONE
    label: str = ''

    def __post_init__(self) -> None:
        if self.bandwidth is None and self.entries.bandwidth is not None:
            object.__setattr__(self, 'bandwidth', self.entries.bandwidth)
        if self.bandwidth is not None and self.bandwidth < 0:
            raise PreconditionError(f'negative bandwidth {self.bandwidth}')
        object.__setattr__(self, 'declared_symmetry', Symmetry(self.declared_symmetry))

    @property
    def banded(self) -> bool:
        return self.bandwidth is not None

    @classmethod
    def family(
        cls,
        name: str,
        *,
        symmetry: Union[str, Symmetry] = Symmetry.NONE,
        bandwidth: Optional[int] = None,
        **params,
    ) -> 'OperatorSpec':
        return cls(make_family(name, **params), bandwidth, Symmetry(symmetry), label=name)

    @classmethod
    def from_array(
        cls,
        matrix: np.ndarray,
        *,
        bandwidth: Optional[int] = None,
        symmetry: Union[str, Symmetry] = Symmetry.NONE,
        label: str = 'table',
    ) -> 'OperatorSpec':
        """Finite table (zero tail) taken from ``matrix[k-1, l-1]``."""
        return cls(TableGen(np.asarray(matrix)), bandwidth, Symmetry(symmetry), label)

    @classmethod
    def from_expression(
        cls,
        source: str,
        *,
        bandwidth: Optional[int] = None,
        symmetry: Union[str, Symmetry] = Symmetry.NONE,
    ) -> 'OperatorSpec':
        return cls(ExpressionGen(source), bandwidth, Symmetry(symmetry), label=source)

    def values(self, k, l) -> np.ndarray:
        """
        Raw entries ``a_{k,l}`` at the given indices.

        :raises EvaluationError: Naming the first offending ``(k, l)`` when the
                                 generator fails or returns a non-finite value.
        """
        k, l = _as_index_arrays(k, l)
        try:
            vals = np.asarray(self.entries.evaluate(k, l), dtype=np.complex128)
        except EvaluationError as exc:
            if exc.index is None and {'k', 'l'} <= exc.bindings.keys():
                index = (int(exc.bindings['k'].real), int(exc.bindings['l'].real))
                raise EvaluationError(exc.message, exc.bindings, index) from None
            raise
        bad = ~np.isfinite(vals)
        if np.any(bad):
            first = tuple(np.argwhere(bad)[0])
            raise EvaluationError(
                'non-finite entry', index=(int(k[first]), int(l[first]))
            )
        return vals

    def __call__(self, k: int, l: int) -> complex:
        return complex(self.values(np.array([k]), np.array([l]))[0])


def identity_spec() -> OperatorSpec:
    return OperatorSpec(IdentityGen(), 0, Symmetry.HERMITIAN, 'identity')


def adjoint(spec: OperatorSpec) -> OperatorSpec:
    """The conjugate transpose ``a*_{k,l} = conj(a_{l,k})``."""
    return OperatorSpec(
        FunctionGen(lambda k, l: np.conj(spec.values(l, k)), f'{spec.label}^H', spec.bandwidth),
        spec.bandwidth,
        spec.declared_symmetry,
        f'{spec.label}^H' if spec.label else '',
    )


@dataclass(frozen=True)
class PairingSpec:
    """
    The Gram pair ``(H, G)`` with ``G = H^-1`` a band matrix.

    :param h: Generator of ``h_{k,l}``.
    :param g: Generator of ``g_{k,l}``.
    :param p: Declared bandwidth of ``g``.
    :param s_g: Declared ``sup |g_{k,l}|``, if known.
    :param h_bandwidth: Bandwidth of ``h``; ``None`` means unbanded.
    """

    h: EntryGen
    g: EntryGen
    p: int
    s_g: Optional[float] = None
    h_bandwidth: Optional[int] = None

    def __post_init__(self) -> None:
        if self.p < 0:
            raise PreconditionError(f'negative pairing bandwidth {self.p}')
        if self.h_bandwidth is None and self.h.bandwidth is not None:
            object.__setattr__(self, 'h_bandwidth', self.h.bandwidth)

    @classmethod
    def identity(cls) -> 'PairingSpec':
        return cls(IdentityGen(), IdentityGen(), 0, 1.0, 0)

    @classmethod
    def involution(cls, gen: EntryGen, s_g: Optional[float] = None) -> 'PairingSpec':
        """``H = G`` for a banded generator squaring to the identity."""
        if gen.bandwidth is None:
            raise PreconditionError('an involutive pairing needs a banded generator')
        return cls(gen, gen, gen.bandwidth, s_g, gen.bandwidth)

    @property
    def h_spec(self) -> OperatorSpec:
        return OperatorSpec(self.h, self.h_bandwidth, Symmetry.HERMITIAN, 'H')

    @property
    def g_spec(self) -> OperatorSpec:
        return OperatorSpec(self.g, self.p, Symmetry.HERMITIAN, 'G')


@dataclass(frozen=True)
class DiagonalSpec:
    """A real sequence ``c_k`` read off the diagonal of a generator."""

    entries: EntryGen

    @classmethod
    def from_expression(cls, source: Union[str, float] = 'k', block: int = 1) -> 'DiagonalSpec':
        return cls(DiagonalGen(source, block))

    @classmethod
    def from_values(cls, values: Sequence[float]) -> 'DiagonalSpec':
        """Finite sequence with zero tail."""
        return cls(TableGen(np.diag(np.asarray(values, dtype=float))))

    def values(self, k) -> np.ndarray:
        """
        Sequence values at indices ``k``.

        :raises EvaluationError: Non-finite value.
        :raises PreconditionError: Value with a nonzero imaginary part.
        """
        k = np.asarray(k, dtype=np.int64)
        raw = OperatorSpec(self.entries).values(k, k)
        if np.any(np.abs(raw.imag) > HERMITIAN_RTOL * np.maximum(1.0, np.abs(raw.real))):
            first = int(k.ravel()[np.argmax(np.abs(raw.imag).ravel())])
            raise PreconditionError(f'diagonal sequence is not real at k = {first}')
        return raw.real.copy()

    def on(self, w: Window) -> np.ndarray:
        return self.values(w.indices())

    def as_operator(self) -> OperatorSpec:
        return OperatorSpec(
            FunctionGen(lambda k, l: np.where(k == l, self.values(k), 0.0), 'diagonal', 0),
            0,
            Symmetry.HERMITIAN,
            'S',
        )


# --------------------------------------------------------------------------
# Sections
# --------------------------------------------------------------------------

def _band_coordinates(
    r0: int, r1: int, c0: int, c1: int, p: int
) -> Tuple[np.ndarray, np.ndarray]:
    ks: List[np.ndarray] = []
    ls: List[np.ndarray] = []
    for offset in range(max(-p, c0 - r1), min(p, c1 - r0) + 1):
        k_lo = max(r0, c0 - offset)
        k_hi = min(r1, c1 - offset)
        if k_lo <= k_hi:
            k = np.arange(k_lo, k_hi + 1)
            ks.append(k)
            ls.append(k + offset)
    if not ks:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(ks), np.concatenate(ls)


def section(
    spec: OperatorSpec,
    rows: Tuple[int, int],
    cols: Tuple[int, int],
    *,
    sparse_output: Optional[bool] = None,
) -> Section:
    """
    Entries of ``spec`` on the rectangle ``rows x cols`` (inclusive bounds).

    :param sparse_output: ``True`` for CSR, ``False`` for a dense array,
                          ``None`` for CSR exactly when the spec is banded.
    :raises PreconditionError: Dense evaluation beyond :data:`DENSE_LIMIT`.
    """
    r0, r1 = rows
    c0, c1 = cols
    shape = (r1 - r0 + 1, c1 - c0 + 1)
    if sparse_output is None:
        sparse_output = spec.banded
    if spec.banded:
        block = spec.entries.sparse_block(r0, r1, c0, c1)
        if block is None:
            k, l = _band_coordinates(r0, r1, c0, c1, spec.bandwidth)
            vals = spec.values(k, l)
            keep = vals != 0
            block = sparse.coo_matrix(
                (vals[keep], (k[keep] - r0, l[keep] - c0)), shape=shape
            ).tocsr()
        else:
            # clip to the declared band so sections agree with the declaration
            coo = sparse.coo_matrix(block)
            keep = np.abs((coo.row + r0) - (coo.col + c0)) <= spec.bandwidth
            block = sparse.coo_matrix(
                (coo.data[keep], (coo.row[keep], coo.col[keep])), shape=shape
            ).tocsr()
        return block if sparse_output else block.toarray()
    if max(shape) > DENSE_LIMIT:
        raise PreconditionError(
            f'dense section {shape} of an unbanded operator exceeds {DENSE_LIMIT}'
        )
    kk, ll = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing='ij')
    dense = spec.values(kk, ll)
    return sparse.csr_matrix(dense) if sparse_output else dense


def truncate(spec: OperatorSpec, w: Window) -> DenseMatrix:
    """
    The finite section ``[a_{k,l}]`` for ``k, l`` in ``[lo, hi]``, as a dense
    array.
    """
    return section(spec, w.bounds, w.bounds, sparse_output=False)


def truncate_sparse(spec: OperatorSpec, w: Window) -> sparse.csr_matrix:
    """The finite section as CSR; banded specs only evaluate their band."""
    return section(spec, w.bounds, w.bounds, sparse_output=True)


def exact_product_window(
    a: OperatorSpec,
    b: OperatorSpec,
    w: Window,
    *,
    sparse_output: bool = False,
) -> Section:
    """
    The product ``AB`` restricted to ``w``, equal to the infinite product there.

    A banded factor of width ``p`` limits each entry to at most ``2p + 1``
    terms, all inside the padded index range ``[lo - pad, hi + pad]``.

    :raises ExactnessError: Neither factor is banded.
    :raises PreconditionError: ``w.pad`` smaller than the bandwidth.
    """
    widths = [p for p in (a.bandwidth, b.bandwidth) if p is not None]
    if not widths:
        raise ExactnessError('no exactness certificate: both factors are unbanded')
    p = min(widths)
    pad = p if w.pad is None else w.pad
    if pad < p:
        raise PreconditionError(f'pad {pad} is smaller than the bandwidth {p}')
    inner = (max(INDEX_BASE, w.lo - pad), w.hi + pad)
    left = section(a, w.bounds, inner)
    right = section(b, inner, w.bounds)
    product = left @ right
    if sparse.issparse(product):
        return sparse.csr_matrix(product) if sparse_output else product.toarray()
    product = np.asarray(product)
    return sparse.csr_matrix(product) if sparse_output else product


def hermitian_defect(matrix: Section) -> float:
    """``max|M - M^H| / max(1, max|M|)``."""
    diff = matrix - matrix.conj().T
    if sparse.issparse(diff):
        worst = abs(diff).max() if diff.nnz else 0.0
        scale = abs(matrix).max() if matrix.nnz else 0.0
    else:
        worst = float(np.max(np.abs(diff))) if diff.size else 0.0
        scale = float(np.max(np.abs(matrix))) if matrix.size else 0.0
    return float(worst) / max(1.0, float(scale))


def spot_check(
    spec: OperatorSpec,
    w: Window,
    *,
    samples: int = SPOT_CHECK_SAMPLES,
    seed: int = 0,
) -> List[str]:
    """
    Sample the declared bandwidth and symmetry of ``spec`` on ``w``.

    :return: Human readable violations; empty when none were found.
    """
    rng = np.random.default_rng(seed)
    k = rng.integers(w.lo, w.hi + 1, size=samples)
    l = rng.integers(w.lo, w.hi + 1, size=samples)
    problems: List[str] = []
    if spec.banded:
        offsets = rng.integers(0, max(1, w.size), size=samples)
        # half the samples sit on the diagonals just outside the band
        offsets[::2] = np.arange(offsets[::2].size) % NEAR_BAND_DIAGONALS
        gap = spec.bandwidth + 1 + offsets
        for rows, cols in ((k, k + gap), (k, k - gap)):
            inside = cols >= INDEX_BASE
            rows, cols = rows[inside], cols[inside]
            if not rows.size:
                continue
            vals = spec.values(rows, cols)
            for i in np.flatnonzero(vals != 0)[:3]:
                problems.append(
                    f'{spec.label or "operator"}: entry ({rows[i]}, {cols[i]}) = {vals[i]} '
                    f'outside declared bandwidth {spec.bandwidth}'
                )
    if spec.declared_symmetry is Symmetry.HERMITIAN:
        here = spec.values(k, l)
        there = spec.values(l, k)
        gap = np.abs(here - np.conj(there))
        tol = HERMITIAN_RTOL * np.maximum(1.0, np.abs(here))
        for i in np.flatnonzero(gap > tol)[:3]:
            problems.append(
                f'{spec.label or "operator"}: declared hermitian but '
                f'a({k[i]},{l[i]}) != conj(a({l[i]},{k[i]}))'
            )
    elif spec.declared_symmetry is Symmetry.REAL:
        here = spec.values(k, l)
        for i in np.flatnonzero(here.imag != 0)[:3]:
            problems.append(
                f'{spec.label or "operator"}: declared real but a({k[i]},{l[i]}) = {here[i]}'
            )
    for message in problems:
        logger.warning(message)
    return problems
