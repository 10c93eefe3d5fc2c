"""
Finite-dimensional kernels: operator norms, Hermitian eigen bounds,
pencils, diagonal resolvents and the Schur test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy import sparse

from opdomain.core import (
    DENSE_LIMIT,
    DiagonalSpec,
    EntryGen,
    OperatorSpec,
    Section,
    Window,
    hermitian_defect,
    section,
    truncate,
    truncate_sparse,
)
from opdomain.errors import ContractViolation, PreconditionError, SingularResolventError
from opdomain.report import TREND_SLOPE, CurvePoint, loglog_slope

logger = logging.getLogger(__name__)

EXHAUSTIVE_SVD = 'exhaustive-svd'
BANDED_EIG = 'banded-eig'
POWER_ITERATION = 'power-iteration'

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
EXHAUSTIVE_SVD_LIMIT = 64
BANDED_EIG_LIMIT = 64       # max bandwidth of M^H M for the banded eigensolver
SVD_FALLBACK_LIMIT = 1024   # non-converged power iterations below this size fall back to SVD
HERMITIAN_TOL = 1e-12
PENCIL_TOL = 1e-10
SUBSPACE_TOL = 1e-6
RESOLVENT_EPS = 1e-12
SCHUR_TAIL = 0.01
SCHUR_LABEL = 'certificate (heuristic tail)'


@dataclass(frozen=True)
class NormEstimate:
    """
    Largest singular value of a finite matrix.

    ``residual`` is the relative change of the last power step (0 for the
    direct methods) and is at most the requested tolerance when ``converged``.
    """

    value: float
    iterations: int
    residual: float
    method: str
    converged: bool = True


def _dense(m: Section) -> np.ndarray:
    return m.toarray() if sparse.issparse(m) else np.asarray(m)


def _exhaustive(m: Section, iterations: int = 0) -> NormEstimate:
    values = scipy.linalg.svdvals(_dense(m))
    return NormEstimate(float(values[0]) if values.size else 0.0, iterations, 0.0, EXHAUSTIVE_SVD)


def _normal_matrix(m: sparse.spmatrix) -> Tuple[sparse.coo_matrix, int]:
    normal = sparse.csr_matrix(m.conj().T @ m)
    normal.sum_duplicates()
    coo = normal.tocoo()
    width = int(np.max(np.abs(coo.row - coo.col))) if coo.nnz else 0
    return coo, width


def _banded(normal: sparse.coo_matrix, width: int) -> NormEstimate:
    n = normal.shape[0]
    lower = normal.row >= normal.col
    ab = np.zeros((width + 1, n), dtype=np.complex128)
    ab[normal.row[lower] - normal.col[lower], normal.col[lower]] = normal.data[lower]
    top = scipy.linalg.eig_banded(
        ab, lower=True, eigvals_only=True, select='i', select_range=(n - 1, n - 1)
    )
    return NormEstimate(float(np.sqrt(max(top[-1], 0.0))), 0, 0.0, BANDED_EIG)


def _power(m: Section, tol: float, max_iter: int, seed: int) -> NormEstimate:
    n = m.shape[1]
    rng = np.random.default_rng(seed)
    x = np.ones(n, dtype=np.complex128) + 1e-3 * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    adjoint = m.conj().T
    previous = 0.0
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        z = adjoint @ (m @ x)
        current = float(np.real(np.vdot(x, z)))
        size = float(np.linalg.norm(z))
        if size == 0.0:
            return NormEstimate(0.0, iteration, 0.0, POWER_ITERATION)
        residual = abs(current - previous) / current
        x = z / size
        previous = current
        if residual <= tol:
            return NormEstimate(float(np.sqrt(current)), iteration, residual, POWER_ITERATION)
    return NormEstimate(float(np.sqrt(previous)), max_iter, residual, POWER_ITERATION, False)


def op_norm(
    m: Section,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    *,
    method: str = 'auto',
) -> NormEstimate:
    """
    Spectral norm of a dense or sparse section.

    With ``method='auto'``: exhaustive SVD up to :data:`EXHAUSTIVE_SVD_LIMIT`,
    the banded Hermitian eigensolver on ``M^H M`` for sparse banded sections,
    otherwise power iteration on ``M^H M`` from a seeded all-ones start.
    A power iteration that does not converge is flagged, or replaced by an SVD
    when the matrix is small enough.

    :raises PreconditionError: ``tol <= 0`` or non-finite entries.
    """
    if tol <= 0:
        raise PreconditionError(f'tolerance must be positive, got {tol}')
    if min(m.shape) == 0:
        return NormEstimate(0.0, 0, 0.0, EXHAUSTIVE_SVD)
    data = m.data if sparse.issparse(m) else np.asarray(m)
    if not np.all(np.isfinite(data)):
        raise PreconditionError('matrix has non-finite entries')

    if method == EXHAUSTIVE_SVD or (method == 'auto' and max(m.shape) <= EXHAUSTIVE_SVD_LIMIT):
        return _exhaustive(m)
    if method in ('auto', BANDED_EIG) and sparse.issparse(m):
        normal, width = _normal_matrix(m)
        if width <= BANDED_EIG_LIMIT or method == BANDED_EIG:
            return _banded(normal, width)
    elif method == BANDED_EIG:
        raise PreconditionError('the banded eigensolver needs a sparse section')

    estimate = _power(m, tol, max_iter, seed)
    if not estimate.converged:
        if method == 'auto' and max(m.shape) <= SVD_FALLBACK_LIMIT:
            logger.debug('power iteration stalled at %.3g on %s; using SVD', estimate.residual, m.shape)
            return _exhaustive(m, estimate.iterations)
        logger.warning(
            'power iteration did not converge on a %dx%d section (residual %.3g)',
            *m.shape, estimate.residual,
        )
    return estimate


def herm_eig_bounds(m: Section) -> Tuple[float, float]:
    """
    ``(lambda_min, lambda_max)`` of a Hermitian matrix.

    :raises ContractViolation: ``M`` is not Hermitian within 1e-12 relative.
    """
    dense = _dense(m)
    if dense.size == 0:
        raise PreconditionError('empty matrix has no eigenvalues')
    if hermitian_defect(dense) > HERMITIAN_TOL:
        raise ContractViolation('matrix is not Hermitian')
    values = scipy.linalg.eigh(dense, eigvals_only=True)
    return float(values[0]), float(values[-1])


def pencil_bound(a: Section, b: Section, tol: float = PENCIL_TOL) -> Optional[float]:
    """
    Smallest ``c >= 1`` with ``c^-1 A <= B <= c A`` for Hermitian PSD ``A, B``.

    :return: ``c``, or ``None`` when the ranges of ``A`` and ``B`` differ and
             no such constant exists.
    :raises ContractViolation: Non-Hermitian or indefinite input.
    """
    a, b = _dense(a), _dense(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError(f'pencil needs square matrices of equal size, got {a.shape}, {b.shape}')
    if hermitian_defect(a) > HERMITIAN_TOL or hermitian_defect(b) > HERMITIAN_TOL:
        raise ContractViolation('pencil matrices must be Hermitian')
    wa, va = scipy.linalg.eigh(a)
    wb, vb = scipy.linalg.eigh(b)
    scale = max(1.0, float(np.max(np.abs(wa))), float(np.max(np.abs(wb))))
    if wa[0] < -tol * scale or wb[0] < -tol * scale:
        raise ContractViolation(f'pencil matrices must be PSD (min eigenvalues {wa[0]:.3g}, {wb[0]:.3g})')
    range_a = va[:, wa > tol * scale]
    range_b = vb[:, wb > tol * scale]
    if range_a.shape[1] != range_b.shape[1]:
        return None
    if range_a.shape[1] == 0:
        return 1.0
    cosines = scipy.linalg.svdvals(range_a.conj().T @ range_b)
    if cosines.min() < 1.0 - SUBSPACE_TOL:
        return None
    a_r = range_a.conj().T @ a @ range_a
    b_r = range_a.conj().T @ b @ range_a
    mu = scipy.linalg.eigh(b_r, a_r, eigvals_only=True)
    c = max(float(mu[-1]), 1.0 / float(mu[0]), 1.0)
    return 1.0 if c - 1.0 <= tol else c


def resolvent_diag(
    c: DiagonalSpec, z: complex, w: Window, eps: float = RESOLVENT_EPS
) -> np.ndarray:
    """
    Diagonal of ``(S - z)^-1`` on ``w``, i.e. ``1 / (c_k - z)``.

    :raises SingularResolventError: Some ``|c_k - z| < eps``.
    """
    values = c.on(w)
    gaps = values - complex(z)
    closest = int(np.argmin(np.abs(gaps)))
    if abs(gaps[closest]) < eps:
        raise SingularResolventError(
            f'z = {z} lies within {eps:g} of c_{w.lo + closest} = {values[closest]}'
        )
    return 1.0 / gaps


@dataclass(frozen=True)
class SchurBound:
    """Weighted row/column-sum bound on a nonnegative kernel."""

    value: Optional[float]
    row_bound: float
    col_bound: float
    note: str
    label: str = SCHUR_LABEL

    @property
    def conclusive(self) -> bool:
        return self.value is not None


def _weights(weights: Optional[DiagonalSpec], lo: int, hi: int) -> np.ndarray:
    if weights is None:
        return np.ones(hi - lo + 1)
    values = weights.values(np.arange(lo, hi + 1))
    if np.any(values <= 0):
        raise PreconditionError('Schur weights must be positive')
    return values


def _nonnegative(block: Section) -> Section:
    data = block.data if sparse.issparse(block) else block
    if np.any(np.abs(np.imag(data)) > 0) or np.any(np.real(data) < 0):
        raise PreconditionError('Schur test needs a nonnegative kernel')
    return abs(block).astype(float) if sparse.issparse(block) else np.abs(block)


def _sums(
    kernel: OperatorSpec,
    probe: Window,
    weights: Optional[DiagonalSpec],
    transpose: bool,
) -> Tuple[np.ndarray, Optional[float]]:
    """Weighted row (or column) sums over ``probe`` and the relative tail change."""
    lo, hi = probe.bounds
    if kernel.banded:
        reach = (max(1, lo - kernel.bandwidth), hi + kernel.bandwidth)
        tails = [reach]
    else:
        if 2 * hi > DENSE_LIMIT:
            raise PreconditionError(f'Schur probe up to {hi} needs a dense {2 * hi} cutoff')
        tails = [(1, hi), (1, 2 * hi)]
    own = _weights(weights, lo, hi)
    sums = []
    for other in tails:
        if transpose:
            block = _nonnegative(section(kernel, other, probe.bounds))
            total = block.T @ _weights(weights, *other)
        else:
            block = _nonnegative(section(kernel, probe.bounds, other))
            total = block @ _weights(weights, *other)
        sums.append(np.asarray(total).ravel() / own)
    if len(sums) == 1:
        return sums[0], None
    near, far = sums
    change = float(np.max((far - near) / np.maximum(far, np.finfo(float).tiny)))
    return far, change


def schur_bound(
    kernel: Union[OperatorSpec, EntryGen],
    weights: Optional[DiagonalSpec],
    probe: Window,
) -> SchurBound:
    """
    Schur test ``||K|| <= sqrt(R C)`` with ``R``, ``C`` the weighted sup of row
    and column sums, estimated on ``probe``.

    Banded kernels have exact row sums; unbanded ones are cut at ``hi`` and
    ``2 hi`` and the tail must change by less than 1%. The sup over rows is
    trusted only when the running maximum is not growing across the probe.
    """
    if not isinstance(kernel, OperatorSpec):
        kernel = OperatorSpec(kernel)
    rows, row_tail = _sums(kernel, probe, weights, transpose=False)
    cols, col_tail = _sums(kernel, probe, weights, transpose=True)
    row_bound = float(rows.max()) if rows.size else 0.0
    col_bound = float(cols.max()) if cols.size else 0.0
    if row_bound == 0.0 and col_bound == 0.0:
        return SchurBound(0.0, 0.0, 0.0, 'zero kernel')
    for tail in (row_tail, col_tail):
        if tail is not None and tail > SCHUR_TAIL:
            return SchurBound(None, row_bound, col_bound,
                              f'row sums change by {tail:.2%} when the cutoff doubles')
    half = probe.indices()[probe.size // 2:]
    for name, sums in (('row', rows), ('column', cols)):
        running = np.maximum.accumulate(sums)[probe.size // 2:]
        slope = loglog_slope(half, running)
        if slope > TREND_SLOPE:
            return SchurBound(None, row_bound, col_bound,
                              f'divergent {name} sums on the probe (slope {slope:.3f})')
    return SchurBound(float(np.sqrt(row_bound * col_bound)), row_bound, col_bound,
                      f'sup over [{probe.lo}, {probe.hi}] with a decaying tail assumed')


def norm_curve(
    spec: OperatorSpec,
    sizes: Sequence[int],
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> List[CurvePoint]:
    """
    Norms of the leading sections ``[1, N]`` of ``spec`` for each ``N``.

    Unbanded specs are evaluated densely; sizes beyond :data:`DENSE_LIMIT`
    are dropped with a warning.
    """
    points = []
    for size in sizes:
        if not spec.banded and size > DENSE_LIMIT:
            logger.warning('dropping window %d of %s: unbanded sections are capped at %d',
                           size, spec.label or 'operator', DENSE_LIMIT)
            continue
        w = Window.leading(size)
        m = truncate_sparse(spec, w) if spec.banded else truncate(spec, w)
        estimate = op_norm(m, tol, max_iter, seed)
        points.append(CurvePoint(size, estimate.value, estimate.converged, method=estimate.method))
    return points
