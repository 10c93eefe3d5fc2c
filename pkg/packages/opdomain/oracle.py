"""
Independent desk-scale probes used to cross-check the criteria.

None of these certify a hypothesis. They give evidence from a different
direction: the symmetric form ``HA = A*H`` of the H-symmetry identity, the
classical limit-point test for Jacobi matrices, graph-norm ratios for
q-formal normality and the commutation of resolvents when ``ad(S, A)``
vanishes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse

from opdomain.core import (
    INDEX_BASE,
    DiagonalSpec,
    FunctionGen,
    OperatorSpec,
    PairingSpec,
    Window,
    adjoint,
    exact_product_window,
    section,
    truncate,
)
from opdomain.errors import ExactnessError, PreconditionError
from opdomain.linalg import op_norm, resolvent_diag
from opdomain.matrix_criteria import ag_residual
from opdomain.report import CheckResult, CurvePoint, Trend, Verdict, classify_trend
from opdomain.tolerances import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

DEFAULT_PROBE_SIZES = (64, 128, 256, 512, 1024, 2048, 4096)
DEFAULT_RESOLVENT_SIZES = (64, 128, 256, 512, 1024, 2048)
GRAPH_NORM_VECTORS = 8
GRAPH_NORM_SPREAD = 1e-8
RESCALE = 1e100
SINGULAR_INVERSE = 1e12

CLASSICAL = 'classical criterion, outside the H-selfadjointness propositions'


@dataclass
class ProbeResult:
    """
    A probed quantity along a size ladder.

    :param quantity: What ``values`` measure.
    :param trend: Log-log slope classification of the values.
    """

    label: str
    quantity: str
    sizes: List[int]
    values: List[float]
    trend: Trend
    slope: float
    conclusion: str
    verdict: Verdict
    evidence: Dict[str, Any] = field(default_factory=dict)
    witness: Any = None
    heuristic: bool = True

    def to_check(self) -> CheckResult:
        curve = [CurvePoint(window=s, norm=v) for s, v in zip(self.sizes, self.values)]
        evidence = {
            'quantity': self.quantity,
            'trend': self.trend.value,
            'slope': self.slope,
            'last': self.values[-1] if self.values else None,
            **self.evidence,
        }
        return CheckResult(
            self.label,
            self.verdict,
            evidence,
            witness=self.witness,
            curve=curve,
            note=self.conclusion,
            heuristic=self.heuristic,
        )


# --------------------------------------------------------------------------
# H-symmetry in the form HA = A*H
# --------------------------------------------------------------------------

def _max_abs(m) -> float:
    if sparse.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if m.size else 0.0


def finite_h_symmetry_residual(
    a: OperatorSpec,
    pair: PairingSpec,
    w: Window,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckResult:
    """
    ``max |HA - A*H|`` on the exact window, cross-checked against the (AG)
    residual ``AG - GA*`` on the same window. The two vanish together
    because ``AG - GA* = G (HA - A*H) G``.
    """
    h = pair.h_spec
    left = exact_product_window(h, a, w, sparse_output=True)
    right = exact_product_window(adjoint(a), h, w, sparse_output=True)
    residual = left - right
    scale = max(_max_abs(left), _max_abs(right))
    worst = _max_abs(residual)
    threshold = tolerances.residual * (1.0 + scale)

    ag, ag_scale = ag_residual(a, pair, w)
    ag_worst = _max_abs(ag)
    ag_zero = ag_worst <= tolerances.residual * (1.0 + ag_scale)
    zero = worst <= threshold
    evidence = {
        'residual': worst,
        'scale': scale,
        'ag_residual': ag_worst,
        'agree': zero == ag_zero,
        'window': [w.lo, w.hi],
    }
    if zero != ag_zero:
        return CheckResult(
            '(HA=A*H)', Verdict.INCONCLUSIVE, evidence,
            note='HA - A*H and AG - GA* disagree on this window; the difference sits at its boundary',
        )
    if zero:
        return CheckResult('(HA=A*H)', Verdict.PASS, evidence, note='HA = A*H on the window')
    coo = sparse.coo_matrix(residual)
    hit = np.abs(coo.data) > threshold
    first = min(zip(coo.row[hit].tolist(), coo.col[hit].tolist()))
    witness = (first[0] + w.lo, first[1] + w.lo)
    return CheckResult(
        '(HA=A*H)', Verdict.FAIL, evidence, witness=witness,
        note=f'HA - A*H nonzero at {witness}',
    )


# --------------------------------------------------------------------------
# Limit-point probe for Jacobi matrices
# --------------------------------------------------------------------------

def jacobi_sequences(a: OperatorSpec) -> Tuple[DiagonalSpec, DiagonalSpec]:
    """Diagonal and ``|a_{k,k+1}|`` of a Hermitian tridiagonal spec."""
    if a.bandwidth is None or a.bandwidth > 1:
        raise PreconditionError(f'limit-point probe needs a tridiagonal operator, bandwidth is {a.bandwidth}')
    diag = DiagonalSpec(FunctionGen(lambda k, l: a.values(k, k).real, 'diag', 0))
    off = DiagonalSpec(FunctionGen(lambda k, l: np.abs(a.values(k, k + 1)), 'offdiag', 0))
    return diag, off


def _log_partial_sums(
    diag: DiagonalSpec, offdiag: DiagonalSpec, z: complex, n_max: int
) -> np.ndarray:
    """``log sum_{k<=N} |u_k|^2`` for ``N = 1..n_max``; ``u`` is rescaled as it grows."""
    ks = np.arange(INDEX_BASE, n_max + 1)
    a = diag.values(ks)
    b = offdiag.values(ks)
    bad = np.flatnonzero(b <= 0)
    if bad.size:
        raise PreconditionError(f'Jacobi off-diagonal must be positive; b_{int(ks[bad[0]])} = {b[bad[0]]}')
    out = np.empty(n_max)
    prev, cur = 0j, 1 + 0j
    log_scale = 0.0
    log_sum = 0.0
    out[0] = log_sum
    for i in range(n_max - 1):
        b_prev = b[i - 1] if i else 0.0
        nxt = ((z - a[i]) * cur - b_prev * prev) / b[i]
        size = abs(nxt)
        if size > 0:
            log_sum = np.logaddexp(log_sum, 2.0 * (math.log(size) + log_scale))
        out[i + 1] = log_sum
        prev, cur = cur, nxt
        if size > RESCALE:
            prev, cur = prev / size, cur / size
            log_scale += math.log(size)
    return out


def jacobi_limit_point_probe(
    diag: DiagonalSpec,
    offdiag: DiagonalSpec,
    z: complex = 1j,
    sizes: Sequence[int] = DEFAULT_PROBE_SIZES,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ProbeResult:
    """
    Solve ``b_{k-1} u_{k-1} + a_k u_k + b_k u_{k+1} = z u_k`` from
    ``u_1 = 1`` and watch the partial sums ``sum |u_k|^2``.

    Divergent sums mean the solution is not square-summable, the limit-point
    case, so the Jacobi operator is essentially selfadjoint. Bounded sums
    are flagged as possible limit-circle behaviour.

    :raises PreconditionError: Some ``b_k <= 0`` or ``z`` is real.
    """
    if complex(z).imag == 0:
        raise PreconditionError('limit-point probe needs a non-real z')
    sizes = sorted(int(s) for s in sizes)
    if not sizes or sizes[0] < 2:
        raise PreconditionError('probe sizes must be at least 2')
    logs = _log_partial_sums(diag, offdiag, complex(z), sizes[-1])
    values = [float(logs[s - 1] / math.log(10.0)) for s in sizes]
    log_sizes = np.log(np.asarray(sizes, dtype=float))
    # the log-log slope of the sums, taken directly from their logarithms
    slope = float(np.polyfit(log_sizes, logs[np.asarray(sizes) - 1], 1)[0]) if len(sizes) > 1 else 0.0
    threshold = tolerances.trend_slope
    if slope > threshold:
        trend = Trend.GROWING
        conclusion = f'partial sums diverge (slope {slope:.3f}): limit point, evidence of essential selfadjointness'
        verdict = Verdict.PASS
    elif slope < -threshold:
        trend = Trend.DECAYING
        conclusion = f'partial sums decay (slope {slope:.3f})'
        verdict = Verdict.INCONCLUSIVE
    else:
        trend = Trend.BOUNDED
        conclusion = f'partial sums bounded (slope {slope:.3f}): possible limit circle'
        verdict = Verdict.INCONCLUSIVE
        logger.warning('limit-point probe: %s', conclusion)
    return ProbeResult(
        label='(limit-point)',
        quantity='log10 sum_{k<=N} |u_k|^2',
        sizes=sizes,
        values=values,
        trend=trend,
        slope=slope,
        conclusion=f'{conclusion} [{CLASSICAL}]',
        verdict=verdict,
        evidence={'z': complex(z)},
    )


# --------------------------------------------------------------------------
# Graph-norm ratios
# --------------------------------------------------------------------------

@dataclass
class GraphNormProbe:
    ratios: List[float]
    min_ratio: float
    max_ratio: float
    q_hat: Optional[float]
    window: Window

    def to_check(self) -> CheckResult:
        evidence = {
            'min_ratio': self.min_ratio,
            'max_ratio': self.max_ratio,
            'q_hat': self.q_hat,
            'vectors': len(self.ratios),
            'window': [self.window.lo, self.window.hi],
        }
        if self.q_hat is not None:
            return CheckResult('(q-normal)', Verdict.PASS, evidence,
                               note=f'|A*f| = sqrt(q)|Af| on probe with q = {self.q_hat:.12g}',
                               heuristic=True)
        spread = [i for i, r in enumerate(self.ratios) if r in (self.min_ratio, self.max_ratio)]
        return CheckResult('(q-normal)', Verdict.FAIL, evidence, witness=spread,
                           note='not q-formally normal on probe')


def graph_norm_ratio_probe(
    a: OperatorSpec,
    w: Window,
    vectors: Optional[Sequence[Sequence[complex]]] = None,
    *,
    seed: int = 0,
) -> GraphNormProbe:
    """
    Ratios ``|A* f| / |Af|`` for vectors ``f`` supported in ``w``.

    Both images are computed exactly over rows ``[lo - p, hi + p]``. When
    all ratios agree within 1e-8 the common value squared is ``q``. A vector
    with ``Af = 0`` but ``A* f != 0`` has ratio ``inf``.

    :raises ExactnessError: ``A`` is unbanded.
    """
    if a.bandwidth is None:
        raise ExactnessError('graph-norm probe needs a banded operator for exact images')
    p = a.bandwidth
    rows = (max(INDEX_BASE, w.lo - p), w.hi + p)
    image = section(a, rows, w.bounds, sparse_output=True)
    co_image = section(adjoint(a), rows, w.bounds, sparse_output=True)
    if vectors is None:
        rng = np.random.default_rng(seed)
        f = rng.normal(size=(w.size, GRAPH_NORM_VECTORS)) + 1j * rng.normal(size=(w.size, GRAPH_NORM_VECTORS))
    else:
        f = np.asarray(vectors, dtype=np.complex128).T
        if f.ndim != 2 or f.shape[0] != w.size:
            raise PreconditionError(f'probe vectors must have length {w.size}')
    af = np.linalg.norm(image @ f, axis=0)
    a_star_f = np.linalg.norm(co_image @ f, axis=0)
    ratios = []
    for x, y in zip(af, a_star_f):
        if x > 0:
            ratios.append(float(y / x))
        elif y > 0:
            ratios.append(math.inf)
    if not ratios:
        raise PreconditionError('every probe vector lies in the kernels of A and A*')
    lo, hi = min(ratios), max(ratios)
    q_hat = None
    if math.isfinite(hi) and lo > 0 and hi / lo <= 1.0 + GRAPH_NORM_SPREAD:
        q_hat = float(np.mean(np.square(ratios)))
    elif math.isfinite(hi) and hi == 0:
        q_hat = 0.0
    return GraphNormProbe(ratios, lo, hi, q_hat, w)


# --------------------------------------------------------------------------
# Commuting resolvents
# --------------------------------------------------------------------------

def _interior_commutator(a: OperatorSpec, c: DiagonalSpec, w: Window) -> float:
    """``max |(c_k - c_l) a_{k,l}|`` away from the window's right edge."""
    p = a.bandwidth or 0
    hi = max(w.lo, w.hi - p)
    inner = Window(w.lo, hi)
    block = section(a, inner.bounds, inner.bounds, sparse_output=True)
    coo = sparse.coo_matrix(block)
    values = c.on(inner)
    diff = (values[coo.row] - values[coo.col]) * coo.data
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def resolvent_commute_check(
    a: OperatorSpec,
    c: DiagonalSpec,
    z: complex = 1j,
    sizes: Sequence[int] = DEFAULT_RESOLVENT_SIZES,
    *,
    spectral_point: complex = 1j,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> ProbeResult:
    """
    ``|(A - w)^-1 (S - z)^-1 - (S - z)^-1 (A - w)^-1|`` on leading sections.

    When ``ad(S, A) = 0`` the resolvents commute and the curve must fall
    below ``tolerances.commute``. The Frobenius norm bounds the operator
    norm from above and the largest entry bounds it from below; the exact
    norm is only computed when these disagree about the threshold.
    """
    sizes = sorted(int(s) for s in sizes)
    if not sizes:
        raise PreconditionError('resolvent probe needs at least one size')
    w_point = complex(spectral_point)
    tol = tolerances.commute
    values: List[float] = []
    used: List[int] = []
    singular_at = None
    for n in sizes:
        window = Window.leading(n)
        dense = truncate(a, window) - w_point * np.eye(n)
        try:
            r_a = scipy.linalg.inv(dense)
        except (np.linalg.LinAlgError, ValueError):
            r_a = None
        if r_a is None or not np.all(np.isfinite(r_a)) or np.max(np.abs(r_a)) > SINGULAR_INVERSE:
            singular_at = n
            logger.warning('w = %s is not in the resolvent set at size %d', w_point, n)
            break
        r_s = resolvent_diag(c, z, window, tolerances.resolvent_eps)
        commutator = r_a * r_s[None, :] - r_s[:, None] * r_a
        frob = float(np.linalg.norm(commutator))
        if frob <= tol:
            value = frob
        elif float(np.max(np.abs(commutator))) > tol:
            value = float(np.max(np.abs(commutator)))
        else:
            value = op_norm(commutator, tolerances.norm_tol, tolerances.max_iter, seed).value
        values.append(value)
        used.append(n)

    precondition = _interior_commutator(a, c, Window.leading(used[-1] if used else sizes[0]))
    evidence = {'ad_S_A_interior': precondition, 'spectral_point': w_point, 'z': complex(z)}
    if singular_at is not None:
        evidence['singular_at'] = singular_at
    if not values:
        return ProbeResult(
            label='(resolvents)', quantity='resolvent commutator norm', sizes=[], values=[],
            trend=Trend.BOUNDED, slope=0.0, verdict=Verdict.INCONCLUSIVE,
            conclusion=f'w not in resolvent set at size {singular_at}', evidence=evidence,
        )
    trend, slope = classify_trend(used, values, tolerances.trend_slope)
    precondition_note = '' if precondition <= tol else '; ad(S, A) != 0 in the window interior'
    if values[-1] <= tol:
        verdict = Verdict.PASS
        conclusion = f'resolvents commute: commutator {values[-1]:.3g} <= {tol:g} at size {used[-1]}'
    else:
        verdict = Verdict.FAIL
        conclusion = f'resolvents do not commute: commutator {values[-1]:.3g} at size {used[-1]}'
    if singular_at is not None:
        verdict = verdict.cap(Verdict.INCONCLUSIVE)
        conclusion += f'; w not in resolvent set at size {singular_at}'
    return ProbeResult(
        label='(resolvents)',
        quantity='resolvent commutator norm',
        sizes=used,
        values=values,
        trend=trend,
        slope=slope,
        conclusion=conclusion + precondition_note,
        verdict=verdict,
        evidence=evidence,
        heuristic=False,
    )
