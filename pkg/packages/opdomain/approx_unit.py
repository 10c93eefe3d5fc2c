"""
Approximate units ``T_n`` built from a real diagonal ``S = diag(c)`` and the
commutator conditions they must satisfy.

Two families are provided:

``resolvent-power``
    ``T_n = n^m (S - in)^-m``, diagonal entries ``(n / (c_k - in))^m``. These
    converge weakly to ``i^m I``; the phase is irrelevant for commutators.
``spectral-projection``
    ``T_n = E(|S| <= n)``, diagonal entries in ``{0, 1}``.

Since ``T_n`` is diagonal, ``(T A - A T)_{j,l} = (t_j - t_l) a_{j,l}`` and
every commutator section is exact without padding.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from opdomain.core import (
    DENSE_LIMIT,
    DiagonalSpec,
    OperatorSpec,
    Section,
    Window,
    section,
    truncate,
    truncate_sparse,
)
from opdomain.errors import PreconditionError
from opdomain.linalg import NormEstimate, op_norm, resolvent_diag
from opdomain.report import (
    CheckResult,
    CurvePoint,
    Trend,
    Verdict,
    ZERO_TOL,
    classify_trend,
    curve_verdict,
    is_monotone,
    sup_verdict,
)
from opdomain.tolerances import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

RESOLVENT_POWER = 'resolvent-power'
SPECTRAL_PROJECTION = 'spectral-projection'
KINDS = (RESOLVENT_POWER, SPECTRAL_PROJECTION)

DEFAULT_N_VALUES = tuple(2 ** j for j in range(9))
SQRT3 = math.sqrt(3.0)
LEMMA_SLACK = 1e-8
KOMCOND_RTOL = 1e-10
DOMINATION_VECTORS = 8

ASSUMPTIONS = (
    '(f1), (f2): the commutators ad(T_n, A) and ad(T_n*, A_0) are densely defined; '
    'assumed, not finitely checkable',
    '(e): the range inclusions of T_n into the domains of the closure of A and of A_0 hold; '
    'assumed, implied by (M1) through D(S^m) in D(closure of A)',
)


@dataclass(frozen=True)
class UnitFamily:
    """
    A family ``(T_n)`` of diagonal approximate units.

    :param kind: ``resolvent-power`` or ``spectral-projection``.
    :param c: The diagonal of ``S``.
    :param m: Resolvent power (``>= 1`` for ``resolvent-power``).
    :param n_values: Indices ``n`` to evaluate.
    """

    kind: str
    c: DiagonalSpec
    m: int = 1
    n_values: Tuple[int, ...] = DEFAULT_N_VALUES

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise PreconditionError(f'unknown unit family {self.kind!r}; known: {", ".join(KINDS)}')
        if self.kind == RESOLVENT_POWER and self.m < 1:
            raise PreconditionError(f'resolvent power must be >= 1, got {self.m}')
        object.__setattr__(self, 'n_values', tuple(int(n) for n in self.n_values))
        if not self.n_values or min(self.n_values) < 1:
            raise PreconditionError('n values must be positive')

    @property
    def limit_phase(self) -> complex:
        """Weak limit of ``T_n`` as a multiple of the identity."""
        return 1j ** self.m if self.kind == RESOLVENT_POWER else 1.0

    def unit(self, n: int, w: Window) -> np.ndarray:
        return build_unit(self.kind, self.c, self.m, n, w)

    def assumptions(self) -> List[str]:
        return list(ASSUMPTIONS)


def build_unit(kind: str, c: DiagonalSpec, m: int, n: int, w: Window) -> np.ndarray:
    """
    Diagonal of ``T_n`` on ``w`` as a vector.

    :raises PreconditionError: ``n < 1`` or ``m < 1`` for resolvent powers.
    """
    if n < 1:
        raise PreconditionError(f'n must be >= 1, got {n}')
    values = c.on(w)
    if kind == SPECTRAL_PROJECTION:
        return (np.abs(values) <= n).astype(np.complex128)
    if kind != RESOLVENT_POWER:
        raise PreconditionError(f'unknown unit family {kind!r}')
    if m < 1:
        raise PreconditionError(f'resolvent power must be >= 1, got {m}')
    return (n / (values - 1j * n)) ** m


def commutator_section(t: np.ndarray, a: Union[OperatorSpec, Section], w: Window) -> Section:
    """
    Section of ``T A - A T`` on ``w`` for diagonal ``T`` (given by its diagonal).

    Sparse for banded ``a``, dense otherwise.
    """
    t = np.asarray(t)
    if t.shape != (w.size,):
        raise PreconditionError(f'unit diagonal of length {t.shape} does not match window size {w.size}')
    if isinstance(a, OperatorSpec):
        block = truncate_sparse(a, w) if a.banded else truncate(a, w)
    else:
        block = a
    if sparse.issparse(block):
        coo = sparse.coo_matrix(block)
        data = (t[coo.row] - t[coo.col]) * coo.data
        return sparse.csr_matrix((data, (coo.row, coo.col)), shape=coo.shape)
    return (t[:, None] - t[None, :]) * np.asarray(block)


# --------------------------------------------------------------------------
# (komintro)
# --------------------------------------------------------------------------

@dataclass
class CommutatorCurve:
    """Per-``n`` commutator norms ``||ad(T_n, A)||`` over a window ladder."""

    family: UnitFamily
    per_n: Dict[int, NormEstimate]
    points: List[CurvePoint]
    ladder: Tuple[int, ...]
    verdict: Verdict
    note: str
    trend_slope: float = 0.0

    @property
    def sup(self) -> float:
        return max((e.value for e in self.per_n.values()), default=0.0)

    @property
    def bounded(self) -> bool:
        return self.verdict is Verdict.PASS

    def to_check(self) -> CheckResult:
        return CheckResult(
            '(komintro)',
            self.verdict,
            {
                'sup': self.sup,
                'm': self.family.m,
                'kind': self.family.kind,
                'per_n': {n: e.value for n, e in self.per_n.items()},
                'window_converged': {n: e.converged for n, e in self.per_n.items()},
                'trend_slope': self.trend_slope,
            },
            curve=self.points,
            note=self.note,
        )


def komintro_check(
    family: UnitFamily,
    a: OperatorSpec,
    ladder: Sequence[int],
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> CommutatorCurve:
    """
    ``sup_n ||ad(T_n, A)||`` from window ladders.

    For each ``n`` the ladder is walked until two successive windows agree
    within the flatness tolerance. Growth in ``n`` fails only while the
    increments between successive ``n`` keep up; a rise that is slowing down
    is bounded once the last increment is within the flatness tolerance.
    """
    sizes = [s for s in ladder if a.banded or s <= DENSE_LIMIT]
    if len(sizes) < len(ladder):
        logger.warning('komintro: dropping windows above %d for an unbanded operator', DENSE_LIMIT)
    points: List[CurvePoint] = []
    per_n: Dict[int, NormEstimate] = {}
    for n in family.n_values:
        history: List[NormEstimate] = []
        flat = False
        for size in sizes:
            w = Window.leading(size)
            estimate = op_norm(commutator_section(family.unit(n, w), a, w),
                               tolerances.norm_tol, tolerances.max_iter, seed)
            points.append(CurvePoint(size, estimate.value, estimate.converged, n, estimate.method))
            history.append(estimate)
            if len(history) >= 2:
                verdict, _ = curve_verdict(sizes[:len(history)], [e.value for e in history],
                                           flatness=tolerances.flatness)
                if verdict is Verdict.PASS:
                    flat = True
                    break
        last = history[-1]
        per_n[n] = NormEstimate(last.value, last.iterations, last.residual, last.method,
                                flat and last.converged)
        logger.debug('komintro n=%d: %.6g (window %d, converged=%s)', n, last.value, points[-1].window, flat)

    ns = sorted(per_n)
    values = [per_n[n].value for n in ns]
    upper = slice(len(ns) // 2, None)
    _, slope = classify_trend(ns[upper], values[upper], tolerances.trend_slope)
    trend_verdict, trend_note = sup_verdict(values, flatness=tolerances.flatness)
    if max(values, default=0.0) <= ZERO_TOL:
        verdict, note = Verdict.PASS, 'all commutators vanish'
    elif trend_verdict is Verdict.FAIL:
        verdict, note = Verdict.FAIL, f'unbounded: sup over n {trend_note}'
    elif not all(e.converged for e in per_n.values()):
        unsettled = [n for n, e in per_n.items() if not e.converged]
        verdict, note = Verdict.INCONCLUSIVE, f'window ladder not converged for n in {unsettled}'
    elif trend_verdict is Verdict.INCONCLUSIVE:
        verdict, note = Verdict.INCONCLUSIVE, f'sup over n {trend_note}; extend n_values'
    else:
        verdict, note = Verdict.PASS, f'bounded: sup_n ||ad(T_n, A)|| = {max(values):.6g}'
    return CommutatorCurve(family, per_n, points, tuple(sizes), verdict, note, slope)


# --------------------------------------------------------------------------
# Quantitative steps
# --------------------------------------------------------------------------

def sqrt3_inequality_check(
    c: DiagonalSpec,
    n_max: int = 100,
    k_max: int = 100,
    *,
    samples: Optional[int] = None,
    seed: int = 0,
) -> CheckResult:
    """
    ``n / (|in - c_k| |in - c_l|) <= sqrt(3) / (1 + |c_k| + |c_l|)`` over
    ``n <= n_max`` and ``k, l <= k_max``: the full grid, or ``samples`` random
    triples.
    """
    values = c.values(np.arange(1, k_max + 1))
    rhs = SQRT3 / (1.0 + np.abs(values)[:, None] + np.abs(values)[None, :])
    worst, where, violations, count = 0.0, None, 0, 0
    if samples is None:
        for n in range(1, n_max + 1):
            gap = np.abs(1j * n - values)
            ratio = (n / np.outer(gap, gap)) / rhs
            count += ratio.size
            violations += int(np.count_nonzero(ratio > 1.0 + 1e-12))
            k, l = np.unravel_index(np.argmax(ratio), ratio.shape)
            if ratio[k, l] > worst:
                worst, where = float(ratio[k, l]), (n, int(k) + 1, int(l) + 1)
    else:
        rng = np.random.default_rng(seed)
        n = rng.integers(1, n_max + 1, size=samples)
        k = rng.integers(1, k_max + 1, size=samples)
        l = rng.integers(1, k_max + 1, size=samples)
        ratio = n / (np.abs(1j * n - values[k - 1]) * np.abs(1j * n - values[l - 1])) / rhs[k - 1, l - 1]
        count = samples
        violations = int(np.count_nonzero(ratio > 1.0 + 1e-12))
        i = int(np.argmax(ratio))
        worst, where = float(ratio[i]), (int(n[i]), int(k[i]), int(l[i]))
    ok = violations == 0
    return CheckResult(
        '(sqrt3)',
        Verdict.PASS if ok else Verdict.FAIL,
        {'max_ratio': worst, 'argmax': where, 'violations': violations, 'triples': count},
        witness=None if ok else where,
        note=f'max ratio {worst:.6f}',
    )


def lemma_bound_check(
    a: OperatorSpec,
    c: DiagonalSpec,
    z: complex,
    m: int,
    windows: Sequence[Window],
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> CheckResult:
    """
    ``||ad(R^m, A)|| <= m ||R||^{m-1} ||ad(R, A)||`` with ``R = (S - z)^-1`` on
    each window.
    """
    if m < 1:
        raise PreconditionError(f'm must be >= 1, got {m}')
    if complex(z).imag == 0:
        raise PreconditionError(f'z must lie off the real axis, got {z}')
    rows = {}
    failing = None
    for w in windows:
        r = resolvent_diag(c, z, w, tolerances.resolvent_eps)
        block = truncate_sparse(a, w) if a.banded else truncate(a, w)
        lhs = op_norm(commutator_section(r ** m, block, w), tolerances.norm_tol, tolerances.max_iter, seed).value
        first = op_norm(commutator_section(r, block, w), tolerances.norm_tol, tolerances.max_iter, seed).value
        rhs = m * float(np.max(np.abs(r))) ** (m - 1) * first
        rows[w.hi] = {'lhs': lhs, 'rhs': rhs, 'slack': rhs - lhs}
        if lhs > rhs * (1.0 + LEMMA_SLACK) + ZERO_TOL and failing is None:
            failing = (w.lo, w.hi)
    return CheckResult(
        '(orazoraz)',
        Verdict.PASS if failing is None else Verdict.FAIL,
        {'m': m, 'z': complex(z), 'by_window': rows,
         'min_slack': min((v['slack'] for v in rows.values()), default=0.0)},
        witness=failing,
        note='commutator power bound holds' if failing is None else f'bound violated on window {failing}',
    )


def wot_deviations(
    family: UnitFamily, test_vectors: Sequence[np.ndarray], w: Window
) -> Dict[int, float]:
    """``max |<T_n f, g> - phase <f, g>|`` over ordered pairs of test vectors, per ``n``."""
    vectors = [np.asarray(v, dtype=np.complex128) for v in test_vectors]
    if not vectors:
        raise PreconditionError('at least one test vector is needed')
    for v in vectors:
        if v.shape != (w.size,):
            raise PreconditionError(f'test vector of shape {v.shape} is not supported on a window of size {w.size}')
    phase = family.limit_phase
    out = {}
    for n in family.n_values:
        t = family.unit(n, w)
        out[n] = max(abs(np.vdot(g, t * f) - phase * np.vdot(g, f)) for f in vectors for g in vectors)
    return out


def wot_convergence_check(
    family: UnitFamily,
    test_vectors: Sequence[np.ndarray],
    w: Window,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckResult:
    """Weak convergence of ``T_n`` to its limit on finitely supported vectors."""
    deviation = wot_deviations(family, test_vectors, w)
    ns = list(deviation)
    values = [deviation[n] for n in ns]
    final = values[-1]
    trend, slope = classify_trend(ns, values, tolerances.trend_slope)
    if final <= tolerances.wot:
        verdict, note = Verdict.PASS, f'deviation {final:.3g} at n = {ns[-1]}'
    elif trend is Trend.DECAYING:
        verdict, note = Verdict.INCONCLUSIVE, f'decaying (slope {slope:.3f}) but still {final:.3g} at n = {ns[-1]}'
    else:
        verdict, note = Verdict.FAIL, f'deviation does not decay (slope {slope:.3f})'
    return CheckResult(
        '(WOT)', verdict,
        {'deviation': deviation, 'limit_phase': family.limit_phase, 'final': final,
         'nonincreasing': is_monotone([-v for v in values])},
        curve=[CurvePoint(w.size, v, True, n) for n, v in deviation.items()],
        note=note,
    )


def komcond_adjoint_symmetry(
    t: np.ndarray,
    a: Union[OperatorSpec, Section],
    w: Window,
    *,
    rtol: float = KOMCOND_RTOL,
) -> CheckResult:
    """
    ``||ad(T, A)|| = ||ad(T*, A*)||`` on a section. ``t`` is either a diagonal
    vector or a full square matrix.
    """
    block = truncate(a, w) if isinstance(a, OperatorSpec) else np.asarray(
        a.toarray() if sparse.issparse(a) else a)
    t = np.asarray(t)
    tm = np.diag(t) if t.ndim == 1 else t
    if tm.shape != block.shape:
        raise PreconditionError(f'T {tm.shape} and A {block.shape} sections differ in shape')
    forward = op_norm(tm @ block - block @ tm).value
    backward = op_norm(tm.conj().T @ block.conj().T - block.conj().T @ tm.conj().T).value
    gap = abs(forward - backward) / max(forward, backward, ZERO_TOL)
    ok = gap <= rtol or max(forward, backward) <= ZERO_TOL
    return CheckResult(
        '(combdd)',
        Verdict.PASS if ok else Verdict.FAIL,
        {'norm': forward, 'adjoint_norm': backward, 'relative_gap': gap},
        note='adjoint commutator has the same norm' if ok else f'norms differ by {gap:.3g}',
    )


def domination_check(
    c: DiagonalSpec,
    a: OperatorSpec,
    sizes: Sequence[int],
    *,
    random_vectors: int = DOMINATION_VECTORS,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> CheckResult:
    """
    Smallest ``c`` with ``||ad(S, A) f|| <= c (||f|| + ||S f||)`` over unit
    vectors and seeded random vectors supported in ``[1, N]``, for each ``N``.

    Rows of ``ad(S, A) f`` are exact up to ``N + p`` for banded ``A``; for
    unbanded ``A`` rows up to ``2N`` are used and the result is heuristic.
    """
    rng = np.random.default_rng(seed)
    points: List[CurvePoint] = []
    for size in sizes:
        reach = size + a.bandwidth if a.banded else 2 * size
        if not a.banded and reach > DENSE_LIMIT:
            logger.warning('domination: dropping window %d for an unbanded operator', size)
            continue
        c_rows = c.values(np.arange(1, reach + 1))
        c_cols = c_rows[:size]
        block = section(a, (1, reach), (1, size))
        if sparse.issparse(block):
            coo = sparse.coo_matrix(block)
            ad = sparse.csr_matrix(
                ((c_rows[coo.row] - c_cols[coo.col]) * coo.data, (coo.row, coo.col)), shape=coo.shape
            )
            columns = np.sqrt(np.asarray(abs(ad).power(2).sum(axis=0)).ravel())
        else:
            ad = (c_rows[:, None] - c_cols[None, :]) * block
            columns = np.linalg.norm(ad, axis=0)
        ratios = columns / (1.0 + np.abs(c_cols))
        probes = rng.standard_normal((size, random_vectors)) + 1j * rng.standard_normal((size, random_vectors))
        image = np.linalg.norm(ad @ probes, axis=0)
        scale = np.linalg.norm(probes, axis=0) + np.linalg.norm(c_cols[:, None] * probes, axis=0)
        sup = float(max(ratios.max(initial=0.0), (image / scale).max(initial=0.0)))
        points.append(CurvePoint(size, sup, True))
    verdict, note = curve_verdict([p.window for p in points], [p.norm for p in points],
                                  flatness=tolerances.flatness, growth=tolerances.growth_slope)
    return CheckResult(
        '(domination)',
        verdict,
        {'constant': points[-1].norm if points else None, 'windows': [p.window for p in points]},
        curve=points,
        note=note,
        heuristic=not a.banded,
    )
