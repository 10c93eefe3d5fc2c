"""
Hypothesis checks for H-selfadjointness of infinite matrices.

Given a Gram pair ``(H, G)`` with ``G = H^-1`` banded, a matrix ``A`` and a
real sequence ``c``, the pipeline checks (h1)-(h4), the H-symmetry identity
(AG), boundedness of the (M1) and (M2) kernels (or the power-decay shortcut
(modakl)) and finally the commutator condition (komintro) for the units
``T_n = n^m (S - in)^-m`` with ``S = diag(c)``. When every stage passes, the
closure of ``A`` on finitely supported vectors is H-selfadjoint and equals
the maximal matrix operator.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from opdomain.approx_unit import UnitFamily, komintro_check
from opdomain.core import (
    DENSE_LIMIT,
    DiagonalSpec,
    FunctionGen,
    OperatorSpec,
    PairingSpec,
    Section,
    Window,
    adjoint,
    exact_product_window,
    hermitian_defect,
    spot_check,
    truncate,
)
from opdomain.errors import PreconditionError
from opdomain.linalg import norm_curve, schur_bound
from opdomain.report import (
    CheckResult,
    Verdict,
    curve_verdict,
    is_monotone,
    loglog_slope,
)
from opdomain.tolerances import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

DEFAULT_LADDER = (64, 128, 256, 512, 1024, 2048, 4096)
SAMPLE_WINDOW = 256         # raw generator block used by (h1)-(h3)
SCHUR_PROBE = 512
MODAKL_WINDOW = 256
MODAKL_SLOPE_MARGIN = 0.2
MAX_WITNESSES = 5

PROPOSITION = 'Proposition (H-selfadjointness of matrix operators)'
MODAKL_PROPOSITION = 'Proposition (power-decay H-selfadjointness)'


@dataclass
class HSAResult:
    """Outcome of :func:`certify_h_selfadjoint`."""

    checks: List[CheckResult]
    m: int
    suggested_m: Optional[int] = None
    komintro_ratio: Optional[float] = None
    assumptions: List[str] = field(default_factory=list)

    @property
    def overall(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks)

    def verdict(self, label: str) -> Verdict:
        for check in self.checks:
            if check.label == label:
                return check.verdict
        raise KeyError(label)

    @property
    def conclusion(self) -> str:
        overall = self.overall
        name = MODAKL_PROPOSITION if self.suggested_m is not None else PROPOSITION
        if overall is Verdict.PASS:
            return (f'{name}: A is essentially H-selfadjoint and the maximal matrix '
                    f'operator equals its closure; hypotheses certified')
        failed = [c.label for c in self.checks if c.verdict is overall]
        state = 'not certified' if overall is Verdict.FAIL else 'inconclusive'
        return f'{name}: hypotheses {state} ({", ".join(failed)})'


def _max_abs(m: Section) -> float:
    if sparse.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if m.size else 0.0


def _entries_above(m: Section, threshold: float, w: Window) -> List[Tuple[int, int]]:
    """Global (k, l) of entries above ``threshold``, row-major."""
    if sparse.issparse(m):
        coo = sparse.coo_matrix(m)
        hit = np.abs(coo.data) > threshold
        pairs = sorted(zip(coo.row[hit].tolist(), coo.col[hit].tolist()))
    else:
        pairs = [tuple(x) for x in np.argwhere(np.abs(m) > threshold).tolist()]
    return [(int(r) + w.lo, int(c) + w.lo) for r, c in pairs[:MAX_WITNESSES]]


def _raw_block(spec: OperatorSpec, size: int) -> np.ndarray:
    idx = np.arange(1, size + 1)
    kk, ll = np.meshgrid(idx, idx, indexing='ij')
    return OperatorSpec(spec.entries).values(kk, ll)


def _sizes(windows: Sequence[Window]) -> List[int]:
    return sorted({w.hi for w in windows})


# --------------------------------------------------------------------------
# (h1)-(h4) and (AG)
# --------------------------------------------------------------------------

def check_h_conditions(
    pair: PairingSpec,
    windows: Sequence[Window],
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> List[CheckResult]:
    """
    Conditions (h1)-(h4) on the Gram pair.

    :return: Four results labelled ``(h1)`` .. ``(h4)``.
    """
    if not windows:
        raise PreconditionError('check_h_conditions needs at least one window')
    largest = max(w.hi for w in windows)
    sample = min(largest, SAMPLE_WINDOW)
    h_raw = _raw_block(pair.h_spec, sample)
    g_raw = _raw_block(pair.g_spec, sample)

    # (h1)
    h_defect = hermitian_defect(h_raw)
    g_defect = hermitian_defect(g_raw)
    sampled = []
    for spec in (pair.h_spec, pair.g_spec):
        sampled += [msg for msg in spot_check(spec, Window.leading(largest), seed=seed)
                    if 'hermitian' in msg]
    h1_ok = max(h_defect, g_defect) <= tolerances.residual and not sampled
    witness = None
    if not h1_ok:
        for raw in (h_raw, g_raw):
            asym = np.argwhere(np.abs(raw - raw.conj().T) > tolerances.residual * max(1.0, _max_abs(raw)))
            if asym.size:
                witness = (int(asym[0][0]) + 1, int(asym[0][1]) + 1)
                break
    h1 = CheckResult(
        '(h1)',
        Verdict.PASS if h1_ok else Verdict.FAIL,
        {'h_defect': h_defect, 'g_defect': g_defect, 'sampled_window': sample},
        witness=witness,
        note='H and G hermitian on the sampled block' if h1_ok else '; '.join(sampled[:2]) or 'asymmetric entry',
    )

    # (h2)
    kk, ll = np.meshgrid(np.arange(1, sample + 1), np.arange(1, sample + 1), indexing='ij')
    outside = (np.abs(kk - ll) > pair.p) & (g_raw != 0)
    band_hits = [(int(k) + 1, int(l) + 1) for k, l in np.argwhere(outside)[:MAX_WITNESSES]]
    far = [msg for msg in spot_check(OperatorSpec(pair.g, pair.p), Window.leading(largest), seed=seed)
           if 'bandwidth' in msg]
    h2_ok = not band_hits and not far
    h2 = CheckResult(
        '(h2)',
        Verdict.PASS if h2_ok else Verdict.FAIL,
        {'p': pair.p, 'violations': int(np.count_nonzero(outside)) + len(far), 'sampled_window': sample},
        witness=band_hits[0] if band_hits else None,
        note=f'g vanishes outside |k-l| <= {pair.p}' if h2_ok else f'entries outside the band: {band_hits or far[:1]}',
    )

    # (h3)
    s_g = _max_abs(g_raw)
    curve = norm_curve(pair.h_spec, _sizes(windows), tol=tolerances.norm_tol,
                       max_iter=tolerances.max_iter, seed=seed)
    verdict, note = curve_verdict([p.window for p in curve], [p.norm for p in curve],
                                  flatness=tolerances.flatness, growth=tolerances.growth_slope)
    if pair.s_g is not None and s_g > pair.s_g * (1 + 1e-12):
        verdict, note = Verdict.FAIL, f'sampled sup |g| = {s_g} exceeds the declared s_g = {pair.s_g}'
    h3 = CheckResult(
        '(h3)', verdict,
        {'s_g': s_g, 'declared_s_g': pair.s_g, 'h_norm': curve[-1].norm if curve else None},
        curve=curve, note=note,
    )

    # (h4)
    residuals: Dict[int, float] = {}
    for w in windows:
        try:
            hg = exact_product_window(pair.h_spec, pair.g_spec, w, sparse_output=True)
            gh = exact_product_window(pair.g_spec, pair.h_spec, w, sparse_output=True)
        except PreconditionError as exc:
            logger.warning('(h4) skipped window [%d, %d]: %s', w.lo, w.hi, exc)
            continue
        eye = sparse.identity(w.size, dtype=np.complex128, format='csr')
        residuals[w.hi] = max(_max_abs(hg - eye), _max_abs(gh - eye))
    worst = max(residuals.values()) if residuals else math.nan
    if not residuals:
        h4_verdict = Verdict.INCONCLUSIVE
    else:
        h4_verdict = Verdict.PASS if worst <= tolerances.residual else Verdict.FAIL
    h4 = CheckResult(
        '(h4)', h4_verdict,
        {'max_residual': worst, 'residual_by_window': residuals},
        note='HG = GH = I on every window' if h4_verdict is Verdict.PASS else 'HG - I or GH - I nonzero',
    )
    return [h1, h2, h3, h4]


def ag_residual(a: OperatorSpec, pair: PairingSpec, w: Window) -> Tuple[Section, float]:
    """The exact section of ``AG - GA*`` on ``w`` and the scale of its terms."""
    left = exact_product_window(a, pair.g_spec, w, sparse_output=True)
    right = exact_product_window(pair.g_spec, adjoint(a), w, sparse_output=True)
    return left - right, max(_max_abs(left), _max_abs(right))


def check_AG(
    a: OperatorSpec,
    pair: PairingSpec,
    w: Window,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckResult:
    """
    The H-symmetry identity ``sum_q a_{k,l+q} g_{l+q,l} = sum_q g_{k,k+q} conj(a_{l,k+q})``
    on the window, i.e. ``AG = GA*`` entrywise.
    """
    residual, scale = ag_residual(a, pair, w)
    worst = _max_abs(residual)
    threshold = tolerances.residual * (1.0 + scale)
    ok = worst <= threshold
    witnesses = [] if ok else _entries_above(residual, threshold, w)
    return CheckResult(
        '(AG)',
        Verdict.PASS if ok else Verdict.FAIL,
        {'max_residual': worst, 'scale': scale, 'window': [w.lo, w.hi], 'offending': witnesses},
        witness=witnesses[0] if witnesses else None,
        note='AG = GA* on the window' if ok else f'AG - GA* nonzero at {witnesses[0]}',
    )


# --------------------------------------------------------------------------
# (M1), (M2), (modakl)
# --------------------------------------------------------------------------

def m1_kernel(a: OperatorSpec, c: DiagonalSpec, m: int, q: int) -> OperatorSpec:
    """``|a_{k,l+q}| / (1 + |c_l|^m)`` with ``a_{k,r} = 0`` for ``r <= 0``."""

    def entries(k, l):
        r = l + q
        out = np.zeros(k.shape)
        inside = r >= 1
        out[inside] = np.abs(a.values(k[inside], r[inside])) / (1.0 + np.abs(c.values(l[inside])) ** m)
        return out

    band = None if a.bandwidth is None else a.bandwidth + abs(q)
    return OperatorSpec(FunctionGen(entries, f'M1[q={q}]', band), band, label=f'(M1) q={q}')


def m2_kernel(a: OperatorSpec, c: DiagonalSpec) -> OperatorSpec:
    """``|a_{k,l}| |c_k - c_l| / (1 + |c_k| + |c_l|)``."""

    def entries(k, l):
        ck = c.values(k)
        cl = c.values(l)
        return np.abs(a.values(k, l)) * np.abs(ck - cl) / (1.0 + np.abs(ck) + np.abs(cl))

    return OperatorSpec(FunctionGen(entries, 'M2', a.bandwidth), a.bandwidth, label='(M2)')


def _boundedness(
    label: str,
    kernel: OperatorSpec,
    sizes: Sequence[int],
    *,
    schur: bool,
    weights: Optional[DiagonalSpec],
    tolerances: Tolerances,
    seed: int,
    evidence: Dict,
) -> CheckResult:
    curve = norm_curve(kernel, sizes, tol=tolerances.norm_tol, max_iter=tolerances.max_iter, seed=seed)
    verdict, note = curve_verdict([p.window for p in curve], [p.norm for p in curve],
                                  flatness=tolerances.flatness, growth=tolerances.growth_slope)
    monotone = is_monotone([p.norm for p in curve])
    if not monotone:
        logger.warning('%s: norm curve is not monotone in the window size', label)
    evidence = dict(evidence, norm=curve[-1].norm if curve else None, monotone=monotone,
                    converged=all(p.converged for p in curve))
    heuristic = False
    if schur and curve:
        probe_hi = min(curve[-1].window, SCHUR_PROBE if kernel.banded else DENSE_LIMIT // 2)
        bound = schur_bound(kernel, weights, Window.leading(probe_hi))
        evidence['schur_bound'] = bound.value
        evidence['schur_note'] = bound.note
        if bound.conclusive and verdict is not Verdict.PASS:
            verdict, note, heuristic = Verdict.PASS, f'Schur {bound.label}: {bound.value:.6g}', True
    if verdict is Verdict.PASS and not evidence['converged']:
        verdict, note = Verdict.INCONCLUSIVE, note + '; some norm estimates did not converge'
    return CheckResult(label, verdict, evidence, curve=curve, note=note, heuristic=heuristic)


def check_M1(
    a: OperatorSpec,
    c: DiagonalSpec,
    m: int,
    q: int,
    sizes: Sequence[int] = DEFAULT_LADDER,
    *,
    schur: bool = False,
    weights: Optional[DiagonalSpec] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> CheckResult:
    """Boundedness evidence for the (M1) kernel with index shift ``q``."""
    if m < 0:
        raise PreconditionError(f'm must be >= 0, got {m}')
    return _boundedness(f'(M1) q={q}', m1_kernel(a, c, m, q), sizes, schur=schur, weights=weights,
                        tolerances=tolerances, seed=seed, evidence={'q': q, 'm': m})


def check_M2(
    a: OperatorSpec,
    c: DiagonalSpec,
    sizes: Sequence[int] = DEFAULT_LADDER,
    *,
    schur: bool = False,
    weights: Optional[DiagonalSpec] = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> CheckResult:
    """Boundedness evidence for the (M2) kernel."""
    return _boundedness('(M2)', m2_kernel(a, c), sizes, schur=schur, weights=weights,
                        tolerances=tolerances, seed=seed, evidence={})


def suggested_m(s: float) -> int:
    """Smallest integer strictly greater than ``s + 3/2``."""
    return math.floor(s + 1.5) + 1


def modakl_bound(d: float, s: float, alpha: float, k: np.ndarray, l: np.ndarray) -> np.ndarray:
    kf = np.asarray(k, dtype=float)
    lf = np.asarray(l, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        off = d * (1.0 + kf + lf) / np.abs(kf - lf) ** alpha
    return np.where(kf == lf, d * (kf + 1.0) ** s, off)


def check_modakl(
    a: OperatorSpec,
    d: float,
    s: float,
    alpha: float,
    w: Window = Window.leading(MODAKL_WINDOW),
) -> CheckResult:
    """
    Entrywise power-decay bound ``|a_{k,l}| <= d(1+k+l)/|k-l|^alpha``
    (``d(k+1)^s`` on the diagonal) on ``w``, plus the growth of the column sums
    ``sum_k |a_{k,l}|^2`` which must stay within ``O(l^2 + l^{2s})``.

    :raises PreconditionError: ``alpha <= 2`` or negative ``d``, ``s``.
    """
    if alpha <= 2:
        raise PreconditionError(f'(modakl) needs alpha > 2, got {alpha}')
    if d < 0 or s < 0:
        raise PreconditionError(f'(modakl) needs d, s >= 0, got d={d}, s={s}')
    if w.size > DENSE_LIMIT:
        raise PreconditionError(f'(modakl) window of size {w.size} exceeds {DENSE_LIMIT}')
    block = np.abs(truncate(a, w))
    idx = w.indices()
    kk, ll = np.meshgrid(idx, idx, indexing='ij')
    bound = modakl_bound(d, s, alpha, kk, ll)
    violation = block > bound * (1.0 + 1e-12) + 1e-300
    m = suggested_m(s)

    # column sums over the full window for columns in its first half
    cols = idx[: max(2, w.size // 2)]
    colsum = (block[:, : cols.size] ** 2).sum(axis=0)
    upper = slice(cols.size // 2, None)
    slope = loglog_slope(cols[upper], colsum[upper])
    limit = max(2.0, 2.0 * s) + MODAKL_SLOPE_MARGIN
    evidence = {
        'd': d, 's': s, 'alpha': alpha, 'suggested_m': m,
        'max_ratio': float(np.max(np.divide(block, bound, out=np.zeros_like(block), where=bound > 0))),
        'column_sum_slope': slope, 'slope_limit': limit, 'window': [w.lo, w.hi],
    }
    if np.any(violation):
        r, c = np.argwhere(violation)[0]
        k, l = int(idx[r]), int(idx[c])
        evidence['witness_value'] = float(block[r, c])
        evidence['witness_bound'] = float(bound[r, c])
        return CheckResult('(modakl)', Verdict.FAIL, evidence, witness=(k, l),
                           note=f'|a({k},{l})| = {block[r, c]:.6g} exceeds {bound[r, c]:.6g}')
    if slope > limit:
        return CheckResult('(modakl)', Verdict.FAIL, evidence,
                           note=f'column sums grow with slope {slope:.3f} > {limit:.3f}')
    return CheckResult('(modakl)', Verdict.PASS, evidence,
                       note=f'entrywise bound holds; suggested m = {m}')


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------

def certify_h_selfadjoint(
    a: OperatorSpec,
    pair: PairingSpec,
    c: DiagonalSpec,
    *,
    m: Optional[int] = None,
    modakl: Optional[Tuple[float, float, float]] = None,
    ladder: Sequence[int] = DEFAULT_LADDER,
    n_values: Sequence[int] = tuple(2 ** j for j in range(9)),
    schur: bool = False,
    schur_weights: str = 'unit',
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> HSAResult:
    """
    Run every hypothesis of the H-selfadjointness criterion.

    Exactly one of ``m`` (explicit (M1)/(M2) path) or ``modakl = (d, s, alpha)``
    (power-decay shortcut, ``m`` suggested) must be given. ``schur_weights``
    selects the Schur test weights for (M1): ``unit`` or ``power`` (``1 + |c_k|^m``).
    """
    if (m is None) == (modakl is None):
        raise PreconditionError('give exactly one of m or modakl=(d, s, alpha)')
    windows = [Window.leading(size) for size in ladder]
    checks = check_h_conditions(pair, windows, tolerances=tolerances, seed=seed)

    ag_hi = max(ladder) if a.banded else min(max(ladder), DENSE_LIMIT // 2)
    checks.append(check_AG(a, pair, Window.leading(ag_hi), tolerances=tolerances))

    m2: Optional[CheckResult] = None
    proposed = None
    if modakl is not None:
        d, s, alpha = modakl
        mod = check_modakl(a, d, s, alpha, Window.leading(min(max(ladder), MODAKL_WINDOW)))
        checks.append(mod)
        proposed = mod.evidence['suggested_m']
        m = proposed
    else:
        weights = None
        if schur_weights == 'power':
            weights = DiagonalSpec(FunctionGen(lambda k, l: 1.0 + np.abs(c.values(k)) ** m, 'weights', 0))
        for q in range(-pair.p, pair.p + 1):
            checks.append(check_M1(a, c, m, q, ladder, schur=schur, weights=weights,
                                   tolerances=tolerances, seed=seed))
        m2 = check_M2(a, c, ladder, schur=schur, tolerances=tolerances, seed=seed)
        checks.append(m2)

    family = UnitFamily('resolvent-power', c, max(m, 1), tuple(n_values))
    curve = komintro_check(family, a, ladder, tolerances=tolerances, seed=seed)
    komintro = curve.to_check()
    ratio = None
    if m2 is not None and m2.evidence.get('norm'):
        ratio = curve.sup / (family.m * math.sqrt(3.0) * m2.evidence['norm'])
        komintro.evidence['sqrt3_ratio'] = ratio
    checks.append(komintro)
    return HSAResult(
        checks,
        m=family.m,
        suggested_m=proposed,
        komintro_ratio=ratio,
        assumptions=family.assumptions(),
    )
