"""
Hypothesis checks for first-order differential operators with matrix
coefficients on ``(L^2(R^m))^k``.

Two operator shapes are covered:

Dirac type
    ``A u = -i sum_l alpha_l du/dx_l + Q u`` with constant ``alpha_l``. The
    identities (Afnorm) make ``A`` formally normal; together with a local
    Hoelder condition on ``Q`` the closure is normal.
Variable coefficients
    ``A u = -i sum_l Q_l(x) du/dx_l``. Bounded first and second derivatives
    (QL), the two-sided block bound (QQ) and the upper bound (QI) give
    ``D(closure A) = D(A*)``.

Nothing here discretises a PDE. Coefficients are checked pointwise on a
:class:`GridSpec` (a box plus radial rays for growth), symbolically when
they are polynomials.
"""

from __future__ import annotations

import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from opdomain import exprlang
from opdomain.errors import ContractViolation, PreconditionError
from opdomain.linalg import pencil_bound
from opdomain.report import CheckResult, Trend, Verdict, classify_trend, loglog_slope
from opdomain.tolerances import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

DEFAULT_EXTENT = 10.0
DEFAULT_COUNT = 41
HIGH_DIM_COUNT = 11         # per-axis count when m > 3
RAY_RADII = (10.0, 30.0, 100.0, 300.0)
HOLDER_RADII = (1, 2, 4, 8)
HOLDER_PAIRS = 64
HOLDER_MIN_EXPONENT = 0.05
HOLDER_STEPS = np.logspace(-6, -2, 9)
HOLDER_ANCHORS = 625
FD_STEP = 1e-4
PSD_TOL = 1e-10
BLOCK_HERMITIAN_TOL = 1e-12

FORMAL_NORMALITY = 'Proposition (essential normality of Dirac-type operators)'
GRAPH_NORM = 'Proposition (domain of first-order differential operators)'

Exponents = Tuple[int, ...]


def monomial_name(exponents: Exponents) -> str:
    """``(2, 0, 1)`` -> ``x1^2*x3``; the constant monomial is ``1``."""
    parts = []
    for i, e in enumerate(exponents, start=1):
        if e == 1:
            parts.append(f'x{i}')
        elif e > 1:
            parts.append(f'x{i}^{e}')
    return '*'.join(parts) or '1'


def _variables(m: int) -> List[str]:
    return [f'x{i}' for i in range(1, m + 1)]


def _check_dims(m: int, k: int) -> None:
    if m < 1 or k < 1:
        raise PreconditionError(f'need m >= 1 dimensions and k >= 1 channels, got m={m}, k={k}')


class MatFunc(ABC):
    """A function ``R^m -> C^{k x k}``."""

    m: int
    k: int
    symbolic: bool = False

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values at ``points`` of shape ``(N, m)``; returns ``(N, k, k)``."""

    def at(self, x: Sequence[float]) -> np.ndarray:
        return self.evaluate(np.asarray([x], dtype=float))[0]

    def _points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.m)
        if pts.ndim != 2 or pts.shape[1] != self.m:
            raise PreconditionError(f'points must have shape (N, {self.m}), got {pts.shape}')
        return pts


class PolyMatrix(MatFunc):
    """
    Polynomial in ``x1..xm`` with ``k x k`` complex matrix coefficients.

    :param m: Number of variables.
    :param k: Coefficient size.
    :param terms: Monomial exponent tuple -> coefficient matrix. Zero
                  coefficients are dropped.
    """

    symbolic = True

    def __init__(self, m: int, k: int, terms: Mapping[Exponents, np.ndarray]) -> None:
        _check_dims(m, k)
        self.m = m
        self.k = k
        clean: Dict[Exponents, np.ndarray] = {}
        for exponents, coef in terms.items():
            exponents = tuple(int(e) for e in exponents)
            if len(exponents) != m or any(e < 0 for e in exponents):
                raise PreconditionError(f'monomial {exponents} is not a nonnegative exponent tuple of length {m}')
            matrix = np.array(coef, dtype=np.complex128)
            if matrix.ndim == 0:
                matrix = matrix * np.eye(k, dtype=np.complex128)
            if matrix.shape != (k, k):
                raise PreconditionError(f'coefficient of {monomial_name(exponents)} has shape {matrix.shape}, need ({k}, {k})')
            if not np.all(np.isfinite(matrix)):
                raise PreconditionError(f'coefficient of {monomial_name(exponents)} is not finite')
            total = clean.get(exponents, 0) + matrix
            if np.any(total != 0):
                clean[exponents] = total
            else:
                clean.pop(exponents, None)
        self.terms = clean

    @classmethod
    def constant(cls, matrix: Sequence, m: int) -> 'PolyMatrix':
        matrix = np.array(matrix, dtype=np.complex128)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise PreconditionError(f'constant coefficient must be square, got shape {matrix.shape}')
        return cls(m, matrix.shape[0], {(0,) * m: matrix})

    @classmethod
    def scalar(cls, coefficients: Mapping[Exponents, complex], m: int, k: int = 1) -> 'PolyMatrix':
        """Scalar polynomial times the ``k x k`` identity."""
        eye = np.eye(k, dtype=np.complex128)
        return cls(m, k, {e: complex(c) * eye for e, c in coefficients.items()})

    @classmethod
    def from_expressions(cls, sources: Union[str, Sequence[Sequence[str]]], m: int, k: int = 1) -> 'PolyMatrix':
        """
        Expand expression sources into a polynomial.

        A single string is a scalar polynomial times the identity; a nested
        list gives the matrix entry-wise.

        :raises PreconditionError: The expression is not a polynomial in
                                   ``x1..xm`` (functions, division by a
                                   non-constant, negative powers).
        """
        if isinstance(sources, str):
            return cls.scalar(_expand(exprlang.parse(sources), m), m, k)
        rows = [list(row) for row in sources]
        k = len(rows)
        if k == 0 or any(len(row) != k for row in rows):
            raise PreconditionError('matrix of expressions must be square and nonempty')
        terms: Dict[Exponents, np.ndarray] = {}
        for a, row in enumerate(rows):
            for b, src in enumerate(row):
                for exponents, value in _expand(exprlang.parse(str(src)), m).items():
                    terms.setdefault(exponents, np.zeros((k, k), dtype=np.complex128))[a, b] += value
        return cls(m, k, terms)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def monomials(self) -> List[Exponents]:
        return sorted(self.terms, key=lambda e: (sum(e), e))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = self._points(points)
        out = np.zeros((pts.shape[0], self.k, self.k), dtype=np.complex128)
        for exponents, coef in self.terms.items():
            weight = np.prod(pts ** np.asarray(exponents, dtype=float), axis=1)
            out += weight[:, None, None] * coef
        return out

    def partial(self, i: int) -> 'PolyMatrix':
        """Exact partial derivative in ``x_{i+1}`` (``i`` is 0-based)."""
        if not 0 <= i < self.m:
            raise PreconditionError(f'no variable x{i + 1} in a polynomial of {self.m} variables')
        terms: Dict[Exponents, np.ndarray] = {}
        for exponents, coef in self.terms.items():
            if exponents[i] == 0:
                continue
            lowered = list(exponents)
            lowered[i] -= 1
            terms[tuple(lowered)] = terms.get(tuple(lowered), 0) + exponents[i] * coef
        return PolyMatrix(self.m, self.k, terms)

    def adjoint(self) -> 'PolyMatrix':
        """Pointwise conjugate transpose; the variables are real."""
        return PolyMatrix(self.m, self.k, {e: c.conj().T for e, c in self.terms.items()})

    def __repr__(self) -> str:
        return f'PolyMatrix(m={self.m}, k={self.k}, monomials={[monomial_name(e) for e in self.monomials()]})'


def _expand(node: exprlang.Expr, m: int) -> Dict[Exponents, complex]:
    """Polynomial coefficients of an expression in ``x1..xm``."""
    zero = (0,) * m

    def mul(p: Dict[Exponents, complex], q: Dict[Exponents, complex]) -> Dict[Exponents, complex]:
        out: Dict[Exponents, complex] = {}
        for (ea, ca), (eb, cb) in itertools.product(p.items(), q.items()):
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
        return {e: c for e, c in out.items() if c != 0}

    def add(p: Dict[Exponents, complex], q: Dict[Exponents, complex], sign: int = 1) -> Dict[Exponents, complex]:
        out = dict(p)
        for e, c in q.items():
            out[e] = out.get(e, 0) + sign * c
        return {e: c for e, c in out.items() if c != 0}

    def visit(n: exprlang.Expr) -> Dict[Exponents, complex]:
        if isinstance(n, exprlang.Number):
            return {zero: complex(n.value)} if n.value else {}
        if isinstance(n, exprlang.ImagUnit):
            return {zero: 1j}
        if isinstance(n, exprlang.Var):
            names = _variables(m)
            if n.name not in names:
                raise PreconditionError(f'variable {n.name!r} is not one of {", ".join(names)}')
            e = [0] * m
            e[names.index(n.name)] = 1
            return {tuple(e): 1 + 0j}
        if isinstance(n, exprlang.Neg):
            return {e: -c for e, c in visit(n.operand).items()}
        if isinstance(n, exprlang.Pow):
            if n.exponent < 0:
                raise PreconditionError('negative powers are not polynomial')
            out: Dict[Exponents, complex] = {zero: 1 + 0j}
            base = visit(n.base)
            for _ in range(n.exponent):
                out = mul(out, base)
            return out
        if isinstance(n, exprlang.BinOp):
            left, right = visit(n.left), visit(n.right)
            if n.op == '+':
                return add(left, right)
            if n.op == '-':
                return add(left, right, -1)
            if n.op == '*':
                return mul(left, right)
            if set(right) - {zero} or not right:
                raise PreconditionError('division is only allowed by a nonzero constant')
            return {e: c / right[zero] for e, c in left.items()}
        raise PreconditionError(f'{exprlang.to_source(n)} is not a polynomial')

    return visit(node)


class ExprMatrix(MatFunc):
    """Matrix of arbitrary expressions in ``x1..xm``, evaluated numerically."""

    def __init__(self, sources: Union[str, Sequence[Sequence[str]]], m: int, k: int = 1) -> None:
        _check_dims(m, k)
        if isinstance(sources, str):
            node = exprlang.parse(sources)
            zero = exprlang.Number(0.0)
            grid = [[node if a == b else zero for b in range(k)] for a in range(k)]
        else:
            rows = [list(row) for row in sources]
            k = len(rows)
            if k == 0 or any(len(row) != k for row in rows):
                raise PreconditionError('matrix of expressions must be square and nonempty')
            grid = [[exprlang.parse(str(src)) for src in row] for row in rows]
        allowed = set(_variables(m))
        for node in itertools.chain.from_iterable(grid):
            unknown = exprlang.free_variables(node) - allowed
            if unknown:
                raise PreconditionError(f'variable {sorted(unknown)[0]!r} is not one of {", ".join(sorted(allowed))}')
        self.m = m
        self.k = k
        self.nodes = grid

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = self._points(points)
        bindings = {name: pts[:, i] for i, name in enumerate(_variables(self.m))}
        out = np.zeros((pts.shape[0], self.k, self.k), dtype=np.complex128)
        for a, row in enumerate(self.nodes):
            for b, node in enumerate(row):
                out[:, a, b] = exprlang.evaluate(node, bindings, real_only=True)
        return out

    def __repr__(self) -> str:
        return f'ExprMatrix({[[exprlang.to_source(n) for n in row] for row in self.nodes]})'


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    count: int

    def __post_init__(self) -> None:
        if self.count < 2:
            raise PreconditionError(f'grid axis needs count >= 2, got {self.count}')
        if not self.hi > self.lo:
            raise PreconditionError(f'grid axis needs lo < hi, got [{self.lo}, {self.hi}]')

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


class SampledMatFunc(MatFunc):
    """
    Matrix function known only on an axis-aligned grid.

    :param axes: One :class:`Axis` per dimension.
    :param values: Array of shape ``(*counts, k, k)``.
    """

    def __init__(self, axes: Sequence[Axis], values: np.ndarray) -> None:
        self.axes = tuple(axes)
        values = np.asarray(values, dtype=np.complex128)
        counts = tuple(a.count for a in self.axes)
        if values.ndim != len(counts) + 2 or values.shape[:-2] != counts or values.shape[-1] != values.shape[-2]:
            raise PreconditionError(f'sampled values must have shape {counts} + (k, k), got {values.shape}')
        if not np.all(np.isfinite(values)):
            raise PreconditionError('sampled values must be finite')
        _check_dims(len(self.axes), values.shape[-1])
        self.m = len(self.axes)
        self.k = values.shape[-1]
        self.values = values

    def grid_points(self) -> np.ndarray:
        mesh = np.meshgrid(*(a.values() for a in self.axes), indexing='ij')
        return np.stack([g.ravel() for g in mesh], axis=1)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = self._points(points)
        index = []
        for i, axis in enumerate(self.axes):
            pos = (pts[:, i] - axis.lo) / axis.step
            nearest = np.rint(pos)
            off = (np.abs(pos - nearest) > 1e-9) | (nearest < 0) | (nearest > axis.count - 1)
            if np.any(off):
                bad = pts[int(np.argmax(off))].tolist()
                raise PreconditionError(f'sampled function is only known on its grid; {bad} is not a grid point')
            index.append(nearest.astype(int))
        return self.values[tuple(index)]


@dataclass(frozen=True)
class GridSpec:
    """
    Sample points for pointwise checks: a box plus radial rays.

    Rays run along the ``2m`` signed axis directions and the ``2^m``
    diagonals, at each of ``radii``.
    """

    axes: Tuple[Axis, ...]
    radii: Tuple[float, ...] = RAY_RADII
    rays: bool = True

    def __post_init__(self) -> None:
        if not self.axes:
            raise PreconditionError('grid needs at least one axis')
        if any(r <= 0 for r in self.radii):
            raise PreconditionError('ray radii must be positive')

    @classmethod
    def default(cls, m: int) -> 'GridSpec':
        _check_dims(m, 1)
        count = DEFAULT_COUNT if m <= 3 else HIGH_DIM_COUNT
        return cls(tuple(Axis(-DEFAULT_EXTENT, DEFAULT_EXTENT, count) for _ in range(m)))

    @property
    def m(self) -> int:
        return len(self.axes)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*(a.values() for a in self.axes), indexing='ij')
        return np.stack([g.ravel() for g in mesh], axis=1)

    def directions(self) -> np.ndarray:
        if not self.rays:
            return np.zeros((0, self.m))
        eye = np.eye(self.m)
        axis_dirs = np.concatenate([eye, -eye])
        diagonals = np.array(list(itertools.product((1.0, -1.0), repeat=self.m))) / math.sqrt(self.m)
        if self.m == 1:
            return axis_dirs
        return np.concatenate([axis_dirs, diagonals])

    def ray_points(self) -> np.ndarray:
        """Shape ``(directions, radii, m)``."""
        return self.directions()[:, None, :] * np.asarray(self.radii, dtype=float)[None, :, None]


def _require_m(funcs: Iterable[MatFunc], m: int, k: Optional[int] = None) -> None:
    for f in funcs:
        if f.m != m:
            raise PreconditionError(f'coefficient lives on R^{f.m}, grid is R^{m}')
        if k is not None and f.k != k:
            raise PreconditionError(f'coefficient is {f.k}x{f.k}, expected {k}x{k}')


def _spectral_norms(stack: np.ndarray) -> np.ndarray:
    if stack.size == 0:
        return np.zeros(stack.shape[:-2])
    return np.linalg.norm(stack, ord=2, axis=(-2, -1))


def _sample_set(
    funcs: Sequence[MatFunc], grid: Optional[GridSpec]
) -> Tuple[np.ndarray, int, Optional[GridSpec]]:
    """
    Box points followed by ray points, the box size and the grid whose rays
    were appended. Sampled coefficients are only known on their own grid,
    which then replaces the box and has no rays.
    """
    m = funcs[0].m
    sampled = [f for f in funcs if isinstance(f, SampledMatFunc)]
    if sampled:
        points = sampled[0].grid_points()
        return points, len(points), None
    grid = grid or GridSpec.default(m)
    if grid.m != m:
        raise PreconditionError(f'grid is on R^{grid.m}, coefficients on R^{m}')
    box = grid.points()
    if not grid.rays:
        return box, len(box), None
    return np.concatenate([box, grid.ray_points().reshape(-1, m)]), len(box), grid


# --------------------------------------------------------------------------
# Dirac type: (Afnorm) and the Hoelder condition
# --------------------------------------------------------------------------

def check_afnorm(
    alphas: Sequence[Sequence],
    q: MatFunc,
    grid: Optional[GridSpec] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> List[CheckResult]:
    """
    The three identities making ``-i sum alpha_l d/dx_l + Q`` formally normal.

    1. ``alpha_l^* alpha_r = alpha_l alpha_r^*`` for all ``l, r``;
    2. ``Q Q^* = Q^* Q`` at every sample point;
    3. ``alpha_l^* Q = alpha_l Q^*`` at every sample point.

    Each passes iff its max residual is at most ``tolerances.residual``
    times the scale of the matrices involved.

    :raises PreconditionError: ``len(alphas) != m`` or size mismatch.
    """
    mats = [np.array(a, dtype=np.complex128) for a in alphas]
    grid = grid or GridSpec.default(q.m)
    if len(mats) != q.m or grid.m != q.m:
        raise PreconditionError(f'need one alpha per dimension: {len(mats)} alphas, Q on R^{q.m}, grid on R^{grid.m}')
    if any(a.shape != (q.k, q.k) for a in mats):
        raise PreconditionError(f'alphas must be {q.k}x{q.k} matrices')
    tol = tolerances.residual
    results: List[CheckResult] = []

    worst, witness = 0.0, None
    scale = max([1.0] + [float(np.linalg.norm(a, 2)) ** 2 for a in mats])
    for (l, al), (r, ar) in itertools.product(enumerate(mats, 1), repeat=2):
        res = float(np.max(np.abs(al.conj().T @ ar - al @ ar.conj().T)))
        if res > worst:
            worst = res
        if witness is None and res > tol * scale:
            witness = [l, r]
    results.append(CheckResult(
        label='(Afnorm-1)',
        verdict=Verdict.PASS if witness is None else Verdict.FAIL,
        evidence={'max_residual': worst, 'scale': scale, 'pairs': len(mats) ** 2},
        witness=witness,
        note='alpha_l* alpha_r = alpha_l alpha_r*' + ('' if witness is None else f' fails at (l, r) = ({witness[0]}, {witness[1]})'),
    ))

    points, _, _ = _sample_set([q], grid)
    values = q.evaluate(points)
    adj = np.conj(np.swapaxes(values, -1, -2))
    q_scale = np.maximum(1.0, _spectral_norms(values))

    residual = np.max(np.abs(values @ adj - adj @ values), axis=(1, 2))
    rel = residual / q_scale ** 2
    bad = np.flatnonzero(rel > tol)
    results.append(CheckResult(
        label='(Afnorm-2)',
        verdict=Verdict.PASS if bad.size == 0 else Verdict.FAIL,
        evidence={'max_residual': float(residual.max()), 'max_relative': float(rel.max()), 'points': int(len(points))},
        witness=points[bad[0]].tolist() if bad.size else None,
        note='Q(x) Q*(x) = Q*(x) Q(x) on samples',
        heuristic=not q.symbolic,
    ))

    worst, witness = 0.0, None
    for l, al in enumerate(mats, 1):
        residual = np.max(np.abs(al.conj().T @ values - al @ adj), axis=(1, 2))
        scale_l = q_scale * max(1.0, float(np.linalg.norm(al, 2)))
        rel = residual / scale_l
        worst = max(worst, float(rel.max()))
        bad = np.flatnonzero(rel > tol)
        if witness is None and bad.size:
            witness = {'l': l, 'x': points[bad[0]].tolist()}
    results.append(CheckResult(
        label='(Afnorm-3)',
        verdict=Verdict.PASS if witness is None else Verdict.FAIL,
        evidence={'max_relative': worst, 'points': int(len(points))},
        witness=witness,
        note='alpha_l* Q(x) = alpha_l Q*(x) on samples',
        heuristic=not q.symbolic,
    ))
    for r in results:
        if r.verdict is Verdict.FAIL:
            logger.info('%s violated, witness %s', r.label, r.witness)
    return results


def _ball_anchors(m: int, radius: float, extra: int, rng: np.random.Generator) -> np.ndarray:
    per_axis = max(3, int(HOLDER_ANCHORS ** (1.0 / m)))
    per_axis += (per_axis + 1) % 2
    side = radius / math.sqrt(m)
    axis = np.linspace(-side, side, per_axis)
    mesh = np.meshgrid(*([axis] * m), indexing='ij')
    box = np.stack([g.ravel() for g in mesh], axis=1)
    direction = rng.normal(size=(extra, m))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    random = direction * radius * rng.uniform(size=(extra, 1)) ** (1.0 / m)
    return np.concatenate([box, random])


def holder_estimates(
    q: MatFunc,
    radii: Sequence[int] = HOLDER_RADII,
    pairs_per_radius: int = HOLDER_PAIRS,
    *,
    seed: int = 0,
) -> Dict[int, Tuple[float, float]]:
    """
    Empirical local Hoelder exponent ``b_n`` and constant on ``|x| <= n``.

    The modulus of continuity ``omega(d) = max |Q(x + d u) - Q(x)|`` is
    sampled for small separations ``d`` (spectral norm), over anchors on a
    grid through the origin plus random anchors and over the signed axis
    and random unit directions. ``b_n`` is the log-log slope of ``omega``
    clipped to ``(0, 1]``; the constant is the sup of
    ``|Q(x) - Q(y)| / |x - y|^b_n`` over those pairs and ``pairs_per_radius``
    random pairs in the ball.
    """
    if isinstance(q, SampledMatFunc):
        return _holder_sampled(q, radii)
    rng = np.random.default_rng(seed)
    eye = np.eye(q.m)
    out: Dict[int, Tuple[float, float]] = {}
    for n in radii:
        if n <= 0:
            raise PreconditionError(f'Hoelder radius must be positive, got {n}')
        steps = n * HOLDER_STEPS
        anchors = _ball_anchors(q.m, n * (1.0 - 1.5 * HOLDER_STEPS[-1]), pairs_per_radius, rng)
        random_dirs = rng.normal(size=(4, q.m))
        random_dirs /= np.linalg.norm(random_dirs, axis=1, keepdims=True)
        dirs = np.concatenate([eye, -eye, random_dirs])
        base = q.evaluate(anchors)
        omega = np.zeros(len(steps))
        diffs, seps = [], []
        for j, d in enumerate(steps):
            shifted = (anchors[:, None, :] + d * dirs[None, :, :]).reshape(-1, q.m)
            delta = q.evaluate(shifted).reshape(len(anchors), len(dirs), q.k, q.k) - base[:, None]
            norms = _spectral_norms(delta)
            omega[j] = float(norms.max())
            diffs.append(norms.ravel())
            seps.append(np.full(norms.size, d))
        x = anchors[rng.integers(len(anchors), size=pairs_per_radius)]
        y = _ball_anchors(q.m, n, pairs_per_radius, rng)[-pairs_per_radius:]
        sep = np.linalg.norm(x - y, axis=1)
        keep = sep > 0
        diffs.append(_spectral_norms(q.evaluate(x[keep]) - q.evaluate(y[keep])))
        seps.append(sep[keep])
        out[int(n)] = _holder_fit(steps, omega, np.concatenate(diffs), np.concatenate(seps))
    return out


def _holder_sampled(q: SampledMatFunc, radii: Sequence[int]) -> Dict[int, Tuple[float, float]]:
    points = q.grid_points()
    flat = q.values.reshape(-1, q.k, q.k)
    counts = [a.count for a in q.axes]
    strides = np.cumprod([1] + counts[::-1])[:-1][::-1]
    out: Dict[int, Tuple[float, float]] = {}
    for n in radii:
        inside = np.linalg.norm(points, axis=1) <= n
        offsets = range(1, max(2, min(counts) // 4))
        steps, omega, diffs, seps = [], [], [], []
        for j in offsets:
            worst = 0.0
            for i, axis in enumerate(q.axes):
                idx = np.flatnonzero(inside)
                coord = (idx // strides[i]) % counts[i]
                ok = coord + j < counts[i]
                src = idx[ok]
                dst = src + j * strides[i]
                dst_ok = inside[dst]
                src, dst = src[dst_ok], dst[dst_ok]
                if src.size == 0:
                    continue
                norms = _spectral_norms(flat[dst] - flat[src])
                worst = max(worst, float(norms.max()))
                diffs.append(norms)
                seps.append(np.full(norms.size, j * axis.step))
            steps.append(j * min(a.step for a in q.axes))
            omega.append(worst)
        if not diffs:
            raise PreconditionError(f'no grid pairs inside radius {n}')
        out[int(n)] = _holder_fit(np.asarray(steps), np.asarray(omega), np.concatenate(diffs), np.concatenate(seps))
    return out


def _holder_fit(steps: np.ndarray, omega: np.ndarray, diffs: np.ndarray, seps: np.ndarray) -> Tuple[float, float]:
    if np.all(omega <= 0) and np.all(diffs <= 0):
        return 1.0, 0.0
    b = min(1.0, max(loglog_slope(steps, omega), 1e-3))
    keep = seps > 0
    ratio = diffs[keep] / seps[keep] ** b
    return b, float(ratio.max()) if ratio.size else 0.0


def check_holder(
    q: MatFunc,
    radii: Sequence[int] = HOLDER_RADII,
    pairs_per_radius: int = HOLDER_PAIRS,
    *,
    seed: int = 0,
) -> CheckResult:
    """
    Local Hoelder condition for ``Q`` on balls of radius ``n``.

    Polynomials are locally Lipschitz, so the symbolic path is certified
    with ``b_n = 1``. Otherwise the estimates from :func:`holder_estimates`
    are heuristic: exponents above 0.05 with finite constants are reported
    as inconclusive-positive, never as a pass.
    """
    estimates = holder_estimates(q, radii, pairs_per_radius, seed=seed)
    by_radius = {n: {'b': b, 'sup': s} for n, (b, s) in estimates.items()}
    evidence = {'by_radius': by_radius, 'min_exponent': min(b for b, _ in estimates.values())}
    if q.symbolic:
        return CheckResult(
            label='(Holder)',
            verdict=Verdict.PASS,
            evidence=evidence,
            note='polynomial coefficients are locally Lipschitz (b_n = 1)',
        )
    bad = [n for n, (b, s) in estimates.items() if not math.isfinite(s) or b <= HOLDER_MIN_EXPONENT]
    if bad:
        return CheckResult(
            label='(Holder)',
            verdict=Verdict.FAIL,
            evidence=evidence,
            witness=bad[0],
            note=f'no Hoelder exponent above {HOLDER_MIN_EXPONENT} on |x| <= {bad[0]}',
            heuristic=True,
        )
    return CheckResult(
        label='(Holder)',
        verdict=Verdict.INCONCLUSIVE,
        evidence=evidence,
        note='heuristic pass: sampled exponents and constants are finite',
        heuristic=True,
    )


# --------------------------------------------------------------------------
# Variable coefficients: (QL), (QQ), (QI) and polynomial domination
# --------------------------------------------------------------------------

def _grid_partial_sups(q: SampledMatFunc) -> Tuple[float, float]:
    """Sup of first and second grid-difference partials (spectral norm)."""
    first, second = 0.0, 0.0
    spacing = [a.step for a in q.axes]
    for i in range(q.m):
        d1 = np.gradient(q.values, spacing[i], axis=i)
        first = max(first, float(_spectral_norms(d1).max()))
        for h in range(q.m):
            d2 = np.gradient(d1, spacing[h], axis=h)
            second = max(second, float(_spectral_norms(d2).max()))
    return first, second


def check_QL(
    q_list: Sequence[MatFunc],
    grid: Optional[GridSpec] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckResult:
    """
    Bounded first and second partial derivatives of every ``Q_j``.

    For polynomials this holds iff every ``Q_j`` has degree at most one; the
    witness is the first monomial of higher degree. Other coefficients are
    differenced along the grid rays and fail only when the derivative sups
    grow with the radius.
    """
    if not q_list:
        raise PreconditionError('need at least one coefficient Q_j')
    m = q_list[0].m
    _require_m(q_list, m, q_list[0].k)
    if all(q.symbolic for q in q_list):
        degrees = [q.degree for q in q_list]
        for j, q in enumerate(q_list, 1):
            high = [e for e in q.monomials() if sum(e) > 1]
            if high:
                name = monomial_name(high[0])
                return CheckResult(
                    label='(QL)',
                    verdict=Verdict.FAIL,
                    evidence={'degrees': degrees, 'max_degree': max(degrees)},
                    witness={'j': j, 'monomial': name},
                    note=f'Q_{j} contains {name}; its first partials are unbounded',
                )
        return CheckResult(
            label='(QL)',
            verdict=Verdict.PASS,
            evidence={'degrees': degrees, 'max_degree': max(degrees)},
            note='all Q_j affine: first partials constant, second partials zero',
        )

    sampled = [q for q in q_list if isinstance(q, SampledMatFunc)]
    if sampled:
        first_sup, second_sup = 0.0, 0.0
        for q in sampled:
            d1, d2 = _grid_partial_sups(q)
            first_sup, second_sup = max(first_sup, d1), max(second_sup, d2)
        return CheckResult(
            label='(QL)',
            verdict=Verdict.INCONCLUSIVE,
            evidence={'first_partial_sup': first_sup, 'second_partial_sup': second_sup},
            note='heuristic: grid difference sups of sampled coefficients, no growth information',
            heuristic=True,
        )

    grid = grid or GridSpec.default(m)
    if not grid.rays:
        raise PreconditionError('finite-difference (QL) needs radial rays')
    rays = grid.ray_points()
    h = FD_STEP
    eye = np.eye(m)
    first = np.zeros(rays.shape[:2])
    second = np.zeros(rays.shape[:2])
    flat = rays.reshape(-1, m)
    for q in q_list:
        base = q.evaluate(flat)
        for i in range(m):
            plus = q.evaluate(flat + h * eye[i])
            minus = q.evaluate(flat - h * eye[i])
            d1 = _spectral_norms((plus - minus) / (2 * h)).reshape(rays.shape[:2])
            d2 = _spectral_norms((plus - 2 * base + minus) / h ** 2).reshape(rays.shape[:2])
            first = np.maximum(first, d1)
            second = np.maximum(second, d2)
    growth = []
    for d, direction in enumerate(grid.directions()):
        for name, sup in (('first', first[d]), ('second', second[d])):
            trend, slope = classify_trend(grid.radii, sup, tolerances.trend_slope)
            if trend is Trend.GROWING:
                growth.append((direction.tolist(), name, slope))
    evidence = {'first_partial_sup': float(first.max()), 'second_partial_sup': float(second.max())}
    if growth:
        direction, name, slope = growth[0]
        return CheckResult(
            label='(QL)',
            verdict=Verdict.FAIL,
            evidence={**evidence, 'slope': slope},
            witness={'direction': direction, 'derivative': name},
            note=f'{name} partials grow along a ray (log-log slope {slope:.3f})',
            heuristic=True,
        )
    return CheckResult(
        label='(QL)',
        verdict=Verdict.INCONCLUSIVE,
        evidence=evidence,
        note='heuristic: finite-difference partials stay bounded along the rays',
        heuristic=True,
    )


def _hermitian_part(block: np.ndarray) -> np.ndarray:
    return 0.5 * (block + np.conj(np.swapaxes(block, -1, -2)))


def assemble_blocks(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gram-type block matrices from ``Q_1(x)..Q_m(x)``.

    :param values: Shape ``(m, k, k)`` or batched ``(N, m, k, k)``.
    :return: ``Q(x) = (Q_r* Q_l)_{r,l}`` and ``Q^(*)(x) = (Q_r Q_l*)_{r,l}``,
             both ``mk x mk``.
    :raises ContractViolation: A block matrix is not Hermitian PSD (round-off
                               beyond the tolerances).
    """
    v = np.asarray(values, dtype=np.complex128)
    if v.ndim < 3 or v.shape[-1] != v.shape[-2]:
        raise PreconditionError(f'expected (m, k, k) coefficient values, got shape {v.shape}')
    m, k = v.shape[-3], v.shape[-1]
    lead = v.shape[:-3]
    q = np.einsum('...rba,...lbc->...ralc', v.conj(), v).reshape(lead + (m * k, m * k))
    q_star = np.einsum('...rab,...lcb->...ralc', v, v.conj()).reshape(lead + (m * k, m * k))
    for name, block in (('Q', q), ('Q(*)', q_star)):
        scale = np.maximum(1.0, np.max(np.abs(block), axis=(-2, -1)))
        defect = np.max(np.abs(block - np.conj(np.swapaxes(block, -1, -2))), axis=(-2, -1)) / scale
        if np.any(defect > BLOCK_HERMITIAN_TOL):
            raise ContractViolation(f'{name} block matrix is not Hermitian')
        lowest = np.linalg.eigvalsh(block)[..., 0] / scale
        if np.any(lowest < -PSD_TOL):
            raise ContractViolation(f'{name} block matrix is not PSD (lambda_min {float(lowest.min()):.3g})')
    return _hermitian_part(q), _hermitian_part(q_star)


def _coefficient_values(q_list: Sequence[MatFunc], points: np.ndarray) -> np.ndarray:
    """Shape ``(N, m, k, k)``."""
    return np.stack([q.evaluate(points) for q in q_list], axis=1)


def _ray_growth(
    grid: Optional[GridSpec], ray_values: np.ndarray, threshold: float
) -> Optional[Tuple[List[float], float]]:
    """First direction along which ``ray_values`` grow with the radius."""
    if grid is None:
        return None
    per_ray = ray_values.reshape(len(grid.directions()), len(grid.radii))
    for direction, values in zip(grid.directions(), per_ray):
        trend, slope = classify_trend(grid.radii, values, threshold)
        if trend is Trend.GROWING:
            return direction.tolist(), slope
    return None


def check_QQ(
    q_list: Sequence[MatFunc],
    grid: Optional[GridSpec] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckResult:
    """
    Two-sided bound ``c1^-1 Q(x) <= Q^(*)(x) <= c1 Q(x)``.

    ``c1`` is the sup of the pointwise pencil bound over the box and the
    rays. A point where the ranges differ fails with that point as witness;
    so does a ray along which the pointwise bound keeps growing.
    """
    if not q_list:
        raise PreconditionError('need at least one coefficient Q_j')
    _require_m(q_list, q_list[0].m, q_list[0].k)
    points, n_box, ray_grid = _sample_set(q_list, grid)
    q, q_star = assemble_blocks(_coefficient_values(q_list, points))
    scale = np.maximum(1.0, np.max(np.abs(q), axis=(-2, -1)))
    equal = np.max(np.abs(q - q_star), axis=(-2, -1)) <= tolerances.pencil * scale
    bounds = np.ones(len(points))
    for i in np.flatnonzero(~equal):
        c = pencil_bound(q[i], q_star[i], tolerances.pencil)
        if c is None:
            x = points[i].tolist()
            logger.info('(QQ) pencil has no bound at x = %s', x)
            return CheckResult(
                label='(QQ)',
                verdict=Verdict.FAIL,
                evidence={'c1': None, 'points_checked': int(i + 1), 'points': int(len(points))},
                witness=x,
                note='none: Q(x) and Q(*)(x) have different ranges',
            )
        bounds[i] = c
    c1 = float(bounds.max())
    evidence = {'c1': c1, 'points': int(len(points)), 'equal_points': int(np.count_nonzero(equal))}
    growth = _ray_growth(ray_grid, bounds[n_box:], tolerances.trend_slope)
    if growth:
        direction, slope = growth
        return CheckResult(
            label='(QQ)',
            verdict=Verdict.FAIL,
            evidence={**evidence, 'slope': slope},
            witness=direction,
            note=f'pencil bound grows along a ray (log-log slope {slope:.3f})',
        )
    return CheckResult(
        label='(QQ)',
        verdict=Verdict.PASS,
        evidence=evidence,
        note=f'c1 = {c1:.6g} on samples, stable along rays',
        heuristic=not all(f.symbolic for f in q_list),
    )


def check_QI(
    q_list: Sequence[MatFunc],
    grid: Optional[GridSpec] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckResult:
    """Upper bound ``Q(x) <= c2 I``; ``c2`` is the sup of ``lambda_max(Q(x))``."""
    if not q_list:
        raise PreconditionError('need at least one coefficient Q_j')
    _require_m(q_list, q_list[0].m, q_list[0].k)
    points, n_box, ray_grid = _sample_set(q_list, grid)
    q, _ = assemble_blocks(_coefficient_values(q_list, points))
    top = np.linalg.eigvalsh(q)[:, -1]
    top = np.where(np.abs(top) <= PSD_TOL, 0.0, top)
    c2 = float(top.max())
    evidence = {'c2': c2, 'points': int(len(points))}
    growth = _ray_growth(ray_grid, top[n_box:], tolerances.trend_slope)
    if growth:
        direction, slope = growth
        return CheckResult(
            label='(QI)',
            verdict=Verdict.FAIL,
            evidence={**evidence, 'slope': slope},
            witness=direction,
            note=f'lambda_max(Q(x)) grows along a ray (log-log slope {slope:.3f})',
        )
    return CheckResult(
        label='(QI)',
        verdict=Verdict.PASS,
        evidence=evidence,
        note=f'c2 = {c2:.6g} on samples, stable along rays',
        heuristic=not all(f.symbolic for f in q_list),
    )


def check_poly_domination(
    p1: MatFunc,
    p2: MatFunc,
    grid: Optional[GridSpec] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckResult:
    """
    ``|P2(z)| <= c (1 + |P1(z)|)`` on ``R^m``: the symbol criterion for
    ``P1(d/dx)`` dominating ``P2(d/dx)`` on test functions.

    ``c`` is the sup of the ratio over the box and rays; a ray along which
    the ratio grows is reported as the divergent direction.
    """
    if p1.k != 1 or p2.k != 1:
        raise PreconditionError('domination compares scalar polynomials (k = 1)')
    if p1.m != p2.m:
        raise PreconditionError(f'P1 on R^{p1.m}, P2 on R^{p2.m}')
    points, n_box, ray_grid = _sample_set([p1, p2], grid)
    ratio = np.abs(p2.evaluate(points)[:, 0, 0]) / (1.0 + np.abs(p1.evaluate(points)[:, 0, 0]))
    c = float(ratio.max())
    evidence = {'c': c, 'points': int(len(points))}
    growth = _ray_growth(ray_grid, ratio[n_box:], tolerances.trend_slope)
    if growth:
        direction, slope = growth
        return CheckResult(
            label='(diffdomin)',
            verdict=Verdict.FAIL,
            evidence={**evidence, 'slope': slope},
            witness=direction,
            note=f'divergent ray: |P2|/(1+|P1|) grows with log-log slope {slope:.3f}',
        )
    return CheckResult(
        label='(diffdomin)',
        verdict=Verdict.PASS,
        evidence=evidence,
        note=f'c = {c:.6g}; ratio stable along rays',
    )


# --------------------------------------------------------------------------
# Pipelines
# --------------------------------------------------------------------------

@dataclass
class DiffopResult:
    checks: List[CheckResult]
    proposition: str
    implies: str
    assumptions: List[str] = field(default_factory=list)

    @property
    def overall(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks)

    @property
    def conclusion(self) -> str:
        overall = self.overall
        if overall is Verdict.PASS:
            return f'{self.proposition}: {self.implies}; hypotheses certified'
        flagged = [c.label for c in self.checks if c.verdict is overall]
        state = 'not certified' if overall is Verdict.FAIL else 'inconclusive'
        return f'{self.proposition}: hypotheses {state} ({", ".join(flagged)})'


def certify_formally_normal(
    alphas: Sequence[Sequence],
    q: MatFunc,
    grid: Optional[GridSpec] = None,
    *,
    radii: Sequence[int] = HOLDER_RADII,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> DiffopResult:
    """(Afnorm) plus the local Hoelder condition: ``A`` is essentially normal."""
    checks = check_afnorm(alphas, q, grid, tolerances=tolerances)
    checks.append(check_holder(q, radii, seed=seed))
    return DiffopResult(
        checks=checks,
        proposition=FORMAL_NORMALITY,
        implies='A is essentially normal in (L^2(R^m))^k',
        assumptions=['Q is locally integrable; assumed'],
    )


def certify_graph_norm_domain(
    q_list: Sequence[MatFunc],
    grid: Optional[GridSpec] = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> DiffopResult:
    """(QL), (QQ) and (QI): ``D(closure A) = D(A*)``."""
    checks = [
        check_QL(q_list, grid, tolerances=tolerances),
        check_QQ(q_list, grid, tolerances=tolerances),
        check_QI(q_list, grid, tolerances=tolerances),
    ]
    return DiffopResult(
        checks=checks,
        proposition=GRAPH_NORM,
        implies='D(closure of A) = D(A*)',
        assumptions=[
            'Q_l are C^2 functions; assumed',
            'the Laplacian dominates ad(S, A) on test functions; implied by (QL) '
            'through the symbol criterion (diffdomin)',
        ],
    )
