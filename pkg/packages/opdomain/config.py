"""
Job configuration: JSON documents turned into operator, pairing, diagonal,
differential-operator and probe specs.

Every spec object may be replaced by ``{"file": "relative/path.json"}``,
resolved against the directory of the referencing document. Complex scalars
are written as ``[re, im]``. Errors carry the dotted path of the offending
field.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from opdomain.approx_unit import DEFAULT_N_VALUES, KINDS, RESOLVENT_POWER
from opdomain.core import (
    DiagonalSpec,
    OperatorSpec,
    PairingSpec,
    ProductGen,
    SumGen,
    Symmetry,
    TableGen,
    Window,
    make_family,
    spot_check,
)
from opdomain.diffop_criteria import (
    HOLDER_RADII,
    RAY_RADII,
    Axis,
    ExprMatrix,
    GridSpec,
    MatFunc,
    PolyMatrix,
    SampledMatFunc,
)
from opdomain.errors import ConfigError, OpdomainError
from opdomain.matrix_criteria import DEFAULT_LADDER
from opdomain.tolerances import DEFAULT_TOLERANCES, Tolerances

logger = logging.getLogger(__name__)

JOB_KINDS = ('check-matrix', 'check-diffop', 'approx-unit', 'oracle', 'all')
SPOT_CHECK_WINDOW = 256
DEFAULT_MAX_WINDOW = 20_000
DEFAULT_OUTPUT = Path('reports')


@dataclass(frozen=True)
class ModaklParams:
    d: float
    s: float
    alpha: float


@dataclass(frozen=True)
class LemmaConfig:
    z: complex = 2j
    powers: Tuple[int, ...] = (2, 3)
    windows: Tuple[int, ...] = (64, 128, 256)


@dataclass(frozen=True)
class UnitConfig:
    kind: str = RESOLVENT_POWER
    m: Optional[int] = None
    wot_vectors: Tuple[int, ...] = (1,)
    wot_window: int = 256
    lemma: Optional[LemmaConfig] = LemmaConfig()
    sqrt3: Optional[Tuple[int, int]] = (100, 100)
    domination_sizes: Tuple[int, ...] = (64, 128, 256)
    komcond_window: Optional[int] = 128


@dataclass(frozen=True)
class DiffopConfig:
    kind: str
    m: int
    k: int
    alphas: Tuple[np.ndarray, ...] = ()
    q: Optional[MatFunc] = None
    coefficients: Tuple[MatFunc, ...] = ()
    domination: Tuple[Tuple[MatFunc, MatFunc], ...] = ()
    holder_radii: Tuple[int, ...] = HOLDER_RADII


@dataclass(frozen=True)
class LimitPointConfig:
    z: complex = 1j
    sizes: Tuple[int, ...] = (64, 128, 256, 512, 1024, 2048, 4096)
    diag: Optional[DiagonalSpec] = None
    offdiag: Optional[DiagonalSpec] = None


@dataclass(frozen=True)
class ResolventConfig:
    z: complex = 1j
    w: complex = 1j
    sizes: Tuple[int, ...] = (64, 128, 256, 512, 1024, 2048)


@dataclass(frozen=True)
class ProbeConfig:
    limit_point: Optional[LimitPointConfig] = None
    graph_norm: Optional[Window] = None
    resolvents: Optional[ResolventConfig] = None
    h_symmetry: Optional[Window] = None

    @property
    def empty(self) -> bool:
        return not any((self.limit_point, self.graph_norm, self.resolvents, self.h_symmetry))


@dataclass
class JobConfig:
    """A validated job; ``document`` is the raw JSON it came from."""

    job: str
    name: str
    document: Dict[str, Any]
    description: str = ''
    seed: int = 0
    operator: Optional[OperatorSpec] = None
    pairing: PairingSpec = field(default_factory=PairingSpec.identity)
    diagonal: Optional[DiagonalSpec] = None
    m: Optional[int] = None
    modakl: Optional[ModaklParams] = None
    ladder: Tuple[int, ...] = DEFAULT_LADDER
    n_values: Tuple[int, ...] = DEFAULT_N_VALUES
    schur: bool = False
    schur_weights: str = 'unit'
    unit: Optional[UnitConfig] = None
    diffop: Optional[DiffopConfig] = None
    grid: Optional[GridSpec] = None
    probes: ProbeConfig = ProbeConfig()
    tolerances: Tolerances = DEFAULT_TOLERANCES
    max_window: int = DEFAULT_MAX_WINDOW
    output: Path = DEFAULT_OUTPUT
    timestamp: Optional[str] = None
    spot_check: List[str] = field(default_factory=list)
    overrides: Dict[str, Any] = field(default_factory=dict)

    def echo(self) -> Dict[str, Any]:
        """Job fields echoed into the report."""
        return {
            'job': self.job,
            'name': self.name,
            'seed': self.seed,
            'operator': self.operator.label if self.operator else None,
            'm': self.m,
            'modakl': self.modakl,
            'ladder': list(self.ladder),
            'n_values': list(self.n_values),
            'max_window': self.max_window,
            'tolerances': self.tolerances.to_dict(),
            'overrides': self.overrides,
            'spot_check': self.spot_check,
        }


class _Reader:
    """Field-path aware accessors over a JSON document."""

    def __init__(self, base_dir: Path) -> None:
        self.base_dir = base_dir

    # ---------------------------------------------------------------- basics
    def resolve(self, value: Any, path: str) -> Any:
        if isinstance(value, dict) and set(value) == {'file'}:
            from utility.open_file import load_json_document

            target = self.base_dir / str(value['file'])
            if not target.is_file():
                raise ConfigError(f'referenced file {target} does not exist', field=path)
            return load_json_document(target)
        return value

    def obj(self, value: Any, path: str) -> Dict[str, Any]:
        value = self.resolve(value, path)
        if not isinstance(value, dict):
            raise ConfigError('expected a JSON object', field=path)
        return value

    @staticmethod
    def integer(value: Any, path: str, minimum: Optional[int] = None) -> int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f'expected an integer, got {value!r}', field=path)
        value = int(value)
        if minimum is not None and value < minimum:
            raise ConfigError(f'must be >= {minimum}, got {value}', field=path)
        return value

    @staticmethod
    def number(value: Any, path: str) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f'expected a number, got {value!r}', field=path)
        return float(value)

    def complex_(self, value: Any, path: str) -> complex:
        if isinstance(value, (list, tuple)) and len(value) == 2:
            return complex(self.number(value[0], f'{path}[0]'), self.number(value[1], f'{path}[1]'))
        return complex(self.number(value, path))

    def ints(self, value: Any, path: str, minimum: int = 1) -> Tuple[int, ...]:
        if not isinstance(value, list) or not value:
            raise ConfigError('expected a nonempty list of integers', field=path)
        return tuple(sorted({self.integer(v, f'{path}[{i}]', minimum) for i, v in enumerate(value)}))

    def array(self, value: Any, path: str, depth: int) -> np.ndarray:
        """Nested lists of complex scalars, ``depth`` levels deep."""
        def walk(v, p, d):
            if d == 0:
                return self.complex_(v, p)
            if not isinstance(v, list) or not v:
                raise ConfigError('expected a nonempty list', field=p)
            return [walk(x, f'{p}[{i}]', d - 1) for i, x in enumerate(v)]
        try:
            return np.array(walk(value, path, depth), dtype=np.complex128)
        except ValueError:
            raise ConfigError('ragged nested list', field=path) from None

    def matrix(self, value: Any, path: str) -> np.ndarray:
        out = self.array(value, path, 2)
        if out.ndim != 2:
            raise ConfigError('expected a rectangular matrix', field=path)
        return out

    def window(self, value: Any, path: str) -> Window:
        if not isinstance(value, list) or len(value) != 2:
            raise ConfigError('expected [lo, hi]', field=path)
        lo, hi = (self.integer(v, f'{path}[{i}]', 1) for i, v in enumerate(value))
        return _wrap(lambda: Window(lo, hi), path)

    # ------------------------------------------------------------- operators
    def operator(self, value: Any, path: str) -> OperatorSpec:
        spec = self.obj(value, path)
        bandwidth = spec.get('bandwidth')
        if bandwidth is not None:
            bandwidth = self.integer(bandwidth, f'{path}.bandwidth', 0)
        symmetry = spec.get('symmetry', 'none')
        if symmetry not in {s.value for s in Symmetry}:
            raise ConfigError(f'unknown symmetry {symmetry!r}', field=f'{path}.symmetry')
        kinds = [key for key in ('family', 'table', 'entries', 'expression', 'product', 'sum') if key in spec]
        if len(kinds) != 1:
            raise ConfigError('operator needs exactly one of family, table, entries, expression, product, sum',
                              field=path)
        kind = kinds[0]
        where = f'{path}.{kind}'
        if kind == 'family':
            params = self.obj(spec.get('params', {}), f'{path}.params')
            if spec['family'] in ('product', 'sum'):
                raise ConfigError('use the "product" or "sum" key with a list of operators', field=where)
            gen = _wrap(lambda: make_family(spec['family'], **params), where)
            label = spec['family']
        elif kind == 'table':
            gen = _wrap(lambda: TableGen(self.matrix(spec['table'], where)), where)
            label = 'table'
        elif kind == 'entries':
            rows = spec['entries']
            if not isinstance(rows, list):
                raise ConfigError('expected a list of [k, l, value]', field=where)
            entries = []
            for i, row in enumerate(rows):
                if not isinstance(row, list) or len(row) != 3:
                    raise ConfigError('expected [k, l, value]', field=f'{where}[{i}]')
                entries.append((self.integer(row[0], f'{where}[{i}][0]', 1),
                                self.integer(row[1], f'{where}[{i}][1]', 1),
                                self.complex_(row[2], f'{where}[{i}][2]')))
            gen = _wrap(lambda: TableGen.from_entries(entries), where)
            label = 'entries'
        elif kind == 'expression':
            return _wrap(lambda: OperatorSpec.from_expression(
                str(spec['expression']), bandwidth=bandwidth, symmetry=symmetry), where)
        else:
            parts = spec[kind]
            if not isinstance(parts, list) or not parts:
                raise ConfigError(f'{kind} needs a nonempty list of operators', field=where)
            specs = tuple(self.operator(p, f'{where}[{i}]') for i, p in enumerate(parts))
            gen = _wrap(lambda: (ProductGen if kind == 'product' else SumGen)(specs), where)
            label = kind + '(' + ', '.join(s.label for s in specs) + ')'
        return _wrap(lambda: OperatorSpec(gen, bandwidth, Symmetry(symmetry), str(spec.get('label', label))), path)

    def pairing(self, value: Any, path: str) -> PairingSpec:
        spec = self.obj(value, path)
        kind = spec.get('kind', 'explicit')
        s_g = spec.get('s_g')
        if s_g is not None:
            s_g = self.number(s_g, f'{path}.s_g')
        if kind == 'identity':
            return PairingSpec.identity()
        if kind == 'involution':
            gen = self.operator(spec.get('generator'), f'{path}.generator').entries
            return _wrap(lambda: PairingSpec.involution(gen, s_g), path)
        if kind != 'explicit':
            raise ConfigError(f'unknown pairing kind {kind!r}; known: identity, involution, explicit',
                              field=f'{path}.kind')
        h = self.operator(spec.get('h'), f'{path}.h')
        g = self.operator(spec.get('g'), f'{path}.g')
        p = spec.get('p', g.bandwidth)
        if p is None:
            raise ConfigError('G must be banded; give its bandwidth p', field=f'{path}.p')
        p = self.integer(p, f'{path}.p', 0)
        return _wrap(lambda: PairingSpec(h.entries, g.entries, p, s_g, h.bandwidth), path)

    def diagonal(self, value: Any, path: str) -> DiagonalSpec:
        value = self.resolve(value, path)
        if isinstance(value, (str, int, float)) and not isinstance(value, bool):
            return _wrap(lambda: DiagonalSpec.from_expression(value), path)
        spec = self.obj(value, path)
        if 'values' in spec:
            vals = spec['values']
            if not isinstance(vals, list) or not vals:
                raise ConfigError('expected a nonempty list of reals', field=f'{path}.values')
            return DiagonalSpec.from_values([self.number(v, f'{path}.values[{i}]') for i, v in enumerate(vals)])
        block = self.integer(spec.get('block', 1), f'{path}.block', 1)
        return _wrap(lambda: DiagonalSpec.from_expression(spec.get('expression', 'k'), block), path)

    # ---------------------------------------------------------------- diffop
    def grid(self, value: Any, path: str, m: int) -> GridSpec:
        spec = self.obj(value, path)
        if 'axes' not in spec:
            base = GridSpec.default(m)
            axes = base.axes
        else:
            raw = spec['axes']
            if not isinstance(raw, list) or len(raw) != m:
                raise ConfigError(f'expected {m} axes', field=f'{path}.axes')
            axes = tuple(self.axis(a, f'{path}.axes[{i}]') for i, a in enumerate(raw))
        radii = spec.get('radii', list(RAY_RADII))
        if not isinstance(radii, list) or not radii:
            raise ConfigError('expected a nonempty list of radii', field=f'{path}.radii')
        radii = tuple(self.number(r, f'{path}.radii[{i}]') for i, r in enumerate(radii))
        return _wrap(lambda: GridSpec(axes, radii, bool(spec.get('rays', True))), path)

    def axis(self, value: Any, path: str) -> Axis:
        spec = self.obj(value, path)
        return _wrap(lambda: Axis(self.number(spec.get('lo'), f'{path}.lo'),
                                  self.number(spec.get('hi'), f'{path}.hi'),
                                  self.integer(spec.get('count'), f'{path}.count', 2)), path)

    def matfunc(self, value: Any, path: str, m: int, k: int) -> MatFunc:
        spec = self.obj(value, path)
        kinds = [key for key in ('constant', 'polynomial', 'terms', 'expression', 'sampled') if key in spec]
        if len(kinds) != 1:
            raise ConfigError('coefficient needs exactly one of constant, polynomial, terms, expression, sampled',
                              field=path)
        kind = kinds[0]
        where = f'{path}.{kind}'
        raw = spec[kind]
        if kind == 'constant':
            func = _wrap(lambda: PolyMatrix.constant(self.matrix(raw, where), m), where)
        elif kind == 'polynomial':
            func = _wrap(lambda: PolyMatrix.from_expressions(raw, m, k), where)
        elif kind == 'terms':
            if not isinstance(raw, list):
                raise ConfigError('expected a list of {monomial, coefficient}', field=where)
            terms: Dict[Tuple[int, ...], np.ndarray] = {}
            for i, term in enumerate(raw):
                term = self.obj(term, f'{where}[{i}]')
                mono = term.get('monomial')
                if not isinstance(mono, list):
                    raise ConfigError('expected a list of exponents', field=f'{where}[{i}].monomial')
                exps = tuple(self.integer(e, f'{where}[{i}].monomial[{j}]', 0) for j, e in enumerate(mono))
                coef = term.get('coefficient')
                coef = self.matrix(coef, f'{where}[{i}].coefficient') if isinstance(coef, list) and \
                    coef and isinstance(coef[0], list) else self.complex_(coef, f'{where}[{i}].coefficient')
                terms[exps] = terms.get(exps, 0) + coef
            func = _wrap(lambda: PolyMatrix(m, k, terms), where)
        elif kind == 'expression':
            func = _wrap(lambda: ExprMatrix(raw, m, k), where)
        else:
            sampled = self.obj(raw, where)
            axes_raw = sampled.get('axes')
            if not isinstance(axes_raw, list) or len(axes_raw) != m:
                raise ConfigError(f'expected {m} axes', field=f'{where}.axes')
            axes = [self.axis(a, f'{where}.axes[{i}]') for i, a in enumerate(axes_raw)]
            values = self.array(sampled.get('values'), f'{where}.values', m + 2)
            func = _wrap(lambda: SampledMatFunc(axes, values), where)
        if func.m != m or func.k != k:
            raise ConfigError(f'coefficient is {func.k}x{func.k} on R^{func.m}, expected {k}x{k} on R^{m}',
                              field=path)
        return func

    def diffop(self, value: Any, path: str) -> DiffopConfig:
        spec = self.obj(value, path)
        kind = spec.get('kind')
        if kind not in ('dirac', 'variable'):
            raise ConfigError('kind must be "dirac" or "variable"', field=f'{path}.kind')
        m = self.integer(spec.get('m'), f'{path}.m', 1)
        k = self.integer(spec.get('k'), f'{path}.k', 1)
        domination = []
        for i, pair in enumerate(spec.get('domination', [])):
            pair = self.obj(pair, f'{path}.domination[{i}]')
            p1 = _wrap(lambda: PolyMatrix.from_expressions(str(pair.get('p1')), m), f'{path}.domination[{i}].p1')
            p2 = _wrap(lambda: PolyMatrix.from_expressions(str(pair.get('p2')), m), f'{path}.domination[{i}].p2')
            domination.append((p1, p2))
        radii = self.ints(spec.get('holder_radii', list(HOLDER_RADII)), f'{path}.holder_radii')
        if kind == 'dirac':
            alphas = spec.get('alphas')
            if not isinstance(alphas, list) or len(alphas) != m:
                raise ConfigError(f'expected {m} alpha matrices', field=f'{path}.alphas')
            mats = tuple(self.matrix(a, f'{path}.alphas[{i}]') for i, a in enumerate(alphas))
            if any(a.shape != (k, k) for a in mats):
                raise ConfigError(f'alphas must be {k}x{k}', field=f'{path}.alphas')
            q_raw = spec.get('q', {'constant': np.zeros((k, k)).tolist()})
            q = self.matfunc(q_raw, f'{path}.q', m, k)
            return DiffopConfig('dirac', m, k, alphas=mats, q=q, domination=tuple(domination), holder_radii=radii)
        coefs = spec.get('coefficients')
        if not isinstance(coefs, list) or len(coefs) != m:
            raise ConfigError(f'expected {m} coefficients Q_1..Q_{m}', field=f'{path}.coefficients')
        funcs = tuple(self.matfunc(c, f'{path}.coefficients[{i}]', m, k) for i, c in enumerate(coefs))
        return DiffopConfig('variable', m, k, coefficients=funcs, domination=tuple(domination), holder_radii=radii)

    # ---------------------------------------------------------- unit, probes
    def unit(self, value: Any, path: str) -> UnitConfig:
        spec = self.obj(value, path)
        kind = spec.get('kind', RESOLVENT_POWER)
        if kind not in KINDS:
            raise ConfigError(f'unknown unit family {kind!r}; known: {", ".join(KINDS)}', field=f'{path}.kind')
        m = spec.get('m')
        lemma = None
        if spec.get('lemma', {}) is not None:
            raw = self.obj(spec.get('lemma', {}), f'{path}.lemma')
            lemma = LemmaConfig(
                self.complex_(raw.get('z', [0, 2]), f'{path}.lemma.z'),
                self.ints(raw.get('powers', [2, 3]), f'{path}.lemma.powers'),
                self.ints(raw.get('windows', [64, 128, 256]), f'{path}.lemma.windows'),
            )
        sqrt3 = None
        if spec.get('sqrt3', {}) is not None:
            raw = self.obj(spec.get('sqrt3', {}), f'{path}.sqrt3')
            sqrt3 = (self.integer(raw.get('n_max', 100), f'{path}.sqrt3.n_max', 1),
                     self.integer(raw.get('k_max', 100), f'{path}.sqrt3.k_max', 1))
        komcond = spec.get('komcond_window', 128)
        return UnitConfig(
            kind=kind,
            m=None if m is None else self.integer(m, f'{path}.m', 1),
            wot_vectors=self.ints(spec.get('wot_vectors', [1]), f'{path}.wot_vectors'),
            wot_window=self.integer(spec.get('wot_window', 256), f'{path}.wot_window', 1),
            lemma=lemma,
            sqrt3=sqrt3,
            domination_sizes=self.ints(spec.get('domination_sizes', [64, 128, 256]), f'{path}.domination_sizes'),
            komcond_window=None if komcond is None else self.integer(komcond, f'{path}.komcond_window', 1),
        )

    def probes(self, value: Any, path: str) -> ProbeConfig:
        spec = self.obj(value, path)
        unknown = set(spec) - {'limit_point', 'graph_norm', 'resolvents', 'h_symmetry'}
        if unknown:
            raise ConfigError(f'unknown probe {sorted(unknown)[0]!r}', field=path)
        limit = graph = resolvents = h_sym = None
        if 'limit_point' in spec:
            raw = self.obj(spec['limit_point'], f'{path}.limit_point')
            limit = LimitPointConfig(
                self.complex_(raw.get('z', [0, 1]), f'{path}.limit_point.z'),
                self.ints(raw.get('sizes', list(LimitPointConfig.sizes)), f'{path}.limit_point.sizes', 2),
                self.diagonal(raw['diag'], f'{path}.limit_point.diag') if 'diag' in raw else None,
                self.diagonal(raw['offdiag'], f'{path}.limit_point.offdiag') if 'offdiag' in raw else None,
            )
            if (limit.diag is None) != (limit.offdiag is None):
                raise ConfigError('give both diag and offdiag, or neither', field=f'{path}.limit_point')
        if 'graph_norm' in spec:
            raw = self.obj(spec['graph_norm'], f'{path}.graph_norm')
            graph = self.window(raw.get('window'), f'{path}.graph_norm.window')
        if 'resolvents' in spec:
            raw = self.obj(spec['resolvents'], f'{path}.resolvents')
            resolvents = ResolventConfig(
                self.complex_(raw.get('z', [0, 1]), f'{path}.resolvents.z'),
                self.complex_(raw.get('w', [0, 1]), f'{path}.resolvents.w'),
                self.ints(raw.get('sizes', list(ResolventConfig.sizes)), f'{path}.resolvents.sizes'),
            )
        if 'h_symmetry' in spec:
            raw = self.obj(spec['h_symmetry'], f'{path}.h_symmetry')
            h_sym = self.window(raw.get('window'), f'{path}.h_symmetry.window')
        return ProbeConfig(limit, graph, resolvents, h_sym)


def _wrap(build, path: str):
    """Run a constructor, turning domain errors into field-tagged config errors."""
    try:
        return build()
    except ConfigError:
        raise
    except (OpdomainError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), field=path) from None


def _cap_ladder(ladder: Sequence[int], max_window: int, path: str) -> Tuple[int, ...]:
    kept = tuple(s for s in ladder if s <= max_window)
    dropped = [s for s in ladder if s > max_window]
    if dropped:
        logger.warning('window cap %d drops %s sizes %s', max_window, path, dropped)
    if not kept:
        raise ConfigError(f'every window exceeds max_window = {max_window}', field=path)
    return kept


def _cap_window(w: Optional[Window], max_window: int, path: str) -> Optional[Window]:
    if w is None or w.hi <= max_window:
        return w
    if w.lo > max_window:
        raise ConfigError(f'window starts above max_window = {max_window}', field=path)
    logger.warning('window cap %d clips %s to [%d, %d]', max_window, path, w.lo, max_window)
    return replace(w, hi=max_window)


def _cap_size(size: Optional[int], max_window: int, path: str) -> Optional[int]:
    if size is None or size <= max_window:
        return size
    logger.warning('window cap %d clips %s from %d', max_window, path, size)
    return max_window


def _apply_window_cap(cfg: JobConfig) -> None:
    """Bring every window-bearing field under ``cfg.max_window``."""
    cap = cfg.max_window
    cfg.ladder = _cap_ladder(cfg.ladder, cap, 'ladder')
    if cfg.unit is not None:
        unit = cfg.unit
        lemma = unit.lemma
        if lemma is not None:
            lemma = replace(lemma, windows=_cap_ladder(lemma.windows, cap, 'unit.lemma.windows'))
        cfg.unit = replace(
            unit,
            lemma=lemma,
            wot_window=_cap_size(unit.wot_window, cap, 'unit.wot_window'),
            domination_sizes=_cap_ladder(unit.domination_sizes, cap, 'unit.domination_sizes'),
            komcond_window=_cap_size(unit.komcond_window, cap, 'unit.komcond_window'),
        )
    probes = cfg.probes
    limit_point, resolvents = probes.limit_point, probes.resolvents
    if limit_point is not None:
        limit_point = replace(limit_point,
                              sizes=_cap_ladder(limit_point.sizes, cap, 'probes.limit_point.sizes'))
    if resolvents is not None:
        resolvents = replace(resolvents, sizes=_cap_ladder(resolvents.sizes, cap, 'probes.resolvents.sizes'))
    cfg.probes = ProbeConfig(
        limit_point,
        _cap_window(probes.graph_norm, cap, 'probes.graph_norm.window'),
        resolvents,
        _cap_window(probes.h_symmetry, cap, 'probes.h_symmetry.window'),
    )


KNOWN_KEYS = frozenset({
    'job', 'name', 'description', 'conditions', 'seed', 'operator', 'pairing', 'diagonal', 'm', 'modakl',
    'ladder', 'n_values', 'schur', 'schur_weights', 'unit', 'diffop', 'grid', 'probes', 'tolerances',
    'max_window', 'output', 'timestamp',
})


def parse_config(
    document: Mapping[str, Any],
    base_dir: Path = Path('.'),
    *,
    name: str = 'job',
    seed: Optional[int] = None,
    max_window: Optional[int] = None,
    output: Optional[Path] = None,
) -> JobConfig:
    """
    Validate a config document.

    ``seed``, ``max_window`` and ``output`` override the document's fields.

    :raises ConfigError: Malformed or inconsistent fields.
    """
    doc = dict(document)
    unknown = set(doc) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f'unknown key {sorted(unknown)[0]!r}', field=sorted(unknown)[0])
    r = _Reader(Path(base_dir))
    job = doc.get('job')
    if job not in JOB_KINDS:
        raise ConfigError(f'job must be one of {", ".join(JOB_KINDS)}, got {job!r}', field='job')

    overrides = {key: value for key, value in
                 (('seed', seed), ('max_window', max_window), ('output', output)) if value is not None}
    seed = seed if seed is not None else r.integer(doc.get('seed', 0), 'seed', 0)
    if max_window is None:
        max_window = r.integer(doc.get('max_window', DEFAULT_MAX_WINDOW), 'max_window', 1)
    tolerances = _wrap(lambda: DEFAULT_TOLERANCES.with_overrides(r.obj(doc.get('tolerances', {}), 'tolerances')),
                       'tolerances')

    cfg = JobConfig(
        job=job,
        name=str(doc.get('name', name)),
        document=doc,
        description=str(doc.get('description', '')),
        seed=seed,
        tolerances=tolerances,
        max_window=max_window,
        overrides=overrides,
    )
    if 'operator' in doc:
        cfg.operator = r.operator(doc['operator'], 'operator')
    if 'pairing' in doc:
        cfg.pairing = r.pairing(doc['pairing'], 'pairing')
    if 'diagonal' in doc:
        cfg.diagonal = r.diagonal(doc['diagonal'], 'diagonal')
    if 'm' in doc and doc['m'] is not None:
        cfg.m = r.integer(doc['m'], 'm', 1)
    if 'modakl' in doc and doc['modakl'] is not None:
        raw = r.obj(doc['modakl'], 'modakl')
        cfg.modakl = ModaklParams(r.number(raw.get('d'), 'modakl.d'), r.number(raw.get('s'), 'modakl.s'),
                                  r.number(raw.get('alpha'), 'modakl.alpha'))
    if 'ladder' in doc:
        cfg.ladder = r.ints(doc['ladder'], 'ladder')
    if 'n_values' in doc:
        cfg.n_values = r.ints(doc['n_values'], 'n_values')
    cfg.schur = bool(doc.get('schur', False))
    cfg.schur_weights = doc.get('schur_weights', 'unit')
    if cfg.schur_weights not in ('unit', 'power'):
        raise ConfigError('schur_weights must be "unit" or "power"', field='schur_weights')
    if 'unit' in doc:
        cfg.unit = r.unit(doc['unit'], 'unit')
    if 'diffop' in doc:
        cfg.diffop = r.diffop(doc['diffop'], 'diffop')
    if 'grid' in doc:
        m = cfg.diffop.m if cfg.diffop else None
        if m is None:
            raise ConfigError('a grid needs a diffop section', field='grid')
        cfg.grid = r.grid(doc['grid'], 'grid', m)
    if 'probes' in doc:
        cfg.probes = r.probes(doc['probes'], 'probes')
    ts = doc.get('timestamp')
    cfg.timestamp = None if ts is None else str(ts)
    cfg.output = Path(output) if output is not None else Path(str(doc.get('output', DEFAULT_OUTPUT / cfg.name)))

    _apply_window_cap(cfg)
    _validate_kind(cfg)
    if cfg.operator is not None:
        cfg.spot_check = spot_check(cfg.operator, Window.leading(SPOT_CHECK_WINDOW), seed=cfg.seed)
    return cfg


def _validate_kind(cfg: JobConfig) -> None:
    def need(attr: str) -> None:
        if getattr(cfg, attr) is None:
            raise ConfigError(f'job {cfg.job!r} needs a {attr!r} section', field=attr)

    if cfg.job in ('check-matrix', 'approx-unit'):
        need('operator')
        need('diagonal')
    if cfg.job == 'check-matrix' and (cfg.m is None) == (cfg.modakl is None):
        raise ConfigError('give exactly one of m or modakl', field='m')
    if cfg.job == 'check-diffop':
        need('diffop')
    if cfg.job == 'oracle' and cfg.probes.empty:
        raise ConfigError('oracle job needs at least one probe', field='probes')
    if cfg.job == 'all' and cfg.operator is None and cfg.diffop is None and cfg.probes.empty:
        raise ConfigError('nothing to run: give an operator, a diffop or probes', field='job')
    if cfg.job == 'all' and cfg.operator is not None and cfg.diagonal is not None \
            and cfg.m is not None and cfg.modakl is not None:
        raise ConfigError('give exactly one of m or modakl', field='m')
    probes = cfg.probes
    if (probes.graph_norm or probes.h_symmetry or probes.resolvents) and cfg.operator is None:
        raise ConfigError('probes on A need an operator section', field='probes')
    if probes.resolvents and cfg.diagonal is None:
        raise ConfigError('the resolvent probe needs a diagonal section', field='probes.resolvents')
    if probes.limit_point and probes.limit_point.diag is None and cfg.operator is None:
        raise ConfigError('the limit-point probe needs diag/offdiag or an operator', field='probes.limit_point')


def load_config(
    path: Path,
    *,
    seed: Optional[int] = None,
    max_window: Optional[int] = None,
    output: Optional[Path] = None,
) -> JobConfig:
    """
    Read and validate a config file.

    :raises FileNotFoundError: ``path`` does not exist.
    :raises ConfigError: Invalid JSON or fields.
    """
    from utility.open_file import load_json_document

    path = Path(path)
    document = load_json_document(path)
    return parse_config(document, path.parent, name=path.stem, seed=seed,
                        max_window=max_window, output=output)
