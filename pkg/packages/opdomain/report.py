"""
Verdicts, evidence curves and the report document.

A check never raises for a failing hypothesis. It returns a
:class:`CheckResult` whose verdict is one of ``pass``, ``fail`` or
``inconclusive``, together with the numbers that justify it.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from opdomain import __version__
from opdomain.errors import ContractViolation

logger = logging.getLogger(__name__)

FLATNESS = 0.01         # relative change over the last doubling that counts as flat
GROWTH_SLOPE = 0.5      # log-log slope of the last doubling that counts as divergence
TREND_SLOPE = 0.1       # bounded / growing / decaying threshold
ZERO_TOL = 1e-12
MONOTONE_RTOL = 1e-9
CSV_HEADER = ('n', 'window', 'norm', 'converged')


class Verdict(str, Enum):
    PASS = 'pass'
    FAIL = 'fail'
    INCONCLUSIVE = 'inconclusive'

    @classmethod
    def combine(cls, verdicts: Iterable['Verdict']) -> 'Verdict':
        """Any fail fails; all pass passes; anything else is inconclusive."""
        verdicts = list(verdicts)
        if not verdicts:
            return cls.INCONCLUSIVE
        if any(v is cls.FAIL for v in verdicts):
            return cls.FAIL
        if all(v is cls.PASS for v in verdicts):
            return cls.PASS
        return cls.INCONCLUSIVE

    def cap(self, ceiling: 'Verdict') -> 'Verdict':
        """Downgrade a heuristic pass to ``ceiling``."""
        if self is Verdict.PASS:
            return ceiling
        return self


class Trend(str, Enum):
    BOUNDED = 'bounded'
    GROWING = 'growing'
    DECAYING = 'decaying'


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x`` over positive pairs."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(keep) < 2 or np.ptp(np.log(x[keep])) == 0:
        return 0.0
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def classify_trend(
    sizes: Sequence[float], values: Sequence[float], threshold: float = TREND_SLOPE
) -> Tuple[Trend, float]:
    """
    Log-log slope classification: above ``threshold`` is growing, below
    ``-threshold`` decaying, otherwise bounded.
    """
    vals = np.asarray(values, dtype=float)
    if vals.size and np.all(np.abs(vals) <= ZERO_TOL):
        return Trend.BOUNDED, 0.0
    if vals.size >= 2 and abs(vals[-1]) <= ZERO_TOL < abs(vals[0]):
        return Trend.DECAYING, -math.inf
    slope = loglog_slope(sizes, np.abs(vals))
    if slope > threshold:
        return Trend.GROWING, slope
    if slope < -threshold:
        return Trend.DECAYING, slope
    return Trend.BOUNDED, slope


def is_monotone(values: Sequence[float], rtol: float = MONOTONE_RTOL) -> bool:
    """Nondecreasing up to relative round-off."""
    vals = list(values)
    return all(b >= a - rtol * max(1.0, abs(a)) for a, b in zip(vals, vals[1:]))


def curve_verdict(
    sizes: Sequence[int],
    values: Sequence[float],
    *,
    flatness: float = FLATNESS,
    growth: float = GROWTH_SLOPE,
) -> Tuple[Verdict, str]:
    """
    Three-valued verdict for a truncation curve.

    Flat (last two points within ``flatness``) or identically zero passes.
    A last-step log-log slope above ``growth`` fails. Anything else is
    inconclusive.
    """
    if not values:
        return Verdict.INCONCLUSIVE, 'empty curve'
    if max(abs(v) for v in values) <= ZERO_TOL:
        return Verdict.PASS, 'identically zero'
    if len(values) < 2:
        return Verdict.INCONCLUSIVE, 'single window, no flatness evidence'
    prev, last = values[-2], values[-1]
    change = abs(last - prev) / max(abs(last), ZERO_TOL)
    if change <= flatness:
        return Verdict.PASS, f'flat: last two estimates differ by {change:.3%}'
    if prev > ZERO_TOL and sizes[-1] > sizes[-2]:
        slope = math.log(last / prev) / math.log(sizes[-1] / sizes[-2]) if last > 0 else -math.inf
        if slope > growth:
            return Verdict.FAIL, f'growing: last-step log-log slope {slope:.3f}'
    return Verdict.INCONCLUSIVE, f'still changing by {change:.3%} over the last step'


def sup_verdict(values: Sequence[float], *, flatness: float = FLATNESS) -> Tuple[Verdict, str]:
    """
    Verdict for a sup over an increasing parameter sequence.

    Growth fails only while the increments keep up: the last increment is
    positive and at least as large as the one before. A rise that is slowing
    down passes once the last increment is within ``flatness`` of the value,
    and is inconclusive until then. A falling tail passes, since the sup is
    already attained.
    """
    vals = [float(v) for v in values]
    if not vals:
        return Verdict.INCONCLUSIVE, 'empty curve'
    if max(abs(v) for v in vals) <= ZERO_TOL:
        return Verdict.PASS, 'identically zero'
    if len(vals) < 2:
        return Verdict.INCONCLUSIVE, 'single value, no trend evidence'
    steps = [b - a for a, b in zip(vals, vals[1:])]
    last = steps[-1]
    change = abs(last) / max(abs(vals[-1]), ZERO_TOL)
    if last <= 0 or change <= flatness:
        return Verdict.PASS, f'settled: last increment {change:.3%} of the value'
    if len(steps) >= 2 and steps[-2] > 0 and last >= steps[-2]:
        return Verdict.FAIL, f'growing: increments {steps[-2]:.4g} then {last:.4g} do not shrink'
    return Verdict.INCONCLUSIVE, f'still rising by {change:.3%}, increments shrinking'


@dataclass(frozen=True)
class CurvePoint:
    window: int
    norm: float
    converged: bool = True
    n: Optional[int] = None
    method: str = ''


@dataclass
class CheckResult:
    """
    Outcome of a single hypothesis check.

    :param label: Condition label, e.g. ``(M2)`` or ``(komintro)``.
    :param verdict: Three-valued outcome.
    :param evidence: Numbers backing the verdict; never empty.
    :param witness: Offending index, point or monomial for failures.
    :param curve: Norm curve, exported as CSV.
    :param note: Short human readable explanation.
    :param heuristic: Evidence is sampled rather than certified.
    """

    label: str
    verdict: Verdict
    evidence: Dict[str, Any]
    witness: Any = None
    curve: List[CurvePoint] = field(default_factory=list)
    note: str = ''
    heuristic: bool = False

    def __post_init__(self) -> None:
        if not self.evidence:
            raise ContractViolation(f'check {self.label} has no numeric evidence')
        self.verdict = Verdict(self.verdict)

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            'label': self.label,
            'verdict': self.verdict.value,
            'evidence': self.evidence,
            'witness': self.witness,
            'note': self.note,
            'heuristic': self.heuristic,
            'curve_points': len(self.curve),
        }


@dataclass
class CheckReport:
    job: Dict[str, Any]
    checks: List[CheckResult]
    conclusion: str
    assumptions: List[str] = field(default_factory=list)
    timestamp: Optional[str] = None
    config_sha256: Optional[str] = None
    version: str = __version__

    @property
    def overall(self) -> Verdict:
        return Verdict.combine(c.verdict for c in self.checks)

    def exit_code(self) -> int:
        """0 all pass, 1 any fail, 2 inconclusive only."""
        return {Verdict.PASS: 0, Verdict.FAIL: 1, Verdict.INCONCLUSIVE: 2}[self.overall]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': self.version,
            'timestamp': self.timestamp,
            'config_sha256': self.config_sha256,
            'job': self.job,
            'overall': self.overall.value,
            'conclusion': self.conclusion,
            'assumptions': self.assumptions,
            'checks': [c.to_dict() for c in self.checks],
            'curves': [
                {'label': check.label, 'file': f'curves/{name}.csv'}
                for check, name in self._curve_files()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(to_jsonable(self.to_dict()), sort_keys=True, indent=2,
                          ensure_ascii=False, allow_nan=False) + '\n'

    def _curve_files(self) -> List[Tuple[CheckResult, str]]:
        taken: List[str] = []
        files = []
        for check in self.checks:
            if not check.curve:
                continue
            base = name = slugify(check.label)
            i = 2
            while name in taken:
                name, i = f'{base}_{i}', i + 1
            taken.append(name)
            files.append((check, name))
        return files

    def write(self, out_dir: Path) -> List[Path]:
        """Write ``report.json`` plus one CSV per curve; returns the paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [out_dir / 'report.json']
        written[0].write_text(self.to_json(), encoding='utf-8')
        for check, name in self._curve_files():
            path = out_dir / 'curves' / f'{name}.csv'
            write_curve_csv(path, check.curve)
            written.append(path)
        for path in written:
            logger.info('wrote %s', path)
        return written


def slugify(label: str) -> str:
    return re.sub(r'[^A-Za-z0-9]+', '_', label).strip('_').lower() or 'curve'


def write_curve_csv(path: Path, curve: Sequence[CurvePoint]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for point in curve:
            writer.writerow([
                '' if point.n is None else point.n,
                point.window,
                format(float(point.norm), '.17g'),
                'true' if point.converged else 'false',
            ])


def read_curve_csv(path: Path) -> List[CurvePoint]:
    with Path(path).open(encoding='utf-8', newline='') as handle:
        rows = list(csv.DictReader(handle))
    return [
        CurvePoint(
            window=int(row['window']),
            norm=float(row['norm']),
            converged=row['converged'] == 'true',
            n=int(row['n']) if row['n'] else None,
        )
        for row in rows
    ]


def to_jsonable(value: Any) -> Any:
    """Complex scalars become ``[re, im]``; non-finite floats become strings."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(value.real), to_jsonable(value.imag)]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value, key=repr) if isinstance(value, (set, frozenset)) else value
        return [to_jsonable(v) for v in items]
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, Path):
        return value.as_posix()
    return value


def config_sha256(document: Mapping[str, Any]) -> str:
    """Hash of the canonical JSON form of a config document."""
    canonical = json.dumps(to_jsonable(document), sort_keys=True, separators=(',', ':'),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
