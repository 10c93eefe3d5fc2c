"""
Numerical thresholds shared by the checks, overridable from a job config.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Mapping

from opdomain.errors import ConfigError
from opdomain.linalg import DEFAULT_MAX_ITER, DEFAULT_TOL, PENCIL_TOL, RESOLVENT_EPS
from opdomain.report import FLATNESS, GROWTH_SLOPE, TREND_SLOPE

RESIDUAL_TOL = 1e-10    # exact identities: (AG), (h4), (Afnorm), H-symmetry
WOT_TOL = 1e-6
COMMUTE_TOL = 1e-8


@dataclass(frozen=True)
class Tolerances:
    norm_tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    residual: float = RESIDUAL_TOL
    flatness: float = FLATNESS
    growth_slope: float = GROWTH_SLOPE
    trend_slope: float = TREND_SLOPE
    resolvent_eps: float = RESOLVENT_EPS
    pencil: float = PENCIL_TOL
    wot: float = WOT_TOL
    commute: float = COMMUTE_TOL

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                raise ConfigError(f'tolerance must be a positive number, got {value!r}',
                                  field=f'tolerances.{f.name}')

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'Tolerances':
        known = {f.name for f in fields(self)}
        for key in overrides:
            if key not in known:
                raise ConfigError(f'unknown tolerance; known: {", ".join(sorted(known))}',
                                  field=f'tolerances.{key}')
        return replace(self, **dict(overrides))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


DEFAULT_TOLERANCES = Tolerances()
