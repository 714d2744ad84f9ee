"""Linear node power model and its inverse.

Node power is modeled as a linear function of utilization between an idle
floor and a full-load ceiling.  The inverse converts a power budget into the
utilization it can sustain, clamped to the physical range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridMismatch, InvalidUtilization, UnitMismatch
from .forecast import (
    UNIT_UTILIZATION,
    UNIT_WATTS,
    Ensemble,
    Point,
    PointSeries,
    ProbabilisticSeries,
)


@dataclass(frozen=True)
class PowerModel:
    """Idle and full-load power of a node, in watts."""

    p_static: float
    p_max: float

    def __post_init__(self) -> None:
        if self.p_static < 0:
            raise ConfigError(f"p_static must be >= 0, got {self.p_static}")
        if self.p_max <= self.p_static:
            raise ConfigError(
                f"p_max must exceed p_static, got p_max={self.p_max}, p_static={self.p_static}"
            )

    @property
    def span(self) -> float:
        """Watts per unit of utilization."""
        return self.p_max - self.p_static


def load_to_power(model: PowerModel, u):
    """Power drawn at utilization u; accepts scalars or arrays."""
    arr = np.asarray(u, dtype=float)
    if ((arr < 0) | (arr > 1)).any():
        raise InvalidUtilization(f"utilization must lie in [0, 1], got {u}")
    result = model.p_static + arr * model.span
    return float(result) if np.isscalar(u) or arr.ndim == 0 else result


def power_to_load(model: PowerModel, p):
    """Utilization sustainable by a power budget, clamped to [0, 1]."""
    arr = np.asarray(p, dtype=float)
    if (arr < 0).any():
        raise ValueError(f"power must be >= 0, got {p}")
    result = np.clip((arr - model.p_static) / model.span, 0.0, 1.0)
    return float(result) if np.isscalar(p) or arr.ndim == 0 else result


def consumption_forecast(
    model: PowerModel,
    u_pred: ProbabilisticSeries,
    other_consumers: PointSeries | None = None,
) -> ProbabilisticSeries:
    """Map a load forecast through the power model, in watts.

    The map is applied member-wise or level-wise; being monotone increasing it
    preserves quantile ordering.  A co-located consumer series, when present,
    is added per step.
    """
    if u_pred.unit != UNIT_UTILIZATION:
        raise UnitMismatch(f"load forecast must be in utilization, got {u_pred.unit!r}")
    extra = 0.0
    if other_consumers is not None:
        if other_consumers.unit != UNIT_WATTS:
            raise UnitMismatch(
                f"other consumers must be in watts, got {other_consumers.unit!r}"
            )
        if other_consumers.grid != u_pred.grid:
            raise GridMismatch("other consumers grid differs from the load forecast grid")
        extra = other_consumers.values

    rep = u_pred.representation
    if isinstance(rep, Point):
        return ProbabilisticSeries.point(
            u_pred.grid, load_to_power(model, rep.values) + extra, UNIT_WATTS
        )
    if isinstance(rep, Ensemble):
        return ProbabilisticSeries.ensemble(
            u_pred.grid, load_to_power(model, rep.members) + extra, UNIT_WATTS
        )
    return ProbabilisticSeries.quantiles(
        u_pred.grid, rep.levels, load_to_power(model, rep.trajectories) + extra, UNIT_WATTS
    )
