"""Free REE-powered capacity: the headroom a node can offer on excess energy.

Combines a single-valued load forecast with a fused REE forecast into the
per-step capacity fraction that is both free and coverable by renewable
excess energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, InvariantViolation, UnitMismatch
from .forecast import (
    UNIT_UTILIZATION,
    UNIT_WATTS,
    PointSeries,
    ProbabilisticSeries,
    TimeGrid,
    quantile,
)
from .power import PowerModel


@dataclass(frozen=True, eq=False)
class FreepForecast:
    """Per-step free capacity (u_free) and its REE-coverable part (u_freep)."""

    grid: TimeGrid
    u_freep: np.ndarray
    u_free: np.ndarray

    def __post_init__(self) -> None:
        freep = np.array(self.u_freep, dtype=float)
        free = np.array(self.u_free, dtype=float)
        if freep.shape != (self.grid.num_steps,) or free.shape != (self.grid.num_steps,):
            raise InvariantViolation("capacity arrays must match the grid length")
        bad = (freep < 0) | (freep > free) | (free > 1)
        if bad.any():
            step = int(np.flatnonzero(bad)[0])
            raise InvariantViolation(
                f"need 0 <= u_freep <= u_free <= 1 at step {step}: "
                f"u_freep={freep[step]}, u_free={free[step]}"
            )
        freep.setflags(write=False)
        free.setflags(write=False)
        object.__setattr__(self, "u_freep", freep)
        object.__setattr__(self, "u_free", free)

    def freep_series(self) -> PointSeries:
        return PointSeries(self.grid, self.u_freep, UNIT_UTILIZATION)

    def free_series(self) -> PointSeries:
        return PointSeries(self.grid, self.u_free, UNIT_UTILIZATION)


def compute_freep(
    u_pred: PointSeries,
    p_ree_alpha: PointSeries,
    model: PowerModel,
) -> FreepForecast:
    """Per step: min(free capacity, capacity coverable by the REE forecast).

    The REE-coverable term converts watts to utilization through the inverse
    power model and is clamped to [0, 1] before the minimum: excess energy
    below the idle floor powers no compute, and more than full-load power
    cannot add capacity beyond the node.
    """
    if u_pred.unit != UNIT_UTILIZATION:
        raise UnitMismatch(f"load forecast must be in utilization, got {u_pred.unit!r}")
    if p_ree_alpha.unit != UNIT_WATTS:
        raise UnitMismatch(f"REE forecast must be in watts, got {p_ree_alpha.unit!r}")
    if u_pred.grid != p_ree_alpha.grid:
        raise GridMismatch("load and REE forecast grids differ")
    u_free = 1.0 - u_pred.values
    u_reep = np.clip((p_ree_alpha.values - model.p_static) / model.span, 0.0, 1.0)
    u_freep = np.minimum(u_free, u_reep)
    return FreepForecast(u_pred.grid, u_freep, u_free)


def reduce_load_forecast(
    u_pred: ProbabilisticSeries,
    reduction_alpha: float = 0.5,
) -> PointSeries:
    """Collapse a probabilistic load forecast to one trajectory by quantile."""
    return quantile(u_pred, reduction_alpha)
