"""Probabilistic multistep forecasts on uniform time grids and REE fusion.

A forecast is a time series of per-step distributions.  Three representations
are supported: an ensemble of member trajectories, a fixed set of quantile
trajectories, and a degenerate single trajectory.  Fusion of production and
consumption forecasts into a renewable-excess-energy (REE) series is either
sampling-based (joint) or quantile-arithmetic (fallback), selectable per the
available representations.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import (
    GridMismatch,
    InvalidAlpha,
    InvariantViolation,
    ParseError,
    QuantileUnavailable,
    RepresentationMismatch,
    UnitMismatch,
)

UNIT_WATTS = "watts"
UNIT_UTILIZATION = "utilization"

# Tolerance for matching stored quantile levels; absorbs float noise such as
# 1 - 0.9 != 0.1 exactly.
LEVEL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid; step i covers [start + i*step, start + (i+1)*step)."""

    start: float
    step: float
    num_steps: int

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise InvariantViolation(f"step duration must be > 0, got {self.step}")
        if self.num_steps <= 0:
            raise InvariantViolation(f"num_steps must be > 0, got {self.num_steps}")

    @property
    def end(self) -> float:
        return self.start + self.step * self.num_steps

    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.num_steps)

    def index_of(self, t: float) -> int:
        """Index of the step containing t; may fall outside [0, num_steps)."""
        return int(math.floor((t - self.start) / self.step))


def _freeze(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_unit(unit: str) -> None:
    if unit not in (UNIT_WATTS, UNIT_UTILIZATION):
        raise UnitMismatch(f"unknown unit {unit!r}")


def _check_value_range(arr: np.ndarray, unit: str, what: str) -> None:
    flat_bad = None
    if np.isnan(arr).any():
        flat_bad = int(np.flatnonzero(np.isnan(arr))[0])
        reason = "NaN value"
    elif unit == UNIT_WATTS and (arr < 0).any():
        flat_bad = int(np.flatnonzero(arr < 0)[0])
        reason = "negative wattage"
    elif unit == UNIT_UTILIZATION and ((arr < 0) | (arr > 1)).any():
        flat_bad = int(np.flatnonzero((arr < 0) | (arr > 1))[0])
        reason = "utilization outside [0, 1]"
    if flat_bad is not None:
        step = flat_bad % arr.shape[-1] if arr.ndim > 1 else flat_bad
        raise InvariantViolation(f"{what}: {reason} at step {step}")


@dataclass(frozen=True, eq=False)
class PointSeries:
    """Single-valued trajectory on a grid."""

    grid: TimeGrid
    values: np.ndarray
    unit: str

    def __post_init__(self) -> None:
        _check_unit(self.unit)
        arr = _freeze(self.values)
        if arr.ndim != 1 or arr.shape[0] != self.grid.num_steps:
            raise InvariantViolation(
                f"trajectory length {arr.shape} does not match grid ({self.grid.num_steps} steps)"
            )
        _check_value_range(arr, self.unit, "point series")
        object.__setattr__(self, "values", arr)

    def value_at(self, t: float) -> float:
        """Step-function lookup; zero outside the grid."""
        i = self.grid.index_of(t)
        if i < 0 or i >= self.grid.num_steps:
            return 0.0
        return float(self.values[i])


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Member trajectories, one row per member."""

    members: np.ndarray

    @property
    def num_members(self) -> int:
        return self.members.shape[0]


@dataclass(frozen=True, eq=False)
class Quantiles:
    """Pre-quantized trajectories, one row per stored level."""

    levels: tuple[float, ...]
    trajectories: np.ndarray


@dataclass(frozen=True, eq=False)
class Point:
    """Degenerate distribution: one trajectory."""

    values: np.ndarray


Representation = Ensemble | Quantiles | Point


@dataclass(frozen=True, eq=False)
class ProbabilisticSeries:
    """A multistep forecast: grid, per-step distribution, declared unit."""

    grid: TimeGrid
    representation: Representation
    unit: str

    def __post_init__(self) -> None:
        _check_unit(self.unit)
        rep = self.representation
        n = self.grid.num_steps
        if isinstance(rep, Ensemble):
            arr = _freeze(rep.members)
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != n:
                raise InvariantViolation(
                    f"ensemble shape {arr.shape} invalid for grid with {n} steps"
                )
            _check_value_range(arr, self.unit, "ensemble")
            object.__setattr__(self, "representation", Ensemble(arr))
        elif isinstance(rep, Quantiles):
            levels = tuple(float(v) for v in rep.levels)
            arr = _freeze(rep.trajectories)
            if any(not 0.0 < v < 1.0 for v in levels):
                raise InvariantViolation(f"quantile levels must lie in (0, 1): {levels}")
            if any(b - a <= 0 for a, b in zip(levels, levels[1:])):
                raise InvariantViolation(f"quantile levels must be strictly increasing: {levels}")
            if arr.ndim != 2 or arr.shape != (len(levels), n):
                raise InvariantViolation(
                    f"quantile trajectories shape {arr.shape} invalid for "
                    f"{len(levels)} levels and {n} steps"
                )
            _check_value_range(arr, self.unit, "quantile series")
            crossing = np.diff(arr, axis=0) < 0
            if crossing.any():
                step = int(np.flatnonzero(crossing.any(axis=0))[0])
                raise InvariantViolation(f"quantile crossing at step {step}")
            object.__setattr__(self, "representation", Quantiles(levels, arr))
        elif isinstance(rep, Point):
            arr = _freeze(rep.values)
            if arr.ndim != 1 or arr.shape[0] != n:
                raise InvariantViolation(
                    f"point trajectory length {arr.shape} invalid for grid with {n} steps"
                )
            _check_value_range(arr, self.unit, "point series")
            object.__setattr__(self, "representation", Point(arr))
        else:
            raise RepresentationMismatch(f"unknown representation {type(rep).__name__}")

    @classmethod
    def ensemble(cls, grid: TimeGrid, members, unit: str) -> "ProbabilisticSeries":
        return cls(grid, Ensemble(np.array(members, dtype=float)), unit)

    @classmethod
    def quantiles(cls, grid: TimeGrid, levels, trajectories, unit: str) -> "ProbabilisticSeries":
        return cls(grid, Quantiles(tuple(levels), np.array(trajectories, dtype=float)), unit)

    @classmethod
    def point(cls, grid: TimeGrid, values, unit: str) -> "ProbabilisticSeries":
        return cls(grid, Point(np.array(values, dtype=float)), unit)

    @classmethod
    def from_point_series(cls, series: PointSeries) -> "ProbabilisticSeries":
        return cls.point(series.grid, series.values, series.unit)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in the open interval (0, 1), got {alpha}")


def nearest_rank_index(alpha: float, n: int) -> int:
    """Zero-based index ceil(alpha * n) - 1 of the sorted sample."""
    return min(max(math.ceil(alpha * n) - 1, 0), n - 1)


def quantile(series: ProbabilisticSeries, alpha: float) -> PointSeries:
    """Per-step alpha quantile of a probabilistic series.

    Ensembles use the nearest-rank estimator on the sorted members.  Stored
    quantile representations resolve exactly or raise QuantileUnavailable;
    no interpolation between stored levels is performed.  Point series return
    their trajectory for any alpha.
    """
    _check_alpha(alpha)
    rep = series.representation
    if isinstance(rep, Point):
        return PointSeries(series.grid, rep.values, series.unit)
    if isinstance(rep, Ensemble):
        ordered = np.sort(rep.members, axis=0)
        row = ordered[nearest_rank_index(alpha, rep.num_members)]
        return PointSeries(series.grid, row, series.unit)
    for i, level in enumerate(rep.levels):
        if abs(level - alpha) <= LEVEL_TOLERANCE:
            return PointSeries(series.grid, rep.trajectories[i], series.unit)
    raise QuantileUnavailable(
        f"alpha={alpha} is not among stored levels {rep.levels}; "
        "use the fallback fusion for pre-quantized forecasts"
    )


def _require_same_grid(a: ProbabilisticSeries, b) -> None:
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: {a.grid} vs {b.grid}")


def _require_watts(series: ProbabilisticSeries, role: str) -> None:
    if series.unit != UNIT_WATTS:
        raise UnitMismatch(f"{role} series must be in watts, got {series.unit!r}")


def _as_member_matrix(series: ProbabilisticSeries, role: str) -> np.ndarray:
    rep = series.representation
    if isinstance(rep, Ensemble):
        return rep.members
    if isinstance(rep, Point):
        return rep.values[np.newaxis, :]
    raise RepresentationMismatch(
        f"{role} series is pre-quantized; joint fusion needs ensemble or point "
        "representations (use fuse_ree_fallback)"
    )


def fuse_ree_joint(
    prod: ProbabilisticSeries,
    cons: ProbabilisticSeries,
    alpha: float,
    sample_count: int = 1000,
    seed: int = 0,
) -> PointSeries:
    """Sampling-based REE fusion: alpha quantile of (production - consumption).

    Per step, sample_count member pairs are drawn uniformly with replacement
    from each side and subtracted; the nearest-rank alpha quantile of the
    difference sample is clamped at zero.  The sample set depends only on
    (seed, shapes), never on alpha, so quantiles at different alphas share one
    sample set and are exactly ordered.
    """
    _check_alpha(alpha)
    if sample_count < 1:
        raise ValueError(f"sample_count must be >= 1, got {sample_count}")
    _require_same_grid(prod, cons)
    _require_watts(prod, "production")
    _require_watts(cons, "consumption")
    prod_members = _as_member_matrix(prod, "production")
    cons_members = _as_member_matrix(cons, "consumption")

    if prod_members.shape[0] == 1 and cons_members.shape[0] == 1:
        # Degenerate distributions: every sampled pair is the same pair.
        fused = np.maximum(0.0, prod_members[0] - cons_members[0])
        return PointSeries(prod.grid, fused, UNIT_WATTS)

    num_steps = prod.grid.num_steps
    rng = np.random.default_rng(seed)
    idx_prod = rng.integers(0, prod_members.shape[0], size=(num_steps, sample_count))
    idx_cons = rng.integers(0, cons_members.shape[0], size=(num_steps, sample_count))
    cols = np.arange(num_steps)[:, np.newaxis]
    diffs = prod_members[idx_prod, cols] - cons_members[idx_cons, cols]
    diffs.sort(axis=1)
    fused = np.maximum(0.0, diffs[:, nearest_rank_index(alpha, sample_count)])
    return PointSeries(prod.grid, fused, UNIT_WATTS)


def fuse_ree_fallback(
    prod: ProbabilisticSeries,
    cons: ProbabilisticSeries,
    alpha: float,
) -> PointSeries:
    """Quantile-arithmetic REE fusion for pre-quantized forecasts.

    Pairs the alpha production quantile with the (1 - alpha) consumption
    quantile and clamps the difference at zero.  Raises QuantileUnavailable
    if either level is not resolvable on its series.
    """
    _check_alpha(alpha)
    _require_same_grid(prod, cons)
    _require_watts(prod, "production")
    _require_watts(cons, "consumption")
    q_prod = quantile(prod, alpha)
    q_cons = quantile(cons, 1.0 - alpha)
    fused = np.maximum(0.0, q_prod.values - q_cons.values)
    return PointSeries(prod.grid, fused, UNIT_WATTS)


def as_point_series(series: ProbabilisticSeries) -> PointSeries:
    """Unwrap a Point-representation series; error for the other kinds."""
    rep = series.representation
    if not isinstance(rep, Point):
        raise RepresentationMismatch(
            f"expected point representation, got {type(rep).__name__}"
        )
    return PointSeries(series.grid, rep.values, series.unit)


# ---------------------------------------------------------------------------
# CSV interchange
#
# Header: first column `timestamp` (ISO-8601 UTC), then either p<percent>
# columns (stored quantiles), m<k> columns (ensemble members), or a single
# `value` column.  Rows must be uniformly spaced; the spacing defines the
# grid step.
# ---------------------------------------------------------------------------


def _parse_timestamp(text: str, where: str) -> float:
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ParseError(f"{where}: bad timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _format_timestamp(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat()


def _classify_header(columns: list[str], path) -> tuple[str, list]:
    if len(columns) == 1 and columns[0].lower() == "value":
        return "point", []
    if all(c.lower().startswith("p") and c[1:].isdigit() for c in columns):
        levels = [int(c[1:]) for c in columns]
        if len(set(levels)) != len(levels):
            raise ParseError(f"{path}: duplicate quantile columns in header")
        order = sorted(range(len(levels)), key=lambda i: levels[i])
        return "quantiles", [(order, [levels[i] / 100.0 for i in order])]
    if all(c.lower().startswith("m") and c[1:].isdigit() for c in columns):
        ks = [int(c[1:]) for c in columns]
        if len(set(ks)) != len(ks):
            raise ParseError(f"{path}: duplicate ensemble columns in header")
        order = sorted(range(len(ks)), key=lambda i: ks[i])
        return "ensemble", [order]
    raise ParseError(
        f"{path}: header must be p<level> columns, m<k> columns, or a single value column; "
        f"got {columns}"
    )


def ingest_forecast_csv(
    path,
    unit: str,
    representation_hint: str | None = None,
) -> ProbabilisticSeries:
    """Parse a forecast CSV into a validated ProbabilisticSeries.

    representation_hint, when given, must be one of "point", "quantiles" or
    "ensemble" and is enforced against the header.
    """
    _check_unit(unit)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "timestamp":
            raise ParseError(f"{path}: first column must be 'timestamp', got {header[:1]}")
        columns = [c.strip() for c in header[1:]]
        if not columns:
            raise ParseError(f"{path}: no value columns")
        kind, extra = _classify_header(columns, path)
        if representation_hint is not None and representation_hint != kind:
            raise ParseError(
                f"{path}: file holds a {kind} forecast but {representation_hint} was expected"
            )

        timestamps: list[float] = []
        rows: list[list[float]] = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(columns) + 1:
                raise ParseError(f"{path}:{row_no}: expected {len(columns) + 1} cells, got {len(row)}")
            timestamps.append(_parse_timestamp(row[0], f"{path}:{row_no}"))
            parsed = []
            for col_no, cell in enumerate(row[1:], start=2):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}:{row_no}: column {col_no} ({columns[col_no - 2]}): "
                        f"bad number {cell!r}"
                    ) from None
                if math.isnan(value) or value < 0:
                    raise InvariantViolation(
                        f"{path}:{row_no}: column {col_no} ({columns[col_no - 2]}): "
                        f"forecast values must be non-negative, got {cell!r}"
                    )
                parsed.append(value)
            rows.append(parsed)

    if not rows:
        raise ParseError(f"{path}: no data rows")
    if len(rows) >= 2:
        steps = np.diff(np.array(timestamps))
        if (np.abs(steps - steps[0]) > 1e-6).any():
            bad = int(np.flatnonzero(np.abs(steps - steps[0]) > 1e-6)[0]) + 3
            raise ParseError(f"{path}:{bad}: rows are not uniformly spaced")
        step = float(steps[0])
        if step <= 0:
            raise ParseError(f"{path}: timestamps must be strictly increasing")
    else:
        step = 600.0  # single row: spacing is undefined, assume the usual step
    grid = TimeGrid(timestamps[0], step, len(rows))
    data = np.array(rows, dtype=float)

    if kind == "point":
        return ProbabilisticSeries.point(grid, data[:, 0], unit)
    if kind == "ensemble":
        (order,) = extra
        return ProbabilisticSeries.ensemble(grid, data[:, order].T, unit)
    ((order, levels),) = extra
    trajectories = data[:, order].T
    crossing = np.diff(trajectories, axis=0) < 0
    if crossing.any():
        bad_step = int(np.flatnonzero(crossing.any(axis=0))[0])
        raise InvariantViolation(f"{path}:{bad_step + 2}: quantile crossing at step {bad_step}")
    return ProbabilisticSeries.quantiles(grid, levels, trajectories, unit)


def write_forecast_csv(path, series: ProbabilisticSeries) -> None:
    """Inverse of ingest_forecast_csv; row timestamps are ISO-8601 UTC."""
    rep = series.representation
    if isinstance(rep, Point):
        columns = ["value"]
        matrix = rep.values[np.newaxis, :]
    elif isinstance(rep, Ensemble):
        columns = [f"m{k}" for k in range(rep.num_members)]
        matrix = rep.members
    else:
        percents = [level * 100.0 for level in rep.levels]
        if any(abs(p - round(p)) > 1e-9 for p in percents):
            raise ValueError(f"only integer-percent levels can be written, got {rep.levels}")
        columns = [f"p{round(p)}" for p in percents]
        matrix = rep.trajectories
    times = series.grid.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *columns])
        for i in range(series.grid.num_steps):
            writer.writerow([_format_timestamp(times[i]), *[repr(float(v)) for v in matrix[:, i]]])


def write_point_csv(path, series: PointSeries) -> None:
    write_forecast_csv(path, ProbabilisticSeries.from_point_series(series))


def ingest_point_csv(path, unit: str) -> PointSeries:
    return as_point_series(ingest_forecast_csv(path, unit, representation_hint="point"))
