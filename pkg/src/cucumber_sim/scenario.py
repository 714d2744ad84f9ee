"""Scenario construction: synthetic solar sites, baseload, workload traces.

Generators produce desk-scale analogues of a single node with an on-site
solar panel: a clamped sinusoidal clear-sky curve modulated by a two-state
cloud process, quantile production forecasts whose bands widen with lead
time, a diurnal or drifting baseload, and workload traces with either
next-midnight or short per-job deadlines.  Scenario directories round-trip
through a manifest plus the CSV formats of the forecast and admission
modules.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .admission import WorkloadRequest
from .errors import (
    GridMismatch,
    InvalidProfile,
    InvariantViolation,
    ManifestError,
    ParseError,
)
from .forecast import (
    UNIT_UTILIZATION,
    UNIT_WATTS,
    PointSeries,
    ProbabilisticSeries,
    TimeGrid,
    _parse_timestamp,
    ingest_forecast_csv,
    ingest_point_csv,
    write_forecast_csv,
    write_point_csv,
)

DAY_SECONDS = 86400.0
DEFAULT_START = 1704067200.0  # 2024-01-01T00:00:00Z
DEFAULT_STEP = 600.0
DEFAULT_HORIZON_STEPS = 144
DEFAULT_FORECAST_CADENCE = 3600.0

KIND_RELAXED = "relaxed"
KIND_TIGHT = "tight"
WORKLOAD_KINDS = (KIND_RELAXED, KIND_TIGHT)

# Seed stream ids so each concern draws from an independent substream.
_STREAM_SOLAR = 1
_STREAM_SOLAR_FORECAST = 2
_STREAM_BASELOAD = 3
_STREAM_BASELOAD_FORECAST = 4
_STREAM_WORKLOADS = 5


def _substream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


@dataclass(frozen=True)
class SiteProfile:
    """Daylight window, sunny fraction and panel peak for a solar site."""

    daylight_hours: float
    sunshine_hours: float
    peak_watts: float = 400.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.daylight_hours <= 24.0:
            raise InvalidProfile(f"daylight_hours must lie in [0, 24], got {self.daylight_hours}")
        if not 0.0 <= self.sunshine_hours <= self.daylight_hours:
            raise InvalidProfile(
                f"sunshine_hours must lie in [0, daylight_hours], got {self.sunshine_hours}"
            )
        if self.peak_watts <= 0:
            raise InvalidProfile(f"peak_watts must be > 0, got {self.peak_watts}")


SITE_PROFILES = {
    "berlin-like": SiteProfile(8.0, 2.0),
    "mexico-city-like": SiteProfile(11.0, 7.0),
    "cape-town-like": SiteProfile(14.0, 11.0),
}


@dataclass(eq=False)
class Scenario:
    """Everything one simulation run consumes, already validated."""

    name: str
    workload: list[WorkloadRequest]
    baseload_actual: PointSeries
    production_actual: PointSeries
    baseload_forecasts: dict[int, ProbabilisticSeries]
    production_forecasts: dict[int, ProbabilisticSeries]

    @property
    def start(self) -> float:
        return self.baseload_actual.grid.start

    @property
    def end(self) -> float:
        return self.baseload_actual.grid.end

    @property
    def step_duration(self) -> float:
        return self.baseload_actual.grid.step


def _clear_sky(ts: np.ndarray, start: float, profile: SiteProfile) -> np.ndarray:
    """Clamped sinusoid over the daylight window, peak at solar noon."""
    if profile.daylight_hours == 0:
        return np.zeros_like(ts)
    daylight = profile.daylight_hours * 3600.0
    day_t = np.mod(ts - start, DAY_SECONDS)
    sunrise = 43200.0 - daylight / 2.0
    phase = (day_t - sunrise) / daylight
    curve = np.where((phase >= 0) & (phase <= 1), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    return profile.peak_watts * curve


def _cloud_attenuation(
    rng: np.random.Generator,
    num_steps: int,
    sunny_fraction: float,
    cloudy_level: float,
    persistence_steps: int,
) -> np.ndarray:
    """Two-state Markov attenuation with the given stationary sunny share."""
    if sunny_fraction >= 1.0:
        return np.ones(num_steps)
    leave_sunny = (1.0 - sunny_fraction) / persistence_steps
    leave_cloudy = sunny_fraction / persistence_steps
    flips = rng.random(num_steps)
    jitter = rng.uniform(-0.05, 0.05, num_steps)
    sunny = bool(rng.random() < sunny_fraction)
    out = np.empty(num_steps)
    for i in range(num_steps):
        if sunny and flips[i] < leave_sunny:
            sunny = False
        elif not sunny and flips[i] < leave_cloudy:
            sunny = True
        out[i] = 1.0 if sunny else float(np.clip(cloudy_level + jitter[i], 0.02, 0.6))
    return out


def _refresh_times(start_time: float, days: int, cadence: float) -> list[int]:
    times = []
    t = start_time
    end = start_time + days * DAY_SECONDS
    while t < end:
        times.append(int(round(t)))
        t += cadence
    return times


def synthesize_solar(
    site_profile: SiteProfile,
    days: int,
    noise_seed: int,
    *,
    start_time: float = DEFAULT_START,
    step_duration: float = DEFAULT_STEP,
    horizon_steps: int = DEFAULT_HORIZON_STEPS,
    forecast_cadence: float = DEFAULT_FORECAST_CADENCE,
    cloudy_level: float = 0.15,
    persistence_steps: int = 9,
    median_error: float = 0.08,
    band_base: float = 0.15,
    band_growth: float = 0.5,
    ramp_steps: int = 36,
) -> tuple[PointSeries, dict[int, ProbabilisticSeries]]:
    """Synthesize production actuals and p10/p50/p90 production forecasts.

    The actuals are the clear-sky curve times a stochastic cloud attenuation
    whose expected sunny share is sunshine/daylight.  Forecast medians track
    the attenuated truth, relaxing toward the climatological envelope with
    lead time; bands widen with lead time and stay non-crossing and inside
    [0, peak] by construction.
    """
    if days < 1:
        raise InvalidProfile(f"days must be >= 1, got {days}")
    steps_per_day = int(round(DAY_SECONDS / step_duration))
    run_steps = days * steps_per_day
    # Extra truth past the run so late forecasts still have a target.
    total_steps = run_steps + horizon_steps
    ts = start_time + step_duration * np.arange(total_steps)
    clear = _clear_sky(ts, start_time, site_profile)

    rng = _substream(noise_seed, _STREAM_SOLAR)
    sunny_fraction = (
        site_profile.sunshine_hours / site_profile.daylight_hours
        if site_profile.daylight_hours > 0
        else 0.0
    )
    attenuation = _cloud_attenuation(
        rng, total_steps, sunny_fraction, cloudy_level, persistence_steps
    )
    truth = clear * attenuation
    climatology = clear * (sunny_fraction + (1.0 - sunny_fraction) * cloudy_level)
    peak = site_profile.peak_watts

    grid = TimeGrid(start_time, step_duration, run_steps)
    actuals = PointSeries(grid, truth[:run_steps], UNIT_WATTS)

    fc_rng = _substream(noise_seed, _STREAM_SOLAR_FORECAST)
    lead_weight = np.minimum(1.0, np.arange(horizon_steps) / max(ramp_steps, 1))
    width = np.minimum(band_base + band_growth * lead_weight, 0.95)
    forecasts: dict[int, ProbabilisticSeries] = {}
    for refresh in _refresh_times(start_time, days, forecast_cadence):
        i0 = int(round((refresh - start_time) / step_duration))
        sl = slice(i0, i0 + horizon_steps)
        blend = (1.0 - lead_weight) * truth[sl] + lead_weight * climatology[sl]
        noise = fc_rng.normal(0.0, 1.0, horizon_steps)
        p50 = np.clip(blend * (1.0 + median_error * (0.2 + 0.8 * lead_weight) * noise), 0.0, peak)
        p10 = np.maximum(0.0, p50 * (1.0 - width))
        p90 = np.minimum(peak, p50 * (1.0 + width))
        fc_grid = TimeGrid(float(refresh), step_duration, horizon_steps)
        forecasts[refresh] = ProbabilisticSeries.quantiles(
            fc_grid, (0.1, 0.5, 0.9), np.vstack([p10, p50, p90]), UNIT_WATTS
        )
    return actuals, forecasts


def synthesize_baseload(
    kind: str,
    days: int,
    seed: int,
    *,
    start_time: float = DEFAULT_START,
    step_duration: float = DEFAULT_STEP,
    horizon_steps: int = DEFAULT_HORIZON_STEPS,
    forecast_cadence: float = DEFAULT_FORECAST_CADENCE,
    ramp_steps: int = 36,
) -> tuple[PointSeries, dict[int, ProbabilisticSeries]]:
    """Synthesize baseload utilization actuals plus quantile forecasts.

    The relaxed kind drifts slowly around a flat mean (hard to predict); the
    tight kind follows a diurnal curve with small noise (seasonal and easier).
    """
    if kind not in WORKLOAD_KINDS:
        raise InvalidProfile(f"unknown workload kind {kind!r}; expected one of {WORKLOAD_KINDS}")
    steps_per_day = int(round(DAY_SECONDS / step_duration))
    run_steps = days * steps_per_day
    total_steps = run_steps + horizon_steps
    ts = start_time + step_duration * np.arange(total_steps)
    day_frac = np.mod(ts - start_time, DAY_SECONDS) / DAY_SECONDS

    if kind == KIND_RELAXED:
        mean = np.full(total_steps, 0.45)
        phi, sigma, lo, hi = 0.97, 0.04, 0.05, 0.9
    else:
        mean = 0.35 + 0.2 * np.sin(2.0 * np.pi * (day_frac - 0.3))
        phi, sigma, lo, hi = 0.9, 0.015, 0.05, 0.6

    rng = _substream(seed, _STREAM_BASELOAD)
    shocks = rng.normal(0.0, sigma, total_steps)
    truth = np.empty(total_steps)
    level = mean[0]
    for i in range(total_steps):
        level = mean[i] + phi * (level - mean[i]) + shocks[i]
        truth[i] = min(max(level, lo), hi)
        level = truth[i]

    grid = TimeGrid(start_time, step_duration, run_steps)
    actuals = PointSeries(grid, truth[:run_steps], UNIT_UTILIZATION)

    fc_rng = _substream(seed, _STREAM_BASELOAD_FORECAST)
    lead_weight = np.minimum(1.0, np.arange(horizon_steps) / max(ramp_steps, 1))
    width = 0.04 + 0.12 * lead_weight
    forecasts: dict[int, ProbabilisticSeries] = {}
    for refresh in _refresh_times(start_time, days, forecast_cadence):
        i0 = int(round((refresh - start_time) / step_duration))
        sl = slice(i0, i0 + horizon_steps)
        blend = (1.0 - lead_weight) * truth[sl] + lead_weight * mean[sl]
        noise = fc_rng.normal(0.0, 1.0, horizon_steps)
        p50 = np.clip(blend + 0.03 * (0.2 + 0.8 * lead_weight) * noise, 0.0, 1.0)
        p10 = np.clip(p50 - width, 0.0, 1.0)
        p90 = np.clip(p50 + width, 0.0, 1.0)
        fc_grid = TimeGrid(float(refresh), step_duration, horizon_steps)
        forecasts[refresh] = ProbabilisticSeries.quantiles(
            fc_grid, (0.1, 0.5, 0.9), np.vstack([p10, p50, p90]), UNIT_UTILIZATION
        )
    return actuals, forecasts


def _diurnal_arrivals(rng: np.random.Generator, count: int, days: int) -> np.ndarray:
    """Arrival offsets following a day-shaped intensity, via inverse CDF."""
    mesh = np.linspace(0.0, days * DAY_SECONDS, days * 1440 + 1)
    day_frac = np.mod(mesh, DAY_SECONDS) / DAY_SECONDS
    intensity = np.maximum(0.05, 1.0 + 0.9 * np.sin(2.0 * np.pi * (day_frac - 0.25)))
    cumulative = np.concatenate([[0.0], np.cumsum((intensity[:-1] + intensity[1:]) / 2.0)])
    draws = rng.uniform(0.0, cumulative[-1], count)
    return np.interp(draws, cumulative, mesh)


def synthesize_workloads(
    kind: str,
    count: int,
    seed: int,
    *,
    days: int = 1,
    start_time: float = DEFAULT_START,
    relaxed_size_range: tuple[float, float] = (600.0, 3600.0),
    tight_size: float = 240.0,
    tight_min_slack: float = 1200.0,
    tight_median_slack: float = 2460.0,
) -> list[WorkloadRequest]:
    """Synthesize a workload trace, sorted by arrival.

    relaxed: arrivals uniform over the run, deadline at the next midnight,
    sizes uniform in relaxed_size_range.  tight: arrivals follow a diurnal
    rate, every job has size tight_size, and the deadline slack is
    tight_min_slack plus an exponential tuned so the median slack equals
    tight_median_slack.  Arrivals and deadlines are whole seconds.
    """
    if kind not in WORKLOAD_KINDS:
        raise InvalidProfile(f"unknown workload kind {kind!r}; expected one of {WORKLOAD_KINDS}")
    if count < 1:
        raise InvalidProfile(f"count must be >= 1, got {count}")
    rng = _substream(seed, _STREAM_WORKLOADS)
    end = start_time + days * DAY_SECONDS

    entries: list[tuple[float, float, float]] = []
    if kind == KIND_RELAXED:
        offsets = np.floor(rng.uniform(0.0, days * DAY_SECONDS, count))
        sizes = rng.uniform(*relaxed_size_range, count)
        for offset, size in zip(offsets, sizes):
            arrival = start_time + float(offset)
            deadline = start_time + (math.floor(offset / DAY_SECONDS) + 1) * DAY_SECONDS
            entries.append((arrival, float(size), deadline))
    else:
        scale = (tight_median_slack - tight_min_slack) / math.log(2.0)
        offsets = np.floor(_diurnal_arrivals(rng, count, days))
        for offset in offsets:
            arrival = start_time + float(offset)
            for _ in range(1000):
                slack = tight_min_slack + round(float(rng.exponential(scale)))
                deadline = arrival + slack
                if deadline <= end:
                    break
            else:
                deadline = end  # arrival too close to the run end for any draw
            entries.append((arrival, tight_size, deadline))

    entries.sort(key=lambda e: e[0])
    return [
        WorkloadRequest(id=f"job-{i:05d}", arrival_time=a, size=s, deadline=d)
        for i, (a, s, d) in enumerate(entries)
    ]


def tight_slack_sampler(
    seed: int,
    count: int,
    *,
    tight_min_slack: float = 1200.0,
    tight_median_slack: float = 2460.0,
) -> np.ndarray:
    """Raw slack draws of the tight kind, for distribution checks."""
    rng = _substream(seed, _STREAM_WORKLOADS)
    scale = (tight_median_slack - tight_min_slack) / math.log(2.0)
    return tight_min_slack + np.round(rng.exponential(scale, count))


def build_scenario(
    name: str,
    kind: str,
    site_profile: SiteProfile,
    days: int,
    seed: int,
    *,
    requests_per_day: int | None = None,
    start_time: float = DEFAULT_START,
    step_duration: float = DEFAULT_STEP,
    horizon_steps: int = DEFAULT_HORIZON_STEPS,
    forecast_cadence: float = DEFAULT_FORECAST_CADENCE,
    **solar_knobs,
) -> Scenario:
    """Generate a complete in-memory scenario with one master seed."""
    if requests_per_day is None:
        requests_per_day = 48 if kind == KIND_RELAXED else 96
    production_actual, production_forecasts = synthesize_solar(
        site_profile,
        days,
        seed,
        start_time=start_time,
        step_duration=step_duration,
        horizon_steps=horizon_steps,
        forecast_cadence=forecast_cadence,
        **solar_knobs,
    )
    baseload_actual, baseload_forecasts = synthesize_baseload(
        kind,
        days,
        seed,
        start_time=start_time,
        step_duration=step_duration,
        horizon_steps=horizon_steps,
        forecast_cadence=forecast_cadence,
    )
    workload = synthesize_workloads(
        kind,
        requests_per_day * days,
        seed,
        days=days,
        start_time=start_time,
    )
    return Scenario(
        name=name,
        workload=workload,
        baseload_actual=baseload_actual,
        production_actual=production_actual,
        baseload_forecasts=baseload_forecasts,
        production_forecasts=production_forecasts,
    )


# ---------------------------------------------------------------------------
# Scenario directories
# ---------------------------------------------------------------------------

_ROLES = (
    "workloads",
    "baseload_actual",
    "production_actual",
    "baseload_forecast_dir",
    "production_forecast_dir",
)


def _format_seconds(value: float) -> str:
    return repr(int(value)) if float(value).is_integer() else repr(float(value))


def save_scenario(scenario: Scenario, directory) -> Path:
    """Write a scenario directory: manifest, workload trace, actuals, forecasts."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": scenario.name,
        "step_duration": scenario.step_duration,
        "units": {"baseload": UNIT_UTILIZATION, "production": UNIT_WATTS},
        "files": {
            "workloads": "workloads.csv",
            "baseload_actual": "baseload_actual.csv",
            "production_actual": "production_actual.csv",
            "baseload_forecast_dir": "baseload_forecast",
            "production_forecast_dir": "production_forecast",
        },
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    with open(root / "workloads.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "arrival", "size", "deadline"])
        for req in scenario.workload:
            writer.writerow(
                [
                    req.id,
                    _format_seconds(req.arrival_time),
                    repr(float(req.size)),
                    _format_seconds(req.deadline),
                ]
            )

    write_point_csv(root / "baseload_actual.csv", scenario.baseload_actual)
    write_point_csv(root / "production_actual.csv", scenario.production_actual)
    for role, forecasts in (
        ("baseload_forecast", scenario.baseload_forecasts),
        ("production_forecast", scenario.production_forecasts),
    ):
        sub = root / role
        sub.mkdir(exist_ok=True)
        for refresh, series in sorted(forecasts.items()):
            write_forecast_csv(sub / f"{refresh}.csv", series)
    return root


def parse_workloads_csv(path) -> list[WorkloadRequest]:
    """Parse the workload trace; times are ISO-8601 UTC or plain seconds."""

    def parse_time(text: str, where: str) -> float:
        raw = text.strip()
        try:
            return float(raw)
        except ValueError:
            return _parse_timestamp(raw, where)

    requests: list[WorkloadRequest] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if [c.strip().lower() for c in header] != ["id", "arrival", "size", "deadline"]:
            raise ParseError(f"{path}: header must be id,arrival,size,deadline, got {header}")
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{row_no}: expected 4 cells, got {len(row)}")
            job_id, arrival_text, size_text, deadline_text = (c.strip() for c in row)
            try:
                size = float(size_text)
            except ValueError:
                raise ParseError(f"{path}:{row_no}: bad size {size_text!r}") from None
            arrival = parse_time(arrival_text, f"{path}:{row_no}")
            deadline = parse_time(deadline_text, f"{path}:{row_no}")
            try:
                requests.append(WorkloadRequest(job_id, arrival, size, deadline))
            except InvariantViolation as exc:
                raise ParseError(f"{path}:{row_no}: {exc}") from None
    requests.sort(key=lambda r: r.arrival_time)
    return requests


def _load_forecast_dir(directory: Path, unit: str, step: float) -> dict[int, ProbabilisticSeries]:
    forecasts: dict[int, ProbabilisticSeries] = {}
    for path in sorted(directory.glob("*.csv")):
        try:
            refresh = int(path.stem)
        except ValueError:
            raise ParseError(
                f"{path}: forecast file names must be the refresh time in epoch seconds"
            ) from None
        series = ingest_forecast_csv(path, unit)
        if abs(series.grid.step - step) > 1e-6:
            raise GridMismatch(
                f"{path}: forecast step {series.grid.step} differs from scenario step {step}"
            )
        if abs(series.grid.start - refresh) > 1e-6:
            raise GridMismatch(
                f"{path}: forecast grid starts at {series.grid.start}, "
                f"expected its refresh time {refresh}"
            )
        forecasts[refresh] = series
    return forecasts


def load_scenario(directory) -> Scenario:
    """Load and cross-validate a scenario directory."""
    root = Path(directory)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ManifestError(f"{root}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{manifest_path}: invalid JSON: {exc}") from None

    files = manifest.get("files", {})
    for role in _ROLES:
        if role not in files:
            raise ManifestError(f"{manifest_path}: missing role {role!r}")
        if not (root / files[role]).exists():
            raise ManifestError(f"{root}: role {role!r} points to missing {files[role]!r}")
    units = manifest.get("units", {})
    baseload_unit = units.get("baseload", UNIT_UTILIZATION)
    production_unit = units.get("production", UNIT_WATTS)
    step = float(manifest.get("step_duration", DEFAULT_STEP))

    baseload_actual = ingest_point_csv(root / files["baseload_actual"], baseload_unit)
    production_actual = ingest_point_csv(root / files["production_actual"], production_unit)
    if baseload_actual.grid != production_actual.grid:
        raise GridMismatch(f"{root}: baseload and production actuals are on different grids")
    if abs(baseload_actual.grid.step - step) > 1e-6:
        raise GridMismatch(
            f"{root}: actuals step {baseload_actual.grid.step} differs from manifest "
            f"step_duration {step}"
        )

    return Scenario(
        name=manifest.get("name", root.name),
        workload=parse_workloads_csv(root / files["workloads"]),
        baseload_actual=baseload_actual,
        production_actual=production_actual,
        baseload_forecasts=_load_forecast_dir(root / files["baseload_forecast_dir"], baseload_unit, step),
        production_forecasts=_load_forecast_dir(
            root / files["production_forecast_dir"], production_unit, step
        ),
    )
