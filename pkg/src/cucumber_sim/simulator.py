"""Deterministic discrete-event simulation of one node under admission control.

Time advances over segments bounded by actuals-grid edges, forecast refreshes,
mitigation evaluations, arrivals and the run end.  Within a segment the world
is piecewise constant and the running job progresses analytically, so
completions can fall mid-step without discretization bias.  Events sharing a
timestamp process in a fixed order: forecast refresh, then mitigation
evaluation, then arrivals, then completion bookkeeping.
"""

from __future__ import annotations

import bisect
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .admission import (
    POLICY_CUCUMBER,
    AdmissionPolicy,
    JobState,
    QueuedJob,
    WorkloadRequest,
    admit,
    edf_insert,
)
from .errors import ConfigError, DataError
from .forecast import (
    UNIT_UTILIZATION,
    UNIT_WATTS,
    ProbabilisticSeries,
    Quantiles,
    TimeGrid,
    fuse_ree_fallback,
    fuse_ree_joint,
)
from .freep import FreepForecast, compute_freep, reduce_load_forecast
from .governor import GovernorState, MitigationDecision, evaluate_mitigation, runtime_cap
from .power import PowerModel, consumption_forecast
from .scenario import Scenario, load_scenario

_FUSION_STREAM = 101


@dataclass(frozen=True)
class SimulationConfig:
    """One run: policy binding, node model, cadences, seeds, scenario."""

    policy: AdmissionPolicy
    scenario_dir: str | None = None
    power_model: PowerModel = PowerModel(30.0, 180.0)
    step_duration: float = 600.0
    horizon_steps: int = 144
    forecast_refresh: float = 600.0
    evaluation_interval: float | None = None
    sample_count: int = 1000
    reduction_alpha: float = 0.5
    seed: int = 0
    perfect_forecasts: bool = False
    duration: float | None = None

    def __post_init__(self) -> None:
        if self.step_duration <= 0:
            raise ConfigError(f"step_duration must be > 0, got {self.step_duration}")
        if self.horizon_steps < 1:
            raise ConfigError(f"horizon_steps must be >= 1, got {self.horizon_steps}")
        ratio = self.forecast_refresh / self.step_duration
        if self.forecast_refresh <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                f"forecast_refresh ({self.forecast_refresh}) must be a positive multiple "
                f"of step_duration ({self.step_duration})"
            )
        if self.evaluation_interval is not None and self.evaluation_interval <= 0:
            raise ConfigError(
                f"evaluation_interval must be > 0, got {self.evaluation_interval}"
            )
        if self.sample_count < 1:
            raise ConfigError(f"sample_count must be >= 1, got {self.sample_count}")
        if not 0.0 < self.reduction_alpha < 1.0:
            raise ConfigError(
                f"reduction_alpha must lie in the open interval (0, 1), got {self.reduction_alpha}"
            )
        if self.duration is not None and self.duration <= 0:
            raise ConfigError(f"duration must be > 0, got {self.duration}")


@dataclass
class JobRecord:
    """Outcome of one workload request."""

    id: str
    arrival: float
    size: float
    deadline: float
    accepted: bool
    reject_reason: str | None = None
    violating_job_id: str | None = None
    completion: float | None = None
    lateness: float | None = None
    missed: bool = False
    ree_energy_j: float = 0.0
    grid_energy_j: float = 0.0
    uncapped: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "arrival": self.arrival,
            "size": self.size,
            "deadline": self.deadline,
            "accepted": self.accepted,
            "reject_reason": self.reject_reason,
            "violating_job_id": self.violating_job_id,
            "completion": self.completion,
            "lateness": self.lateness,
            "missed": self.missed,
            "ree_energy_j": self.ree_energy_j,
            "grid_energy_j": self.grid_energy_j,
            "uncapped": self.uncapped,
        }


@dataclass
class StepTrace:
    """Per-step power and energy attribution over the run."""

    grid: TimeGrid
    production_w: np.ndarray
    baseload_w: np.ndarray
    job_energy_j: np.ndarray
    job_ree_j: np.ndarray
    job_grid_j: np.ndarray


@dataclass
class RunMetrics:
    """Aggregated outcome of a run."""

    requests_total: int
    accepted: int
    acceptance_rate: float | None
    ree_energy_j: float
    grid_energy_j: float
    ree_coverage: float | None
    deadline_misses: int
    jobs: list[JobRecord]
    steps: StepTrace | None = None

    def summary(self) -> dict:
        return {
            "requests_total": self.requests_total,
            "accepted": self.accepted,
            "acceptance_rate": self.acceptance_rate,
            "ree_energy_j": self.ree_energy_j,
            "grid_energy_j": self.grid_energy_j,
            "ree_coverage": self.ree_coverage,
            "deadline_misses": self.deadline_misses,
        }

    def to_dict(self) -> dict:
        data = self.summary()
        data["jobs"] = [record.to_dict() for record in self.jobs]
        return data


def energy_split(
    step_seconds: float,
    production_w: float,
    baseload_power_w: float,
    job_power_w: float,
) -> tuple[float, float]:
    """Attribute job energy over an interval: baseload claims production first.

    The job's REE share is whatever production remains above the baseload
    draw, capped at the job's own draw; the remainder comes from the grid.
    """
    if min(step_seconds, production_w, baseload_power_w, job_power_w) < 0:
        raise ValueError("energy_split arguments must be >= 0")
    surplus = max(0.0, production_w - baseload_power_w)
    ree_w = min(job_power_w, surplus)
    grid_w = job_power_w - ree_w
    return ree_w * step_seconds, grid_w * step_seconds


def _fusion_seed(master: int, b_key: int, p_key: int) -> int:
    seq = np.random.SeedSequence([int(master), _FUSION_STREAM, int(b_key), int(p_key)])
    return int(seq.generate_state(1)[0])


class _Simulation:
    """Mutable state of one run; see run() for the public entry point."""

    def __init__(self, config: SimulationConfig, scenario: Scenario) -> None:
        self.config = config
        self.scenario = scenario
        self.model = config.power_model
        self.policy = config.policy
        grid = scenario.baseload_actual.grid
        if abs(grid.step - config.step_duration) > 1e-9:
            raise ConfigError(
                f"scenario step {grid.step} differs from configured step_duration "
                f"{config.step_duration}"
            )
        self.start = grid.start
        self.end = grid.end
        if config.duration is not None:
            if config.duration > grid.num_steps * grid.step + 1e-9:
                raise ConfigError("duration exceeds the scenario actuals span")
            self.end = self.start + config.duration
        self.baseload = scenario.baseload_actual.values
        self.production = scenario.production_actual.values
        self.grid = grid

        self.requests = [r for r in scenario.workload if self.start <= r.arrival_time < self.end]
        dropped = len(scenario.workload) - len(self.requests)
        if dropped:
            warnings.warn(f"{dropped} workload requests fall outside the run span; skipped")
        max_slack = max((r.deadline - r.arrival_time for r in self.requests), default=0.0)
        if config.horizon_steps * config.step_duration < max_slack:
            warnings.warn(
                "forecast horizon is shorter than the largest deadline slack; "
                "jobs may be rejected for lack of visible capacity"
            )

        self.running: QueuedJob | None = None
        self.waiting: list[QueuedJob] = []
        self.governor = GovernorState()
        self.freep: FreepForecast | None = None
        self._forecast_keys: tuple[int, int] | None = None
        self._seq = 0
        self.records: dict[str, JobRecord] = {}
        self.order: list[str] = []

        n = grid.num_steps
        self.trace = StepTrace(
            grid=grid,
            production_w=np.array(self.production, dtype=float),
            baseload_w=self.model.p_static + np.array(self.baseload) * self.model.span,
            job_energy_j=np.zeros(n),
            job_ree_j=np.zeros(n),
            job_grid_j=np.zeros(n),
        )
        self.total_ree_j = 0.0
        self.total_grid_j = 0.0
        self.total_job_j = 0.0

    # -- world lookups ------------------------------------------------------

    def _step_index(self, t: float) -> int:
        return min(max(self.grid.index_of(t), 0), self.grid.num_steps - 1)

    def _world(self, t: float) -> tuple[float, float]:
        i = self._step_index(t)
        return float(self.baseload[i]), float(self.production[i])

    # -- forecast refresh ----------------------------------------------------

    def _perfect_series(self, t: float) -> tuple[ProbabilisticSeries, ProbabilisticSeries]:
        i0 = self.grid.index_of(t)
        n = min(self.config.horizon_steps, self.grid.num_steps - i0)
        fc_grid = TimeGrid(self.grid.start + i0 * self.grid.step, self.grid.step, n)
        u_pred = ProbabilisticSeries.point(fc_grid, self.baseload[i0 : i0 + n], UNIT_UTILIZATION)
        prod = ProbabilisticSeries.point(fc_grid, self.production[i0 : i0 + n], UNIT_WATTS)
        return u_pred, prod

    def _lookup_forecast(self, table: dict[int, ProbabilisticSeries], t: float, role: str) -> int:
        keys = sorted(table)
        pos = bisect.bisect_right(keys, t + 1e-9) - 1
        if pos < 0:
            raise DataError(f"no {role} forecast issued at or before t={t}")
        return keys[pos]

    def _refresh_forecast(self, t: float) -> None:
        use_perfect = self.config.perfect_forecasts or not self.policy.needs_real_forecasts
        alpha = self.policy.alpha if self.policy.kind == POLICY_CUCUMBER else 0.5
        if use_perfect:
            u_pred_prob, prod_prob = self._perfect_series(t)
            if prod_prob.grid.num_steps == 0:
                return
            cons = consumption_forecast(self.model, u_pred_prob)
            p_ree = fuse_ree_joint(
                prod_prob, cons, alpha, self.config.sample_count,
                _fusion_seed(self.config.seed, int(t), int(t)),
            )
            u_point = reduce_load_forecast(u_pred_prob, self.config.reduction_alpha)
            self.freep = compute_freep(u_point, p_ree, self.model)
            return

        b_key = self._lookup_forecast(self.scenario.baseload_forecasts, t, "baseload")
        p_key = self._lookup_forecast(self.scenario.production_forecasts, t, "production")
        if self._forecast_keys == (b_key, p_key):
            return
        u_pred_prob = self.scenario.baseload_forecasts[b_key]
        prod_prob = self.scenario.production_forecasts[p_key]
        if u_pred_prob.grid != prod_prob.grid:
            raise DataError(
                f"baseload forecast at {b_key} and production forecast at {p_key} "
                "are on different grids"
            )
        cons = consumption_forecast(self.model, u_pred_prob)
        if isinstance(prod_prob.representation, Quantiles) or isinstance(
            cons.representation, Quantiles
        ):
            p_ree = fuse_ree_fallback(prod_prob, cons, alpha)
        else:
            p_ree = fuse_ree_joint(
                prod_prob, cons, alpha, self.config.sample_count,
                _fusion_seed(self.config.seed, b_key, p_key),
            )
        u_point = reduce_load_forecast(u_pred_prob, self.config.reduction_alpha)
        self.freep = compute_freep(u_point, p_ree, self.model)
        self._forecast_keys = (b_key, p_key)

    # -- admission and queue ------------------------------------------------

    def _ree_available(self, t: float) -> bool:
        u_b, prod = self._world(t)
        return prod - (self.model.p_static + u_b * self.model.span) > 0.0

    def _admit(self, request: WorkloadRequest, t: float) -> None:
        if self.freep is None:
            raise DataError(f"arrival at t={t} before any forecast refresh")
        decision = admit(
            self.policy,
            request,
            self.running,
            self.waiting,
            self.freep,
            self._ree_available(t),
            t,
        )
        record = JobRecord(
            id=request.id,
            arrival=request.arrival_time,
            size=request.size,
            deadline=request.deadline,
            accepted=decision.accepted,
            reject_reason=decision.reason,
            violating_job_id=decision.violating_job_id,
        )
        self.records[request.id] = record
        self.order.append(request.id)
        if decision.accepted:
            job = QueuedJob(request, request.size, JobState.WAITING, seq=self._seq)
            self._seq += 1
            self.waiting = edf_insert(self.waiting, job)

    def _promote(self, t: float) -> None:
        if self.running is not None or not self.waiting:
            return
        self.running = self.waiting.pop(0)
        self.running.transition(JobState.RUNNING)
        # A job starting already doomed under the forecast is uncapped at once
        # rather than waiting out the evaluation cadence.
        self._evaluate_mitigation(t)

    def _evaluate_mitigation(self, t: float) -> None:
        job = self.running
        if (
            job is None
            or not self.policy.uses_ree_capping
            or self.governor.is_uncapped(job.id)
            or self.freep is None
        ):
            return
        decision = evaluate_mitigation(job, self.waiting, self.freep, t)
        self.governor.last_evaluation_time = t
        if decision is MitigationDecision.UNCAP:
            self.governor.mark_uncapped(job.id)
            self.records[job.id].uncapped = True

    def _complete(self, job: QueuedJob, t: float) -> None:
        late = t > job.deadline
        job.transition(JobState.COMPLETED_LATE if late else JobState.COMPLETED)
        record = self.records[job.id]
        record.completion = t
        record.lateness = max(0.0, t - job.deadline)
        record.missed = late
        self.governor.forget(job.id)
        self.running = None

    # -- execution ----------------------------------------------------------

    def _job_rate(self, u_b: float, prod: float, job: QueuedJob) -> tuple[float, bool]:
        if not self.policy.uses_ree_capping or self.governor.is_uncapped(job.id):
            return 1.0 - u_b, False
        return runtime_cap(u_b, prod, self.model), True

    def _meter(self, t: float, span: float, u_b: float, prod: float, rate: float,
               capped: bool, job: QueuedJob) -> None:
        if span <= 0 or rate <= 0:
            return
        baseload_power = self.model.p_static + u_b * self.model.span
        job_power = rate * self.model.span
        if capped:
            # The cap came from surplus / span_watts; undoing that division can
            # overshoot the surplus by one ulp.  Capped draw never exceeds it.
            job_power = min(job_power, max(0.0, prod - baseload_power))
        ree_j, grid_j = energy_split(span, prod, baseload_power, job_power)
        record = self.records[job.id]
        record.ree_energy_j += ree_j
        record.grid_energy_j += grid_j
        self.total_ree_j += ree_j
        self.total_grid_j += grid_j
        self.total_job_j += job_power * span
        i = self._step_index(t)
        self.trace.job_energy_j[i] += job_power * span
        self.trace.job_ree_j[i] += ree_j
        self.trace.job_grid_j[i] += grid_j

    def _execute_segment(self, t0: float, t1: float) -> None:
        t = t0
        u_b, prod = self._world(t0)
        while t < t1:
            job = self.running
            if job is None or job.remaining_size <= 0:
                break
            rate, capped = self._job_rate(u_b, prod, job)
            if rate <= 0:
                break
            span = t1 - t
            time_to_finish = job.remaining_size / rate
            if time_to_finish < span:
                self._meter(t, time_to_finish, u_b, prod, rate, capped, job)
                job.remaining_size = 0.0
                t += time_to_finish
                self._complete(job, t)
                self._promote(t)
            elif time_to_finish == span:
                # Finishes exactly on the boundary: bookkeeping happens after
                # the boundary's refresh/arrival events, per the tie order.
                self._meter(t, span, u_b, prod, rate, capped, job)
                job.remaining_size = 0.0
                t = t1
            else:
                self._meter(t, span, u_b, prod, rate, capped, job)
                job.remaining_size -= rate * span
                t = t1

    def _pending_completion(self, t: float) -> None:
        if self.running is not None and self.running.remaining_size <= 0:
            self._complete(self.running, t)
        self._promote(t)

    # -- main loop ------------------------------------------------------------

    def run(self) -> RunMetrics:
        # Build ticks by index, not by repeated addition, so tick floats are
        # bit-identical to the grid-edge floats they coincide with.
        span = self.end - self.start
        refresh = self.config.forecast_refresh
        refresh_set = {
            float(self.start + refresh * k) for k in range(math.ceil(span / refresh))
        }
        interval = self.config.evaluation_interval or refresh
        eval_set = {
            float(self.start + interval * k) for k in range(math.ceil(span / interval))
        }
        arrivals = [r.arrival_time for r in self.requests]

        edges = {
            float(self.grid.start + self.grid.step * k)
            for k in range(self.grid.num_steps + 1)
        }
        boundaries = sorted(
            b
            for b in edges | refresh_set | eval_set | set(arrivals) | {float(self.end)}
            if self.start <= b <= self.end
        )

        next_request = 0
        for pos, t0 in enumerate(boundaries[:-1]):
            if t0 in refresh_set:
                self._refresh_forecast(t0)
            if t0 in eval_set:
                self._evaluate_mitigation(t0)
            while next_request < len(self.requests) and self.requests[next_request].arrival_time == t0:
                self._admit(self.requests[next_request], t0)
                next_request += 1
            self._pending_completion(t0)
            self._execute_segment(t0, boundaries[pos + 1])
        self._pending_completion(self.end)

        # Jobs still in the system at the run end never completed; a deadline
        # inside the run is therefore missed.
        leftovers = ([self.running] if self.running else []) + self.waiting
        for job in leftovers:
            record = self.records[job.id]
            record.missed = job.deadline <= self.end

        total = len(self.requests)
        accepted = sum(1 for r in self.records.values() if r.accepted)
        job_energy = self.total_ree_j + self.total_grid_j
        return RunMetrics(
            requests_total=total,
            accepted=accepted,
            acceptance_rate=accepted / total if total else None,
            ree_energy_j=self.total_ree_j,
            grid_energy_j=self.total_grid_j,
            ree_coverage=self.total_ree_j / job_energy if job_energy > 0 else None,
            deadline_misses=sum(1 for r in self.records.values() if r.missed),
            jobs=[self.records[name] for name in self.order],
            steps=self.trace,
        )


def run(config: SimulationConfig, scenario: Scenario | None = None) -> RunMetrics:
    """Execute one deterministic simulation run."""
    if scenario is None:
        if config.scenario_dir is None:
            raise ConfigError("config has no scenario_dir and no scenario was passed")
        scenario = load_scenario(config.scenario_dir)
    return _Simulation(config, scenario).run()


@dataclass
class MatrixCellResult:
    config: SimulationConfig
    metrics: RunMetrics | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _run_cell(config: SimulationConfig) -> MatrixCellResult:
    try:
        return MatrixCellResult(config, run(config))
    except Exception as exc:  # isolate cell failures from siblings
        return MatrixCellResult(config, None, f"{type(exc).__name__}: {exc}")


def run_matrix(configs: list[SimulationConfig], jobs: int = 1) -> list[MatrixCellResult]:
    """Run independent configs; failures are collected per cell, order kept."""
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1:
        results = []
        cache: dict[str, Scenario] = {}
        for config in configs:
            try:
                scenario = None
                if config.scenario_dir is not None:
                    key = str(Path(config.scenario_dir).resolve())
                    if key not in cache:
                        cache[key] = load_scenario(config.scenario_dir)
                    scenario = cache[key]
                results.append(MatrixCellResult(config, run(config, scenario)))
            except Exception as exc:
                results.append(MatrixCellResult(config, None, f"{type(exc).__name__}: {exc}"))
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, configs))
