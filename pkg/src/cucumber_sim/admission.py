"""Admission control: accept or reject workload requests against a capacity forecast.

The queue discipline is non-preemptive earliest-deadline-first with FIFO
tie-break.  A request is admitted when replaying the whole queue, with the
request inserted at its EDF position, shows every job finishing at or before
its deadline on the forecast capacity.  Capacity beyond the forecast horizon
counts as zero.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError, InvariantViolation
from .forecast import PointSeries
from .freep import FreepForecast

POLICY_OPTIMAL_NO_REE = "optimal-no-ree"
POLICY_OPTIMAL_REE_AWARE = "optimal-ree-aware"
POLICY_NAIVE = "naive"
POLICY_CUCUMBER = "cucumber"

POLICY_KINDS = (
    POLICY_OPTIMAL_NO_REE,
    POLICY_OPTIMAL_REE_AWARE,
    POLICY_NAIVE,
    POLICY_CUCUMBER,
)

# Named presets for the cucumber confidence level.
PRESET_ALPHAS = {"conservative": 0.1, "expected": 0.5, "optimistic": 0.9}


class JobState(enum.Enum):
    WAITING = "waiting"
    RUNNING = "running"
    COMPLETED = "completed"
    COMPLETED_LATE = "completed_late"


_STATE_ORDER = {
    JobState.WAITING: 0,
    JobState.RUNNING: 1,
    JobState.COMPLETED: 2,
    JobState.COMPLETED_LATE: 2,
}


@dataclass(frozen=True)
class WorkloadRequest:
    """A delay-tolerant job: size in capacity-seconds, absolute deadline."""

    id: str
    arrival_time: float
    size: float
    deadline: float

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise InvariantViolation(f"request {self.id}: size must be > 0, got {self.size}")
        if self.deadline <= self.arrival_time:
            raise InvariantViolation(
                f"request {self.id}: deadline {self.deadline} must follow arrival "
                f"{self.arrival_time}"
            )


@dataclass
class QueuedJob:
    """An accepted request with execution progress; seq orders FIFO ties."""

    request: WorkloadRequest
    remaining_size: float
    state: JobState = JobState.WAITING
    seq: int = 0

    @property
    def id(self) -> str:
        return self.request.id

    @property
    def deadline(self) -> float:
        return self.request.deadline

    def transition(self, new_state: JobState) -> None:
        if _STATE_ORDER[new_state] < _STATE_ORDER[self.state]:
            raise InvariantViolation(
                f"job {self.id}: cannot move from {self.state.value} to {new_state.value}"
            )
        self.state = new_state


@dataclass(frozen=True)
class AdmissionPolicy:
    """Which capacity view gates admission, and how optimistic it is."""

    kind: str
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.kind == POLICY_CUCUMBER:
            if self.alpha is None or not 0.0 < self.alpha < 1.0:
                raise ConfigError(
                    f"cucumber alpha must lie in the open interval (0, 1), got {self.alpha}"
                )
        elif self.alpha is not None:
            raise ConfigError(f"policy {self.kind!r} takes no alpha")

    @classmethod
    def cucumber(cls, alpha: float) -> "AdmissionPolicy":
        return cls(POLICY_CUCUMBER, alpha)

    @classmethod
    def optimal_no_ree(cls) -> "AdmissionPolicy":
        return cls(POLICY_OPTIMAL_NO_REE)

    @classmethod
    def optimal_ree_aware(cls) -> "AdmissionPolicy":
        return cls(POLICY_OPTIMAL_REE_AWARE)

    @classmethod
    def naive(cls) -> "AdmissionPolicy":
        return cls(POLICY_NAIVE)

    @classmethod
    def from_name(cls, name: str, alpha: float | None = None) -> "AdmissionPolicy":
        if name in PRESET_ALPHAS:
            return cls(POLICY_CUCUMBER, PRESET_ALPHAS[name])
        if name == POLICY_CUCUMBER:
            return cls(POLICY_CUCUMBER, 0.5 if alpha is None else alpha)
        return cls(name, alpha)

    @property
    def uses_ree_capping(self) -> bool:
        """Whether accepted jobs run power-capped to the measured REE surplus."""
        return self.kind != POLICY_OPTIMAL_NO_REE

    @property
    def needs_real_forecasts(self) -> bool:
        return self.kind in (POLICY_CUCUMBER, POLICY_NAIVE)

    def label(self) -> str:
        if self.kind == POLICY_CUCUMBER:
            return f"cucumber(alpha={self.alpha:g})"
        return self.kind


@dataclass(frozen=True)
class AdmissionDecision:
    accepted: bool
    reason: str | None = None
    violating_job_id: str | None = None
    projected_lateness: float | None = None


ACCEPT = AdmissionDecision(accepted=True)


def capacity_integral(capacity: PointSeries, t0: float, t1: float) -> float:
    """Integral of the capacity step function over [t0, t1); zero off-grid."""
    grid = capacity.grid
    a = max(t0, grid.start)
    b = min(t1, grid.end)
    if b <= a:
        return 0.0
    total = 0.0
    i = grid.index_of(a)
    cursor = a
    while cursor < b and i < grid.num_steps:
        step_end = min(grid.start + (i + 1) * grid.step, b)
        total += float(capacity.values[i]) * (step_end - cursor)
        cursor = step_end
        i += 1
    return total


def _advance(capacity: PointSeries, t: float, need: float) -> float:
    """Earliest time >= t at which the capacity integral from t reaches need."""
    if need <= 0:
        return t
    if not math.isfinite(t):
        return math.inf
    grid = capacity.grid
    cursor = max(t, grid.start)
    if cursor >= grid.end:
        return math.inf
    i = grid.index_of(cursor)
    while i < grid.num_steps:
        step_end = grid.start + (i + 1) * grid.step
        rate = float(capacity.values[i])
        supply = rate * (step_end - cursor)
        if supply >= need and rate > 0:
            return cursor + need / rate
        need -= supply
        cursor = step_end
        i += 1
    return math.inf


def feasible_schedule(
    jobs: Sequence[QueuedJob],
    capacity: PointSeries,
    now: float,
) -> list[float]:
    """Projected completion time of each job under sequential processing.

    Jobs are consumed in the given order: each starts where its predecessor
    finished and completes once the capacity integral covers its remaining
    size, solving linearly inside a step.  Jobs that cannot finish within the
    forecast horizon complete at +inf.
    """
    completions: list[float] = []
    cursor = now
    for job in jobs:
        cursor = _advance(capacity, cursor, job.remaining_size)
        completions.append(cursor)
    return completions


def edf_insert(waiting: Sequence[QueuedJob], candidate: QueuedJob) -> list[QueuedJob]:
    """Waiting queue with the candidate at its EDF position, FIFO on ties.

    Tolerates an unsorted input queue; the result is always in (deadline, seq)
    order, which is the processing order behind the running job.
    """
    return sorted([*waiting, candidate], key=lambda job: (job.deadline, job.seq))


def _capacity_for(policy: AdmissionPolicy, freep: FreepForecast) -> PointSeries:
    if policy.kind == POLICY_OPTIMAL_NO_REE:
        return freep.free_series()
    return freep.freep_series()


def admit(
    policy: AdmissionPolicy,
    request: WorkloadRequest,
    running: QueuedJob | None,
    waiting: Sequence[QueuedJob],
    freep: FreepForecast,
    current_ree_available: bool,
    now: float,
) -> AdmissionDecision:
    """Decide accept/reject for a request arriving now.

    The forecast-based policies replay the queue, running job first (it is
    never preempted), then the waiting jobs and the request in EDF order, and
    accept only if every projected completion is at or before its deadline.
    The naive policy ignores forecasts entirely.
    """
    if policy.kind == POLICY_NAIVE:
        if not current_ree_available:
            return AdmissionDecision(False, reason="no-ree-available")
        if running is not None or waiting:
            return AdmissionDecision(False, reason="workload-in-process")
        return ACCEPT

    candidate = QueuedJob(request, request.size, JobState.WAITING, seq=_candidate_seq(waiting))
    order: list[QueuedJob] = []
    if running is not None:
        order.append(running)
    order.extend(edf_insert(waiting, candidate))
    capacity = _capacity_for(policy, freep)
    completions = feasible_schedule(order, capacity, now)
    for job, completion in zip(order, completions):
        if completion > job.deadline:
            lateness = completion - job.deadline if math.isfinite(completion) else math.inf
            return AdmissionDecision(
                False,
                reason="deadline-violation",
                violating_job_id=job.id,
                projected_lateness=lateness,
            )
    return ACCEPT


def _candidate_seq(waiting: Sequence[QueuedJob]) -> int:
    return max((job.seq for job in waiting), default=-1) + 1


@dataclass(frozen=True)
class DeadlineGroup:
    """Jobs sharing one exact deadline, with cached totals for fast checks."""

    deadline: float
    job_ids: tuple[str, ...]
    total_remaining: float
    capacity_to_deadline: float


def group_by_deadline(
    jobs: Iterable[QueuedJob],
    capacity: PointSeries,
    now: float,
) -> list[DeadlineGroup]:
    """Partition jobs by exact deadline, ascending, with cached integrals."""
    ordered = sorted(jobs, key=lambda j: (j.deadline, j.seq))
    groups: list[DeadlineGroup] = []
    for deadline, members in itertools.groupby(ordered, key=lambda j: j.deadline):
        member_list = list(members)
        groups.append(
            DeadlineGroup(
                deadline=deadline,
                job_ids=tuple(j.id for j in member_list),
                total_remaining=sum(j.remaining_size for j in member_list),
                capacity_to_deadline=capacity_integral(capacity, now, deadline),
            )
        )
    return groups


def admit_grouped(
    policy: AdmissionPolicy,
    request: WorkloadRequest,
    running: QueuedJob | None,
    waiting: Sequence[QueuedJob],
    freep: FreepForecast,
    current_ree_available: bool,
    now: float,
) -> AdmissionDecision:
    """Group-cached admission check; decisions match the full replay.

    Under sequential EDF processing, job k meets its deadline exactly when the
    capacity integral up to that deadline covers the cumulative remaining size
    through k, so the per-group cumulative comparison decides without walking
    completions.  The running job is a prefix ahead of every group.
    """
    if policy.kind == POLICY_NAIVE:
        return admit(policy, request, running, waiting, freep, current_ree_available, now)

    capacity = _capacity_for(policy, freep)
    candidate = QueuedJob(request, request.size, JobState.WAITING, seq=_candidate_seq(waiting))
    prefix = 0.0
    if running is not None:
        prefix = running.remaining_size
        if capacity_integral(capacity, now, running.deadline) < prefix:
            return AdmissionDecision(
                False, reason="deadline-violation", violating_job_id=running.id
            )
    cumulative = prefix
    for group in group_by_deadline([*waiting, candidate], capacity, now):
        cumulative += group.total_remaining
        if group.capacity_to_deadline < cumulative:
            return AdmissionDecision(
                False,
                reason="deadline-violation",
                violating_job_id=group.job_ids[-1],
            )
    return ACCEPT
