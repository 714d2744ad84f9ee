"""Runtime power limiting and deadline mitigation for accepted jobs.

While a job runs capped, its utilization is limited so the node's extra power
draw stays within the measured renewable surplus.  When the current forecast
projects the running job past its deadline, the cap is released and the job
finishes on all free capacity; grid energy then keeps the admission promise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

from .admission import QueuedJob, feasible_schedule
from .errors import InvalidUtilization
from .freep import FreepForecast
from .power import PowerModel


class MitigationDecision(enum.Enum):
    KEEP_CAPPED = "keep_capped"
    UNCAP = "uncap"


@dataclass
class GovernorState:
    """Per-job cap mode; uncapped is absorbing until the job completes."""

    uncapped_job_ids: set[str] = field(default_factory=set)
    last_evaluation_time: float = float("-inf")

    def is_uncapped(self, job_id: str) -> bool:
        return job_id in self.uncapped_job_ids

    def mark_uncapped(self, job_id: str) -> None:
        self.uncapped_job_ids.add(job_id)

    def forget(self, job_id: str) -> None:
        self.uncapped_job_ids.discard(job_id)


def runtime_cap(
    measured_baseload: float,
    measured_production: float,
    model: PowerModel,
    other_consumers_w: float = 0.0,
) -> float:
    """Utilization cap for delay-tolerant work from instantaneous measurements.

    surplus = production - (idle power + baseload share + other consumers);
    the cap is the smaller of the free capacity and the utilization that the
    surplus can power at the marginal watts-per-utilization rate, floored at 0.
    """
    if not 0.0 <= measured_baseload <= 1.0:
        raise InvalidUtilization(
            f"measured baseload must lie in [0, 1], got {measured_baseload}"
        )
    surplus = (
        measured_production
        - (model.p_static + measured_baseload * model.span)
        - other_consumers_w
    )
    return min(1.0 - measured_baseload, max(0.0, surplus / model.span))


def evaluate_mitigation(
    job: QueuedJob,
    queue_after: Sequence[QueuedJob],
    freep: FreepForecast,
    now: float,
) -> MitigationDecision:
    """Uncap the running job if the current forecast projects it late.

    Replays the queue on the REE-coverable capacity; only the running job's
    own deadline gates the decision (queued jobs stay under capped projection
    until they run).
    """
    completions = feasible_schedule([job, *queue_after], freep.freep_series(), now)
    if completions[0] > job.deadline:
        return MitigationDecision.UNCAP
    return MitigationDecision.KEEP_CAPPED
