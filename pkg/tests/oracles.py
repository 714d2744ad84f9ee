"""Independent reference implementations used to freeze expected test values.

Everything here is deliberately brute force and shares no code with the
package: quantiles by sorting a plain list, pairwise fusion by full
enumeration, and scheduling by one-second time stepping.
"""

from __future__ import annotations

import math

import numpy as np


def nearest_rank(values, alpha: float) -> float:
    """Nearest-rank quantile of a finite sample: sorted[ceil(alpha*n) - 1]."""
    ordered = sorted(float(v) for v in values)
    index = max(math.ceil(alpha * len(ordered)) - 1, 0)
    return ordered[min(index, len(ordered) - 1)]


def enumerate_pair_quantile(prod_values, cons_values, alpha: float) -> float:
    """Exact alpha quantile of (prod - cons) over all member pairs, clamped at 0."""
    diffs = [float(p) - float(c) for p in prod_values for c in cons_values]
    return max(0.0, nearest_rank(diffs, alpha))


def per_second_capacity(capacity_values, step_seconds: int, start: float, now: float,
                        horizon_pad: int = 0) -> np.ndarray:
    """Capacity sampled at 1-second ticks from `now` to the grid end (0 beyond)."""
    per_sec = np.repeat(np.asarray(capacity_values, dtype=float), int(step_seconds))
    offset = int(round(now - start))
    if offset > 0:
        per_sec = per_sec[offset:]
    elif offset < 0:
        per_sec = np.concatenate([np.zeros(-offset), per_sec])
    if horizon_pad > 0:
        per_sec = np.concatenate([per_sec, np.zeros(horizon_pad)])
    return per_sec


def tick_completions(sizes_in_order, capacity_values, step_seconds: int, start: float,
                     now: float) -> list[float]:
    """Sequential completions from direct 1-second time stepping.

    The queue head consumes capacity second by second; each completion is
    quantized to the end of the tick where the cumulative supply first covers
    the cumulative demand.  Jobs that never finish complete at +inf.
    """
    per_sec = per_second_capacity(capacity_values, step_seconds, start, now)
    cumulative = np.cumsum(per_sec)
    completions = []
    demand = 0.0
    for size in sizes_in_order:
        demand += float(size)
        index = int(np.searchsorted(cumulative, demand - 1e-9, side="left"))
        completions.append(now + index + 1 if index < len(cumulative) else math.inf)
    return completions


def edf_processing_order(running, queued, candidate):
    """Processing order: running job pinned first, rest by (deadline, seq)."""
    rest = sorted([*queued, candidate], key=lambda j: (j[1], j[2]))
    return ([running] if running is not None else []) + rest


def tick_admit(running, queued, candidate, capacity_values, step_seconds: int,
               start: float, now: float) -> bool:
    """Accept/reject from the tick oracle; jobs are (size, deadline, seq) triples."""
    order = edf_processing_order(running, queued, candidate)
    completions = tick_completions(
        [j[0] for j in order], capacity_values, step_seconds, start, now
    )
    return all(c <= j[1] for c, j in zip(completions, order))
