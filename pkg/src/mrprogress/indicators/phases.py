"""Map- and shuffle-phase progress: linear in bytes, scheduler-aware for queued map tasks."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..core import InvalidArgument
from ..simulator import greedy_schedule


@dataclass(frozen=True)
class PhaseEstimate:
    progress: float  # percent of the phase's bytes processed
    estimated_end: float


def map_phase_progress(trace, t) -> PhaseEstimate:
    """Fraction of input bytes mapped by ``t`` and the extrapolated end of the map phase.

    The observed byte rate of started map tasks gives the remaining time of
    running tasks; queued tasks are placed with the greedy slot scheduler.
    """
    if t < 0:
        raise InvalidArgument("map phase starts at 0")
    maps = trace.map_timelines
    total = sum(tl.input_bytes for tl in maps)
    if total == 0:
        return PhaseEstimate(100.0, 0.0)
    done = sum(tl.processed_bytes(t) for tl in maps)
    started = [tl for tl in maps if tl.start < t]
    elapsed = sum(min(t, tl.end) - tl.start for tl in started)
    moved = sum(tl.processed_bytes(t) for tl in started)
    progress = done / total * 100.0
    if moved <= 0 or elapsed <= 0:
        return PhaseEstimate(progress, math.inf)
    rate = moved / elapsed  # bytes per ms per slot
    ends, busy = [], []
    for tl in started:
        if tl.end <= t:
            ends.append(tl.end)
        else:
            e = t + (tl.input_bytes - tl.processed_bytes(t)) / rate
            ends.append(e)
            busy.append(e)
    queued = [tl.input_bytes / rate for tl in maps if tl.start >= t]
    if queued:
        busy = sorted(busy)[:trace.cluster.parallelism]
        ends += [e for _, _, e in greedy_schedule(queued, trace.cluster.parallelism, t, busy)]
    return PhaseEstimate(progress, max(ends))


def shuffle_phase_progress(trace, t) -> PhaseEstimate:
    """Shuffle bytes moved by ``t`` at the job's shuffle rate, over the total."""
    if t < trace.map_end:
        raise InvalidArgument(f"shuffle phase starts at {trace.map_end}")
    total = trace.spec.shuffle_bytes
    if total == 0 or math.isinf(trace.spec.shuffle_rate):
        return PhaseEstimate(100.0, float(trace.map_end))
    moved = min((t - trace.map_end) * trace.spec.shuffle_rate, total)
    return PhaseEstimate(moved / total * 100.0, trace.map_end + total / trace.spec.shuffle_rate)
