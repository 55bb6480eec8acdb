"""Common machinery for reduce-phase progress indicators."""

from __future__ import annotations

import math
from collections import defaultdict

from ..core import InvalidArgument
from ..simulator import (MapTaskFinished, MapTaskStarted, ReduceProfile, ReduceTaskFinished,
                         ReduceTaskStarted, greedy_schedule)


def progress_from_end(t, t_start, est_end):
    """Percentage of the phase elapsed at ``t`` if it ends at ``est_end``; may exceed 100."""
    if t < t_start:
        raise InvalidArgument(f"query at t={t} precedes phase start {t_start}")
    elapsed = t - t_start
    if elapsed == 0:
        return 0.0
    if math.isinf(est_end):
        return 0.0
    span = est_end - t_start
    if span <= 0:
        # an end at (or before) the phase start is only possible with no data: call it done
        return 100.0
    return elapsed / span * 100.0


def phase_end(running, finished, unscheduled, parallelism, t):
    """Predicted end of the reduce phase and of every task.

    ``running`` maps task -> predicted end, ``finished`` maps task -> actual
    end, ``unscheduled`` lists (task, predicted duration) in queue order.
    Unscheduled tasks take slots greedily as running tasks free them.
    """
    ends = dict(finished)
    ends.update(running)
    if unscheduled:
        busy = sorted(max(e, t) for e in running.values())
        busy = busy[:parallelism]
        slots = greedy_schedule([d for _, d in unscheduled], parallelism, t, busy)
        for (task, _), (_, _, end) in zip(unscheduled, slots):
            ends[task] = end
    if not ends:
        return math.inf, ends
    return max(ends.values()), ends


class Indicator:
    """Consumes the profile event stream and estimates reduce-phase progress.

    ``observe`` and ``advance`` mutate state; ``estimated_end`` and
    ``progress_at`` only read it.
    """

    name = "indicator"

    def reset(self, info):
        self.info = info
        self.t_start = None
        self.started = {}
        self.finished = {}
        self.last_profile = {}
        self.assigned = defaultdict(int)
        self.processed_bytes = defaultdict(int)
        self.processed_time = defaultdict(int)

    # event handling ------------------------------------------------------
    def observe(self, event):
        if isinstance(event, MapTaskFinished):
            for _, i, size in event.emitted:
                self.assigned[i] += size
            self.on_map_finished(event)
        elif isinstance(event, ReduceTaskStarted):
            if self.t_start is None:
                self.t_start = event.t
                self.on_reduce_phase_start(event.t)
            self.started[event.task] = event.t
            self.last_profile[event.task] = event.t
        elif isinstance(event, ReduceProfile):
            self.last_profile[event.task] = event.t
            for size, elapsed in event.points:
                self.processed_bytes[event.task] += size
                self.processed_time[event.task] += elapsed
            self.on_reduce_profile(event)
        elif isinstance(event, ReduceTaskFinished):
            self.finished[event.task] = event.t
        elif isinstance(event, MapTaskStarted):
            pass

    def on_map_finished(self, event):
        pass

    def on_reduce_phase_start(self, t):
        pass

    def on_reduce_profile(self, event):
        pass

    def advance(self, t):
        """Called once per update after the events up to ``t`` were observed."""

    # estimates -------------------------------------------------------------
    def estimated_end(self, t):
        raise NotImplementedError

    def progress_at(self, t):
        if self.t_start is None:
            raise InvalidArgument("reduce phase has not started")
        return progress_from_end(t, self.t_start, self.estimated_end(t))

    def tasks(self):
        return range(self.info.reducer_count)

    def remaining_bytes(self, i):
        return max(self.assigned[i] - self.processed_bytes[i], 0)


class OptimalIndicator(Indicator):
    """Knows the true phase end: the reference every error is measured against."""

    name = "optimal"

    def estimated_end(self, t):
        if self.info.job_end is None:
            raise InvalidArgument("optimal indicator needs the true job end")
        return self.info.job_end
