"""Hadoop, JobRatio and TaskRatio progress indicators."""

from __future__ import annotations

import math

from ..core import InvalidArgument
from .base import Indicator, phase_end


class HadoopIndicator(Indicator):
    """Average over reduce tasks of the fraction of their shuffle data consumed."""

    name = "hadoop"

    def task_fraction(self, i):
        if i in self.finished:
            return 1.0
        total = self.assigned[i]
        if total <= 0:
            return 1.0 if i in self.started else 0.0
        return min(self.processed_bytes[i] / total, 1.0)

    def progress_at(self, t):
        if self.t_start is None:
            raise InvalidArgument("reduce phase has not started")
        if t == self.t_start:
            return 0.0
        R = self.info.reducer_count
        return sum(self.task_fraction(i) for i in self.tasks()) / R * 100.0

    def estimated_end(self, t):
        p = self.progress_at(t)
        if p <= 0:
            return math.inf
        return self.t_start + (t - self.t_start) * 100.0 / p


class JobRatioIndicator(Indicator):
    """Remaining bytes times the job-wide ms-per-byte rate of finished reduce functions."""

    name = "jobratio"

    def __init__(self, ewma=False, alpha=0.3):
        self.ewma = ewma
        self.alpha = alpha

    def reset(self, info):
        super().reset(info)
        self._rate = None

    def raw_rate(self):
        b = sum(self.processed_bytes.values())
        if b <= 0:
            return None
        return sum(self.processed_time.values()) / b

    def advance(self, t):
        r = self.raw_rate()
        if r is None:
            return
        if not self.ewma or self._rate is None:
            self._rate = r
        else:
            self._rate = self.alpha * r + (1 - self.alpha) * self._rate

    def rate(self):
        return self._rate if self.ewma else self.raw_rate()

    def task_rate(self, i):
        return self.rate()

    def remaining_time(self, i):
        rate = self.task_rate(i)
        if rate is None:
            return None
        return rate * self.remaining_bytes(i)

    def estimated_end(self, t):
        running, unscheduled = {}, []
        for i in self.tasks():
            if i in self.finished:
                continue
            r = self.remaining_time(i)
            if r is None:
                return math.inf
            if i in self.started:
                running[i] = self.last_profile[i] + r
            else:
                unscheduled.append((i, r))
        end, _ = phase_end(running, self.finished, unscheduled, self.info.parallelism, t)
        return end


class TaskRatioIndicator(JobRatioIndicator):
    """Per-task rate once a task has processed more than ``warmup`` of its input."""

    name = "taskratio"

    def __init__(self, ewma=False, alpha=0.3, warmup=0.05):
        super().__init__(ewma, alpha)
        self.warmup = warmup

    def reset(self, info):
        super().reset(info)
        self._task_rates = {}

    def raw_task_rate(self, i):
        b = self.processed_bytes[i]
        if b <= 0 or b <= self.warmup * self.assigned[i]:
            return None
        return self.processed_time[i] / b

    def advance(self, t):
        super().advance(t)
        for i in self.tasks():
            r = self.raw_task_rate(i)
            if r is None:
                continue
            prev = self._task_rates.get(i)
            if not self.ewma or prev is None:
                self._task_rates[i] = r
            else:
                self._task_rates[i] = self.alpha * r + (1 - self.alpha) * prev

    def task_rate(self, i):
        if self.ewma:
            r = self._task_rates.get(i)
        else:
            r = self.raw_task_rate(i)
        return r if r is not None else self.rate()
