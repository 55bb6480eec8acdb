"""Accuracy and space metrics for progress indicators."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import InvalidArgument


def error_at(est_end, true_end, t, t_start):
    """Absolute gap (percentage points) between estimated and optimal progress at ``t``."""
    if not est_end > t_start or not true_end > t_start:
        raise InvalidArgument("phase end must lie after the phase start")
    elapsed = t - t_start
    est = 0.0 if math.isinf(est_end) else elapsed / (est_end - t_start)
    return abs(est - elapsed / (true_end - t_start)) * 100.0


def summarize(errors):
    """(mean, max) of an error series."""
    errors = list(errors)
    if not errors:
        raise InvalidArgument("cannot summarize an empty error series")
    return sum(errors) / len(errors), max(errors)


@dataclass(frozen=True)
class ErrorReport:
    indicator: str
    series: tuple  # (t, estimated progress, optimal progress, error)
    avg_err: float
    max_err: float


def optimal_progress(t, t_start, job_end):
    return (t - t_start) / (job_end - t_start) * 100.0


def error_report(name, series, t_start, job_end, digits=None):
    """Error series of one indicator's (t, progress, est_end) samples.

    The error is the distance between reported and optimal progress, which
    equals :func:`error_at` for indicators that report progress from an
    estimated end. With ``digits`` the per-point values are rounded first,
    so the summary is reproducible from the rounded series.
    """
    rows = []
    for t, progress, _ in series:
        opt = optimal_progress(t, t_start, job_end)
        err = abs(progress - opt)
        if digits is not None:
            progress, opt, err = round(progress, digits), round(opt, digits), round(err, digits)
        rows.append((t, progress, opt, err))
    avg, mx = summarize(r[3] for r in rows)
    return ErrorReport(name, tuple(rows), avg, mx)


@dataclass(frozen=True)
class OverheadReport:
    map_profile_bytes: int
    reduce_profile_bytes: int
    shuffle_bytes: int

    @property
    def percent(self):
        return overhead(self.map_profile_bytes, self.reduce_profile_bytes, self.shuffle_bytes)


def overhead(map_profile_bytes, reduce_profile_bytes, shuffle_bytes):
    """Profile data relative to shuffle data, in percent."""
    if shuffle_bytes <= 0:
        raise InvalidArgument("shuffle size must be positive")
    return (map_profile_bytes + reduce_profile_bytes) / shuffle_bytes * 100.0
