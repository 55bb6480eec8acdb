from ..core import InvalidArgument
from .base import Indicator, OptimalIndicator, phase_end, progress_from_end
from .baselines import HadoopIndicator, JobRatioIndicator, TaskRatioIndicator
from .nearestfit import (NearestFitIndicator, map_task_profile, nf_on_reduce_event, nf_remaining,
                         nf_task_end)
from .phases import PhaseEstimate, map_phase_progress, shuffle_phase_progress

__all__ = [
    "Indicator", "OptimalIndicator", "phase_end", "progress_from_end",
    "HadoopIndicator", "JobRatioIndicator", "TaskRatioIndicator",
    "NearestFitIndicator", "map_task_profile", "nf_on_reduce_event", "nf_remaining",
    "nf_task_end", "PhaseEstimate", "map_phase_progress", "shuffle_phase_progress",
    "make_indicator",
]


def make_indicator(name, config=None, ewma=False):
    """Build an indicator from its report name."""
    if name == "nearestfit":
        return NearestFitIndicator(config, "approximate")
    if name == "nearestfit-oracle":
        return NearestFitIndicator(config, "oracle")
    alpha = config.ewma_alpha if config is not None else 0.3
    if name == "hadoop":
        return HadoopIndicator()
    if name == "jobratio":
        return JobRatioIndicator(ewma, alpha)
    if name == "taskratio":
        return TaskRatioIndicator(ewma, alpha)
    if name == "optimal":
        return OptimalIndicator()
    raise InvalidArgument(f"unknown indicator {name!r}")
