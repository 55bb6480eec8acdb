import math

import pytest

from mrprogress.core import ClusterSpec, CostModel, IntermediateKey, hash_key
from mrprogress.simulator import (JobInfo, MapTaskFinished, ReduceProfile, ReduceTaskFinished,
                                  ReduceTaskStarted, build_job, run_job)


def keyed(sizes, label="k", maps=1):
    """IntermediateKeys with the given total sizes, all emitted by map task 0."""
    out = []
    for n, s in enumerate(sizes):
        per = (s,) + (0,) * (maps - 1)
        out.append(IntermediateKey(hash_key(f"{label}{n}"), per))
    return out


def small_trace(sizes, *, coeff=1.0, exponent=1.0, reducers=1, workers=1, burst=None, seed=0):
    keys = keyed(sizes)
    spec = build_job(keys, reduce_cost=CostModel.polynomial(coeff, exponent), reducers=reducers)
    return run_job(spec, ClusterSpec(workers, 1), seed, burst=burst)


class Feed:
    """Drive an indicator by hand with synthetic events."""

    def __init__(self, indicator, reducers=1, parallelism=1, shuffle_rate=math.inf):
        self.ind = indicator
        indicator.reset(JobInfo(reducers, 1, parallelism, shuffle_rate))

    def maps(self, emitted, t=0, task=0):
        """``emitted``: (key label, reduce task, bytes) triples."""
        em = tuple((hash_key(k), i, s) for k, i, s in emitted)
        self.ind.observe(MapTaskFinished(t, task, sum(s for *_, s in em), em))
        return self

    def start(self, task, t):
        self.ind.observe(ReduceTaskStarted(t, task))
        return self

    def profile(self, task, t, *points):
        self.ind.observe(ReduceProfile(t, task, tuple(points)))
        return self

    def finish(self, task, t):
        self.ind.observe(ReduceTaskFinished(t, task))
        return self


@pytest.fixture
def feed():
    return Feed
