"""Deterministic discrete-event simulation of one MapReduce job."""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (ClusterSpec, CostModel, InvalidArgument, IntermediateKey, JobSpec, KeyGroup,
                   MapSplit, eval_cost, function_seed)
from .sketches import BurstFilter, ProfilePoint
from .workloads import lpt_assign, unbalanced_assign


# -- events --------------------------------------------------------------------

@dataclass(frozen=True)
class MapTaskStarted:
    t: int
    task: int


@dataclass(frozen=True)
class MapTaskFinished:
    """End of a map task, with the raw (key, reduce task, bytes) output it emitted."""

    t: int
    task: int
    input_bytes: int
    emitted: tuple


@dataclass(frozen=True)
class ReduceTaskStarted:
    t: int
    task: int


@dataclass(frozen=True)
class ReduceProfile:
    """Reduce-profile delivery: (size, elapsed) points of the functions just measured."""

    t: int
    task: int
    points: tuple


@dataclass(frozen=True)
class ReduceTaskFinished:
    t: int
    task: int


EVENT_KINDS = {
    MapTaskStarted: "map_start",
    MapTaskFinished: "map_end",
    ReduceTaskStarted: "reduce_start",
    ReduceProfile: "reduce_profile",
    ReduceTaskFinished: "reduce_end",
}


@dataclass(frozen=True)
class FunctionRecord:
    key: int
    size: int
    start: int
    end: int


@dataclass
class TaskTimeline:
    task_id: int
    kind: str
    worker: int
    slot: int
    start: int
    end: int
    input_bytes: int = 0
    functions: list = field(default_factory=list)

    def processed_bytes(self, t):
        """Input bytes consumed by time ``t`` (map tasks progress at a constant rate)."""
        if t >= self.end:
            return self.input_bytes
        if t <= self.start:
            return 0
        if self.kind == "map":
            return self.input_bytes * (t - self.start) / max(self.end - self.start, 1)
        return sum(f.size for f in self.functions if f.end <= t)


@dataclass
class ExecutionTrace:
    spec: JobSpec
    cluster: ClusterSpec
    seed: int
    assignment: list  # reduce task -> list of KeyIds
    map_timelines: list
    reduce_timelines: list
    map_end: int
    shuffle_end: int
    job_end: int
    events: list
    burst: Optional[tuple] = None

    @property
    def t_start(self):
        return self.shuffle_end

    @property
    def timelines(self):
        return self.map_timelines + self.reduce_timelines

    def reduce_bytes(self):
        sizes = {ik.key: ik.size_bytes for ik in self.spec.intermediate_keys}
        return [sum(sizes[k] for k in ks) for ks in self.assignment]


# -- partitioning & scheduling -------------------------------------------------

def _cost_proxy(group):
    return math.prod(group.factors) if group.factors else group.size_bytes


def partition_keys(keys, R: int, strategy: str = "hash", seed: int = 0, cost=None, pinned=None):
    """Assign key groups to R reduce tasks; returns a list of key lists (K_i).

    ``hash`` uses KeyId mod R; ``random`` draws tasks uniformly; ``optimal``
    balances ``cost`` greedily (LPT); ``unbalanced`` pins the ``pinned``
    costliest keys (default round(n ** (2/3))) to task 0 and deals the rest
    over the other tasks.
    """
    if R < 1:
        raise InvalidArgument(f"R must be >= 1, got {R}")
    groups = [k.group() if isinstance(k, IntermediateKey) else k for k in keys]
    ids = [g.key for g in groups]
    cost = cost or _cost_proxy
    if strategy == "hash":
        out = [[] for _ in range(R)]
        for k in ids:
            out[k % R].append(k)
        return out
    if strategy == "random":
        picks = np.random.default_rng(seed).integers(0, R, size=len(ids))
        out = [[] for _ in range(R)]
        for k, p in zip(ids, picks.tolist()):
            out[p].append(k)
        return out
    costs = [cost(g) for g in groups]
    if strategy == "optimal":
        return lpt_assign(costs, R, ids)
    if strategy == "unbalanced":
        if pinned is None:
            pinned = max(1, round(len(ids) ** (2.0 / 3.0)))
        return unbalanced_assign(costs, R, ids, pinned)
    raise InvalidArgument(f"unknown partition strategy {strategy!r}")


def greedy_schedule(durations, parallelism, start=0, busy_until=()):
    """FIFO greedy list scheduling; returns (slot, start, end) per task.

    ``busy_until`` gives the time each slot frees up (missing slots are free
    at ``start``).
    """
    if parallelism < 1:
        raise InvalidArgument("parallelism must be >= 1")
    free = [(max(start, busy_until[s]) if s < len(busy_until) else start, s)
            for s in range(parallelism)]
    heapq.heapify(free)
    out = []
    for d in durations:
        t, s = heapq.heappop(free)
        end = t + d
        out.append((s, t, end))
        heapq.heappush(free, (end, s))
    return out


# -- the job -------------------------------------------------------------------

def run_job(spec: JobSpec, cluster: ClusterSpec, seed: int = 0, *,
            burst: Optional[tuple] = (50, 100)) -> ExecutionTrace:
    """Simulate ``spec`` on ``cluster``.

    Map tasks run greedily on the slots; after the last one, a single
    aggregate shuffle delay of (shuffle bytes / shuffle_rate) elapses; then
    reduce tasks are scheduled greedily, each running one function per key
    group in KeyId order. ``burst`` = (size threshold, skip threshold) drives
    the reduce-side measurement bursting; None reports every function.
    """
    P = cluster.parallelism
    if P < 1:
        raise InvalidArgument("cluster has zero slots")
    spw = cluster.slots_per_worker
    R = spec.reducer_count

    if spec.assignment is not None:
        assignment = [[] for _ in range(R)]
        for k, i in spec.assignment.items():
            assignment[i].append(k)
    else:
        assignment = partition_keys(spec.intermediate_keys, R, spec.partitioner, seed)
    task_of = {k: i for i, ks in enumerate(assignment) for k in ks}
    by_key = {ik.key: ik for ik in spec.intermediate_keys}
    if set(task_of) != set(by_key):
        raise InvalidArgument("assignment does not cover the intermediate keys exactly once")

    events = []

    # map phase
    map_durations = []
    for j, split in enumerate(spec.map_splits):
        per_pair = eval_cost(spec.map_cost, split.bytes_per_pair, function_seed(seed, j, 1))
        map_durations.append(int(round(split.pairs * per_pair)))
    emitted = [[] for _ in spec.map_splits]
    for ik in spec.intermediate_keys:
        i = task_of[ik.key]
        for j, s in enumerate(ik.map_sizes):
            if s > 0:
                emitted[j].append((ik.key, i, s))
    map_timelines = []
    for j, (slot, st, en) in enumerate(greedy_schedule(map_durations, P, 0)):
        tl = TaskTimeline(j, "map", slot // spw, slot, st, en, spec.map_splits[j].size_bytes)
        map_timelines.append(tl)
        events.append(MapTaskStarted(st, j))
        events.append(MapTaskFinished(en, j, tl.input_bytes, tuple(emitted[j])))
    map_end = max((tl.end for tl in map_timelines), default=0)

    shuffle_bytes = spec.shuffle_bytes
    if math.isinf(spec.shuffle_rate):
        shuffle_ms = 0
    else:
        shuffle_ms = int(math.ceil(shuffle_bytes / spec.shuffle_rate))
    t_start = map_end + shuffle_ms

    # reduce phase: durations are fixed up front, then tasks are placed greedily
    rseed = seed
    task_funcs = []
    for i in range(R):
        funcs = []
        for k in sorted(assignment[i]):
            ik = by_key[k]
            d = int(round(eval_cost(spec.reduce_cost, ik.size_bytes,
                                    function_seed(rseed, k, 2), ik.factors)))
            funcs.append((k, ik.size_bytes, d))
        task_funcs.append(funcs)
    placement = greedy_schedule([sum(f[2] for f in fs) for fs in task_funcs], P, t_start)

    reduce_timelines = []
    for i, (slot, st, en) in enumerate(placement):
        tl = TaskTimeline(i, "reduce", slot // spw, slot, st, en,
                          sum(f[1] for f in task_funcs[i]))
        events.append(ReduceTaskStarted(st, i))
        filt = BurstFilter(*burst) if burst else None
        clock = st
        last = None  # index of this task's latest delivery in ``events``

        def deliver(t, pts):
            # one delivery per instant keeps per-task timestamps strictly increasing
            nonlocal last
            pts = tuple(pts)
            if last is not None and events[last].t == t:
                events[last] = ReduceProfile(t, i, events[last].points + pts)
            else:
                events.append(ReduceProfile(t, i, pts))
                last = len(events) - 1

        for k, size, d in task_funcs[i]:
            if filt is not None and filt.is_heavy(size):
                pending = filt.flush()
                if pending:
                    deliver(clock, pending)
            tl.functions.append(FunctionRecord(k, size, clock, clock + d))
            clock += d
            if filt is None:
                deliver(clock, [ProfilePoint(size, d)])
            else:
                for b in filt.offer(size, d):
                    deliver(clock, b)
        if filt is not None:
            rest = filt.flush()
            if rest:
                deliver(clock, rest)
        assert clock == en
        events.append(ReduceTaskFinished(en, i))
        reduce_timelines.append(tl)
    job_end = max((tl.end for tl in reduce_timelines), default=t_start)

    # stable sort: reduce events keep their start -> profiles -> end insertion order,
    # and FIFO placement means a task freeing a slot at t was inserted before its successor
    order = {MapTaskStarted: 1, MapTaskFinished: 0, ReduceTaskStarted: 2,
             ReduceProfile: 2, ReduceTaskFinished: 2}
    events.sort(key=lambda e: (e.t, order[type(e)]))
    return ExecutionTrace(spec, cluster, seed, assignment, map_timelines, reduce_timelines,
                          map_end, t_start, job_end, events, tuple(burst) if burst else None)


def build_job(keys, *, map_splits=None, map_cost=None, reduce_cost=None, reducers=1,
              partitioner="hash", shuffle_rate=math.inf, assignment=None,
              pairs_per_split=1000, bytes_per_pair=100) -> JobSpec:
    """Convenience JobSpec around a list of IntermediateKey."""
    n_maps = len(keys[0].map_sizes) if keys else 1
    if map_splits is None:
        map_splits = [MapSplit(pairs_per_split, bytes_per_pair) for _ in range(n_maps)]
    table = None
    if assignment is not None:
        table = {k: i for i, ks in enumerate(assignment) for k in ks}
        reducers = len(assignment)
    return JobSpec(map_splits, map_cost or CostModel.polynomial(0.01, 1),
                   reduce_cost or CostModel.polynomial(1.0, 1), list(keys), reducers,
                   partitioner, shuffle_rate, table)


# -- replay ----------------------------------------------------------------------

def prediction_times(trace: ExecutionTrace, update_interval_ms=None, points=None):
    """Update instants strictly inside the reduce phase: t_start + k * interval."""
    length = trace.job_end - trace.t_start
    if update_interval_ms is None:
        if not points:
            raise InvalidArgument("need an update interval or a number of prediction points")
        update_interval_ms = max(1, length // points)
    if update_interval_ms <= 0:
        raise InvalidArgument("update interval must be positive")
    return list(range(trace.t_start + update_interval_ms, trace.job_end, update_interval_ms))


def replay_with_indicators(trace: ExecutionTrace, indicators, update_interval_ms=None,
                           points=None):
    """Feed the profile stream to each indicator and sample progress at every update.

    Returns {indicator name: [(t, progress %, estimated end)]}. Indicators
    only ever see events stamped at or before the query time.
    """
    times = prediction_times(trace, update_interval_ms, points)
    info = JobInfo.from_trace(trace)
    out = {}
    for ind in indicators:
        ind.reset(info)
        series = []
        pos = 0
        events = trace.events
        for t in times:
            while pos < len(events) and events[pos].t <= t:
                ind.observe(events[pos])
                pos += 1
            ind.advance(t)
            est = ind.estimated_end(t)
            series.append((t, float(ind.progress_at(t)), float(est)))
        out[ind.name] = series
    return out


@dataclass(frozen=True)
class JobInfo:
    """What the application master knows before the job runs."""

    reducer_count: int
    map_count: int
    parallelism: int
    shuffle_rate: float
    job_end: Optional[int] = None  # ground truth, only for the optimal reference

    @classmethod
    def from_trace(cls, trace):
        return cls(trace.spec.reducer_count, trace.spec.map_count, trace.cluster.parallelism,
                   trace.spec.shuffle_rate, trace.job_end)


# -- export ------------------------------------------------------------------------

EVENT_LOG_COLUMNS = ("kind", "task_id", "key_hash", "size", "elapsed_ms", "t_ms")


def write_event_log(trace: ExecutionTrace, path):
    """One row per event (and per delivered profile point / emitted key)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_LOG_COLUMNS)
        for e in trace.events:
            kind = EVENT_KINDS[type(e)]
            if isinstance(e, ReduceProfile):
                for p in e.points:
                    w.writerow([kind, e.task, "", p.size, p.time, e.t])
            elif isinstance(e, MapTaskFinished):
                w.writerow([kind, e.task, "", e.input_bytes, "", e.t])
                for k, i, s in e.emitted:
                    w.writerow(["map_emit", e.task, f"{k:016x}", s, "", e.t])
            else:
                w.writerow([kind, e.task, "", "", "", e.t])
        for tl in trace.reduce_timelines:
            for f in tl.functions:
                w.writerow(["reduce_fn", tl.task_id, f"{f.key:016x}", f.size, f.end - f.start, f.end])


def _spec_to_dict(spec: JobSpec):
    return {
        "map_splits": [[s.pairs, s.bytes_per_pair] for s in spec.map_splits],
        "map_cost": spec.map_cost.to_dict(),
        "reduce_cost": spec.reduce_cost.to_dict(),
        "intermediate_keys": [[f"{ik.key:016x}", list(ik.map_sizes),
                               list(ik.factors) if ik.factors else None]
                              for ik in spec.intermediate_keys],
        "reducer_count": spec.reducer_count,
        "partitioner": spec.partitioner,
        "shuffle_rate": None if math.isinf(spec.shuffle_rate) else spec.shuffle_rate,
        "assignment": None if spec.assignment is None else
        {f"{k:016x}": i for k, i in spec.assignment.items()},
    }


def _spec_from_dict(d) -> JobSpec:
    keys = [IntermediateKey(int(k, 16), tuple(sizes), tuple(f) if f else None)
            for k, sizes, f in d["intermediate_keys"]]
    assignment = d.get("assignment")
    if assignment is not None:
        assignment = {int(k, 16): i for k, i in assignment.items()}
    rate = d.get("shuffle_rate")
    return JobSpec([MapSplit(p, b) for p, b in d["map_splits"]],
                   CostModel.from_dict(d["map_cost"]), CostModel.from_dict(d["reduce_cost"]),
                   keys, d["reducer_count"], d["partitioner"],
                   math.inf if rate is None else rate, assignment)


def save_trace(trace: ExecutionTrace, path):
    """Store the job echo, seed and cluster; the trace itself is re-derived on load."""
    doc = {
        "format": "mrprogress-trace/1",
        "seed": trace.seed,
        "cluster": [trace.cluster.worker_count, trace.cluster.slots_per_worker],
        "spec": _spec_to_dict(trace.spec),
        "map_end": trace.map_end,
        "shuffle_end": trace.shuffle_end,
        "job_end": trace.job_end,
        "burst": list(trace.burst) if trace.burst else None,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_trace(path) -> ExecutionTrace:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "mrprogress-trace/1":
        raise InvalidArgument(f"{path}: not a trace file")
    spec = _spec_from_dict(doc["spec"])
    cluster = ClusterSpec(*doc["cluster"])
    burst = doc.get("burst")
    trace = run_job(spec, cluster, doc["seed"], burst=tuple(burst) if burst else None)
    if (trace.map_end, trace.shuffle_end, trace.job_end) != (
            doc["map_end"], doc["shuffle_end"], doc["job_end"]):
        raise InvalidArgument(f"{path}: replayed trace does not match the recorded phase times")
    return trace
