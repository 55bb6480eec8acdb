"""The NearestFit indicator: profile-guided remaining-time prediction per key group.

Two modes share the same master logic:

* ``approximate`` (default): every map task reports its ``lam`` largest key
  groups explicitly and only per-reduce-task aggregates for the rest; the
  master merges explicit keys through a bounded Space Saving sketch.
* ``oracle``: the exact key distribution (every key explicit, exact sizes).

Once the reduce phase starts the master keeps sizes only, never keys.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter, defaultdict

from ..core import InvalidArgument, NearestFitConfig
from ..regression import (STEP_FALLBACK, Combiner, NoPrediction, PointIndex, fit_power,
                          linear_rate)
from ..sketches import (COUNT_BYTES, KEY_BYTES, SIZE_BYTES, TIME_BYTES, EmptyHistogram,
                        SizeHistogram, SmoothedPointSet, SpaceSavingSketch, histogram_partition)
from .base import Indicator, phase_end

MAP_RECORD_BYTES = KEY_BYTES + SIZE_BYTES           # explicit (key, |V_kj|)
IMPLICIT_RECORD_BYTES = COUNT_BYTES + SIZE_BYTES    # per reduce task (count, bytes)
REDUCE_RECORD_BYTES = SIZE_BYTES + TIME_BYTES + COUNT_BYTES  # smoothed (size, total, count)


def map_task_profile(emitted, lam):
    """Split one map task's (key, reduce task, bytes) output into its profile.

    Returns (explicit, implicit): explicit is the ``lam`` largest entries
    (ties by key), implicit maps reduce task -> (key count, total bytes).
    ``lam=None`` keeps every key explicit.
    """
    ranked = sorted(emitted, key=lambda e: (-e[2], e[0]))
    if lam is None:
        return ranked, {}
    explicit = ranked[:lam]
    implicit = defaultdict(lambda: [0, 0])
    for _, i, size in ranked[lam:]:
        agg = implicit[i]
        agg[0] += 1
        agg[1] += size
    return explicit, {i: tuple(v) for i, v in implicit.items()}


class TaskState:
    """Key-free master state of one reduce task."""

    __slots__ = ("sizes", "implicit", "points", "fit", "fit_version", "index", "index_version")

    def __init__(self, sizes, implicit, window_ms):
        self.sizes = sorted(sizes)  # S_i(t): unprocessed explicit sizes
        self.implicit = implicit    # s_i(t): unprocessed implicit bytes
        self.points = SmoothedPointSet(window_ms)  # D_i(t)
        self.fit = None
        self.fit_version = -1
        self.index = PointIndex()
        self.index_version = 0

    def match(self, size, tolerance):
        """Remove the explicit size closest to ``size`` if within tolerance."""
        s = self.sizes
        j = bisect.bisect_left(s, size)
        best = None
        for k in (j - 1, j):
            if 0 <= k < len(s) and (best is None or abs(s[k] - size) < abs(s[best] - size)):
                best = k
        if best is not None and abs(s[best] - size) <= tolerance * size:
            del s[best]
            return True
        return False


class NearestFitIndicator(Indicator):
    name = "nearestfit"

    def __init__(self, config: NearestFitConfig = None, mode: str = "approximate", name=None):
        if mode not in ("approximate", "oracle"):
            raise InvalidArgument(f"unknown NearestFit mode {mode!r}")
        self.config = config or NearestFitConfig()
        self.mode = mode
        if name is not None:
            self.name = name
        elif mode == "oracle":
            self.name = "nearestfit-oracle"

    @property
    def lam(self):
        return None if self.mode == "oracle" else self.config.lam

    def reset(self, info):
        super().reset(info)
        cap = self.config.sketch_capacity if self.lam is not None else None
        self._master = SpaceSavingSketch(cap) if cap else {}
        self._owner = {}  # key -> reduce task, known from the partitioner
        self._implicit_bytes = defaultdict(int)
        self._implicit_count = 0
        self.implicit_prior = None
        self.map_profile_records = 0
        self.map_implicit_records = 0
        self.state = None  # task -> TaskState, built at the reduce phase start
        self.histogram = SizeHistogram(self.config.histogram_capacity)
        self.steps = Counter()
        self._cache = None
        self._version = 0

    # profiling ---------------------------------------------------------------
    def on_map_finished(self, event):
        explicit, implicit = map_task_profile(event.emitted, self.lam)
        self.map_profile_records += len(explicit)
        self.map_implicit_records += len(implicit)
        for key, i, size in explicit:
            self._owner[key] = i
            if isinstance(self._master, SpaceSavingSketch):
                self._master.offer(key, size)
            else:
                self._master[key] = self._master.get(key, 0) + size
        for i, (count, nbytes) in implicit.items():
            self._implicit_bytes[i] += nbytes
            self._implicit_count += count

    def on_reduce_phase_start(self, t):
        if isinstance(self._master, SpaceSavingSketch):
            sized = [(k, self._master.guaranteed(k)) for k in self._master.entries]
        else:
            sized = list(self._master.items())
        explicit = defaultdict(list)
        for key, size in sized:
            if size > 0:
                explicit[self._owner[key]].append(size)
        self.state = {}
        for i in self.tasks():
            sizes = explicit.get(i, [])
            # demoted explicit weight lands in the implicit total, so bytes are conserved
            rest = max(self.assigned[i] - sum(sizes), 0)
            self.state[i] = TaskState(sizes, rest, self.config.smoothing_window_ms)
        self.master_profile_entries = len(sized)
        if self._implicit_count:
            # mean implicit fragment size: a size prior until implicit keys are observed
            self.implicit_prior = sum(self._implicit_bytes.values()) / self._implicit_count
        # key identities are not needed past this point
        self._master = None
        self._owner = None

    def on_reduce_profile(self, event):
        st = self.state[event.task]
        for size, elapsed in event.points:
            self.nf_on_reduce_point(st, size, elapsed)
        self._version += 1

    def nf_on_reduce_point(self, st: TaskState, size, elapsed):
        if not st.match(size, self.config.match_tolerance):
            st.implicit = max(st.implicit - size, 0)
            self.histogram.add(size)
        st.points.insert(size, elapsed)

    def observe(self, event):
        super().observe(event)
        self._version += 1

    def advance(self, t):
        if self.state is None:
            return
        self._refresh()
        self._cache = (t, self._version, self._compute_end(t))

    # prediction ----------------------------------------------------------------
    def _refresh(self):
        for st in self.state.values():
            v = st.points.version
            if v != st.index_version:
                st.index = PointIndex(st.points.points())
                st.index_version = v
            if st.fit_version != v:
                st.fit = fit_power(st.index)
                st.fit_version = v

    def _combiners(self):
        self._refresh()
        union = PointIndex.union([st.index for st in self.state.values()])
        out = {}
        for i, st in self.state.items():
            others = [(o.index, o.fit) for j, o in self.state.items() if j != i]
            out[i] = Combiner(st.index, st.fit, others, self.config.delta_policy,
                              self.config.r2_threshold, union=union)
        return out

    def _predictor(self, combiner, rate):
        memo = {}

        def predict(x):
            v = memo.get(x)
            if v is None:
                try:
                    step, v = combiner.select(x)
                except NoPrediction:
                    step = STEP_FALLBACK
                    if rate is not None:
                        v = rate * x
                    elif not math.isinf(self.info.shuffle_rate):
                        v = x / self.info.shuffle_rate
                    else:
                        v = math.inf
                self.steps[step] += 1
                memo[x] = v
            return v

        return predict

    def nf_remaining(self, i, combiners=None, rate=None):
        """Predicted remaining time of reduce task ``i`` (explicit plus implicit part)."""
        if self.state is None:
            raise InvalidArgument("reduce phase has not started")
        combiners = combiners or self._combiners()
        if rate is None:
            rate = linear_rate([st.index for st in self.state.values()])
        st = self.state[i]
        predict = self._predictor(combiners[i], rate)
        total = 0.0
        for size, n in Counter(st.sizes).items():
            total += n * predict(size)
        if st.implicit > 0:
            try:
                parts = histogram_partition(self.histogram, st.implicit)
            except EmptyHistogram:
                parts = None
                if self.implicit_prior:
                    parts = histogram_partition({self.implicit_prior: 1}, st.implicit)
            if parts is None:
                self.steps[STEP_FALLBACK] += 1
                total += rate * st.implicit if rate is not None else (
                    st.implicit / self.info.shuffle_rate
                    if not math.isinf(self.info.shuffle_rate) else math.inf)
            else:
                for size, count in parts:
                    total += count * predict(size)
        return total

    def _compute_end(self, t):
        combiners = self._combiners()
        rate = linear_rate([st.index for st in self.state.values()])
        running, unscheduled = {}, []
        for i in self.tasks():
            if i in self.finished:
                continue
            r = self.nf_remaining(i, combiners, rate)
            if math.isinf(r):
                return math.inf
            if i in self.started:
                running[i] = self.last_profile[i] + r
            else:
                unscheduled.append((i, r))
        end, ends = phase_end(running, self.finished, unscheduled, self.info.parallelism, t)
        self.task_ends = ends
        return end

    def nf_task_end(self, i, t):
        """Predicted end of reduce task ``i`` as of time ``t``."""
        if i in self.finished:
            return self.finished[i]
        self.estimated_end(t)
        return self.task_ends[i]

    def estimated_end(self, t):
        if self.state is None:
            return math.inf
        if self._cache is not None and self._cache[:2] == (t, self._version):
            return self._cache[2]
        return self._compute_end(t)

    # space accounting -------------------------------------------------------------
    def map_profile_bytes(self):
        return (self.map_profile_records * MAP_RECORD_BYTES
                + self.map_implicit_records * IMPLICIT_RECORD_BYTES)

    def reduce_profile_bytes(self):
        if self.state is None:
            return 0
        return sum(len(st.points) for st in self.state.values()) * REDUCE_RECORD_BYTES

    def profile_bytes(self):
        return self.map_profile_bytes() + self.reduce_profile_bytes()

    # diagnostics --------------------------------------------------------------------
    def unprocessed_bytes(self):
        """Bytes still attributed to S_i(t) and s_i(t) across tasks."""
        return sum(sum(st.sizes) + st.implicit for st in self.state.values())


def nf_on_reduce_event(indicator: NearestFitIndicator, event):
    indicator.observe(event)
    return indicator


def nf_remaining(indicator: NearestFitIndicator, i):
    return indicator.nf_remaining(i)


def nf_task_end(indicator: NearestFitIndicator, i, t):
    return indicator.nf_task_end(i, t)
