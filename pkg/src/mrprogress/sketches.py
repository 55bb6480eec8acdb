"""Bounded-memory profile structures used by the NearestFit master and trackers."""

from __future__ import annotations

import heapq
from collections import namedtuple

from .core import InvalidArgument

ProfilePoint = namedtuple("ProfilePoint", ["size", "time"])

# Bytes charged per sketch / profile record when accounting for space overhead.
KEY_BYTES = 8
SIZE_BYTES = 8
TIME_BYTES = 8
COUNT_BYTES = 8


class SpaceSavingSketch:
    """Weighted Space Saving over a stream of (key, weight) offers.

    Every tracked key satisfies ``true <= estimate <= true + W / capacity``;
    ``estimate - error`` is a guaranteed lower bound on the true weight.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise InvalidArgument(f"sketch capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.entries = {}  # key -> [estimate, error]
        self.total_weight = 0
        # min-heap of (estimate at push time, key); stale entries are lower bounds
        self._heap = []

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return key in self.entries

    def offer(self, key, weight=1):
        if weight < 0:
            raise InvalidArgument(f"sketch weight must be >= 0, got {weight}")
        self.total_weight += weight
        entry = self.entries.get(key)
        if entry is not None:
            entry[0] += weight
            return self
        if len(self.entries) < self.capacity:
            self.entries[key] = [weight, 0]
            heapq.heappush(self._heap, (weight, key))
            return self
        victim, floor = self._pop_min()
        del self.entries[victim]
        self.entries[key] = [floor + weight, floor]
        heapq.heappush(self._heap, (floor + weight, key))
        return self

    def _pop_min(self):
        heap = self._heap
        while True:
            est, key = heapq.heappop(heap)
            entry = self.entries.get(key)
            if entry is None:
                continue
            if entry[0] == est:
                return key, est
            heapq.heappush(heap, (entry[0], key))

    def estimate(self, key):
        entry = self.entries.get(key)
        return entry[0] if entry else 0

    def error(self, key):
        entry = self.entries.get(key)
        return entry[1] if entry else 0

    def guaranteed(self, key):
        entry = self.entries.get(key)
        return entry[0] - entry[1] if entry else 0

    def heavy(self, k):
        return sketch_heavy(self, k)

    def items(self):
        return [(key, e[0], e[1]) for key, e in self.entries.items()]

    def profile_bytes(self):
        return len(self.entries) * (KEY_BYTES + 2 * COUNT_BYTES)


def sketch_offer(sketch: SpaceSavingSketch, key, weight) -> SpaceSavingSketch:
    return sketch.offer(key, weight)


def sketch_heavy(sketch: SpaceSavingSketch, k: int):
    """Top-k (key, estimate) pairs, heaviest first, ties by key ascending."""
    if k > sketch.capacity:
        raise InvalidArgument(f"k={k} exceeds sketch capacity {sketch.capacity}")
    if k <= 0:
        return []
    ranked = sorted(sketch.entries.items(), key=lambda kv: (-kv[1][0], kv[0]))
    return [(key, e[0]) for key, e in ranked[:k]]


class SmoothedPointSet:
    """Profile points where equal-size executions with close times are merged.

    Each retained point keeps the exact running total and count, so the sum
    of times is conserved.
    """

    def __init__(self, window_ms=500.0):
        self.window_ms = window_ms
        self._by_size = {}  # size -> list of [total, count]
        self.version = 0
        self.inserted = 0

    def __len__(self):
        return sum(len(v) for v in self._by_size.values())

    def insert(self, size, time, count=1):
        if size < 0 or time < 0:
            raise InvalidArgument("profile points need non-negative size and time")
        self.inserted += count
        self.version += 1
        clusters = self._by_size.setdefault(size, [])
        mean = time / count
        best = None
        best_gap = None
        for c in clusters:
            gap = abs(mean - c[0] / c[1])
            if gap <= self.window_ms and (best_gap is None or gap < best_gap):
                best, best_gap = c, gap
        if best is None:
            clusters.append([time, count])
        else:
            best[0] += time
            best[1] += count
        return self

    def points(self):
        """(size, mean time, count) triples sorted by size."""
        out = []
        for size in sorted(self._by_size):
            for total, count in self._by_size[size]:
                out.append((size, total / count, count))
        return out

    def total_time(self):
        return sum(c[0] for cl in self._by_size.values() for c in cl)

    def record_count(self):
        return len(self)


def smooth_insert(points: SmoothedPointSet, point) -> SmoothedPointSet:
    size, time = point
    return points.insert(size, time)


class SizeHistogram:
    """Frequencies of the most common key-group sizes, bounded like Space Saving."""

    def __init__(self, capacity=1024):
        self._sketch = SpaceSavingSketch(capacity)

    @property
    def capacity(self):
        return self._sketch.capacity

    def add(self, size, count=1):
        self._sketch.offer(size, count)
        return self

    def buckets(self):
        return sorted((size, est) for size, est, _ in self._sketch.items())

    def __len__(self):
        return len(self._sketch)

    def __bool__(self):
        return len(self._sketch) > 0


class EmptyHistogram(LookupError):
    """No size distribution to partition against; the caller needs a global model."""


def histogram_partition(hist, total_bytes):
    """Split ``total_bytes`` over histogram buckets proportionally to size x frequency.

    ``hist`` is a SizeHistogram or a {size: frequency} mapping. Returns
    (size, fractional count) pairs whose byte mass sums to ``total_bytes``.
    """
    if total_bytes <= 0:
        return []
    buckets = hist.buckets() if isinstance(hist, SizeHistogram) else sorted(hist.items())
    buckets = [(s, f) for s, f in buckets if f > 0]
    mass = sum(s * f for s, f in buckets)
    if not buckets or mass <= 0:
        raise EmptyHistogram("cannot partition bytes over an empty size histogram")
    out = []
    for size, freq in buckets:
        if size <= 0:
            continue
        allocated = total_bytes * (size * freq) / mass
        out.append((size, allocated / size))
    return out


def apportion(total, weights):
    """Split ``total`` proportionally to ``weights``; integers stay integral and sum exactly."""
    n = len(weights)
    if n == 0:
        return []
    wsum = sum(weights)
    if wsum <= 0:
        weights = [1] * n
        wsum = n
    if not isinstance(total, int):
        return [total * w / wsum for w in weights]
    raw = [total * w / wsum for w in weights]
    base = [int(r) for r in raw]
    rest = total - sum(base)
    order = sorted(range(n), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


class BurstFilter:
    """Groups cheap reduce executions into bursts timed as a whole.

    An execution larger than the size threshold is measured on its own
    (pending executions are flushed first, at its start). Otherwise it is
    buffered; once more than ``skip_threshold`` executions are pending the
    burst is delivered and its cumulative time is split by input size.
    """

    def __init__(self, size_threshold=50, skip_threshold=100):
        self.size_threshold = size_threshold
        self.skip_threshold = skip_threshold
        self.pending = []  # (size, elapsed)
        self.deliveries = 0

    def is_heavy(self, size):
        return size > self.size_threshold

    def flush(self):
        if not self.pending:
            return []
        sizes = [s for s, _ in self.pending]
        total = sum(e for _, e in self.pending)
        times = apportion(total, sizes)
        self.pending = []
        self.deliveries += 1
        return [ProfilePoint(s, t) for s, t in zip(sizes, times)]

    def offer(self, size, elapsed):
        """Record one execution; returns the list of bursts it caused to be delivered."""
        if size < 0:
            raise InvalidArgument("execution size must be >= 0")
        out = []
        if self.is_heavy(size):
            before = self.flush()
            if before:
                out.append(before)
            self.deliveries += 1
            out.append([ProfilePoint(size, elapsed)])
            return out
        self.pending.append((size, elapsed))
        if len(self.pending) > self.skip_threshold:
            out.append(self.flush())
        return out


def burst_record(filt: BurstFilter, executions):
    """Feed (size, elapsed) executions through ``filt``; returns the delivered points."""
    points = []
    for size, elapsed in executions:
        for burst in filt.offer(size, elapsed):
            points.extend(burst)
    return points
