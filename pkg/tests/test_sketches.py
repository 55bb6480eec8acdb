import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from mrprogress.core import InvalidArgument
from mrprogress.sketches import (BurstFilter, EmptyHistogram, SizeHistogram, SmoothedPointSet,
                                 SpaceSavingSketch, apportion, burst_record, histogram_partition,
                                 sketch_heavy, sketch_offer, smooth_insert)


def test_sketch_no_eviction():
    sk = SpaceSavingSketch(2)
    for k, w in (("a", 5), ("b", 3), ("a", 2)):
        sketch_offer(sk, k, w)
    assert (sk.estimate("a"), sk.error("a")) == (7, 0)
    assert (sk.estimate("b"), sk.error("b")) == (3, 0)
    assert sketch_heavy(sk, 1) == [("a", 7)]


def test_sketch_eviction_rule():
    sk = SpaceSavingSketch(1)
    sk.offer("a", 5).offer("b", 3)
    assert "a" not in sk
    assert (sk.estimate("b"), sk.error("b"), sk.guaranteed("b")) == (8, 5, 3)


def test_sketch_heavy_edge_cases():
    sk = SpaceSavingSketch(3)
    assert sketch_heavy(sk, 0) == []
    sk.offer(2, 4).offer(1, 4).offer(3, 9)
    assert sketch_heavy(sk, 3) == [(3, 9), (1, 4), (2, 4)]  # ties by key
    with pytest.raises(InvalidArgument):
        sketch_heavy(sk, 4)
    with pytest.raises(InvalidArgument):
        sk.offer(1, -1)
    with pytest.raises(InvalidArgument):
        SpaceSavingSketch(0)


def _check_bounds(sk, truth):
    W = sk.total_weight
    assert len(sk) <= sk.capacity
    for key, est, err in sk.items():
        assert truth[key] <= est <= truth[key] + W / sk.capacity
        assert est - err <= truth[key]  # the reported error covers any overestimate


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 50)), max_size=400),
       st.integers(1, 16))
def test_sketch_bounds_property(stream, capacity):
    sk = SpaceSavingSketch(capacity)
    truth = Counter()
    for k, w in stream:
        sk.offer(k, w)
        truth[k] += w
    _check_bounds(sk, truth)


def test_sketch_adversarial_survivor_error_covers_overestimate():
    # a long tail of distinct light keys ends with a light key that survives by eviction
    sk = SpaceSavingSketch(4)
    truth = Counter()
    stream = [("h1", 100), ("h2", 90), ("h3", 80)] + [(f"t{i}", 1) for i in range(50)]
    for k, w in stream:
        sk.offer(k, w)
        truth[k] += w
    survivor = "t49"
    assert survivor in sk
    assert sk.estimate(survivor) > truth[survivor]
    assert sk.estimate(survivor) - sk.error(survivor) <= truth[survivor]
    _check_bounds(sk, truth)


def test_smoothing_examples():
    s = SmoothedPointSet(500)
    smooth_insert(s, (10, 100))
    smooth_insert(s, (10, 300))
    assert s.points() == [(10, 200, 2)]
    s = SmoothedPointSet(500).insert(10, 100).insert(10, 900)
    assert len(s) == 2
    s = SmoothedPointSet(500).insert(10, 100).insert(12, 100)
    assert len(s) == 2
    with pytest.raises(InvalidArgument):
        s.insert(-1, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3000)), max_size=200))
def test_smoothing_conserves_time_exactly(points):
    s = SmoothedPointSet(500)
    for size, t in points:
        s.insert(size, t)
    assert s.total_time() == sum(t for _, t in points)
    assert sum(c for *_, c in s.points()) == len(points)


def test_histogram_partition_examples():
    assert histogram_partition({10: 1}, 50) == [(10, 5.0)]
    assert histogram_partition({10: 1, 20: 1}, 60) == [(10, 2.0), (20, 2.0)]
    assert histogram_partition({10: 1}, 0) == []
    with pytest.raises(EmptyHistogram):
        histogram_partition(SizeHistogram(4), 10)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.integers(1, 10 ** 6), st.integers(1, 100), min_size=1, max_size=30),
       st.integers(0, 10 ** 9))
def test_histogram_partition_conserves_bytes(hist, total):
    parts = histogram_partition(hist, total)
    assert abs(sum(s * c for s, c in parts) - total) <= 1
    assert all(c >= 0 for _, c in parts)


def test_size_histogram_is_bounded():
    h = SizeHistogram(8)
    for s in range(100):
        h.add(s % 20)
    assert len(h) <= 8 and h.capacity == 8
    assert all(f >= 0 for _, f in h.buckets())


def test_burst_heavy_is_immediate():
    assert burst_record(BurstFilter(50, 100), [(100, 37)]) == [(100, 37)]


def test_burst_proportional_split():
    f = BurstFilter(50, 100)
    assert burst_record(f, [(10, 25), (30, 15)]) == []
    assert f.flush() == [(10, 10), (30, 30)]


def test_burst_skip_threshold():
    f = BurstFilter(50, 100)
    pts = burst_record(f, [(1, 2)] * 101)
    assert f.deliveries == 1 and len(pts) == 101
    assert sum(p.time for p in pts) == 202


def test_burst_flushes_before_heavy():
    f = BurstFilter(50, 100)
    out = []
    for size, t in [(10, 4), (20, 4), (60, 9)]:
        out.extend(f.offer(size, t))
    assert out == [[(10, 3), (20, 5)], [(60, 9)]]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 120), st.integers(0, 1000)), max_size=500),
       st.integers(1, 100), st.integers(1, 20))
def test_burst_conserves_time_exactly(execs, size_thr, skip_thr):
    f = BurstFilter(size_thr, skip_thr)
    pts = burst_record(f, execs) + f.flush()
    assert sum(p.time for p in pts) == sum(t for _, t in execs)
    assert sorted(p.size for p in pts) == sorted(s for s, _ in execs)


def test_apportion_integral_and_exact():
    rng = random.Random(1)
    for _ in range(200):
        ws = [rng.randint(0, 50) for _ in range(rng.randint(1, 10))]
        total = rng.randint(0, 10 ** 6)
        parts = apportion(total, ws)
        assert sum(parts) == total and all(isinstance(p, int) for p in parts)
