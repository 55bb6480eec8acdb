import math

import pytest
from hypothesis import given, settings, strategies as st

from conftest import keyed, small_trace
from mrprogress.core import ClusterSpec, CostModel, IntermediateKey, InvalidArgument, KeyGroup
from mrprogress.indicators import OptimalIndicator
from mrprogress.simulator import (MapTaskFinished, ReduceProfile, ReduceTaskFinished,
                                  ReduceTaskStarted, build_job, greedy_schedule, load_trace,
                                  partition_keys, prediction_times, replay_with_indicators,
                                  run_job, save_trace, write_event_log)
from mrprogress.workloads import SkewSpec, gen_sigma_skew, spread_round_robin


def test_partition_single_task():
    keys = [KeyGroup(k, 1) for k in (5, 9, 13)]
    assert partition_keys(keys, 1) == [[5, 9, 13]]


def test_partition_hash_mod_rule():
    keys = [KeyGroup(k, 1) for k in (2, 3, 4)]
    assert partition_keys(keys, 2, "hash") == [[2, 4], [3]]


@pytest.mark.parametrize("strategy", ["hash", "random", "optimal", "unbalanced"])
def test_partition_is_a_partition(strategy):
    keys = [KeyGroup(k * 7919 + 1, (k % 13) + 1) for k in range(200)]
    parts = partition_keys(keys, 5, strategy, seed=3)
    flat = [k for p in parts for k in p]
    assert sorted(flat) == sorted(g.key for g in keys)
    assert len(parts) == 5


def test_partition_rejects_zero_tasks():
    with pytest.raises(InvalidArgument):
        partition_keys([KeyGroup(1, 1)], 0)


def test_unbalanced_partition_pins_costliest():
    keys = [KeyGroup(k, k) for k in range(1, 28)]  # 27 keys: round(27**(2/3)) = 9 pinned
    parts = partition_keys(keys, 3, "unbalanced")
    assert sorted(parts[0]) == list(range(19, 28))


def test_two_keys_linear_cost_phase_length():
    tr = small_trace([10, 10], coeff=1.0, exponent=1)
    assert tr.job_end - tr.t_start == 20


def test_two_tasks_one_slot_run_in_waves():
    keys = [IntermediateKey(2, (10,)), IntermediateKey(3, (30,))]
    spec = build_job(keys, reduce_cost=CostModel.polynomial(1, 1), reducers=2)
    tr = run_job(spec, ClusterSpec(1, 1), burst=None)
    first, second = sorted(tr.reduce_timelines, key=lambda tl: tl.start)
    assert second.start == first.end
    assert tr.job_end == tr.t_start + 40


def test_sigma_workload_quadratic_phase_length():
    groups = gen_sigma_skew(SkewSpec(2, 8))
    keys = spread_round_robin(groups, 1)
    spec = build_job(keys, reduce_cost=CostModel.polynomial(3.0, 2))
    tr = run_job(spec, ClusterSpec(1, 1))
    expected = sum(3 * g.size_bytes ** 2 for g in groups)
    assert expected == 3 * (64 + 2 * 16 + 4 * 4 + 8 * 1)
    assert tr.job_end - tr.t_start == expected


def test_shuffle_delay_and_map_phase():
    keys = keyed([100, 200])
    spec = build_job(keys, reduce_cost=CostModel.polynomial(1, 1), shuffle_rate=10.0,
                     pairs_per_split=50, bytes_per_pair=100)
    tr = run_job(spec, ClusterSpec(1, 1))
    assert tr.map_end == 50  # 50 pairs at 0.01 ms/byte * 100 bytes
    assert tr.t_start == 50 + 30
    assert tr.job_end == tr.t_start + 300


def test_zero_slots_rejected():
    spec = build_job(keyed([1]))
    with pytest.raises(InvalidArgument):
        run_job(spec, ClusterSpec(0, 1))


def test_greedy_schedule_fifo():
    assert greedy_schedule([5, 3, 2], 2) == [(0, 0, 5), (1, 0, 3), (1, 3, 5)]
    assert greedy_schedule([4], 2, 10, busy_until=(20, 12)) == [(1, 12, 16)]


def _random_trace(seed, reducers, workers, slots):
    sizes = [((i * 37 + seed) % 90) + 1 for i in range(60)]
    keys = [IntermediateKey(1000 + i, (s, s // 2)) for i, s in enumerate(sizes)]
    spec = build_job(keys, reduce_cost=CostModel.polynomial(0.5, 1.5, noise=0.1),
                     reducers=reducers, shuffle_rate=5.0)
    return run_job(spec, ClusterSpec(workers, slots), seed)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 50), st.integers(1, 6), st.integers(1, 3), st.integers(1, 2))
def test_trace_invariants(seed, reducers, workers, slots):
    tr = _random_trace(seed, reducers, workers, slots)
    P = workers * slots
    # slot conservation: at every start instant, running tasks <= parallelism
    for tls in (tr.map_timelines, tr.reduce_timelines):
        for probe in {tl.start for tl in tls}:
            running = sum(1 for tl in tls if tl.start <= probe < tl.end)
            assert running <= P
    assert max(tl.end for tl in tr.map_timelines) <= tr.t_start
    assert tr.job_end == max(tl.end for tl in tr.reduce_timelines)
    for tl in tr.reduce_timelines:
        assert tl.start >= tr.t_start
        clock = tl.start
        for f in tl.functions:
            assert f.start == clock and f.end >= f.start
            clock = f.end
        assert clock == tl.end
        assert sum(f.end - f.start for f in tl.functions) == tl.end - tl.start
        assert [f.key for f in tl.functions] == sorted(f.key for f in tl.functions)
    # event stream: time ordered, per-task profile stamps strictly increasing
    ts = [e.t for e in tr.events]
    assert ts == sorted(ts)
    last = {}
    for e in tr.events:
        if isinstance(e, ReduceProfile):
            assert e.t > last.get(e.task, -1)
            last[e.task] = e.t


def test_profiles_cover_every_function():
    tr = _random_trace(3, 3, 2, 1)
    delivered = {}
    for e in tr.events:
        if isinstance(e, ReduceProfile):
            delivered.setdefault(e.task, []).extend(e.points)
    for tl in tr.reduce_timelines:
        pts = delivered.get(tl.task_id, [])
        assert sum(p.size for p in pts) == tl.input_bytes
        assert sum(p.time for p in pts) == tl.end - tl.start


def test_event_order_for_reduce_task():
    tr = small_trace([100, 100, 100], burst=(50, 100))
    kinds = [type(e) for e in tr.events if not isinstance(e, MapTaskFinished)][1:]
    assert kinds[0] is ReduceTaskStarted and kinds[-1] is ReduceTaskFinished


def test_trace_determinism_byte_exact(tmp_path):
    a, b = _random_trace(11, 3, 2, 1), _random_trace(11, 3, 2, 1)
    write_event_log(a, tmp_path / "a.csv")
    write_event_log(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.events == b.events


def test_trace_save_and_load(tmp_path):
    tr = _random_trace(5, 2, 1, 2)
    save_trace(tr, tmp_path / "t.json")
    back = load_trace(tmp_path / "t.json")
    assert back.events == tr.events and back.job_end == tr.job_end
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(InvalidArgument):
        load_trace(tmp_path / "x.json")


def test_prediction_times_inside_reduce_phase():
    tr = small_trace([50] * 10, coeff=10)
    times = prediction_times(tr, 100)
    assert times[0] == tr.t_start + 100 and times[-1] < tr.job_end
    assert len(prediction_times(tr, points=50)) == 49
    with pytest.raises(InvalidArgument):
        prediction_times(tr)


def test_replay_optimal_indicator_is_exact():
    tr = _random_trace(2, 4, 2, 1)
    series = replay_with_indicators(tr, [OptimalIndicator()], 7)["optimal"]
    for t, p, _ in series:
        assert p == (t - tr.t_start) / (tr.job_end - tr.t_start) * 100
    ind = OptimalIndicator()
    replay_with_indicators(tr, [ind], points=10)
    assert ind.progress_at(tr.t_start) == 0
    assert ind.progress_at(tr.job_end) == 100


class _Spy(OptimalIndicator):
    name = "spy"

    def reset(self, info):
        super().reset(info)
        self.latest = -math.inf
        self.violations = 0

    def observe(self, event):
        self.latest = max(self.latest, event.t)
        super().observe(event)

    def estimated_end(self, t):
        if self.latest > t:
            self.violations += 1
        return super().estimated_end(t)


def test_replay_never_shows_future_events():
    tr = _random_trace(8, 3, 1, 1)
    spy = _Spy()
    replay_with_indicators(tr, [spy], 13)
    assert spy.violations == 0
