import pytest
from hypothesis import given, strategies as st

from mrprogress.core import (ClusterSpec, CostModel, DeltaPolicy, InvalidArgument, KeyGroup,
                             NearestFitConfig, eval_cost, hash_key)


def test_hash_key_is_deterministic():
    assert hash_key(b"alpha") == hash_key(b"alpha")
    assert hash_key("alpha") == hash_key(b"alpha")


def test_hash_key_pinned_value():
    # changing the digest or its personalisation would silently change every trace
    assert hash_key(b"alpha") == 0x74C1C773DB719AA0


def test_hash_key_no_collision_on_all_single_bytes():
    ids = {hash_key(bytes([b])) for b in range(256)}
    assert len(ids) == 256


def test_hash_key_collision_count_on_short_key_corpus():
    keys = [f"key-{i}".encode() for i in range(100_000)]
    collisions = len(keys) - len({hash_key(k) for k in keys})
    print(f"hash_key collisions on {len(keys)} keys: {collisions}")
    assert collisions == 0


def test_hash_key_rejects_empty():
    with pytest.raises(InvalidArgument):
        hash_key(b"")
    with pytest.raises(InvalidArgument):
        hash_key("")


@pytest.mark.parametrize("model,size,factors,expected", [
    (CostModel.polynomial(1.0, 1), 100, None, 100.0),
    (CostModel.polynomial(0.01, 2), 100, None, 100.0),
    (CostModel.product(1.0), 7, (3, 4), 12.0),
])
def test_eval_cost_examples(model, size, factors, expected):
    assert eval_cost(model, size, 0, factors) == pytest.approx(expected)


def test_eval_cost_table_interpolates():
    m = CostModel.lookup([(0, 0), (10, 100), (20, 400)])
    assert eval_cost(m, 5) == 50
    assert eval_cost(m, 15) == 250
    assert eval_cost(m, 30) == 400


def test_eval_cost_rejects_negative_size():
    with pytest.raises(InvalidArgument):
        eval_cost(CostModel.polynomial(1, 1), -1)


def test_noise_is_seeded_and_bounded():
    m = CostModel.polynomial(1.0, 1, noise=0.2)
    vals = [eval_cost(m, 100, s) for s in range(200)]
    assert vals == [eval_cost(m, 100, s) for s in range(200)]
    assert all(80 <= v <= 120 for v in vals)
    assert len(set(vals)) > 100


@given(st.floats(0, 5), st.floats(0, 10), st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
def test_noise_free_cost_is_monotone_and_pure(exp, coeff, s1, s2):
    m = CostModel.polynomial(coeff, exp)
    lo, hi = sorted((s1, s2))
    assert eval_cost(m, lo, 1) <= eval_cost(m, hi, 2)
    assert eval_cost(m, s1, 5) == eval_cost(m, s1, 9)
    assert eval_cost(m, s1) >= 0


@pytest.mark.parametrize("kwargs", [
    {"kind": "cubic"}, {"noise": 1.0}, {"noise": -0.1}, {"exponent": -1}, {"coefficient": -2},
])
def test_cost_model_validation(kwargs):
    with pytest.raises(InvalidArgument):
        CostModel(**kwargs)


def test_cost_model_round_trips_through_dict():
    for m in (CostModel.polynomial(0.5, 2, 0.1), CostModel.lookup([(1, 2), (3, 4)])):
        assert CostModel.from_dict(m.to_dict()) == m


def test_key_group_rejects_negative_size():
    with pytest.raises(InvalidArgument):
        KeyGroup(1, -1)


def test_cluster_parallelism():
    assert ClusterSpec(3, 2).parallelism == 6


def test_delta_policy():
    p = DeltaPolicy()
    assert p.delta(10) == 64
    assert p.delta(10_000) == 500
    with pytest.raises(InvalidArgument):
        DeltaPolicy(0, 0)


def test_nearestfit_config_defaults_and_validation():
    c = NearestFitConfig()
    assert c.lam == 2000 and c.sketch_capacity == 70_000
    assert c.r2_threshold == 0.9 and c.smoothing_window_ms == 500
    assert c.burst_size_threshold_bytes == 50 and c.burst_skip_threshold == 100
    assert NearestFitConfig(lam=None).sketch_capacity is None
    assert NearestFitConfig(master_sketch_capacity=10).sketch_capacity == 10
    for bad in ({"lam": 0}, {"r2_threshold": 0}, {"r2_threshold": 1.5}, {"ewma_alpha": 0},
                {"smoothing_window_ms": 0}):
        with pytest.raises(InvalidArgument):
            NearestFitConfig(**bad)
