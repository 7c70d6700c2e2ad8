import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bigrf.evaluation import expected_unique, expected_unique_ratio
from bigrf.exceptions import PlanError
from bigrf.resample import (ResamplePlan, blb_weights, bootstrap_standard, derive_rng,
                            partition_chunks, plan_subsamples, plan_tree_inputs, poisson_count,
                            sampling_size, tree_input)


def test_bootstrap_single_row():
    rows = bootstrap_standard(1, seed=5)
    assert rows.indices.tolist() == [0]
    assert rows.weights.tolist() == [1.0]


@given(n=st.integers(1, 500), seed=st.integers(0, 10 ** 6))
@settings(max_examples=50, deadline=None)
def test_bootstrap_sums_to_n(n, seed):
    rows = bootstrap_standard(n, seed)
    assert rows.total_weight == n
    assert np.unique(rows.indices).size == rows.indices.size
    assert np.all(rows.weights > 0)


def test_bootstrap_distinct_fraction():
    n = 10_000
    distinct = np.mean([len(bootstrap_standard(n, s)) for s in range(100)])
    assert distinct == pytest.approx(n * (1 - (1 - 1 / n) ** n), rel=0.01)


@given(m=st.integers(1, 300), extra=st.integers(0, 5000), seed=st.integers(0, 10 ** 6))
@settings(max_examples=50, deadline=None)
def test_blb_weights_sum_exactly(m, extra, seed):
    w = blb_weights(m, m + extra, seed)
    assert w.shape == (m,)
    assert w.sum() == m + extra
    assert np.all(w >= 0)


def test_blb_degenerate_cell():
    assert blb_weights(1, 77, seed=3).tolist() == [77]


def test_blb_matches_throw_counting():
    # numpy's multinomial against the literal n-throw construction: same cell moments
    m, n, reps = 20, 500, 4000
    fast = np.array([blb_weights(m, n, s) for s in range(reps)])
    rng = np.random.default_rng(0)
    slow = np.array([np.bincount(rng.integers(0, m, n), minlength=m) for _ in range(reps)])
    for draws in (fast, slow):
        assert draws.mean() == pytest.approx(n / m, rel=0.01)
        assert draws.var() == pytest.approx(n / m * (1 - 1 / m), rel=0.05)


def test_blb_distinct_cells():
    m, n = 100, 10_000
    nonzero = np.mean([np.count_nonzero(blb_weights(m, n, s)) for s in range(1000)])
    assert nonzero == pytest.approx(m * (1 - ((m - 1) / m) ** n), rel=0.01)


def test_partition_examples():
    assert [len(r) for r in partition_chunks(10, 3)] == [4, 3, 3]
    assert partition_chunks(7, 1) == [range(0, 7)]
    with pytest.raises(PlanError):
        partition_chunks(3, 4)


@given(n=st.integers(1, 1000), data=st.data())
@settings(max_examples=60, deadline=None)
def test_partition_is_contiguous_cover(n, data):
    K = data.draw(st.integers(1, n))
    chunks = partition_chunks(n, K)
    assert len(chunks) == K
    assert [i for r in chunks for i in r] == list(range(n))
    assert {len(r) for r in chunks} <= {n // K, -(-n // K)}


def test_poisson_moments():
    rng = np.random.default_rng(0)
    k = np.array([poisson_count(1.0, rng) for _ in range(200_000)])
    assert k.min() >= 0
    assert k.mean() == pytest.approx(1.0, abs=0.01)
    assert np.mean(k == 0) == pytest.approx(math.exp(-1), abs=0.005)
    with pytest.raises(PlanError):
        poisson_count(0.0, rng)


@pytest.mark.parametrize("kwargs", [
    dict(scheme="bogus", n=10, Q=1),
    dict(scheme="standard", n=0, Q=1),
    dict(scheme="standard", n=10, Q=0),
    dict(scheme="subsample", n=10, Q=1, m=11),
    dict(scheme="moon", n=10, Q=1),
    dict(scheme="blb", n=10, Q=5, m=3, K=2, q=2),
    dict(scheme="dac", n=3, Q=4, K=4, q=1),
    dict(scheme="poisson", n=10, Q=1, lam=0.0),
])
def test_plan_validation(kwargs):
    with pytest.raises(PlanError):
        ResamplePlan(**kwargs)


def test_plan_dict_round_trip():
    plan = ResamplePlan.blb(1000, 4, 3, 50, master_seed=9)
    assert ResamplePlan.from_dict(plan.to_dict()) == plan


def test_standard_trivial_plan():
    [(t, rows)] = plan_tree_inputs(ResamplePlan.standard(1, 1), 1)
    assert t == 0 and rows.indices.tolist() == [0] and rows.weights.tolist() == [1.0]


def test_blb_inputs():
    plan = ResamplePlan.blb(2000, 10, 5, 40, master_seed=1)
    inputs = plan_tree_inputs(plan, 2000)
    assert len(inputs) == 50
    taus = plan_subsamples(plan, 2000)
    for t, rows in inputs:
        assert rows.total_weight == 2000
        assert set(rows.indices) <= set(taus[plan.group_of(t)])


def test_moon_inputs():
    plan = ResamplePlan.moon(1000, 100, 150, master_seed=2)
    for _, rows in plan_tree_inputs(plan, 1000):
        assert len(rows) == 150
        assert np.all(rows.weights == 1.0)


def test_subsample_inputs_share_one_subsample():
    plan = ResamplePlan.subsample(1000, 20, 100, master_seed=2)
    [tau] = plan_subsamples(plan, 1000)
    assert tau.size == 100
    for _, rows in plan_tree_inputs(plan, 1000):
        assert rows.total_weight == 100
        assert set(rows.indices) <= set(tau)


def test_dac_inputs_stay_in_chunk():
    plan = ResamplePlan.dac(1003, 4, 3, master_seed=3)
    chunks = partition_chunks(1003, 4)
    for t, rows in plan_tree_inputs(plan, 1003):
        chunk = chunks[t // 3]
        assert rows.indices.min() >= chunk.start and rows.indices.max() < chunk.stop
        assert rows.total_weight == len(chunk)


def test_tree_inputs_order_independent():
    plan = ResamplePlan.blb(500, 5, 4, 30, master_seed=4)
    everything = dict(plan_tree_inputs(plan, 500))
    for t in reversed(range(plan.Q)):
        assert tree_input(plan, t) == everything[t]


def test_plan_size_mismatch():
    with pytest.raises(PlanError):
        plan_tree_inputs(ResamplePlan.standard(10, 2), 11)


def test_sampling_size():
    assert sampling_size(100_000, f=0.01) == 1000
    assert sampling_size(100_000, f=0.001) == 100
    assert sampling_size(10, m=3) == 3
    for kwargs in (dict(), dict(m=3, f=0.1), dict(f=0.0), dict(m=11)):
        with pytest.raises(PlanError):
            sampling_size(10, **kwargs)


def test_expected_unique_formulas():
    assert expected_unique("blb", 10_000, m=1) == 1
    assert expected_unique("blb", 10_000, m=100) == pytest.approx(100 * (1 - 0.99 ** 10_000))
    assert expected_unique("moon", 10_000, m=100) == 100
    for scheme, kw in [("standard", {}), ("subsample", {"m": 100}), ("dac", {"K": 10})]:
        assert expected_unique_ratio(scheme, 10_000, **kw) == 0.63
    ratios = [expected_unique("standard", n) / n for n in (2, 10, 100, 1000, 10 ** 5)]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(1 - math.exp(-1), abs=1e-5)


def test_derive_rng_keys_are_independent():
    a = derive_rng(5, 1, 2).integers(1 << 30, size=4)
    b = derive_rng(5, 1, 3).integers(1 << 30, size=4)
    c = derive_rng(5, 1, 2).integers(1 << 30, size=4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, c)
