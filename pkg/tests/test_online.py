import math

import numpy as np
import pytest

from bigrf.data import SimulationSpec, simulate_weston
from bigrf.exceptions import DataError, FormatError
from bigrf.online import (OnlineForest, OnlineForestParams, onrf_init, onrf_oob_estimate,
                          onrf_predict, onrf_update)
from bigrf.resample import derive_rng

RANGES7 = np.tile([-6.0, 6.0], (7, 1))


def _state(forest):
    return {name: getattr(forest, name).copy() for name in OnlineForest._ARRAYS}


def _same_state(a, b):
    sa, sb = _state(a), _state(b)
    return all(np.array_equal(sa[k], sb[k]) for k in sa)


@pytest.fixture(scope="module")
def stream():
    return simulate_weston(SimulationSpec(3000, seed=21))


def test_init_single_root():
    f = onrf_init(OnlineForestParams(n_trees=1, n_candidates=1), [[0.0, 1.0]])
    assert f.n_nodes.tolist() == [1]
    assert f.cand_f.shape[2] == 1
    assert 0.0 <= f.cand_t[0, 0, 0] <= 1.0


def test_init_thresholds_in_ranges():
    ranges = np.array([[-1.0, 1.0], [10.0, 20.0], [0.0, 0.5]])
    f = onrf_init(OnlineForestParams(n_trees=5, n_candidates=40), ranges)
    for t in range(5):
        feats = f.cand_f[t, 0]
        thr = f.cand_t[t, 0]
        assert np.all(thr >= ranges[feats, 0]) and np.all(thr <= ranges[feats, 1])


def test_init_is_seeded(tmp_path):
    a = onrf_init(OnlineForestParams(seed=4), RANGES7)
    b = onrf_init(OnlineForestParams(seed=4), RANGES7)
    c = onrf_init(OnlineForestParams(seed=5), RANGES7)
    assert _same_state(a, b)
    assert not _same_state(a, c)


@pytest.mark.parametrize("ranges", [[[1.0, 1.0]], [[0.0, np.inf]], [0.0, 1.0]])
def test_init_rejects_bad_ranges(ranges):
    with pytest.raises(DataError):
        onrf_init(OnlineForestParams(), ranges)


@pytest.mark.parametrize("kwargs", [dict(n_trees=0), dict(n_candidates=0), dict(lam=0.0),
                                    dict(alpha=1.0), dict(beta=-0.1), dict(two_stream=1.0)])
def test_params_validation(kwargs):
    with pytest.raises(DataError):
        OnlineForestParams(**kwargs)


def test_zero_k_leaves_tree_unchanged(stream):
    f = onrf_init(OnlineForestParams(n_trees=3, alpha=5), RANGES7)
    for i in range(200):
        f.update(stream.features[i], stream.labels[i], ks=[1, 1, 1])
    before = _state(f)
    f.update(stream.features[200], stream.labels[200], ks=[0, 2, 1])
    after = _state(f)
    for name in ("est", "sw", "cand_c"):
        np.testing.assert_array_equal(before[name][0], after[name][0])
        assert not np.array_equal(before[name][1], after[name][1])


def test_constant_stream_never_splits():
    f = onrf_init(OnlineForestParams(n_trees=4, alpha=2, beta=0.0), [[-6.0, 6.0]])
    for _ in range(500):
        onrf_update(f, [0.5], 1)
    assert f.n_nodes.tolist() == [1] * 4


def test_separable_two_point_stream():
    f = onrf_init(OnlineForestParams(n_trees=10, n_candidates=50, alpha=10, beta=0.0), [[-6.0, 6.0]])
    for i in range(1000):
        if i % 2:
            onrf_update(f, [3.0], 1)
        else:
            onrf_update(f, [-3.0], 0)
    for t in range(10):
        assert f.feat[t, 0] == 0 and -3.0 <= f.thr[t, 0] < 3.0
    assert onrf_predict(f, [-3.0]) == 0
    assert onrf_predict(f, [3.0]) == 1


def test_fresh_forest_predicts_lowest_class():
    f = onrf_init(OnlineForestParams(n_classes=3), RANGES7)
    assert onrf_predict(f, np.zeros(7)) == 0


def test_majority_vote_matches_recount(stream):
    f = onrf_init(OnlineForestParams(n_trees=7, alpha=20), RANGES7)
    f.partial_fit(stream.features[:1000], stream.labels[:1000])
    X = stream.features[1000:1300]
    votes = f.predict_votes(X)
    recount = np.zeros_like(votes)
    for t in range(7):
        for i, x in enumerate(X):
            node = 0
            while f.feat[t, node] >= 0:
                node = f.left[t, node] if x[f.feat[t, node]] <= f.thr[t, node] else f.right[t, node]
            recount[i, int(np.argmax(f.est[t, node]))] += 1
    np.testing.assert_array_equal(votes, recount)
    np.testing.assert_array_equal(f.predict(X), np.argmax(recount, axis=1))


def test_oob_unavailable_when_every_tree_sees_the_row(stream):
    f = onrf_init(OnlineForestParams(n_trees=2), RANGES7)
    for i in range(50):
        f.update(stream.features[i], stream.labels[i], ks=[1, 2])
    est = onrf_oob_estimate(f)
    assert not est.available and est.rate is None


def test_oob_single_wrong_arrival():
    f = onrf_init(OnlineForestParams(n_trees=1), [[0.0, 1.0]])
    f.update([0.5], 1, ks=[0])  # empty tree predicts class 0
    assert onrf_oob_estimate(f).rate == 1.0


def test_candidate_counts_stay_consistent(stream):
    f = onrf_init(OnlineForestParams(n_trees=5, alpha=30, max_depth=4, seed=2), RANGES7)
    for i in range(1500):
        f.update(stream.features[i], stream.labels[i])
        if i % 300 == 0:
            assert f.check_consistency()
    assert f.check_consistency()
    assert f.tree_depths().max() <= 4
    assert f.n_leaves() > 5


def test_committed_splits_never_change(stream):
    f = onrf_init(OnlineForestParams(n_trees=4, alpha=20, seed=3), RANGES7)
    f.partial_fit(stream.features[:800], stream.labels[:800])
    n = f.n_nodes.copy()
    snap = {t: (f.feat[t, :n[t]].copy(), f.thr[t, :n[t]].copy()) for t in range(4)}
    f.partial_fit(stream.features[800:1600], stream.labels[800:1600])
    for t in range(4):
        internal = snap[t][0] >= 0
        np.testing.assert_array_equal(f.feat[t, :n[t]][internal], snap[t][0][internal])
        np.testing.assert_array_equal(f.thr[t, :n[t]][internal], snap[t][1][internal])


def test_poisson_zero_fraction(stream):
    f = onrf_init(OnlineForestParams(n_trees=25, alpha=50, max_depth=3), RANGES7)
    f.partial_fit(stream.features, stream.labels)
    assert f.poisson_zero_fraction == pytest.approx(math.exp(-1), abs=0.01)


def test_two_stream_splits_ignore_estimation_labels(stream):
    params = OnlineForestParams(n_trees=1, alpha=20, two_stream=0.5, seed=6)
    routing = derive_rng(6, 21)
    structure = np.array([routing.random(1)[0] < 0.5 for _ in range(2000)])
    y = stream.labels[:2000].copy()
    noisy = y.copy()
    noisy[~structure] = np.random.default_rng(0).integers(0, 2, size=(~structure).sum())
    a = onrf_init(params, RANGES7).partial_fit(stream.features[:2000], y)
    b = onrf_init(params, RANGES7).partial_fit(stream.features[:2000], noisy)
    assert a.n_nodes[0] > 1
    np.testing.assert_array_equal(a.feat, b.feat)
    np.testing.assert_array_equal(a.thr, b.thr)
    # leaf estimation counts come only from the estimation stream (children start from the
    # parent's candidate counts, so older observations are not carried down)
    leaves = a.feat[0, :a.n_nodes[0]] < 0
    assert 0 < a.est[0, :a.n_nodes[0]][leaves].sum() <= (~structure).sum()
    assert not np.array_equal(a.est, b.est)
    assert not onrf_oob_estimate(a).available


def test_checkpoint_resume_is_seamless(tmp_path, stream):
    params = OnlineForestParams(n_trees=6, alpha=25, seed=9)
    whole = onrf_init(params, RANGES7).partial_fit(stream.features[:1200], stream.labels[:1200])
    part = onrf_init(params, RANGES7).partial_fit(stream.features[:600], stream.labels[:600])
    path = tmp_path / "ck.npz"
    part.checkpoint(path)
    resumed = OnlineForest.load(path).partial_fit(stream.features[600:1200], stream.labels[600:1200])
    assert _same_state(whole, resumed)
    assert whole.oob_estimate() == resumed.oob_estimate()
    np.testing.assert_array_equal(whole.predict(stream.features[1200:]),
                                  resumed.predict(stream.features[1200:]))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, meta=np.frombuffer(b'{"version": 99}', dtype=np.uint8))
    with pytest.raises(FormatError):
        OnlineForest.load(path)


def test_update_validates_input():
    f = onrf_init(OnlineForestParams(), RANGES7)
    with pytest.raises(DataError):
        f.update(np.zeros(3), 0)
    with pytest.raises(DataError):
        f.update(np.zeros(7), 2)
