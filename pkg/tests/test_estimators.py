import numpy as np
import pytest
from sklearn.base import clone
from sklearn.utils.estimator_checks import check_estimator

from bigrf import BigRandomForestClassifier, OnlineRandomForestClassifier
from bigrf.ensemble import make_plan
from bigrf.exceptions import PlanError
from bigrf.forest import train
from bigrf.tree import TreeParams


@pytest.mark.parametrize("estimator", [
    BigRandomForestClassifier(n_estimators=5, max_leaf_nodes=10, random_state=0),
    OnlineRandomForestClassifier(n_estimators=5, random_state=0),
], ids=["batch", "online"])
def test_sklearn_conformance(estimator):
    failed = [r["check_name"] for r in check_estimator(estimator, on_fail=None)
              if r["status"] == "failed"]
    assert failed == []


def test_params_round_trip():
    est = BigRandomForestClassifier(variant="blb", n_subsamples=4, sampling_fraction=0.1)
    params = est.get_params()
    assert params["variant"] == "blb" and params["n_subsamples"] == 4
    twin = clone(est)
    assert twin.get_params() == params


def test_string_labels_and_proba(weston_small, weston_test):
    names = np.array(["neg", "pos"])
    y = names[weston_small.labels]
    est = BigRandomForestClassifier(n_estimators=10, max_leaf_nodes=30, oob_score=True,
                                    random_state=1).fit(weston_small.features, y)
    assert est.classes_.tolist() == ["neg", "pos"]
    proba = est.predict_proba(weston_test.features)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    pred = est.predict(weston_test.features)
    assert set(pred) <= {"neg", "pos"}
    assert np.mean(pred != names[weston_test.labels]) < 0.1
    assert 0 <= est.oob_error_ < 0.1 and est.bd_oob_error_ is None
    assert len(est.estimators_) == 10


def test_estimator_matches_functional_api(weston_small):
    est = BigRandomForestClassifier(variant="dac", n_estimators=6, n_subsamples=3,
                                    max_leaf_nodes=20, random_state=4, oob_score=True,
                                    compute_importances=True).fit(weston_small.features,
                                                                  weston_small.labels)
    plan = make_plan("dac", weston_small.n, 6, 3, seed=4)
    forest = train(weston_small, plan, TreeParams(max_leaves=20))
    assert [t.to_bytes() for t in est.forest_.trees] == [t.to_bytes() for t in forest.trees]
    assert est.forest_.inbag == forest.inbag
    assert est.bd_oob_error_ is not None
    assert est.feature_importances_.shape == (7,)


@pytest.mark.parametrize("kwargs", [
    dict(variant="nope"),
    dict(variant="blb", sampling_fraction=0.1),
    dict(variant="dac", n_estimators=7, n_subsamples=3),
    dict(variant="samp"),
])
def test_bad_configurations(weston_small, kwargs):
    with pytest.raises((PlanError, ValueError)):
        BigRandomForestClassifier(**kwargs).fit(weston_small.features, weston_small.labels)


def test_online_partial_fit_matches_fit(weston_small, weston_test):
    X, y = weston_small.features, weston_small.labels
    whole = OnlineRandomForestClassifier(n_estimators=5, random_state=3).fit(X, y)
    parts = OnlineRandomForestClassifier(n_estimators=5, random_state=3)
    for start in range(0, X.shape[0], 500):
        parts.partial_fit(X[start:start + 500], y[start:start + 500], classes=[0, 1])
    np.testing.assert_array_equal(whole.predict(weston_test.features),
                                  parts.predict(weston_test.features))
    assert whole.oob_error_ == parts.oob_error_


def test_online_rejects_unknown_label(weston_small):
    est = OnlineRandomForestClassifier(n_estimators=2, random_state=0)
    est.partial_fit(weston_small.features[:10], weston_small.labels[:10], classes=[0, 1])
    with pytest.raises(ValueError):
        est.partial_fit(weston_small.features[:1], [5])
