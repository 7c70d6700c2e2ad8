import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bigrf.data import Dataset
from bigrf.exceptions import DataError, FormatError
from bigrf.resample import bootstrap_standard
from bigrf.tree import (Tree, TreeParams, WeightedRows, best_split_ert, best_split_exhaustive,
                        default_mtry, grow_tree, predict_tree)

from _oracles import brute_force_split
from conftest import random_dataset

FOUR = Dataset(np.array([[0.1], [0.2], [0.8], [0.9]]), np.array([0, 0, 1, 1]))


def test_four_row_split():
    s = best_split_exhaustive(FOUR, np.arange(4))
    assert s.feature == 0
    assert 0.2 < s.threshold < 0.8
    assert s.impurity_decrease == pytest.approx(0.5)


def test_two_row_split_values():
    ds = Dataset(np.array([[1.0], [2.0]]), np.array([0, 1]))
    s = best_split_exhaustive(ds, np.arange(2), feature_subset=[0])
    assert s.threshold == 1.5
    assert s.impurity_decrease == 0.5


def test_weighted_split_decrease():
    ds = Dataset(np.array([[1.0], [2.0]]), np.array([0, 1]))
    s = best_split_exhaustive(ds, WeightedRows([0, 1], [3.0, 1.0]))
    assert s.impurity_decrease == pytest.approx(1 - (0.75 ** 2 + 0.25 ** 2))


def test_pure_node_has_no_split():
    ds = Dataset(np.arange(6.0).reshape(3, 2), np.array([1, 1, 1]))
    assert best_split_exhaustive(ds, np.arange(3)) is None
    assert best_split_ert(ds, np.arange(3), 5, rng=0) is None


def test_midpoint_rounding_keeps_threshold_below_upper_value():
    a = 1.0
    b = np.nextafter(a, 2.0)
    ds = Dataset(np.array([[a], [b]]), np.array([0, 1]))
    s = best_split_exhaustive(ds, np.arange(2))
    assert a <= s.threshold < b


@given(n=st.integers(2, 60), p=st.integers(1, 4), levels=st.sampled_from([None, 3, 6]),
       n_classes=st.integers(2, 3), seed=st.integers(0, 10 ** 6), weighted=st.booleans())
@settings(max_examples=120, deadline=None)
def test_exhaustive_matches_brute_force(n, p, levels, n_classes, seed, weighted):
    ds = random_dataset(n, p, seed=seed, n_classes=n_classes, levels=levels)
    rows = bootstrap_standard(n, seed) if weighted else WeightedRows.uniform(np.arange(n))
    got = best_split_exhaustive(ds, rows)
    want = brute_force_split(ds.features, ds.labels, rows.indices, rows.weights, range(p), n_classes)
    if want is None:
        assert got is None
    else:
        assert (got.feature, got.threshold, got.impurity_decrease) == want


def test_ert_respects_subset_and_range():
    ds = random_dataset(80, 5, seed=3)
    rows = np.arange(0, 80, 2)
    for seed in range(30):
        s = best_split_ert(ds, rows, 3, rng=seed, feature_subset=[1, 3])
        assert s.feature in (1, 3)
        col = ds.features[rows, s.feature]
        assert col.min() <= s.threshold <= col.max()
        assert s.impurity_decrease > 0


def test_ert_many_candidates_reach_optimum():
    hits = 0
    best = best_split_exhaustive(FOUR, np.arange(4)).impurity_decrease
    for seed in range(200):
        s = best_split_ert(FOUR, np.arange(4), 1000, rng=seed)
        hits += abs(s.impurity_decrease - best) < 1e-9
    assert hits / 200 > 0.99


def test_ert_is_seeded():
    ds = random_dataset(50, 3, seed=1)
    a = best_split_ert(ds, np.arange(50), 4, rng=7)
    b = best_split_ert(ds, np.arange(50), 4, rng=7)
    assert a == b


def test_default_mtry():
    assert [default_mtry(p) for p in (1, 3, 4, 7, 16)] == [1, 1, 2, 2, 4]


def test_params_validation():
    with pytest.raises(DataError):
        TreeParams(split_mode="bogus")
    with pytest.raises(DataError):
        TreeParams(mtry=9).resolved_mtry(7)


def test_pure_root_is_single_leaf():
    ds = Dataset(np.random.default_rng(0).normal(size=(20, 3)), np.ones(20, dtype=int), n_classes=2)
    tree = grow_tree(ds, np.arange(20))
    assert tree.n_nodes == 1
    assert predict_tree(tree, [0, 0, 0]) == 1


def test_four_row_tree():
    tree = grow_tree(FOUR, np.arange(4), TreeParams(mtry=1))
    assert tree.n_leaves == 2
    assert tree.leaf_gini().tolist() == [0.0, 0.0]
    assert tree.predict(FOUR.features).tolist() == [0, 0, 1, 1]


def test_empty_rows_rejected():
    with pytest.raises(DataError):
        grow_tree(FOUR, np.arange(0))


def test_routing_rule():
    tree = Tree(feature=[0, -1, -1], threshold=[1.5, 0, 0], left=[1, -1, -1], right=[2, -1, -1],
                value=[[1, 1], [2, 0], [0, 3]], n_features=2)
    assert predict_tree(tree, [1.0, 9.0]) == 0
    assert predict_tree(tree, [1.5, 9.0]) == 0
    assert predict_tree(tree, [1.6, 9.0]) == 1


def test_leaf_ties_go_to_lowest_class():
    tree = Tree(feature=[-1], threshold=[0], left=[-1], right=[-1], value=[[0, 2, 2]], n_features=1)
    assert predict_tree(tree, [0.0]) == 1


def _check_structure(tree):
    seen = np.zeros(tree.n_nodes, dtype=int)
    stack = [0]
    while stack:
        node = stack.pop()
        seen[node] += 1
        if tree.feature[node] >= 0:
            stack += [tree.left[node], tree.right[node]]
    assert np.all(seen == 1)
    n_split = int(np.sum(tree.feature >= 0))
    assert tree.n_leaves == n_split + 1


@given(n=st.integers(2, 300), max_leaves=st.integers(0, 30), seed=st.integers(0, 10 ** 6),
       mode=st.sampled_from(["exhaustive", "ert"]))
@settings(max_examples=60, deadline=None)
def test_growth_invariants(n, max_leaves, seed, mode):
    ds = random_dataset(n, 3, seed=seed, levels=5)
    rows = bootstrap_standard(n, seed)
    tree = grow_tree(ds, rows, TreeParams(max_leaves=max_leaves, split_mode=mode, n_candidates=3,
                                          seed=seed))
    _check_structure(tree)
    if max_leaves:
        assert tree.n_leaves <= max_leaves
    leaves = tree.feature < 0
    np.testing.assert_allclose(tree.value[leaves].sum(), rows.total_weight)


@given(n=st.integers(2, 150), seed=st.integers(0, 10 ** 6), max_leaves=st.integers(0, 20))
@settings(max_examples=40, deadline=None)
def test_weights_equal_replication(n, seed, max_leaves):
    ds = random_dataset(n, 4, seed=seed, levels=7)
    rows = bootstrap_standard(n, seed + 1)
    reps = np.repeat(rows.indices, rows.weights.astype(int))
    replicated = Dataset(ds.features[reps], ds.labels[reps], n_classes=2)
    params = TreeParams(max_leaves=max_leaves, seed=seed)
    a = grow_tree(ds, rows, params)
    b = grow_tree(replicated, np.arange(reps.size), params)
    assert a.to_bytes() == b.to_bytes()


def test_deterministic_and_seed_sensitive(weston_small):
    rows = bootstrap_standard(weston_small.n, 3)
    a = grow_tree(weston_small, rows, TreeParams(max_leaves=50, seed=1))
    b = grow_tree(weston_small, rows, TreeParams(max_leaves=50, seed=1))
    c = grow_tree(weston_small, rows, TreeParams(max_leaves=50, seed=2))
    assert a.to_bytes() == b.to_bytes()
    assert a.to_bytes() != c.to_bytes()


def test_leaf_budget_reached(weston_small):
    tree = grow_tree(weston_small, np.arange(weston_small.n), TreeParams(max_leaves=40))
    assert tree.n_leaves == 40


def test_unlimited_tree_fits_pure_leaves(weston_small):
    rows = np.arange(500)
    tree = grow_tree(weston_small, rows, TreeParams(min_node_weight=1))
    pred = tree.predict(weston_small.features[rows])
    leaf = tree.apply(weston_small.features[rows])
    pure = np.count_nonzero(tree.value[leaf], axis=1) == 1
    assert np.all(pred[pure] == weston_small.labels[rows][pure])


def test_serialization_round_trip(weston_small):
    tree = grow_tree(weston_small, np.arange(300), TreeParams(max_leaves=20, seed=4))
    blob = tree.to_bytes()
    assert blob[:4] == b"BRFT"
    back = Tree.from_bytes(blob)
    assert back == tree
    np.testing.assert_array_equal(back.predict(weston_small.features), tree.predict(weston_small.features))
    with pytest.raises(FormatError):
        Tree.from_bytes(blob[:-1])
    with pytest.raises(FormatError):
        Tree.from_bytes(b"XXXX" + blob[4:])
    bad_version = blob[:4] + (99).to_bytes(2, "little") + blob[6:]
    with pytest.raises(FormatError):
        Tree.from_bytes(bad_version)


def test_text_dump(weston_small):
    tree = grow_tree(weston_small, np.arange(300), TreeParams(max_leaves=3, seed=4))
    text = tree.dump_text(weston_small.column_names)
    assert text.count("leaf") == 3
    assert "<=" in text
