"""OOB error, its cheap big-data approximations, test error and permutation importance."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _tree_kernels as K
from .exceptions import PlanError, UnavailableError
from .resample import derive_rng

__all__ = [
    "OOBEstimate",
    "VariableImportance",
    "EvalReport",
    "err_forest",
    "bd_err_samp_dac",
    "bd_err_blb",
    "bd_err_moon",
    "bd_err_forest",
    "err_test",
    "variable_importance",
    "expected_unique",
    "mean_leaf_gini",
    "evaluate",
]

_VI_STAGE = 11


@dataclass(frozen=True)
class OOBEstimate:
    """A misclassification rate together with how it was obtained.

    ``rate`` is None when no observation could be evaluated; ``float()`` on
    such an estimate raises :class:`UnavailableError`.
    """

    rate: float
    n_evaluated: int
    n_excluded: int = 0
    n_predictions: int = 0

    @property
    def available(self):
        return self.rate is not None

    def __float__(self):
        if self.rate is None:
            raise UnavailableError("no out-of-bag observation available")
        return float(self.rate)


def _majority_error(votes, y):
    evaluated = votes.sum(axis=1) > 0
    n_eval = int(evaluated.sum())
    if n_eval == 0:
        return None, 0, 0
    wrong = int(np.count_nonzero(np.argmax(votes[evaluated], axis=1) != y[evaluated]))
    return wrong, n_eval, int((~evaluated).sum())


def _oob_rows(rows, inbag):
    """Entries of ``rows`` that are not in the tree's inbag multiset (positions into rows)."""
    return np.flatnonzero(~np.isin(rows, inbag.indices))


def _vote_oob(forest, X, tree_ids, rows, votes):
    """Add OOB votes of ``tree_ids`` for ``rows``; ``votes`` is indexed by position in rows."""
    made = 0
    for t in tree_ids:
        tree = forest.trees[t]
        pos = _oob_rows(rows, forest.inbag[t])
        if pos.size == 0:
            continue
        leaves = K.apply_rows(tree.feature, tree.threshold, tree.left, tree.right, X, rows[pos])
        K.add_votes(votes, pos, tree.prediction[leaves])
        made += pos.size
    return made


def _check_ds(forest, ds):
    if ds.n != forest.n_train or ds.p != forest.n_features:
        raise PlanError(
            "forest was trained on n={} p={} but got n={} p={}".format(
                forest.n_train, forest.n_features, ds.n, ds.p))


def err_forest(forest, ds):
    """Standard OOB error: each row is voted on by the trees it is out-of-bag for.

    Rows that are in-bag for every tree are left out of numerator and
    denominator; their count is ``n_excluded``.
    """
    _check_ds(forest, ds)
    rows = np.arange(ds.n, dtype=np.int64)
    votes = np.zeros((ds.n, forest.n_classes), dtype=np.int64)
    made = 0
    mask = np.empty(ds.n, dtype=bool)
    X = ds.features
    for tree, inbag in zip(forest.trees, forest.inbag):
        mask[:] = True
        mask[inbag.indices] = False
        oob = rows[mask]
        if oob.size == 0:
            continue
        leaves = K.apply_rows(tree.feature, tree.threshold, tree.left, tree.right, X, oob)
        K.add_votes(votes, oob, tree.prediction[leaves])
        made += oob.size
    wrong, n_eval, n_excl = _majority_error(votes, ds.labels)
    if wrong is None:
        return OOBEstimate(None, 0, ds.n, made)
    return OOBEstimate(wrong / n_eval, n_eval, n_excl, made)


def bd_err_samp_dac(forest, ds):
    """Per-subsample OOB error inside each subforest, averaged by subsample size.

    With a single subsample (sampRF) this is the OOB error of the forest
    restricted to that subsample.
    """
    _check_ds(forest, ds)
    if forest.variant not in ("subsample", "dac") or forest.subsamples is None:
        raise PlanError("this approximation applies to subsample and dac forests, not {!r}".format(
            forest.variant))
    num = den = 0.0
    n_eval = n_excl = made = 0
    for (a, b), tau in zip(forest.groups, forest.subsamples):
        votes = np.zeros((tau.size, forest.n_classes), dtype=np.int64)
        made += _vote_oob(forest, ds.features, range(a, b), tau, votes)
        wrong, ev, ex = _majority_error(votes, ds.labels[tau])
        n_excl += ex if wrong is not None else tau.size
        if wrong is None:
            continue
        n_eval += ev
        num += tau.size * (wrong / ev)
        den += tau.size
    if den == 0:
        return OOBEstimate(None, 0, n_excl, made)
    return OOBEstimate(num / den, n_eval, n_excl, made)


def bd_err_blb(forest, ds):
    """Each row of subsample l is voted on by every tree of the other subforests."""
    _check_ds(forest, ds)
    if forest.variant != "blb" or forest.subsamples is None:
        raise PlanError("this approximation applies to blb forests, not {!r}".format(forest.variant))
    n_groups = len(forest.groups)
    if n_groups < 2:
        raise PlanError("blb approximation needs K >= 2 subsamples")
    rows = np.concatenate(forest.subsamples)
    owner = np.repeat(np.arange(n_groups), [s.size for s in forest.subsamples])
    pos = np.arange(rows.size, dtype=np.int64)
    group_votes = np.zeros((n_groups, rows.size, forest.n_classes), dtype=np.int64)
    X = ds.features
    for g, (a, b) in enumerate(forest.groups):
        for t in range(a, b):
            tree = forest.trees[t]
            leaves = K.apply_rows(tree.feature, tree.threshold, tree.left, tree.right, X, rows)
            K.add_votes(group_votes[g], pos, tree.prediction[leaves])
    total = group_votes.sum(axis=0)
    others = total - group_votes[owner, pos]
    made = int(sum((b - a) * (rows.size - forest.subsamples[g].size)
                   for g, (a, b) in enumerate(forest.groups)))
    wrong, n_eval, n_excl = _majority_error(others, ds.labels[rows])
    if wrong is None:
        return OOBEstimate(None, 0, rows.size, made)
    return OOBEstimate(wrong / n_eval, n_eval, n_excl, made)


def bd_err_moon(forest, ds):
    """OOB error over the union of the subsamples, each tree voting on rows outside its own."""
    _check_ds(forest, ds)
    if forest.variant != "moon" or forest.subsamples is None:
        raise PlanError("this approximation applies to moon forests, not {!r}".format(forest.variant))
    union = np.unique(np.concatenate(forest.subsamples))
    votes = np.zeros((union.size, forest.n_classes), dtype=np.int64)
    made = _vote_oob(forest, ds.features, range(forest.n_trees), union, votes)
    wrong, n_eval, n_excl = _majority_error(votes, ds.labels[union])
    if wrong is None:
        return OOBEstimate(None, 0, union.size, made)
    return OOBEstimate(wrong / n_eval, n_eval, n_excl, made)


def bd_err_forest(forest, ds):
    """The cheap OOB approximation matching the forest's variant, or None for standard forests."""
    variant = forest.variant
    if variant in ("subsample", "dac"):
        return bd_err_samp_dac(forest, ds)
    if variant == "blb":
        return bd_err_blb(forest, ds)
    if variant == "moon":
        return bd_err_moon(forest, ds)
    return None


def err_test(predictor, test_ds, workers=1):
    """Misclassification rate on a held-out dataset.

    ``predictor`` is a Forest, anything with a ``predict(X)`` method, or a
    callable mapping a feature matrix to class ids.
    """
    from .forest import Forest, predict_batch

    X, y = test_ds.features, test_ds.labels
    if y.size == 0:
        raise UnavailableError("empty test set")
    if isinstance(predictor, Forest):
        pred = predict_batch(predictor, X, workers=workers)
    elif hasattr(predictor, "predict"):
        pred = predictor.predict(X)
    else:
        pred = predictor(X)
    return float(np.mean(np.asarray(pred) != y))


@dataclass(frozen=True)
class VariableImportance:
    importances: np.ndarray
    n_skipped: int = 0

    def ranking(self):
        """Feature indices sorted by decreasing importance (stable)."""
        return np.argsort(-self.importances, kind="stable")


def _default_permuter(rng, k):
    return rng.permutation(k)


def variable_importance(forest, ds, seed=0, permuter=None):
    """Mean increase of per-tree OOB error after permuting one feature.

    The permutation for (tree t, feature j) comes from a generator keyed by
    ``(seed, t, j)``, so results do not depend on evaluation order. Trees with
    an empty OOB set are skipped and excluded from the average.
    """
    _check_ds(forest, ds)
    permuter = permuter or _default_permuter
    X, y = ds.features, ds.labels
    total = np.zeros(ds.p)
    used = 0
    skipped = 0
    mask = np.empty(ds.n, dtype=bool)
    for t, (tree, inbag) in enumerate(zip(forest.trees, forest.inbag)):
        mask[:] = True
        mask[inbag.indices] = False
        oob = np.flatnonzero(mask)
        if oob.size == 0:
            skipped += 1
            continue
        Xo = X[oob]
        base = np.mean(tree.predict(Xo) != y[oob])
        split_on = tree.used_features()
        for j in range(ds.p):
            perm = np.asarray(permuter(derive_rng(seed, _VI_STAGE, t, j), oob.size))
            if j not in split_on:
                continue
            Xp = Xo.copy()
            Xp[:, j] = Xo[perm, j]
            total[j] += np.mean(tree.predict(Xp) != y[oob]) - base
        used += 1
    if used == 0:
        raise UnavailableError("no tree has an out-of-bag sample")
    return VariableImportance(total / used, skipped)


def expected_unique(scheme, n, m=None, K=None):
    """Expected number of distinct rows in one tree's training multiset.

    ``standard``: n(1-(1-1/n)^n); ``subsample``: same with m; ``moon``: m;
    ``blb``: m(1-((m-1)/m)^n); ``dac``: same as standard with chunk size n/K.
    """
    def boot(size):
        return size * (1.0 - (1.0 - 1.0 / size) ** size)

    if scheme == "standard":
        return boot(n)
    if scheme == "subsample":
        return boot(m)
    if scheme == "moon":
        return float(m)
    if scheme == "blb":
        return m * (1.0 - ((m - 1.0) / m) ** n)
    if scheme == "dac":
        return boot(n / K)
    raise PlanError("unknown scheme {!r}".format(scheme))


def expected_unique_ratio(scheme, n, m=None, K=None, digits=2):
    """Expected distinct fraction relative to the nominal sample (0.63 for bootstraps), rounded."""
    nominal = {"standard": n, "subsample": m, "moon": m, "blb": m, "dac": None if K is None else n / K}
    return round(expected_unique(scheme, n, m, K) / nominal[scheme], digits)


def mean_leaf_gini(forest):
    """Unweighted mean Gini impurity over all leaves of all trees."""
    ginis = np.concatenate([t.leaf_gini() for t in forest.trees])
    return float(ginis.mean())


@dataclass
class EvalReport:
    err_forest: float = None
    bd_err_forest: float = None
    err_test: float = None
    vi: np.ndarray = None
    mean_leaf_gini: float = None
    train_seconds: float = None
    eval_seconds: float = None
    n_trees: int = 0
    n_leaves: int = 0
    n_distinct_inbag: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("err_forest", "bd_err_forest", "err_test"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError("{} must lie in [0, 1], got {}".format(name, v))

    def as_dict(self):
        d = {
            "err_forest": self.err_forest,
            "bd_err_forest": self.bd_err_forest,
            "err_test": self.err_test,
            "mean_leaf_gini": self.mean_leaf_gini,
            "train_seconds": self.train_seconds,
            "eval_seconds": self.eval_seconds,
            "n_trees": self.n_trees,
            "n_leaves": self.n_leaves,
            "n_distinct_inbag": self.n_distinct_inbag,
        }
        if self.vi is not None:
            for j, v in enumerate(self.vi):
                d["vi_{}".format(j + 1)] = float(v)
        d.update(self.extra)
        return d


def _rate(est):
    if est is None or not est.available:
        return None
    return est.rate


def evaluate(forest, ds, test_ds=None, compute_err_forest=True, compute_vi=False, vi_seed=0,
             workers=1):
    """Assemble an :class:`EvalReport` for a trained forest."""
    t0 = time.perf_counter()
    report = EvalReport(
        train_seconds=forest.train_seconds,
        n_trees=forest.n_trees,
        n_leaves=forest.n_leaves(),
        n_distinct_inbag=forest.distinct_inbag(),
    )
    if compute_err_forest:
        report.err_forest = _rate(err_forest(forest, ds))
    report.bd_err_forest = _rate(bd_err_forest(forest, ds))
    if test_ds is not None:
        report.err_test = err_test(forest, test_ds, workers=workers)
    if compute_vi:
        report.vi = variable_importance(forest, ds, seed=vi_seed).importances
    if forest.n_classes == 2:
        report.mean_leaf_gini = mean_leaf_gini(forest)
    report.eval_seconds = time.perf_counter() - t0
    return report
