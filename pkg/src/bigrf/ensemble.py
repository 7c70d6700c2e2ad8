"""scikit-learn compatible estimators on top of the functional forest API."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_dataset, check_features, resolve_seed
from .evaluation import bd_err_forest, err_forest, variable_importance
from .forest import predict_votes, train
from .online import OnlineForest, OnlineForestParams
from .resample import ResamplePlan, sampling_size
from .tree import TreeParams

__all__ = ["BigRandomForestClassifier", "OnlineRandomForestClassifier"]

VARIANTS = {
    "standard": "standard", "seq": "standard", "par": "standard",
    "samp": "subsample", "subsample": "subsample",
    "moon": "moon", "blb": "blb", "dac": "dac", "poisson": "poisson",
}


def make_plan(variant, n, n_estimators, n_subsamples=None, trees_per_subsample=None,
              subsample_size=None, sampling_fraction=None, poisson_rate=1.0, seed=0):
    """Build a :class:`ResamplePlan` from estimator-style parameters."""
    scheme = VARIANTS.get(variant)
    if scheme is None:
        raise ValueError("unknown variant {!r}; expected one of {}".format(variant, sorted(VARIANTS)))
    m = None
    if scheme in ("subsample", "moon", "blb"):
        m = sampling_size(n, subsample_size, sampling_fraction)
    K = q = None
    if scheme in ("blb", "dac"):
        K = n_subsamples
        if K is None:
            raise ValueError("{} needs n_subsamples".format(variant))
        q = trees_per_subsample
        if q is None:
            if n_estimators % K:
                raise ValueError("n_estimators={} is not a multiple of n_subsamples={}".format(
                    n_estimators, K))
            q = n_estimators // K
        n_estimators = K * q
    return ResamplePlan(scheme, n, n_estimators, m=m, K=K, q=q, lam=poisson_rate, master_seed=seed)


class BigRandomForestClassifier(ClassifierMixin, BaseEstimator):
    """Random forest classifier with big-data resampling variants.

    Parameters
    ----------
    variant : {"standard", "samp", "moon", "blb", "dac", "poisson"}
        How each tree's training multiset is drawn.
    n_estimators : int
        Total number of trees. For ``blb``/``dac`` it must equal
        ``n_subsamples * trees_per_subsample``.
    n_subsamples, trees_per_subsample : int
        K and q of the ``blb``/``dac`` variants.
    subsample_size, sampling_fraction : int, float
        m (or m/n) for ``samp``, ``moon`` and ``blb``; give one of them.
    max_features : int, optional
        Candidate features per node, default ``floor(sqrt(p))``.
    max_leaf_nodes : int, optional
        Leaf budget for best-first growth; None grows until leaves are pure.
    max_depth : int, optional
    min_node_weight : float
    split_mode : {"exhaustive", "ert"}
    n_candidates : int
        Random splits drawn per node when ``split_mode="ert"``.
    poisson_rate : float
        Rate of the ``poisson`` variant.
    oob_score : bool
        Compute ``oob_error_`` and the variant's ``bd_oob_error_`` after fit.
    compute_importances : bool
        Compute permutation importances into ``feature_importances_``.
    n_jobs : int
    random_state : int, RandomState, Generator or None
    """

    def __init__(self, variant="standard", n_estimators=100, n_subsamples=None,
                 trees_per_subsample=None, subsample_size=None, sampling_fraction=None,
                 max_features=None, max_leaf_nodes=500, max_depth=None, min_node_weight=2.0,
                 split_mode="exhaustive", n_candidates=1, poisson_rate=1.0, oob_score=False,
                 compute_importances=False, n_jobs=1, random_state=None):
        self.variant = variant
        self.n_estimators = n_estimators
        self.n_subsamples = n_subsamples
        self.trees_per_subsample = trees_per_subsample
        self.subsample_size = subsample_size
        self.sampling_fraction = sampling_fraction
        self.max_features = max_features
        self.max_leaf_nodes = max_leaf_nodes
        self.max_depth = max_depth
        self.min_node_weight = min_node_weight
        self.split_mode = split_mode
        self.n_candidates = n_candidates
        self.poisson_rate = poisson_rate
        self.oob_score = oob_score
        self.compute_importances = compute_importances
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _tree_params(self):
        return TreeParams(
            mtry=self.max_features,
            max_leaves=self.max_leaf_nodes or 0,
            max_depth=self.max_depth or 0,
            min_node_weight=self.min_node_weight,
            split_mode=self.split_mode,
            n_candidates=self.n_candidates,
        )

    def fit(self, X, y):
        ds, self.classes_ = as_dataset(self, X, y)
        seed = resolve_seed(self.random_state)
        plan = make_plan(self.variant, ds.n, self.n_estimators, self.n_subsamples,
                         self.trees_per_subsample, self.subsample_size, self.sampling_fraction,
                         self.poisson_rate, seed)
        self.forest_ = train(ds, plan, self._tree_params(), workers=self.n_jobs)
        if self.oob_score:
            self.oob_error_ = err_forest(self.forest_, ds).rate
            bd = bd_err_forest(self.forest_, ds)
            self.bd_oob_error_ = None if bd is None else bd.rate
        if self.compute_importances:
            self.feature_importances_ = variable_importance(self.forest_, ds, seed=seed).importances
        return self

    @property
    def estimators_(self):
        check_is_fitted(self, "forest_")
        return self.forest_.trees

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        X = check_features(self, X)
        votes = predict_votes(self.forest_, X)
        return votes / votes.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "forest_")
        X = check_features(self, X)
        return self.classes_[np.argmax(predict_votes(self.forest_, X), axis=1)]


class OnlineRandomForestClassifier(ClassifierMixin, BaseEstimator):
    """Online random forest with Poisson bagging (or two-stream updates).

    ``feature_range`` is either one ``(min, max)`` pair for every feature or
    an array of shape (p, 2); candidate thresholds of the root are drawn
    inside it before any data is seen.
    """

    def __init__(self, n_estimators=25, n_candidates=10, poisson_rate=1.0, max_depth=10,
                 min_split_weight=50.0, min_gain=0.01, two_stream=None, feature_range=(-6.0, 6.0),
                 random_state=None):
        self.n_estimators = n_estimators
        self.n_candidates = n_candidates
        self.poisson_rate = poisson_rate
        self.max_depth = max_depth
        self.min_split_weight = min_split_weight
        self.min_gain = min_gain
        self.two_stream = two_stream
        self.feature_range = feature_range
        self.random_state = random_state

    def _init_forest(self, p):
        params = OnlineForestParams(
            n_trees=self.n_estimators, n_candidates=self.n_candidates, lam=self.poisson_rate,
            max_depth=self.max_depth or 0, alpha=self.min_split_weight, beta=self.min_gain,
            two_stream=self.two_stream, n_classes=len(self.classes_),
            seed=resolve_seed(self.random_state))
        ranges = np.asarray(self.feature_range, dtype=np.float64)
        if ranges.ndim == 1:
            ranges = np.tile(ranges, (p, 1))
        self.forest_ = OnlineForest(params, ranges)

    def partial_fit(self, X, y, classes=None):
        if not hasattr(self, "forest_"):
            if classes is None:
                ds, self.classes_ = as_dataset(self, X, y)
            else:
                self.classes_ = np.unique(np.asarray(classes))
                ds, _ = as_dataset(self, X, y, classes=self.classes_)
            self._init_forest(ds.p)
        else:
            ds, _ = as_dataset(self, X, y, classes=self.classes_, reset=False)
        self.forest_.partial_fit(ds.features, ds.labels)
        return self

    def fit(self, X, y):
        for attr in ("forest_", "classes_"):
            if hasattr(self, attr):
                delattr(self, attr)
        return self.partial_fit(X, y)

    @property
    def oob_error_(self):
        check_is_fitted(self, "forest_")
        return self.forest_.oob_estimate().rate

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        X = check_features(self, X)
        votes = self.forest_.predict_votes(X)
        return votes / votes.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "forest_")
        X = check_features(self, X)
        return self.classes_[self.forest_.predict(X)]
