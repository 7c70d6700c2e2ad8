"""Online random forest built from extremely randomized trees.

Each arriving observation is replicated ``k ~ Poisson(lam)`` times in every
tree (online bagging). A leaf keeps ``S`` random candidate splits with class
counts for both candidate children; once the leaf has seen ``alpha`` weight
and the best candidate lowers Gini impurity by at least ``beta``, that
candidate becomes the split. With ``two_stream`` set, bagging is replaced by
a per-tree random assignment of every observation to a structure stream
(drives split choice) or an estimation stream (drives leaf labels).
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import _online_kernels as OK
from .evaluation import OOBEstimate
from .exceptions import DataError, FormatError
from .resample import derive_rng

__all__ = ["OnlineForestParams", "OnlineForest", "onrf_init", "onrf_update", "onrf_predict",
           "onrf_oob_estimate"]

_POISSON_STAGE, _CAND_STAGE = 21, 22
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class OnlineForestParams:
    """Settings of an online forest.

    ``alpha`` (minimum accumulated weight) and ``beta`` (minimum Gini
    decrease) form the split trigger. ``max_depth=0`` means unlimited.
    ``two_stream`` is the probability of sending an observation to the
    structure stream; None keeps Poisson bagging.
    """

    n_trees: int = 25
    n_candidates: int = 10
    lam: float = 1.0
    max_depth: int = 10
    alpha: float = 50.0
    beta: float = 0.01
    two_stream: float = None
    n_classes: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.n_candidates < 1:
            raise DataError("n_trees and n_candidates must be >= 1")
        if not self.lam > 0:
            raise DataError("lam must be positive")
        if self.alpha < 2 or self.beta < 0:
            raise DataError("split trigger needs alpha >= 2 and beta >= 0")
        if self.two_stream is not None and not 0.0 < self.two_stream < 1.0:
            raise DataError("two_stream probability must lie in (0, 1)")
        if self.n_classes < 1 or self.max_depth < 0:
            raise DataError("invalid n_classes or max_depth")


class OnlineForest:
    """State of an online forest; see :func:`onrf_init`."""

    _ARRAYS = ("feat", "thr", "left", "right", "depth", "est", "sw", "cand_f", "cand_t",
               "cand_c", "cand_e", "lo", "hi", "n_nodes")

    def __init__(self, params, feature_ranges, _empty=False):
        self.params = params
        ranges = np.asarray(feature_ranges, dtype=np.float64)
        if ranges.ndim != 2 or ranges.shape[1] != 2 or ranges.shape[0] < 1:
            raise DataError("feature_ranges must have shape (p, 2)")
        if not np.all(np.isfinite(ranges)) or not np.all(ranges[:, 0] < ranges[:, 1]):
            raise DataError("every feature range must be finite with min < max")
        self.feature_ranges = ranges
        self.n_features = ranges.shape[0]
        self.n_seen = 0
        self.n_zero_k = 0
        self.n_pairs = 0
        self.oob_wrong = 0
        self.oob_count = 0
        self._stream_rng = derive_rng(params.seed, _POISSON_STAGE)
        self._tree_rngs = [derive_rng(params.seed, _CAND_STAGE, t) for t in range(params.n_trees)]
        if _empty:
            return
        self._allocate(16)
        full_lo, full_hi = ranges[:, 0], ranges[:, 1]
        for t in range(params.n_trees):
            self.n_nodes[t] = 1
            self._reset_leaf(t, 0, full_lo, full_hi)

    # -- storage --------------------------------------------------------------------

    def _allocate(self, cap):
        Q, S, C, p = self.params.n_trees, self.params.n_candidates, self.params.n_classes, self.n_features
        self.feat = np.full((Q, cap), -1, dtype=np.int64)
        self.thr = np.zeros((Q, cap))
        self.left = np.full((Q, cap), -1, dtype=np.int64)
        self.right = np.full((Q, cap), -1, dtype=np.int64)
        self.depth = np.zeros((Q, cap), dtype=np.int64)
        self.est = np.zeros((Q, cap, C))
        self.sw = np.zeros((Q, cap))
        self.cand_f = np.zeros((Q, cap, S), dtype=np.int64)
        self.cand_t = np.zeros((Q, cap, S))
        self.cand_c = np.zeros((Q, cap, S, 2, C))
        self.cand_e = np.zeros((Q, cap, S, 2, C))
        self.lo = np.full((Q, cap, p), np.inf)
        self.hi = np.full((Q, cap, p), -np.inf)
        self.n_nodes = np.zeros(Q, dtype=np.int64)

    def _grow_capacity(self):
        cap = self.feat.shape[1]
        fill = {"feat": -1, "left": -1, "right": -1, "lo": np.inf, "hi": -np.inf}
        for name in self._ARRAYS[:-1]:
            a = getattr(self, name)
            extra = np.full((a.shape[0], cap) + a.shape[2:], fill.get(name, 0), dtype=a.dtype)
            setattr(self, name, np.concatenate([a, extra], axis=1))

    def _reset_leaf(self, t, node, lo, hi):
        S = self.params.n_candidates
        rng = self._tree_rngs[t]
        f = rng.integers(0, self.n_features, S)
        u = rng.random(S)
        self.cand_f[t, node] = f
        self.cand_t[t, node] = lo[f] + (hi[f] - lo[f]) * u
        self.cand_c[t, node] = 0.0
        self.cand_e[t, node] = 0.0
        self.sw[t, node] = 0.0
        self.lo[t, node] = np.inf
        self.hi[t, node] = -np.inf

    def _child_ranges(self, t, node, f, thr, side):
        declared_lo = self.feature_ranges[:, 0].copy()
        declared_hi = self.feature_ranges[:, 1].copy()
        lo = self.lo[t, node].copy()
        hi = self.hi[t, node].copy()
        if side == 0:
            hi[f] = min(hi[f], thr)
            declared_hi[f] = min(declared_hi[f], thr)
        else:
            lo[f] = max(lo[f], thr)
            declared_lo[f] = max(declared_lo[f], thr)
        bad = ~(hi > lo)
        lo[bad] = declared_lo[bad]
        hi[bad] = declared_hi[bad]
        return lo, hi

    def _commit(self, t, node, s):
        if self.n_nodes[t] + 2 > self.feat.shape[1]:
            self._grow_capacity()
        f = int(self.cand_f[t, node, s])
        thr = float(self.cand_t[t, node, s])
        a = int(self.n_nodes[t])
        b = a + 1
        self.n_nodes[t] += 2
        source = self.cand_c if self.params.two_stream is None else self.cand_e
        for child, side in ((a, 0), (b, 1)):
            self.depth[t, child] = self.depth[t, node] + 1
            self.est[t, child] = source[t, node, s, side]
            lo, hi = self._child_ranges(t, node, f, thr, side)
            self._reset_leaf(t, child, lo, hi)
        self.feat[t, node] = f
        self.thr[t, node] = thr
        self.left[t, node] = a
        self.right[t, node] = b

    # -- learning -------------------------------------------------------------------

    def _check_x(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.n_features or not np.all(np.isfinite(x)):
            raise DataError("expected {} finite features".format(self.n_features))
        return x

    def update(self, x, y, ks=None):
        """Learn from one observation. ``ks`` overrides the per-tree replication counts."""
        x = self._check_x(x)
        y = int(y)
        if not 0 <= y < self.params.n_classes:
            raise DataError("label {} outside [0, {})".format(y, self.params.n_classes))
        Q = self.params.n_trees
        if self.params.two_stream is None:
            if ks is None:
                ks = self._stream_rng.poisson(self.params.lam, Q)
            ks = np.asarray(ks, dtype=np.int64)
            streams = np.zeros(Q, dtype=np.int64)
            zero = ks == 0
            self.n_zero_k += int(zero.sum())
            self.n_pairs += Q
            if zero.any():
                preds = np.empty(Q, dtype=np.int64)
                OK.tree_predictions(x, self.feat, self.thr, self.left, self.right, self.est, preds)
                votes = np.bincount(preds[zero], minlength=self.params.n_classes)
                self.oob_wrong += int(np.argmax(votes) != y)
                self.oob_count += 1
        else:
            structure = self._stream_rng.random(Q) < self.params.two_stream
            streams = np.where(structure, OK.STRUCTURE, OK.ESTIMATION).astype(np.int64)
            ks = np.ones(Q, dtype=np.int64)
        ready = np.empty(Q, dtype=np.int64)
        ready_cand = np.empty(Q, dtype=np.int64)
        OK.update(x, y, ks, streams, self.feat, self.thr, self.left, self.right, self.depth,
                  self.est, self.sw, self.cand_f, self.cand_t, self.cand_c, self.cand_e,
                  self.lo, self.hi, float(self.params.alpha), float(self.params.beta),
                  int(self.params.max_depth), ready, ready_cand)
        for t in np.flatnonzero(ready >= 0):
            self._commit(int(t), int(ready[t]), int(ready_cand[t]))
        self.n_seen += 1

    def partial_fit(self, X, y):
        for xi, yi in zip(np.asarray(X, dtype=np.float64), np.asarray(y)):
            self.update(xi, yi)
        return self

    # -- inference ------------------------------------------------------------------

    def predict_votes(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise DataError("expected {} features, got {}".format(self.n_features, X.shape[1]))
        return OK.predict_votes(X, self.feat, self.thr, self.left, self.right, self.est,
                                self.params.n_classes)

    def predict(self, X):
        return np.argmax(self.predict_votes(X), axis=1)

    def oob_estimate(self):
        """Running OOB misclassification rate, each observation judged once at arrival."""
        if self.oob_count == 0:
            return OOBEstimate(None, 0, self.n_seen)
        return OOBEstimate(self.oob_wrong / self.oob_count, self.oob_count,
                           self.n_seen - self.oob_count)

    @property
    def poisson_zero_fraction(self):
        return self.n_zero_k / self.n_pairs if self.n_pairs else float("nan")

    def tree_depths(self):
        return np.array([self.depth[t, :self.n_nodes[t]].max() for t in range(self.params.n_trees)])

    def n_leaves(self):
        return int(sum(np.count_nonzero(self.feat[t, :self.n_nodes[t]] < 0)
                       for t in range(self.params.n_trees)))

    def check_consistency(self):
        """Assert that every leaf's candidate child counts add up to its structure weight."""
        for t in range(self.params.n_trees):
            for node in range(self.n_nodes[t]):
                if self.feat[t, node] >= 0:
                    continue
                sums = self.cand_c[t, node].sum(axis=(1, 2))
                if not np.allclose(sums, self.sw[t, node], rtol=0, atol=1e-9):
                    raise AssertionError("tree {} leaf {}: candidate counts {} != {}".format(
                        t, node, sums, self.sw[t, node]))
        return True

    # -- persistence ----------------------------------------------------------------

    def checkpoint(self, path):
        """Write the full state (including generator states) to an ``.npz`` file."""
        meta = {
            "version": CHECKPOINT_VERSION,
            "params": asdict(self.params),
            "counters": [self.n_seen, self.n_zero_k, self.n_pairs, self.oob_wrong, self.oob_count],
            "stream_rng": self._stream_rng.bit_generator.state,
            "tree_rngs": [r.bit_generator.state for r in self._tree_rngs],
        }
        arrays = {name: getattr(self, name) for name in self._ARRAYS}
        arrays["feature_ranges"] = self.feature_ranges
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise FormatError("unsupported checkpoint version {}".format(meta.get("version")))
            forest = cls(OnlineForestParams(**meta["params"]), data["feature_ranges"], _empty=True)
            for name in cls._ARRAYS:
                setattr(forest, name, np.array(data[name]))
        (forest.n_seen, forest.n_zero_k, forest.n_pairs, forest.oob_wrong,
         forest.oob_count) = meta["counters"]
        forest._stream_rng.bit_generator.state = meta["stream_rng"]
        for r, state in zip(forest._tree_rngs, meta["tree_rngs"]):
            r.bit_generator.state = state
        return forest


def onrf_init(params, feature_ranges):
    """Create ``params.n_trees`` single-leaf trees with candidates drawn inside the ranges."""
    return OnlineForest(params, feature_ranges)


def onrf_update(forest, x, y):
    forest.update(x, y)


def onrf_predict(forest, x):
    """Majority vote of the trees' leaf labels; ties and empty leaves go to class 0."""
    return int(forest.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def onrf_oob_estimate(forest):
    return forest.oob_estimate()
