"""Randomized classification trees grown on weighted row multisets."""

import math
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _tree_kernels as K
from .exceptions import DataError, FormatError

__all__ = [
    "WeightedRows",
    "TreeParams",
    "SplitCandidate",
    "Tree",
    "grow_tree",
    "best_split_exhaustive",
    "best_split_ert",
    "predict_tree",
    "default_mtry",
]

TREE_MAGIC = b"BRFT"
TREE_VERSION = 1
_HEADER = struct.Struct("<4sHHIII")


@dataclass(frozen=True, eq=False)
class WeightedRows:
    """Distinct row ids with positive multiplicities (bootstrap counts or BLB weights)."""

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if idx.shape != w.shape or idx.ndim != 1:
            raise DataError("indices and weights must be 1-d arrays of equal length")
        if w.size and not np.all(w > 0):
            raise DataError("weights must be positive")
        idx.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_counts(cls, counts):
        """Build from a length-n vector of multiplicities, dropping zeros."""
        counts = np.asarray(counts)
        nz = np.flatnonzero(counts)
        return cls(nz, counts[nz].astype(np.float64))

    @classmethod
    def uniform(cls, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return cls(indices, np.ones(indices.shape[0]))

    def __len__(self):
        return self.indices.shape[0]

    @property
    def total_weight(self):
        return float(self.weights.sum())

    def __eq__(self, other):
        return (
            isinstance(other, WeightedRows)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.weights, other.weights)
        )


def default_mtry(p):
    return max(1, int(math.floor(math.sqrt(p))))


@dataclass(frozen=True)
class TreeParams:
    """Growth controls.

    ``max_leaves`` and ``max_depth`` use 0 for "unlimited". ``split_mode`` is
    ``"exhaustive"`` (best Gini midpoint over ``mtry`` random features) or
    ``"ert"`` (best of ``n_candidates`` random feature/threshold draws among
    ``mtry`` random features). ``mtry=None`` resolves to ``floor(sqrt(p))``.
    """

    mtry: int = None
    max_leaves: int = 0
    max_depth: int = 0
    min_node_weight: float = 2.0
    split_mode: str = "exhaustive"
    n_candidates: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.split_mode not in ("exhaustive", "ert"):
            raise DataError("split_mode must be 'exhaustive' or 'ert', got {!r}".format(self.split_mode))
        if self.split_mode == "ert" and self.n_candidates < 1:
            raise DataError("ert needs n_candidates >= 1")
        if self.max_leaves < 0 or self.max_depth < 0:
            raise DataError("max_leaves and max_depth must be >= 0")
        if self.mtry is not None and self.mtry < 1:
            raise DataError("mtry must be >= 1")

    def resolved_mtry(self, p):
        mtry = default_mtry(p) if self.mtry is None else self.mtry
        if not 1 <= mtry <= p:
            raise DataError("mtry={} outside [1, {}]".format(mtry, p))
        return mtry


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    impurity_decrease: float


class Tree:
    """A fitted binary tree stored as flat node arrays.

    Node 0 is the root. ``feature[i] == -1`` marks a leaf. ``value[i]`` holds
    the weighted class counts of the training rows that reached node ``i``.
    """

    def __init__(self, feature, threshold, left, right, value, n_features, depth=None):
        self.feature = np.ascontiguousarray(feature, dtype=np.int64)
        self.threshold = np.ascontiguousarray(threshold, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.int64)
        self.right = np.ascontiguousarray(right, dtype=np.int64)
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.n_features = int(n_features)
        if depth is None:
            depth = self._depths().max(initial=0)
        self.depth = int(depth)
        # lowest class id wins ties
        self.prediction = np.argmax(self.value, axis=1).astype(np.int64)
        for a in (self.feature, self.threshold, self.left, self.right, self.value, self.prediction):
            a.setflags(write=False)

    def _depths(self):
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return d

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def n_classes(self):
        return self.value.shape[1]

    @property
    def is_leaf(self):
        return self.feature < 0

    @property
    def n_leaves(self):
        return int(np.count_nonzero(self.feature < 0))

    def apply(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return K.apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X):
        return self.prediction[self.apply(X)]

    def used_features(self):
        return set(int(f) for f in self.feature[self.feature >= 0])

    def leaf_gini(self):
        """Gini impurity of every leaf, in node order."""
        v = self.value[self.is_leaf]
        tot = v.sum(axis=1)
        q = v / np.where(tot > 0, tot, 1.0)[:, None]
        return 1.0 - (q * q).sum(axis=1)

    def to_bytes(self):
        head = _HEADER.pack(TREE_MAGIC, TREE_VERSION, self.n_classes, self.n_features,
                            self.n_nodes, self.depth)
        return b"".join([
            head,
            self.feature.astype("<i4").tobytes(),
            self.threshold.astype("<f8").tobytes(),
            self.left.astype("<i4").tobytes(),
            self.right.astype("<i4").tobytes(),
            self.value.astype("<f8").tobytes(),
        ])

    @classmethod
    def from_bytes(cls, blob):
        blob = bytes(blob)
        if len(blob) < _HEADER.size:
            raise FormatError("tree blob shorter than its header")
        magic, version, n_classes, n_features, n_nodes, depth = _HEADER.unpack_from(blob)
        if magic != TREE_MAGIC:
            raise FormatError("not a tree blob (magic {!r})".format(magic))
        if version != TREE_VERSION:
            raise FormatError("unsupported tree format version {}".format(version))
        expected = _HEADER.size + n_nodes * (4 + 8 + 4 + 4 + 8 * n_classes)
        if len(blob) != expected:
            raise FormatError("tree blob has {} bytes, expected {}".format(len(blob), expected))
        off = _HEADER.size

        def take(dtype, count):
            nonlocal off
            a = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
            off += a.nbytes
            return a

        feature = take("<i4", n_nodes)
        threshold = take("<f8", n_nodes)
        left = take("<i4", n_nodes)
        right = take("<i4", n_nodes)
        value = take("<f8", n_nodes * n_classes).reshape(n_nodes, n_classes)
        return cls(feature, threshold, left, right, value, n_features, depth)

    def dump_text(self, column_names=None):
        """Indented human-readable rendering of the tree."""
        names = column_names or ["X{}".format(j + 1) for j in range(self.n_features)]
        lines = []
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            counts = " ".join("%g" % c for c in self.value[node])
            pad = "  " * d
            if self.feature[node] < 0:
                lines.append("{}leaf #{} class={} counts=[{}]".format(
                    pad, node, self.prediction[node], counts))
            else:
                lines.append("{}#{} {} <= {!r} counts=[{}]".format(
                    pad, node, names[self.feature[node]], float(self.threshold[node]), counts))
                stack.append((self.right[node], d + 1))
                stack.append((self.left[node], d + 1))
        return "\n".join(lines)

    def __eq__(self, other):
        return isinstance(other, Tree) and self.to_bytes() == other.to_bytes()

    def __repr__(self):
        return "Tree(n_nodes={}, n_leaves={}, depth={})".format(self.n_nodes, self.n_leaves, self.depth)


def _node_arrays(ds, rows):
    if not isinstance(rows, WeightedRows):
        rows = WeightedRows.uniform(rows)
    X = ds.features
    y = ds.labels
    counts = np.bincount(y[rows.indices], weights=rows.weights, minlength=ds.n_classes).astype(np.float64)
    return X, y, rows, counts


def best_split_exhaustive(ds, rows, feature_subset=None):
    """Best weighted-Gini split over every midpoint of every feature in the subset.

    Returns a :class:`SplitCandidate`, or None for a pure node or when no
    split lowers impurity.
    """
    X, y, rows, counts = _node_arrays(ds, rows)
    if feature_subset is None:
        feature_subset = range(ds.p)
    feats = np.unique(np.asarray(list(feature_subset), dtype=np.int64))
    f, t, d = K.best_split_exhaustive(X, y, rows.indices.copy(), rows.weights.copy(), 0,
                                      len(rows), feats, counts, counts.sum())
    if f < 0:
        return None
    return SplitCandidate(int(f), float(t), float(d))


@njit(cache=True)
def _seeded_ert(seed, X, y, samples, weights, features, counts, total, n_candidates):
    np.random.seed(seed)
    return K.best_split_ert(X, y, samples, weights, 0, samples.shape[0], features, counts,
                            total, n_candidates)


def best_split_ert(ds, rows, S, rng=None, feature_subset=None):
    """Best of ``S`` randomly drawn (feature, threshold) candidates, or None."""
    X, y, rows, counts = _node_arrays(ds, rows)
    rng = np.random.default_rng(rng)
    feats = np.arange(ds.p, dtype=np.int64) if feature_subset is None else \
        np.unique(np.asarray(list(feature_subset), dtype=np.int64))
    seed = int(rng.integers(2 ** 32))
    f, t, d = _seeded_ert(seed, X, y, rows.indices.copy(), rows.weights.copy(), feats, counts,
                          counts.sum(), int(S))
    if f < 0:
        return None
    return SplitCandidate(int(f), float(t), float(d))


def grow_tree(ds, rows, params=None):
    """Grow one tree on ``rows`` of ``ds``.

    Parameters
    ----------
    ds : Dataset
    rows : WeightedRows or array of row ids
    params : TreeParams

    Returns
    -------
    Tree
    """
    params = params or TreeParams()
    if not isinstance(rows, WeightedRows):
        rows = WeightedRows.uniform(rows)
    if len(rows) == 0:
        raise DataError("cannot grow a tree on an empty row set")
    mtry = params.resolved_mtry(ds.p)
    mode = K.EXHAUSTIVE if params.split_mode == "exhaustive" else K.ERT
    seed = int(params.seed) % (2 ** 32)
    out = K.grow(ds.features, ds.labels, rows.indices, rows.weights, ds.n_classes, mtry,
                 int(params.max_leaves), int(params.max_depth), float(params.min_node_weight),
                 mode, int(params.n_candidates), seed)
    feature, threshold, left, right, value, depth = out
    return Tree(feature, threshold, left, right, value, ds.p, depth.max(initial=0))


def predict_tree(tree, x):
    """Class id for a single observation."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return int(tree.predict(x)[0])
