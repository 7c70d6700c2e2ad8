"""Batch forest variants: training, majority-vote prediction, merging, persistence."""

import json
import struct
import time
from dataclasses import asdict

import numpy as np
from joblib import Parallel, delayed

from . import _tree_kernels as K
from .exceptions import DataError, FormatError, PlanError
from .resample import ResamplePlan, grow_seed, plan_subsamples, tree_input
from .tree import Tree, TreeParams, WeightedRows, grow_tree

__all__ = [
    "Forest",
    "train",
    "train_subforest",
    "predict",
    "predict_votes",
    "predict_batch",
    "merge",
    "save_forest",
    "load_forest",
]

FOREST_MAGIC = b"BRFF"
FOREST_VERSION = 1
_U32 = struct.Struct("<I")


class Forest:
    """An ordered tree list plus everything needed to compute OOB quantities.

    Attributes
    ----------
    trees : list of Tree
    inbag : list of WeightedRows
        Training multiset of each tree, as row ids into the training data.
    plan : ResamplePlan or None
        None for forests merged from unrelated plans.
    groups : list of (start, stop)
        Tree-id ranges of the subforests (one subsample/chunk each).
    subsamples : list of ndarray or None
        Row ids shared by each group, aligned with ``groups``.
    """

    def __init__(self, trees, inbag, plan, tree_params, groups, subsamples, n_features,
                 n_classes, n_train, train_seconds=None, class_names=None):
        if len(trees) != len(inbag):
            raise DataError("one inbag record per tree is required")
        self.trees = list(trees)
        self.inbag = list(inbag)
        self.plan = plan
        self.tree_params = tree_params
        self.groups = [tuple(map(int, g)) for g in groups]
        self.subsamples = None if subsamples is None else [np.asarray(s, dtype=np.int64) for s in subsamples]
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.n_train = int(n_train)
        self.train_seconds = train_seconds
        self.class_names = None if class_names is None else tuple(str(c) for c in class_names)
        if self.subsamples is not None and len(self.subsamples) != len(self.groups):
            raise DataError("subsamples must align with groups")

    def __len__(self):
        return len(self.trees)

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def variant(self):
        return "merged" if self.plan is None else self.plan.scheme

    def group_of_tree(self):
        out = np.empty(self.n_trees, dtype=np.int64)
        for g, (a, b) in enumerate(self.groups):
            out[a:b] = g
        return out

    def n_leaves(self):
        return sum(t.n_leaves for t in self.trees)

    def distinct_inbag(self):
        """Number of distinct rows used by at least one tree."""
        if not self.inbag:
            return 0
        return int(np.unique(np.concatenate([r.indices for r in self.inbag])).size)

    def to_bytes(self):
        return _forest_to_bytes(self)

    @classmethod
    def from_bytes(cls, data):
        return _forest_from_bytes(data)

    def __repr__(self):
        return "Forest(variant={!r}, n_trees={}, groups={})".format(
            self.variant, self.n_trees, len(self.groups))


def _grow_one(ds, plan, params, tree_id, subsamples):
    rows = tree_input(plan, tree_id, subsamples)
    p = TreeParams(**{**asdict(params), "seed": grow_seed(plan, tree_id)})
    return grow_tree(ds, rows, p), rows


def _run(ds, plan, tree_params, tree_ids, subsamples, workers):
    if workers < 1:
        raise PlanError("workers must be >= 1")
    if workers == 1:
        return [_grow_one(ds, plan, tree_params, t, subsamples) for t in tree_ids]
    # the compiled grower releases the GIL, so threads run trees concurrently
    return Parallel(n_jobs=workers, prefer="threads")(
        delayed(_grow_one)(ds, plan, tree_params, t, subsamples) for t in tree_ids)


def train(ds, plan, tree_params=None, workers=1):
    """Grow every tree of ``plan`` on ``ds``.

    Tree ``t`` depends only on ``(ds, plan, tree_params, t)``, so the result is
    identical for any ``workers``. Wall-clock training time (resampling plus
    growth) is stored in ``train_seconds``.
    """
    tree_params = tree_params or TreeParams()
    if plan.n != ds.n:
        raise PlanError("plan was built for n={} but the dataset has n={}".format(plan.n, ds.n))
    tree_params.resolved_mtry(ds.p)
    t0 = time.perf_counter()
    subsamples = plan_subsamples(plan, ds)
    grown = _run(ds, plan, tree_params, range(plan.Q), subsamples, workers)
    elapsed = time.perf_counter() - t0
    groups = [(t, t + 1) for t in range(plan.Q)] if plan.scheme == "moon" else plan.subforest_boundaries()
    return Forest([g[0] for g in grown], [g[1] for g in grown], plan, tree_params, groups,
                  subsamples, ds.p, ds.n_classes, ds.n, elapsed, ds.class_names or None)


def train_subforest(ds, plan, group, tree_params=None, workers=1):
    """Train only subforest ``group`` of a blb/dac plan (one simulated map task)."""
    tree_params = tree_params or TreeParams()
    if plan.scheme not in ("blb", "dac"):
        raise PlanError("subforests exist only for blb and dac plans")
    if not 0 <= group < plan.K:
        raise PlanError("group {} outside [0, {})".format(group, plan.K))
    t0 = time.perf_counter()
    subsamples = plan_subsamples(plan, ds)
    a, b = plan.subforest_boundaries()[group]
    grown = _run(ds, plan, tree_params, range(a, b), subsamples, workers)
    elapsed = time.perf_counter() - t0
    return Forest([g[0] for g in grown], [g[1] for g in grown], plan, tree_params,
                  [(0, b - a)], [subsamples[group]], ds.p, ds.n_classes, ds.n, elapsed,
                  ds.class_names or None)


def merge(forests):
    """Concatenate forests; subforest structure and inbag records are kept."""
    forests = list(forests)
    if not forests:
        raise PlanError("nothing to merge")
    first = forests[0]
    for f in forests[1:]:
        if (f.n_features, f.n_classes, f.n_train) != (first.n_features, first.n_classes, first.n_train):
            raise DataError("cannot merge forests trained on differently shaped data")
    if len(forests) == 1:
        return first
    trees, inbag, groups = [], [], []
    subsamples = [] if all(f.subsamples is not None for f in forests) else None
    offset = 0
    for f in forests:
        trees.extend(f.trees)
        inbag.extend(f.inbag)
        groups.extend((a + offset, b + offset) for a, b in f.groups)
        if subsamples is not None:
            subsamples.extend(f.subsamples)
        offset += f.n_trees
    plan = first.plan if all(f.plan == first.plan for f in forests) else None
    params = first.tree_params if all(f.tree_params == first.tree_params for f in forests) else None
    seconds = [f.train_seconds for f in forests]
    total = None if any(s is None for s in seconds) else float(sum(seconds))
    names = first.class_names if all(f.class_names == first.class_names for f in forests) else None
    return Forest(trees, inbag, plan, params, groups, subsamples, first.n_features,
                  first.n_classes, first.n_train, total, names)


def _check_X(forest, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != forest.n_features:
        raise DataError("expected {} features, got {}".format(forest.n_features, X.shape[1]))
    return X


def predict_votes(forest, X, trees=None):
    """Per-class vote counts, shape (n_rows, n_classes)."""
    if forest.n_trees == 0:
        raise PlanError("cannot predict with an empty forest")
    X = _check_X(forest, X)
    votes = np.zeros((X.shape[0], forest.n_classes), dtype=np.int64)
    rows = np.arange(X.shape[0], dtype=np.int64)
    for t in (forest.trees if trees is None else trees):
        K.add_votes(votes, rows, t.prediction[t.apply(X)])
    return votes


def predict(forest, x):
    """Majority vote for one observation; ties go to the lowest class id."""
    return int(np.argmax(predict_votes(forest, x)[0]))


def predict_batch(forest, X, workers=1):
    """Majority vote for every row of ``X``, optionally split across threads."""
    if forest.n_trees == 0:
        raise PlanError("cannot predict with an empty forest")
    X = _check_X(forest, X)
    if X.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if workers <= 1 or X.shape[0] < 2 * workers:
        return np.argmax(predict_votes(forest, X), axis=1)
    blocks = np.array_split(np.arange(X.shape[0]), workers)
    parts = Parallel(n_jobs=workers, prefer="threads")(
        delayed(predict_votes)(forest, X[b]) for b in blocks)
    return np.argmax(np.vstack(parts), axis=1)


# -- persistence -----------------------------------------------------------------

def _pack_array(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    return _U32.pack(a.size) + a.tobytes()


def _forest_to_bytes(forest):
    meta = {
        "plan": None if forest.plan is None else forest.plan.to_dict(),
        "tree_params": None if forest.tree_params is None else asdict(forest.tree_params),
        "groups": forest.groups,
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "n_train": forest.n_train,
        "n_trees": forest.n_trees,
        "class_names": None if forest.class_names is None else list(forest.class_names),
        "has_subsamples": forest.subsamples is not None,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [FOREST_MAGIC, struct.pack("<H", FOREST_VERSION), _U32.pack(len(meta_bytes)), meta_bytes]
    for s in forest.subsamples or []:
        parts.append(_pack_array(s, "<i8"))
    for tree, rows in zip(forest.trees, forest.inbag):
        blob = tree.to_bytes()
        parts.append(_U32.pack(len(blob)))
        parts.append(blob)
        parts.append(_pack_array(rows.indices, "<i8"))
        parts.append(_pack_array(rows.weights, "<f8")[4:])
    return b"".join(parts)


def _forest_from_bytes(data):
    data = memoryview(data)
    off = 0

    def read(nbytes):
        nonlocal off
        if off + nbytes > len(data):
            raise FormatError("truncated forest file")
        chunk = data[off:off + nbytes]
        off += nbytes
        return chunk

    if bytes(read(4)) != FOREST_MAGIC:
        raise FormatError("not a forest file")
    (version,) = struct.unpack("<H", read(2))
    if version != FOREST_VERSION:
        raise FormatError("unsupported forest format version {}".format(version))
    (meta_len,) = _U32.unpack(read(4))
    meta = json.loads(bytes(read(meta_len)).decode("utf-8"))
    plan = None if meta["plan"] is None else ResamplePlan.from_dict(meta["plan"])
    params = None if meta["tree_params"] is None else TreeParams(**meta["tree_params"])
    subsamples = None
    if meta["has_subsamples"]:
        subsamples = []
        for _ in meta["groups"]:
            (size,) = _U32.unpack(read(4))
            subsamples.append(np.frombuffer(read(8 * size), dtype="<i8").astype(np.int64))
    trees, inbag = [], []
    for _ in range(meta["n_trees"]):
        (blob_len,) = _U32.unpack(read(4))
        trees.append(Tree.from_bytes(read(blob_len)))
        (size,) = _U32.unpack(read(4))
        idx = np.frombuffer(read(8 * size), dtype="<i8")
        w = np.frombuffer(read(8 * size), dtype="<f8")
        inbag.append(WeightedRows(idx, w))
    if off != len(data):
        raise FormatError("{} trailing bytes after the last tree".format(len(data) - off))
    return Forest(trees, inbag, plan, params, meta["groups"], subsamples, meta["n_features"],
                  meta["n_classes"], meta["n_train"], class_names=meta.get("class_names"))


def save_forest(forest, path):
    data = forest.to_bytes()
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load_forest(path):
    with open(path, "rb") as fh:
        return _forest_from_bytes(fh.read())

