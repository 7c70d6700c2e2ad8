"""Datasets: the simulated two-submodel problem, biased orderings, CSV ingestion.

Labels are always stored as integer class ids ``0..C-1``. For the simulated
data the original response ``Y in {-1, +1}`` maps to ``{0, 1}`` (``-1 -> 0``,
``+1 -> 1``).
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError

__all__ = [
    "Dataset",
    "SimulationSpec",
    "simulate_weston",
    "permute_unbalanced",
    "permute_xbiases",
    "read_schema",
    "load_csv",
    "iter_csv",
    "save_csv",
    "subsample",
]

ROLES = ("numeric", "categorical", "label", "ignore", "submodel")
_MISSING = {"", "na", "nan", "null", "?"}


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Read-only numeric feature matrix with integer class labels.

    Parameters
    ----------
    features : array-like of shape (n, p)
    labels : array-like of shape (n,)
        Class ids in ``0..n_classes-1``.
    submodel_tags : array-like of shape (n,), optional
        Which simulation submodel (1 or 2) produced each row.
    column_names : sequence of str, optional
    class_names : sequence of str, optional
        Original label values, indexed by class id.
    """

    features: np.ndarray
    labels: np.ndarray
    submodel_tags: np.ndarray = None
    column_names: tuple = None
    class_names: tuple = None
    n_classes: int = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix, got ndim={}".format(X.ndim))
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(
                "labels length {} does not match {} feature rows".format(y.shape, X.shape[0])
            )
        if y.size and (y.min() < 0 or not np.issubdtype(y.dtype, np.integer)):
            raise DataError("labels must be non-negative integer class ids")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        n_classes = self.n_classes
        if n_classes is None:
            n_classes = len(self.class_names) if self.class_names else int(y.max()) + 1 if y.size else 0
        if y.size and y.max() >= n_classes:
            raise DataError("label {} is not below n_classes={}".format(y.max(), n_classes))
        object.__setattr__(self, "features", _frozen(np.ascontiguousarray(X), np.float64))
        object.__setattr__(self, "labels", _frozen(y, np.int64))
        object.__setattr__(self, "n_classes", int(n_classes))
        if self.submodel_tags is not None:
            tags = np.asarray(self.submodel_tags)
            if tags.shape != (X.shape[0],):
                raise DataError("submodel_tags must have one entry per row")
            object.__setattr__(self, "submodel_tags", _frozen(tags, np.int8))
        names = self.column_names
        if names is None:
            names = tuple("X{}".format(j + 1) for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("expected {} column names, got {}".format(X.shape[1], len(names)))
        object.__setattr__(self, "column_names", tuple(names))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(str(c) for c in self.class_names))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def take(self, rows):
        """Return a new Dataset with the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.int64)
        tags = None if self.submodel_tags is None else self.submodel_tags[rows]
        return Dataset(
            self.features[rows],
            self.labels[rows],
            tags,
            self.column_names,
            self.class_names,
            self.n_classes,
        )

    def equals(self, other):
        """Exact equality of all fields (float features compared bitwise)."""
        if not isinstance(other, Dataset):
            return False
        same_tags = (self.submodel_tags is None and other.submodel_tags is None) or (
            self.submodel_tags is not None
            and other.submodel_tags is not None
            and np.array_equal(self.submodel_tags, other.submodel_tags)
        )
        return (
            self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and same_tags
            and self.column_names == other.column_names
            and self.n_classes == other.n_classes
        )


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    seed: int = 0
    class_balance: float = 0.5
    submodel1_prob: float = 0.7
    standardize: bool = True

    def __post_init__(self):
        if self.n < 0:
            raise DataError("n must be >= 0, got {}".format(self.n))
        if not 0.0 < self.class_balance < 1.0:
            raise DataError("class_balance must lie in (0, 1)")
        if not 0.0 <= self.submodel1_prob <= 1.0:
            raise DataError("submodel1_prob must lie in [0, 1]")


def simulate_weston(spec):
    """Draw ``spec.n`` rows of the seven-feature, two-submodel Gaussian problem.

    Submodel 1 (tag 1): ``X_j ~ N(j*y, 1)`` for j=1..3, ``N(0, 1)`` for j=4..6.
    Submodel 2 (tag 2): ``X_j ~ N(0, 1)`` for j=1..3, ``N((j-3)*y, 1)`` for j=4..6.
    ``X_7`` is pure noise. ``y`` is the +/-1 response; it is stored as class 1
    for +1 and class 0 for -1. With ``standardize`` every column is centred and
    divided by its population standard deviation.
    """
    if isinstance(spec, int):
        spec = SimulationSpec(n=spec)
    n = spec.n
    rng = np.random.default_rng(spec.seed)
    positive = rng.random(n) < spec.class_balance
    sub1 = rng.random(n) < spec.submodel1_prob
    X = rng.standard_normal((n, 7))
    sign = np.where(positive, 1.0, -1.0)
    for j in (1, 2, 3):
        X[sub1, j - 1] += j * sign[sub1]
        X[~sub1, j + 2] += j * sign[~sub1]
    if spec.standardize and n > 0:
        X -= X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        X /= std
    return Dataset(
        X,
        positive.astype(np.int64),
        np.where(sub1, 1, 2).astype(np.int8),
        tuple("X{}".format(j) for j in range(1, 8)),
        ("0", "1"),
        2,
    )


def permute_unbalanced(ds, p, seed=0):
    """Reorder rows so the first half holds a proportion ``p`` of class 1.

    The first ``n // 2`` rows get exactly ``floor(p * (n // 2))`` class-1 rows
    and class-0 rows for the rest, drawn without replacement from each class
    pool. Every remaining row goes to the second half, so its class-0 share is
    ``p`` exactly only when the data are perfectly balanced.
    """
    if not 0.0 < p < 1.0:
        raise DataError("p must lie in (0, 1), got {}".format(p))
    if ds.n_classes != 2:
        raise DataError("unbalanced ordering needs a two-class dataset")
    rng = np.random.default_rng(seed)
    half = ds.n // 2
    n_pos = int(math.floor(p * half))
    n_neg = half - n_pos
    pos = np.flatnonzero(ds.labels == 1)
    neg = np.flatnonzero(ds.labels == 0)
    if pos.size < n_pos or neg.size < n_neg:
        raise DataError(
            "cannot place {} class-1 and {} class-0 rows in the first half: "
            "only {} and {} available".format(n_pos, n_neg, pos.size, neg.size)
        )
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    first = rng.permutation(np.concatenate([pos[:n_pos], neg[:n_neg]]))
    second = rng.permutation(np.concatenate([pos[n_pos:], neg[n_neg:]]))
    return ds.take(np.concatenate([first, second]))


def permute_xbiases(ds, parts):
    """Split rows into ``parts`` contiguous blocks, submodel 1 first in each.

    Every block but the last holds ``size * n1 // n`` submodel-1 rows followed
    by submodel-2 rows; the last block absorbs what is left. Relative order
    inside each submodel is kept.
    """
    if ds.submodel_tags is None:
        raise DataError("x-biases ordering needs submodel tags")
    parts = int(parts)
    if parts < 1:
        raise DataError("parts must be >= 1")
    n = ds.n
    s1 = np.flatnonzero(ds.submodel_tags == 1)
    s2 = np.flatnonzero(ds.submodel_tags != 1)
    size = n // parts
    order = []
    i1 = i2 = 0
    for k in range(parts):
        if k < parts - 1:
            a = size * s1.size // n
            b = size - a
        else:
            a = s1.size - i1
            b = s2.size - i2
        order.append(s1[i1:i1 + a])
        order.append(s2[i2:i2 + b])
        i1 += a
        i2 += b
    return ds.take(np.concatenate(order) if order else np.empty(0, np.int64))


def read_schema(path):
    """Parse a ``column = role`` schema file (``#`` starts a comment)."""
    schema = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError("schema line {}: expected 'column = role'".format(lineno))
            col, role = (s.strip() for s in line.split("=", 1))
            if role not in ROLES:
                raise DataError("schema line {}: unknown role {!r}".format(lineno, role))
            schema[col] = role
    return schema


def _resolve_schema(header, schema, label):
    if schema is None:
        schema = {}
        for col in header:
            if col == label:
                schema[col] = "label"
            elif col == "submodel":
                schema[col] = "submodel"
            else:
                schema[col] = "numeric"
    elif not isinstance(schema, dict):
        schema = read_schema(schema)
    for col in schema:
        if col not in header:
            raise DataError("schema column {!r} is not in the file header".format(col))
    for col in header:
        if col not in schema:
            raise DataError("file column {!r} has no role in the schema".format(col))
    labels = [c for c in header if schema[c] == "label"]
    if len(labels) != 1:
        raise DataError("schema must declare exactly one label column, got {}".format(len(labels)))
    return schema


def _read_rows(path, schema, label):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file, no header line") from None
        schema = _resolve_schema(header, schema, label)
        for rowno, row in enumerate(reader, 1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    "expected {} fields, got {}".format(len(header), len(row)), row=rowno
                )
            yield header, schema, rowno, [v.strip() for v in row]


def load_csv(path, schema=None, label="y"):
    """Load a CSV file into a :class:`Dataset`.

    Parameters
    ----------
    path : str or path-like
    schema : dict, str or None
        Column roles (``numeric``, ``categorical``, ``label``, ``ignore``,
        ``submodel``), either as a mapping or a schema-file path. When None,
        ``label`` is the label column, a column named ``submodel`` carries
        submodel tags and everything else is numeric.
    label : str

    Returns
    -------
    dataset : Dataset
    n_dropped : int
        Rows skipped because a used field was missing.
    """
    raw = []
    header = schema_map = None
    dropped = 0
    for header, schema_map, rowno, row in _read_rows(path, schema, label):
        used = [v for c, v in zip(header, row) if schema_map[c] != "ignore"]
        if any(v.lower() in _MISSING for v in used):
            dropped += 1
            continue
        raw.append((rowno, row))
    if header is None:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
        if not first.strip():
            raise DataError("empty file, no header line")
        header = [h.strip() for h in next(csv.reader([first]))]
        schema_map = _resolve_schema(header, schema, label)

    feature_cols = [j for j, c in enumerate(header) if schema_map[c] in ("numeric", "categorical")]
    label_col = next(j for j, c in enumerate(header) if schema_map[c] == "label")
    tag_cols = [j for j, c in enumerate(header) if schema_map[c] == "submodel"]

    levels = {}
    for j in feature_cols:
        if schema_map[header[j]] == "categorical":
            levels[j] = {v: k for k, v in enumerate(sorted({row[j] for _, row in raw}))}
    class_names = sorted({row[label_col] for _, row in raw})
    class_index = {v: k for k, v in enumerate(class_names)}

    X = np.empty((len(raw), len(feature_cols)), dtype=np.float64)
    tags = np.empty(len(raw), dtype=np.int8) if tag_cols else None
    for i, (rowno, row) in enumerate(raw):
        for k, j in enumerate(feature_cols):
            if j in levels:
                X[i, k] = levels[j][row[j]]
            else:
                try:
                    X[i, k] = float(row[j])
                except ValueError:
                    raise DataError(
                        "column {!r}: non-numeric value {!r}".format(header[j], row[j]), row=rowno
                    ) from None
                if not math.isfinite(X[i, k]):
                    raise DataError("column {!r}: non-finite value".format(header[j]), row=rowno)
        if tags is not None:
            try:
                tags[i] = int(row[tag_cols[0]])
            except ValueError:
                raise DataError("submodel tag {!r} is not an integer".format(row[tag_cols[0]]), row=rowno) from None
    y = np.array([class_index[row[label_col]] for _, row in raw], dtype=np.int64)
    ds = Dataset(
        X,
        y,
        tags,
        tuple(header[j] for j in feature_cols),
        tuple(class_names),
        max(len(class_names), 1) if raw else 0,
    )
    return ds, dropped


def iter_csv(path, schema=None, label="y", class_names=None):
    """Yield ``(x, y)`` pairs from a CSV file one row at a time.

    Rows with a missing field are skipped. ``class_names`` fixes the label
    encoding; when omitted the label column is scanned once up front so that
    class ids follow the same lexicographic order as :func:`load_csv`.
    """
    if class_names is None:
        names = set()
        for header, schema_map, _, row in _read_rows(path, schema, label):
            j = next(k for k, c in enumerate(header) if schema_map[c] == "label")
            if row[j].lower() not in _MISSING:
                names.add(row[j])
        class_names = sorted(names)
    class_index = {v: k for k, v in enumerate(class_names)}
    for header, schema_map, rowno, row in _read_rows(path, schema, label):
        used = [v for c, v in zip(header, row) if schema_map[c] != "ignore"]
        if any(v.lower() in _MISSING for v in used):
            continue
        x = []
        y = None
        for c, v in zip(header, row):
            role = schema_map[c]
            if role == "numeric":
                try:
                    x.append(float(v))
                except ValueError:
                    raise DataError("column {!r}: non-numeric value {!r}".format(c, v), row=rowno) from None
            elif role == "categorical":
                raise DataError("categorical columns are not supported in streams", row=rowno)
            elif role == "label":
                if v not in class_index:
                    raise DataError("unknown label {!r}".format(v), row=rowno)
                y = class_index[v]
        yield np.array(x, dtype=np.float64), y


def save_csv(ds, path, label="y"):
    """Write a Dataset as CSV; floats use 17 significant digits so they reload exactly.

    Returns the number of bytes written.
    """
    names = ds.class_names or tuple(str(c) for c in range(ds.n_classes))
    cols = list(ds.column_names) + [label]
    if ds.submodel_tags is not None:
        cols.append("submodel")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(ds.n):
            fields = ["%.17g" % v for v in ds.features[i]]
            fields.append(names[ds.labels[i]])
            if ds.submodel_tags is not None:
                fields.append(str(int(ds.submodel_tags[i])))
            fh.write(",".join(fields) + "\n")
        return fh.tell()


def subsample(ds, m, seed=0):
    """Draw ``m`` distinct row indices uniformly without replacement."""
    n = ds if isinstance(ds, (int, np.integer)) else ds.n
    if not 0 <= m <= n:
        raise DataError("cannot draw m={} rows out of n={}".format(m, n))
    rng = np.random.default_rng(seed)
    return rng.choice(n, size=int(m), replace=False).astype(np.int64)
