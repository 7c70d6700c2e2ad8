"""Command-line harness: ``bigrf generate|train|stream|bench|predict``.

Settings come from an optional ``key = value`` file (``--config``) and from
``--key value`` flags; a flag always wins over the file. Every command that
evaluates something appends one comma-separated record per result to the
``report`` file (header written once) and prints a readable table.
"""

import argparse
import csv
import dataclasses
import re
import statistics
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from .data import (Dataset, SimulationSpec, _resolve_schema, iter_csv, load_csv, permute_unbalanced,
                   permute_xbiases, save_csv, simulate_weston)
from .ensemble import VARIANTS, make_plan
from .evaluation import evaluate
from .exceptions import BigRFError, DataError, PlanError
from .forest import FOREST_MAGIC, load_forest, predict_votes, save_forest, train
from .online import OnlineForest, OnlineForestParams
from .tree import TreeParams

__all__ = ["ExperimentConfig", "REPORT_COLUMNS", "main", "parse_config_file", "resolve_config"]


@dataclass
class ExperimentConfig:
    """Every knob of an experiment. ``None`` means "use the command default"."""

    # data
    data: str = "simulate"
    schema: str = None
    label: str = "y"
    n: int = 100_000
    data_seed: int = 1
    bias: str = "none"
    test: str = None
    test_n: int = 0
    test_seed: int = None
    # model
    variant: str = "seq"
    Q: int = None
    K: int = None
    q: int = None
    m: int = None
    f: float = None
    mtry: int = None
    max_leaves: int = 500
    max_depth: int = None
    min_node_weight: float = 2.0
    split_mode: str = "exhaustive"
    S: int = 10
    lam: float = 1.0
    alpha: float = 50.0
    beta: float = 0.01
    two_stream: float = None
    range_lo: float = -6.0
    range_hi: float = 6.0
    # run
    seed: int = 0
    workers: int = 1
    err_forest: bool = True
    vi: bool = False
    # outputs
    out: str = None
    model: str = None
    report: str = None
    checkpoint: str = None
    checkpoint_every: int = 0
    report_every: int = 0
    # bench
    sweep: str = None
    values: str = None
    repeats: int = 1


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_OPTIONAL_NONE = {name for name, f in _FIELDS.items() if f.default is None}
_BATCH_DEFAULTS = {"Q": 100, "max_depth": 0}
_STREAM_DEFAULTS = {"Q": 25, "max_depth": 10}

REPORT_COLUMNS = (
    "command", "data", "n", "p", "data_seed", "bias", "test", "test_n", "test_seed",
    "variant", "Q", "K", "q", "m", "f", "mtry", "max_leaves", "max_depth", "min_node_weight",
    "split_mode", "S", "lam", "alpha", "beta", "two_stream", "seed", "workers",
    "sweep", "value", "repeat", "rows_seen", "n_dropped",
    "err_forest", "bd_err_forest", "err_test", "oob_estimate", "mean_leaf_gini",
    "n_trees", "n_leaves", "n_distinct_inbag", "vi", "train_seconds", "eval_seconds",
)


# -- config ---------------------------------------------------------------------------

def _convert(name, text):
    if name not in _FIELDS:
        raise DataError("unknown setting {!r}".format(name))
    text = text.strip()
    if name in _OPTIONAL_NONE and text.lower() in ("", "none"):
        return None
    kind = type(_FIELDS[name].default) if _FIELDS[name].default is not None else None
    if kind is None:
        kind = {"Q": int, "K": int, "q": int, "m": int, "mtry": int, "max_depth": int,
                "test_seed": int, "f": float, "two_stream": float}.get(name, str)
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        return kind(text)
    except ValueError:
        raise DataError("setting {!r}: cannot parse {!r} as {}".format(name, text, kind.__name__)) from None


def parse_config_file(path):
    """Read ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError("{}:{}: expected key = value".format(path, lineno))
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                out[key] = _convert(key, value)
            except DataError as exc:
                raise DataError("{}:{}: {}".format(path, lineno, exc)) from None
    return out


_BIAS_RE = re.compile(r"^(none|unbalanced\(([0-9.eE+-]+)\)|x-?biases\((\d+)\))$")


def parse_bias(text):
    """``none``, ``unbalanced(p)`` or ``x-biases(P)`` -> (kind, parameter)."""
    m = _BIAS_RE.match(text.replace(" ", "").lower())
    if m is None:
        raise DataError("bias must be none, unbalanced(p) or x-biases(P), got {!r}".format(text))
    if m.group(2) is not None:
        p = float(m.group(2))
        if not 0.0 <= p <= 1.0:
            raise DataError("unbalanced(p) needs 0 <= p <= 1")
        return "unbalanced", p
    if m.group(3) is not None:
        return "x-biases", int(m.group(3))
    return "none", None


def resolve_config(cfg, command):
    """Fill command defaults and check the variant's constraints.

    ``bench`` only gets the generic checks; each sweep cell is resolved as a
    ``train`` config once the swept value is in place.
    """
    cfg = dataclasses.replace(cfg)
    defaults = _STREAM_DEFAULTS if command == "stream" else _BATCH_DEFAULTS
    if cfg.max_depth is None:
        cfg.max_depth = defaults["max_depth"]
    if cfg.test_seed is None:
        cfg.test_seed = cfg.data_seed + 1
    parse_bias(cfg.bias)
    if cfg.workers < 1:
        raise PlanError("workers must be >= 1")
    if cfg.repeats < 1:
        raise PlanError("repeats must be >= 1")
    if command == "stream":
        cfg.variant = "online"
    if command in ("stream", "bench", "generate", "predict"):
        if cfg.Q is None and command != "bench":
            cfg.Q = defaults["Q"]
        return cfg
    if cfg.variant not in VARIANTS:
        raise PlanError("unknown variant {!r}; expected one of {}".format(
            cfg.variant, ", ".join(sorted(VARIANTS))))
    scheme = VARIANTS[cfg.variant]
    if scheme in ("blb", "dac"):
        if cfg.K is None:
            raise PlanError("variant {} needs K".format(cfg.variant))
        if cfg.q is None:
            Q = defaults["Q"] if cfg.Q is None else cfg.Q
            if Q % cfg.K:
                raise PlanError("Q={} is not a multiple of K={}".format(Q, cfg.K))
            cfg.q = Q // cfg.K
        elif cfg.Q is not None and cfg.K * cfg.q != cfg.Q:
            raise PlanError("K*q = {} disagrees with Q = {}".format(cfg.K * cfg.q, cfg.Q))
        cfg.Q = cfg.K * cfg.q
    elif cfg.K is not None or cfg.q is not None:
        raise PlanError("K and q only apply to the blb and dac variants")
    if cfg.Q is None:
        cfg.Q = defaults["Q"]
    if scheme in ("subsample", "moon", "blb"):
        if cfg.m is None and cfg.f is None:
            raise PlanError("variant {} needs m or f".format(cfg.variant))
        if cfg.m is not None and cfg.f is not None:
            raise PlanError("give m or f, not both")
    elif cfg.m is not None or cfg.f is not None:
        raise PlanError("m and f only apply to the samp, moon and blb variants")
    return cfg


# -- data -----------------------------------------------------------------------------

def _apply_bias(ds, bias, seed):
    kind, arg = parse_bias(bias)
    if kind == "unbalanced":
        return permute_unbalanced(ds, arg, seed=seed)
    if kind == "x-biases":
        return permute_xbiases(ds, arg)
    return ds


def load_training(cfg):
    """Return ``(dataset, n_dropped)`` with the configured bias applied."""
    if cfg.data == "simulate":
        ds, dropped = simulate_weston(SimulationSpec(cfg.n, seed=cfg.data_seed)), 0
    else:
        ds, dropped = load_csv(cfg.data, cfg.schema, cfg.label)
        cfg.n = ds.n
    return _apply_bias(ds, cfg.bias, cfg.data_seed), dropped


def load_test(cfg):
    if cfg.test is not None:
        return load_csv(cfg.test, cfg.schema, cfg.label)[0]
    if cfg.test_n > 0:
        return simulate_weston(SimulationSpec(cfg.test_n, seed=cfg.test_seed))
    return None


# -- reports --------------------------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.ndarray):
        return ";".join(repr(float(v)) for v in value)
    return str(value)


def make_record(cfg, command, **metrics):
    record = {c: None for c in REPORT_COLUMNS}
    record.update({k: getattr(cfg, k) for k in REPORT_COLUMNS if hasattr(cfg, k)})
    record["command"] = command
    for key, value in metrics.items():
        if key not in record:
            raise KeyError(key)
        record[key] = value
    return record


def append_records(path, records):
    """Append records to a report file, writing the header only for a new file."""
    header = ",".join(REPORT_COLUMNS)
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().rstrip("\n")
    except FileNotFoundError:
        first = ""
    if first and first != header:
        raise DataError("{} has a different report header; refusing to append".format(path))
    with open(path, "a", encoding="utf-8") as fh:
        if not first:
            fh.write(header + "\n")
        for rec in records:
            fh.write(",".join(_fmt(rec[c]).replace(",", ";") for c in REPORT_COLUMNS) + "\n")


def format_table(records, columns):
    """Render records as an aligned text table."""
    rows = [[_short(rec[c]) for c in columns] for rec in records]
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _short(value):
    if value is None:
        return "-"
    if isinstance(value, (float, np.floating)):
        return "{:.6g}".format(value)
    if isinstance(value, np.ndarray):
        return " ".join("{:.3g}".format(v) for v in value)
    return str(value)


_TABLE = ("variant", "Q", "K", "q", "m", "err_forest", "bd_err_forest", "err_test",
          "mean_leaf_gini", "n_leaves", "train_seconds")


# -- commands -------------------------------------------------------------------------

def cmd_generate(cfg):
    if cfg.out is None:
        raise DataError("generate needs out=<path>")
    if cfg.data != "simulate":
        raise DataError("generate only simulates data")
    ds, _ = load_training(cfg)
    nbytes = save_csv(ds, cfg.out, cfg.label)
    print("wrote {} rows, {} bytes to {}".format(ds.n, nbytes, cfg.out))
    return ds


def _tree_params(cfg):
    return TreeParams(mtry=cfg.mtry, max_leaves=cfg.max_leaves, max_depth=cfg.max_depth,
                      min_node_weight=cfg.min_node_weight, split_mode=cfg.split_mode,
                      n_candidates=cfg.S)


def _train_record(cfg, ds, test_ds, dropped, command, **extra):
    plan = make_plan(cfg.variant, ds.n, cfg.Q, cfg.K, cfg.q, cfg.m, cfg.f, cfg.lam, cfg.seed)
    params = _tree_params(cfg)
    cfg.m = plan.m
    cfg.mtry = params.resolved_mtry(ds.p)
    forest = train(ds, plan, params, workers=cfg.workers)
    rep = evaluate(forest, ds, test_ds, compute_err_forest=cfg.err_forest, compute_vi=cfg.vi,
                   vi_seed=cfg.seed, workers=cfg.workers)
    rec = make_record(cfg, command, p=ds.p, n_dropped=dropped, err_forest=rep.err_forest,
                      bd_err_forest=rep.bd_err_forest, err_test=rep.err_test,
                      mean_leaf_gini=rep.mean_leaf_gini, n_trees=rep.n_trees,
                      n_leaves=rep.n_leaves, n_distinct_inbag=rep.n_distinct_inbag, vi=rep.vi,
                      train_seconds=rep.train_seconds, eval_seconds=rep.eval_seconds, **extra)
    return forest, rec


def cmd_train(cfg):
    ds, dropped = load_training(cfg)
    test_ds = load_test(cfg)
    forest, rec = _train_record(cfg, ds, test_ds, dropped, "train")
    if cfg.model:
        save_forest(forest, cfg.model)
    if cfg.report:
        append_records(cfg.report, [rec])
    print(format_table([rec], _TABLE))
    return rec


def cmd_bench(cfg):
    if cfg.sweep not in ("K", "q", "f", "m", "Q"):
        raise DataError("bench needs sweep = K, q, f, m or Q")
    if not cfg.values:
        raise DataError("bench needs values = v1;v2;... (or v1:v2:...)")
    values = [_convert(cfg.sweep, v) for v in re.split(r"[;:| ]+", cfg.values.strip()) if v]
    ds, dropped = load_training(cfg)
    test_ds = load_test(cfg)
    records = []
    for value in values:
        cell = dataclasses.replace(cfg, **{cfg.sweep: value})
        if cfg.sweep in ("K", "q") and cfg.q is not None:
            cell.Q = None  # K*q defines the forest size
        if cfg.sweep == "f":
            cell.m = None
        elif cfg.sweep == "m":
            cell.f = None
        cell = resolve_config(cell, "train")
        for r in range(cfg.repeats):
            _, rec = _train_record(dataclasses.replace(cell), ds, test_ds, dropped, "bench",
                                   sweep=cfg.sweep, value=value, repeat=r)
            records.append(rec)
            if cfg.report:
                append_records(cfg.report, [rec])
    summary = []
    for value in values:
        cell = [r for r in records if r["value"] == value]
        row = dict(cell[0])
        row["train_seconds"] = statistics.median(r["train_seconds"] for r in cell)
        summary.append(row)
    print(format_table(summary, ("sweep", "value") + _TABLE))
    return records


def _stream_source(cfg):
    """Return ``(p, class_names, iterator of (x, y))`` for the configured stream."""
    if cfg.data == "simulate":
        ds, _ = load_training(cfg)
        rows = ((ds.features[i], int(ds.labels[i])) for i in range(ds.n))
        return ds.p, ds.class_names, rows
    with open(cfg.data, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.strip():
        raise DataError("empty file, no header line")
    header = [h.strip() for h in first.split(",")]
    roles = _resolve_schema(header, cfg.schema, cfg.label)
    p = sum(1 for c in header if roles[c] == "numeric")
    names = set()
    label_col = header.index(next(c for c in header if roles[c] == "label"))
    with open(cfg.data, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if len(row) > label_col and row[label_col].strip():
                names.add(row[label_col].strip())
    class_names = tuple(sorted(names))
    return p, class_names, iter_csv(cfg.data, cfg.schema, cfg.label, class_names)


def cmd_stream(cfg):
    if cfg.bias != "none" and cfg.data != "simulate":
        raise DataError("bias orderings apply to simulated streams only")
    p, class_names, rows = _stream_source(cfg)
    params = OnlineForestParams(n_trees=cfg.Q, n_candidates=cfg.S, lam=cfg.lam,
                                max_depth=cfg.max_depth, alpha=cfg.alpha, beta=cfg.beta,
                                two_stream=cfg.two_stream, n_classes=max(len(class_names or ()), 2),
                                seed=cfg.seed)
    ranges = np.tile([cfg.range_lo, cfg.range_hi], (p, 1))
    forest = OnlineForest(params, ranges)
    records = []
    seconds = 0.0
    seen = 0

    def snapshot(**extra):
        oob = forest.oob_estimate()
        return make_record(cfg, "stream", p=p, rows_seen=seen, oob_estimate=oob.rate,
                           n_trees=cfg.Q, n_leaves=forest.n_leaves(), train_seconds=seconds, **extra)

    for x, y in rows:
        t0 = time.perf_counter()
        forest.update(x, y)
        seconds += time.perf_counter() - t0
        seen += 1
        if cfg.checkpoint and cfg.checkpoint_every and seen % cfg.checkpoint_every == 0:
            forest.checkpoint(cfg.checkpoint)
        if cfg.report_every and seen % cfg.report_every == 0:
            rec = snapshot()
            records.append(rec)
            if cfg.report:
                append_records(cfg.report, [rec])
            print("rows={} oob={}".format(seen, _short(rec["oob_estimate"])), flush=True)
    if cfg.checkpoint:
        forest.checkpoint(cfg.checkpoint)
    test_ds = load_test(cfg)
    t0 = time.perf_counter()
    final_err = None
    if test_ds is not None:
        final_err = float(np.mean(forest.predict(test_ds.features) != test_ds.labels))
    rec = snapshot(err_test=final_err, eval_seconds=time.perf_counter() - t0)
    records.append(rec)
    if cfg.report:
        append_records(cfg.report, [rec])
    print(format_table([rec], ("variant", "Q", "S", "max_depth", "rows_seen", "oob_estimate",
                               "err_test", "n_leaves", "train_seconds")))
    return forest, records


def cmd_predict(cfg):
    if cfg.model is None:
        raise DataError("predict needs model=<path>")
    if cfg.data == "simulate":
        raise DataError("predict needs data=<csv path>")
    with open(cfg.model, "rb") as fh:
        magic = fh.read(4)
    if magic == FOREST_MAGIC:
        model = load_forest(cfg.model)
        names = model.class_names
        predict = lambda X: np.argmax(predict_votes(model, X), axis=1)  # noqa: E731
    else:
        model = OnlineForest.load(cfg.model)
        names = None
        predict = model.predict
    ds, _ = load_csv(cfg.data, cfg.schema, cfg.label) if _has_label(cfg) else _features_only(cfg)
    pred = predict(ds.features) if ds.n else np.empty(0, dtype=np.int64)
    lines = ["prediction"] + [names[k] if names else str(k) for k in pred]
    text = "\n".join(lines) + "\n"
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return pred


def _has_label(cfg):
    with open(cfg.data, encoding="utf-8") as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    return cfg.label in header or cfg.schema is not None


def _features_only(cfg):
    """Load an unlabeled CSV: every column except ``submodel`` is a numeric feature."""
    with open(cfg.data, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        keep = [j for j, c in enumerate(header) if c != "submodel"]
        X = []
        for rowno, row in enumerate(reader, 1):
            if not any(v.strip() for v in row):
                continue
            try:
                X.append([float(row[j]) for j in keep])
            except (ValueError, IndexError):
                raise DataError("malformed feature row", row=rowno) from None
    X = np.array(X, dtype=np.float64).reshape(-1, len(keep))
    return Dataset(X, np.zeros(X.shape[0], dtype=np.int64), n_classes=1), 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "stream": cmd_stream,
    "bench": cmd_bench,
    "predict": cmd_predict,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="bigrf", description="Random forests for big data.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value settings file (flags override it)")
        for key in _FIELDS:
            opts = ["--" + key]
            if "_" in key:
                opts.append("--" + key.replace("_", "-"))
            p.add_argument(*opts, dest=key, default=argparse.SUPPRESS, metavar="VALUE")
    return parser


def config_from_args(args):
    """Merge defaults, the config file and flags (in that order of precedence)."""
    settings = {}
    if getattr(args, "config", None):
        settings.update(parse_config_file(args.config))
    for key in _FIELDS:
        if key in vars(args):
            settings[key] = _convert(key, getattr(args, key))
    return ExperimentConfig(**settings)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(config_from_args(args), args.command)
        COMMANDS[args.command](cfg)
    except (BigRFError, OSError, ValueError, KeyError) as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
