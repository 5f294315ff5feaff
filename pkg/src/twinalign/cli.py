"""Command-line driver: ``twinalign <command> --config run.json``.

Commands
--------
split      write the domain pair, anchors and train/test partition
align      run an aligner on the full pair and write the embedding
train      train twin autoencoders on the training rows of an embedding
extend     encode new points of one domain into the shared space
crossmap   map points of one domain into the other's feature space
eval       run one experiment harness and write its report
plot       render a report as SVG plus the CSV behind the chart

Exit codes: 0 success, 2 bad config, 3 bad data, 4 numerical failure,
5 provenance mismatch.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .aligners import ALIGNERS, AlignerConfig, align, read_embedding, write_embedding
from .data import BUILTIN_DATASETS, load_builtin, load_dataset, make_split, sample_anchors, train_test_partition, write_pair
from .evaluation import (
    COLUMNS,
    LAMBDA_GRID,
    CellCache,
    EvalConfig,
    ExperimentReport,
    run_baseline_comparison,
    run_embedding_fit,
    run_lambda_sweep,
    run_mapping_comparison,
)
from .exceptions import DataError, ProvenanceError
from .provenance import chain, hash_array, hash_file, hash_json
from .twinae import TrainConfig, cross_map, encode, init_twin, load_model, save_model, train_twin

log = logging.getLogger("twinalign")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_PROVENANCE = 2, 3, 4, 5
OUTPUT_ROOT_ENV = "TWINALIGN_OUTPUT_ROOT"
SPLITS = ["random", "skewed", "even", "distort", "rotation"]

_number = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "twinalign run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset"],
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "seed": {"type": "integer", "minimum": 0},
        "dataset": {"type": "string", "minLength": 1},
        "label_column": {"type": ["string", "null"]},
        "delimiter": {"type": "string", "minLength": 1, "maxLength": 1},
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "strategy": {"enum": SPLITS},
                "noise_sigma": {"type": "number", "minimum": 0},
            },
        },
        "anchor_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "stratify": {"type": "boolean"},
        "aligner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": sorted(ALIGNERS)},
                "dim": _pos_int,
                "k": _pos_int,
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "mu": {"type": "number", "exclusiveMinimum": 0},
                "t": {"type": "integer", "minimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "eig_tol": {"type": "number", "exclusiveMinimum": 0},
                "procrustes_scale": {"type": "boolean"},
                "sinkhorn_tol": {"type": "number", "exclusiveMinimum": 0},
                "sinkhorn_max_iter": _pos_int,
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hidden": {"type": "array", "items": _pos_int},
                "activation": {"enum": ["tanh", "relu"]},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "optimizer": {"enum": ["adam", "sgd_momentum"]},
                "batch_size": {"type": ["integer", "null"], "minimum": 1},
                "lam": {"type": "number", "minimum": 0},
                "grad_clip": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "beta1": _number,
                "beta2": _number,
                "momentum": _number,
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "datasets": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "splits": {"type": "array", "items": {"enum": SPLITS}, "minItems": 1},
                "methods": {"type": "array", "items": {"enum": sorted(ALIGNERS)}, "minItems": 1},
                "lambdas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "n_perm": _pos_int,
                "knn_k": _pos_int,
            },
        },
        "output_dir": {"type": "string", "minLength": 1},
    },
}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


@contextlib.contextmanager
def stage(name):
    """Translate library failures inside ``name`` into exit codes."""
    try:
        yield
    except CliError:
        raise
    except ProvenanceError as exc:
        raise CliError(EXIT_PROVENANCE, f"{name}: {exc}") from exc
    except (DataError, FileNotFoundError, KeyError) as exc:
        raise CliError(EXIT_DATA, f"{name}: {exc}") from exc
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise CliError(EXIT_NUMERIC, f"numerical failure in stage '{name}': {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_DATA, f"{name}: {exc}") from exc


# --- configuration -------------------------------------------------------------

def load_config(path):
    """Read and validate a run configuration; exits with code 2 on any problem."""
    import jsonschema

    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(EXIT_CONFIG, f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise CliError(EXIT_CONFIG, f"{path}: config key '{where}': {err.message}")
    raw.setdefault("seed", 0)
    raw.setdefault("name", Path(path).stem)
    try:
        cfg = RunConfig(raw)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: {exc}") from None
    return cfg


class RunConfig:
    """Validated configuration with resolved library config objects."""

    def __init__(self, raw):
        self.raw = raw
        self.name = raw["name"]
        self.seed = int(raw["seed"])
        split = raw.get("split", {})
        self.strategy = split.get("strategy", "random")
        self.noise_sigma = float(split.get("noise_sigma", 0.5))
        aligner = dict(raw.get("aligner", {}))
        self.method = aligner.pop("method", "MASH")
        self.aligner = AlignerConfig(**aligner)
        model = raw.get("model", {})
        self.hidden = tuple(model.get("hidden", (64, 32)))
        self.activation = model.get("activation", "tanh")
        self.train = TrainConfig(**{**raw.get("train", {}), "seed": self.seed})
        ev = raw.get("eval", {})
        self.eval = EvalConfig(
            anchor_fraction=float(raw.get("anchor_fraction", 0.1)),
            test_fraction=float(raw.get("test_fraction", 0.2)),
            stratify=bool(raw.get("stratify", True)),
            noise_sigma=self.noise_sigma,
            hidden=self.hidden,
            activation=self.activation,
            aligner=self.aligner,
            train=self.train,
            n_perm=int(ev.get("n_perm", 999)),
            knn_k=int(ev.get("knn_k", 5)),
        )
        self.eval_datasets = ev.get("datasets", [raw["dataset"]])
        self.eval_splits = ev.get("splits", [self.strategy])
        self.eval_methods = ev.get("methods", [self.method])
        self.eval_lambdas = [float(v) for v in ev.get("lambdas", LAMBDA_GRID)]
        self.eval_seeds = ev.get("seeds", [self.seed])

    def output_dir(self):
        out = Path(self.raw.get("output_dir", Path("out") / self.name))
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out

    def load(self, source=None):
        source = source or self.raw["dataset"]
        if source in BUILTIN_DATASETS:
            return load_builtin(source)
        return load_dataset(source, label_column=self.raw.get("label_column"),
                            delimiter=self.raw.get("delimiter", ","))


# --- shared pipeline steps -------------------------------------------------------

class Prepared:
    """Dataset, pair, anchors and partition rebuilt deterministically from a config."""

    def __init__(self, cfg):
        with stage("load"):
            self.dataset = cfg.load()
        with stage("split"):
            self.pair = make_split(self.dataset, cfg.strategy, cfg.seed, noise_sigma=cfg.noise_sigma)
            self.anchors = sample_anchors(self.pair, cfg.eval.anchor_fraction, cfg.seed)
            self.part = train_test_partition(self.pair, self.anchors, cfg.eval.test_fraction, cfg.seed,
                                             stratify=cfg.eval.stratify)
        labels = () if self.dataset.labels is None else (np.asarray(self.dataset.labels).astype("U64"),)
        self.dataset_hash = hash_array(self.dataset.features, *labels)
        self.pair_hash = hash_array(self.pair.X, self.pair.Y)
        self.anchors_hash = hash_array(self.anchors.pairs)
        self.partition_hash = hash_json({k: v for k, v in self.part.index_maps.items()})
        self.chain = [
            {"stage": "dataset", "hash": self.dataset_hash},
            {"stage": "split", "hash": chain(self.dataset_hash, self.pair_hash)},
        ]
        self.chain.append({"stage": "anchors", "hash": chain(self.chain[-1]["hash"],
                                                             [self.anchors_hash, self.partition_hash])})

    def extend_chain(self, stage_name, payload, base=None):
        base = list(self.chain if base is None else base)
        base.append({"stage": stage_name, "hash": chain(base[-1]["hash"], payload)})
        return base


def _write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n", encoding="utf-8")
    return path


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_matrix(path, M, header, index=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow((["row_index"] if index is not None else []) + header)
        for i, row in enumerate(M):
            w.writerow(([int(index[i])] if index is not None else []) + [repr(float(v)) for v in row])
    return path


def _read_points(path, d):
    import pandas as pd

    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    frame = frame.drop(columns=[c for c in ("row_index",) if c in frame.columns])
    try:
        M = frame.to_numpy(dtype=float)
    except ValueError:
        raise DataError(f"{path}: non-numeric values") from None
    if M.ndim != 2 or M.shape[1] != d:
        raise DataError(f"{path}: expected {d} feature columns, found {M.shape[1]}")
    if not np.all(np.isfinite(M)):
        raise DataError(f"{path}: missing or non-finite values")
    return M


def _check_embedding(cfg, prep, emb_path):
    with stage("load embedding"):
        emb = read_embedding(emb_path)
    meta_path = Path(emb_path).with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    prov = meta.get("provenance", {})
    if meta.get("embedding_hash") and meta["embedding_hash"] != emb.hash:
        raise CliError(EXIT_PROVENANCE, f"{emb_path}: contents do not match the recorded embedding hash")
    for key, expected in (("pair_hash", prep.pair_hash), ("anchors_hash", prep.anchors_hash)):
        if key in prov and prov[key] != expected:
            raise CliError(EXIT_PROVENANCE,
                           f"{emb_path}: {key} {prov[key][:12]} does not match this config's {expected[:12]}")
    return emb, meta


def _check_model(prep, model, path):
    prov = model.provenance
    for key, expected in (("pair_hash", prep.pair_hash), ("anchors_hash", prep.anchors_hash)):
        if key in prov and prov[key] != expected:
            raise CliError(EXIT_PROVENANCE, f"{path}: model was trained on a different {key.split('_')[0]}")


# --- commands ----------------------------------------------------------------------

def cmd_split(args, cfg):
    prep = Prepared(cfg)
    out = cfg.output_dir() / "split"
    maps = {k: v.tolist() for k, v in prep.part.index_maps.items()}
    write_pair(prep.pair, out, prep.anchors,
               extra={"partition": maps, "provenance": {"chain": prep.chain, "pair_hash": prep.pair_hash,
                                                        "anchors_hash": prep.anchors_hash}})
    log.info("wrote %s (%d rows, %d anchors, %d test rows)", out, prep.pair.n_x, len(prep.anchors),
             len(maps["x_test"]))
    return out


def cmd_align(args, cfg):
    prep = Prepared(cfg)
    with stage(f"align ({cfg.method})"):
        emb = align(cfg.method, prep.pair, prep.anchors, cfg.aligner)
    emb.provenance["chain"] = prep.extend_chain("embedding", emb.hash)
    path = write_embedding(emb, cfg.output_dir() / "embedding.csv")
    log.info("wrote %s (%s, %d+%d rows)", path, cfg.method, emb.E_x.shape[0], emb.E_y.shape[0])
    return path


def cmd_train(args, cfg):
    prep = Prepared(cfg)
    emb_path = Path(args.embedding or cfg.output_dir() / "embedding.csv")
    emb, meta = _check_embedding(cfg, prep, emb_path)
    with stage("train"):
        sub = emb.subset(prep.part.index_maps["x_train"], prep.part.index_maps["y_train"])
        model = init_twin(prep.pair.X.shape[1], prep.pair.Y.shape[1], emb.dim, cfg.hidden, cfg.seed,
                          cfg.activation, cfg.train.lam)
        model, history = train_twin(model, prep.part.train, sub, prep.part.anchors, cfg.train)
    base = meta.get("provenance", {}).get("chain") or prep.extend_chain("embedding", emb.hash)
    model.provenance.update(pair_hash=prep.pair_hash, anchors_hash=prep.anchors_hash,
                            partition_hash=prep.partition_hash, method=emb.method)
    weights = hash_array(*[p for _, p in model.parameters()])
    model.provenance["chain"] = prep.extend_chain("model", weights, base)
    out = cfg.output_dir()
    save_model(model, out / "model.json")
    with open(out / "history.csv", "w", newline="", encoding="utf-8") as fh:
        cols = ["epoch", "recon_x", "recon_y", "align_x", "align_y", "anchor_x", "anchor_y", "lam", "total"]
        w = csv.writer(fh)
        w.writerow(cols)
        for epoch, rep in enumerate(history):
            row = rep.as_row()
            w.writerow([epoch] + [repr(float(row[c])) for c in cols[1:]])
    log.info("wrote %s and %s (%d epochs)", out / "model.json", out / "history.csv", len(history))
    return out / "model.json"


def _load_checked_model(cfg, prep, path):
    path = Path(path or cfg.output_dir() / "model.json")
    with stage("load model"):
        try:
            model = load_model(path)
        except (json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{path}: not a model file ({exc})") from None
    _check_model(prep, model, path)
    return model, path


def _points(args, prep, domain):
    if args.input:
        with stage("read input"):
            d = prep.pair.X.shape[1] if domain == "X" else prep.pair.Y.shape[1]
            points = _read_points(args.input, d)
        return points, np.arange(points.shape[0])
    rows = prep.part.index_maps[f"{domain.lower()}_test"]
    return (prep.part.test.X if domain == "X" else prep.part.test.Y), rows


def cmd_extend(args, cfg):
    prep = Prepared(cfg)
    model, mpath = _load_checked_model(cfg, prep, args.model)
    points, rows = _points(args, prep, args.domain)
    with stage("extend"):
        coords = encode(model, args.domain, points)
    out = Path(args.output or cfg.output_dir() / f"extend_{args.domain}.csv")
    _write_matrix(out, coords, [f"e_{i + 1}" for i in range(coords.shape[1])], rows)
    _write_json(out.with_suffix(".json"), {
        "domain": args.domain,
        "input": str(args.input) if args.input else "test rows",
        "chain": prep.extend_chain("extend", [hash_file(mpath), hash_array(points)], model.provenance.get("chain")),
    })
    log.info("wrote %s (%d points)", out, coords.shape[0])
    return out


def cmd_crossmap(args, cfg):
    prep = Prepared(cfg)
    model, mpath = _load_checked_model(cfg, prep, args.model)
    src = args.from_domain
    points, rows = _points(args, prep, src)
    with stage("crossmap"):
        mapped = cross_map(model, src, points)
    other = "Y" if src == "X" else "X"
    out = Path(args.output or cfg.output_dir() / f"crossmap_{src}to{other}.csv")
    _write_matrix(out, mapped, [f"{other.lower()}_{i}" for i in range(mapped.shape[1])], rows)
    _write_json(out.with_suffix(".json"), {
        "from": src,
        "input": str(args.input) if args.input else "test rows",
        "chain": prep.extend_chain("crossmap", [hash_file(mpath), hash_array(points)], model.provenance.get("chain")),
    })
    log.info("wrote %s (%d points, %d features)", out, *mapped.shape)
    return out


def cmd_eval(args, cfg):
    with stage("load"):
        datasets = [cfg.load(name) for name in cfg.eval_datasets]
    out = cfg.output_dir() / "eval"
    report_path = out / f"{args.harness}.csv"
    if args.fresh and report_path.exists():
        report_path.unlink()
    with stage("report"):
        report = ExperimentReport(args.harness, report_path)
    kw = {"cfg": cfg.eval, "report": report, "jobs": args.jobs}
    with stage(f"eval {args.harness}"):
        if args.harness == "lambda-sweep":
            run_lambda_sweep(datasets, cfg.eval_splits, cfg.eval_methods, cfg.eval_lambdas, cfg.eval_seeds, **kw)
        elif args.harness == "embedding-fit":
            run_embedding_fit(datasets, cfg.eval_splits, cfg.eval_methods, cfg.eval_seeds, cache=CellCache(), **kw)
        elif args.harness == "baseline":
            for split in cfg.eval_splits:
                run_baseline_comparison(datasets, split, cfg.eval_methods, cfg.eval_seeds, **kw)
        else:
            run_mapping_comparison(datasets, cfg.eval_splits, cfg.eval_seeds, methods=cfg.eval_methods, **kw)
    summary = report.summary()
    summary["config_hash"] = hash_json(cfg.raw)
    summary["chain"] = [{"stage": "config", "hash": summary["config_hash"]},
                        {"stage": "report", "hash": chain(summary["config_hash"], report.hash)}]
    _write_json(out / f"{args.harness}_summary.json", summary)
    failed = summary["n_failed"]
    log.info("wrote %s (%d rows, %d failed)", report_path, summary["n_rows"], failed)
    return report_path


def cmd_plot(args, cfg=None):
    from .plotting import plot_report

    with stage("plot"):
        svg, data = plot_report(args.report, args.output)
    log.info("wrote %s and %s", svg, data)
    return svg


# --- entry point -------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="twinalign", description="Manifold alignment with twin autoencoders.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run configuration (JSON)")
        return sp

    with_config("split", "write the domain pair, anchors and partition")
    with_config("align", "align the two domains")
    sp = with_config("train", "train twin autoencoders against an embedding")
    sp.add_argument("--embedding", help="embedding CSV (default: <output_dir>/embedding.csv)")
    for name, help_ in (("extend", "encode points into the shared space"),
                        ("crossmap", "map points into the other domain")):
        sp = with_config(name, help_)
        sp.add_argument("--model", help="model JSON (default: <output_dir>/model.json)")
        sp.add_argument("--input", help="CSV of points with a header row (default: test rows)")
        sp.add_argument("--output", help="output CSV path")
        if name == "extend":
            sp.add_argument("--domain", choices=["X", "Y"], default="X")
        else:
            sp.add_argument("--from", dest="from_domain", choices=["X", "Y"], required=True)
    sp = with_config("eval", "run an experiment harness")
    sp.add_argument("harness", choices=sorted(COLUMNS))
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    sp.add_argument("--fresh", action="store_true", help="discard an existing report instead of resuming")
    sp = sub.add_parser("plot", help="render a report CSV")
    sp.add_argument("--report", required=True)
    sp.add_argument("--output", help="SVG path (default: next to the report)")
    return p


COMMANDS = {
    "split": cmd_split,
    "align": cmd_align,
    "train": cmd_train,
    "extend": cmd_extend,
    "crossmap": cmd_crossmap,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "eval" and args.jobs < 1:
            raise CliError(EXIT_CONFIG, "--jobs must be >= 1")
        cfg = None if args.command == "plot" else load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
