"""Experiment harnesses: lambda sweep, embedding fit, baselines and mapping.

Each harness expands its arguments into independent cells, runs them
(optionally in worker processes) and appends one row per result to an
:class:`ExperimentReport`. A row that fails is recorded with its error
and the run continues. Reports are resumable: rows whose config hash is
already present with status ``ok`` are skipped.

Protocol notes
--------------
* Splits, anchors, the train/test partition, network initialization and
  training all use the cell seed.
* Embedding fit and lambda sweep align the full data (train and test
  rows), train the twin autoencoders on the training rows of that
  embedding only, and compare distances among test points.
* The baseline comparison aligns the training rows only, fits kNN on the
  aligned training embedding of both domains and scores AE-extended test
  points of the weaker domain.
* The mapping comparison projects test points with the full-data MASH and
  DTA cross-domain weights restricted to training-row targets, and maps
  them with the decoder swap of models trained on each aligner.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .aligners import AlignerConfig, align, barycentric_project
from .data import Dataset, load_builtin, make_split, sample_anchors, train_test_partition
from .exceptions import TwinAlignError
from .metrics import cross_domain_mse, knn_predict, mantel_test
from .provenance import hash_array, hash_json
from .twinae import TrainConfig, cross_map, encode, init_twin, train_twin

__all__ = [
    "EvalConfig",
    "ExperimentReport",
    "LeakageError",
    "run_baseline_comparison",
    "run_embedding_fit",
    "run_lambda_sweep",
    "run_mapping_comparison",
]

LAMBDA_GRID = (0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0)

#: Failures that are recorded in the report instead of stopping the run.
CELL_ERRORS = (TwinAlignError, ValueError, ArithmeticError, np.linalg.LinAlgError)

#: Columns that change between identical runs and are left out of hashes.
VOLATILE = ("timestamp", "elapsed_s")

COLUMNS = {
    "lambda-sweep": ["dataset", "split", "method", "lam", "seed", "mantel_r", "p_value", "n_test"],
    "embedding-fit": ["dataset", "split", "method", "lam", "seed", "mantel_r", "p_value", "n_test"],
    "baseline": ["dataset", "split", "method", "seed", "weaker_domain", "task", "baseline", "treatment"],
    "mapping": ["dataset", "split", "method", "seed", "mse_ae", "mse_mash", "mse_dta", "ae_wins"],
}
PROVENANCE_COLUMNS = ["pair_hash", "anchors_hash", "embedding_hash", "model_hash"]


class LeakageError(AssertionError):
    """A harness invariant about train/test separation was violated."""


@dataclass(frozen=True)
class EvalConfig:
    """Everything a harness cell needs besides dataset, split, method and seed."""

    anchor_fraction: float = 0.1
    test_fraction: float = 0.2
    stratify: bool = True
    noise_sigma: float = 0.5
    hidden: tuple = (64, 32)
    activation: str = "tanh"
    aligner: AlignerConfig = field(default_factory=AlignerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_perm: int = 999
    knn_k: int = 5

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# --- report ------------------------------------------------------------------

class ExperimentReport:
    """Rows of one harness, optionally backed by an append-only CSV.

    Every row carries ``config_hash`` (of everything that determines its
    result), the provenance hashes of its inputs, ``status`` and
    ``error``.
    """

    def __init__(self, harness, path=None):
        if harness not in COLUMNS:
            raise ValueError(f"unknown harness {harness!r}")
        self.harness = harness
        self.columns = (["harness", "config_hash"] + COLUMNS[harness] + PROVENANCE_COLUMNS
                        + ["status", "error", "timestamp", "elapsed_s"])
        self.path = None if path is None else Path(path)
        self.rows = []
        if self.path is not None and self.path.exists():
            with open(self.path, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != self.columns:
                    raise ValueError(f"{self.path} has columns for a different harness")
                self.rows = [_parse_row(r) for r in reader]

    def completed(self):
        return {r["config_hash"] for r in self.rows if r["status"] == "ok"}

    def append(self, row):
        row = {c: row.get(c, "") for c in self.columns}
        row["harness"] = self.harness
        self.rows.append(row)
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            new = not self.path.exists()
            with open(self.path, "a", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, fieldnames=self.columns)
                if new:
                    w.writeheader()
                w.writerow({k: _fmt(v) for k, v in row.items()})

    def ok_rows(self):
        return [r for r in self.rows if r["status"] == "ok"]

    @property
    def hash(self):
        """Digest of all rows without timestamps, in config-hash order."""
        stable = [{k: _fmt(v) for k, v in r.items() if k not in VOLATILE} for r in self.rows]
        return hash_json(sorted(stable, key=lambda r: (r["config_hash"], json.dumps(r, sort_keys=True))))

    def summary(self):
        return SUMMARIES[self.harness](self.ok_rows()) | {
            "harness": self.harness,
            "n_rows": len(self.rows),
            "n_failed": sum(r["status"] != "ok" for r in self.rows),
            "report_hash": self.hash,
        }

    def write_summary(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, np.generic):
        return _fmt(v.item())
    return v


def _parse_row(r):
    out = {}
    for k, v in r.items():
        if v in ("True", "False"):
            out[k] = v == "True"
            continue
        try:
            out[k] = int(v) if v.lstrip("-").isdigit() else float(v)
        except ValueError:
            out[k] = v
    for k in ("config_hash", "status", "error", "dataset", "split", "method", "harness",
              "weaker_domain", "task", *PROVENANCE_COLUMNS):
        if k in out:
            out[k] = str(r[k])
    return out


def _mean_sd(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def _group(rows, keys):
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    return dict(sorted(groups.items()))


def _summary_sweep(rows):
    table = []
    for (method, lam), rs in _group(rows, ["method", "lam"]).items():
        mean, sd = _mean_sd([r["mantel_r"] for r in rs])
        table.append({"method": method, "lam": lam, "mean_r": mean, "sd_r": sd, "n": len(rs)})
    return {"table": table}


def _summary_fit(rows):
    table = []
    for (method,), rs in _group(rows, ["method"]).items():
        mean, sd = _mean_sd([r["mantel_r"] for r in rs])
        table.append({"method": method, "mean_r": mean, "sd_r": sd, "n": len(rs)})
    return {"table": table}


def _summary_baseline(rows):
    table = []
    for (dataset, method), rs in _group(rows, ["dataset", "method"]).items():
        b = float(np.mean([r["baseline"] for r in rs]))
        t = float(np.mean([r["treatment"] for r in rs]))
        table.append({"dataset": dataset, "method": method, "baseline": b, "treatment": t,
                      "improves": t > b, "n": len(rs)})
    return {"table": table}


def _summary_mapping(rows):
    table = []
    for (method,), rs in _group(rows, ["method"]).items():
        wins = [bool(r["ae_wins"]) for r in rs]
        table.append({"method": method, "ae_win_rate": float(np.mean(wins)), "n": len(rs),
                      "mean_mse_ae": float(np.mean([r["mse_ae"] for r in rs])),
                      "mean_mse_mash": float(np.mean([r["mse_mash"] for r in rs])),
                      "mean_mse_dta": float(np.mean([r["mse_dta"] for r in rs]))})
    all_wins = [bool(r["ae_wins"]) for r in rows]
    return {"table": table, "ae_win_rate": float(np.mean(all_wins)) if all_wins else float("nan")}


SUMMARIES = {
    "lambda-sweep": _summary_sweep,
    "embedding-fit": _summary_fit,
    "baseline": _summary_baseline,
    "mapping": _summary_mapping,
}


# --- cell plumbing -----------------------------------------------------------

def _resolve(dataset):
    if isinstance(dataset, Dataset):
        return dataset
    return load_builtin(dataset)


def _dataset_id(ds):
    labels = () if ds.labels is None else (np.asarray(ds.labels).astype(str).astype("U64"),)
    return {"name": ds.name, "hash": hash_array(ds.features, *labels)}


def _cell_hash(harness, ds, split, method, seed, cfg, **extra):
    return hash_json({"harness": harness, "dataset": _dataset_id(ds), "split": split, "method": method,
                      "seed": int(seed), "config": cfg.to_dict(), **extra})


def check_partition(part, anchors):
    """Anchors stay in training rows; train and test rows are disjoint."""
    for dom in ("x", "y"):
        train = set(part.index_maps[f"{dom}_train"].tolist())
        test = set(part.index_maps[f"{dom}_test"].tolist())
        if train & test:
            raise LeakageError(f"domain {dom.upper()}: rows in both train and test")
        anchored = set(getattr(anchors, dom).tolist())
        if anchored & test:
            raise LeakageError(f"domain {dom.upper()}: anchor rows {sorted(anchored & test)} in the test set")


def check_training_embedding(emb, part):
    """The embedding handed to the autoencoders covers exactly the training rows."""
    if not (np.array_equal(emb.rows_x, part.index_maps["x_train"])
            and np.array_equal(emb.rows_y, part.index_maps["y_train"])):
        raise LeakageError("autoencoder training embedding is not the training-row subset")
    if np.intersect1d(emb.rows_x, part.index_maps["x_test"]).size or \
            np.intersect1d(emb.rows_y, part.index_maps["y_test"]).size:
        raise LeakageError("autoencoder training embedding contains test rows")


def _prepare(ds, split, seed, cfg):
    pair = make_split(ds, split, seed, noise_sigma=cfg.noise_sigma)
    anchors = sample_anchors(pair, cfg.anchor_fraction, seed)
    part = train_test_partition(pair, anchors, cfg.test_fraction, seed, stratify=cfg.stratify)
    check_partition(part, anchors)
    return pair, anchors, part


def _train(part, emb, lam, seed, cfg):
    check_training_embedding(emb, part)
    model = init_twin(part.train.X.shape[1], part.train.Y.shape[1], cfg.aligner.dim,
                      cfg.hidden, seed, cfg.activation, lam)
    tcfg = replace(cfg.train, lam=float(lam), seed=int(seed))
    model, history = train_twin(model, part.train, emb, part.anchors, tcfg)
    return model, history


def _model_hash(model):
    return hash_array(*[p for _, p in model.parameters()])


def _provenance(pair, anchors, emb, model=None):
    return {
        "pair_hash": hash_array(pair.X, pair.Y),
        "anchors_hash": hash_array(anchors.pairs),
        "embedding_hash": emb.hash,
        "model_hash": "" if model is None else _model_hash(model),
    }


def _test_distances(model, emb_full, part):
    tx, ty = part.index_maps["x_test"], part.index_maps["y_test"]
    E_ma = np.vstack([emb_full.E_x[tx], emb_full.E_y[ty]])
    E_ae = np.vstack([encode(model, "X", part.test.X), encode(model, "Y", part.test.Y)])
    return squareform(pdist(E_ma)), squareform(pdist(E_ae))


class CellCache:
    """In-memory store of trained cells so harnesses can share models.

    Keys are config hashes of ``(dataset, split, method, seed, lambda, cfg)``.
    """

    def __init__(self):
        self._store = {}

    def __contains__(self, key):
        return key in self._store

    def __getitem__(self, key):
        return self._store[key]

    def __setitem__(self, key, value):
        self._store[key] = value

    def __len__(self):
        return len(self._store)


def _fit_cell(ds, split, method, seed, lams, cfg):
    """Align full data once, then train and score one model per lambda."""
    pair, anchors, part = _prepare(ds, split, seed, cfg)
    full = align(method, pair, anchors, cfg.aligner)
    emb = full.subset(part.index_maps["x_train"], part.index_maps["y_train"])
    results = []
    for lam in lams:
        t0 = time.perf_counter()
        model, _ = _train(part, emb, lam, seed, cfg)
        D_ma, D_ae = _test_distances(model, full, part)
        res = mantel_test(D_ma, D_ae, n_perm=cfg.n_perm, seed=seed)
        results.append({
            "lam": float(lam), "mantel_r": res.r, "p_value": res.p_value,
            "n_test": int(D_ma.shape[0]), **_provenance(pair, anchors, emb, model),
            "elapsed_s": time.perf_counter() - t0, "_model": model,
        })
    return {"full": full, "part": part, "pair": pair, "anchors": anchors, "results": results}


# --- execution ---------------------------------------------------------------

def _guarded(fn, args):
    try:
        return fn(*args)
    except CELL_ERRORS as exc:
        return exc


def _run_jobs(fn, tasks, jobs):
    """Run ``fn(*task)`` for every task; failures come back as exception objects, in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [_guarded(fn, t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_guarded, fn, t) for t in tasks]
        return [f.result() for f in futures]


def _error_row(exc):
    return {"status": "error", "error": f"{type(exc).__name__}: {exc}"}


def _stamp(row):
    row.setdefault("status", "ok")
    row.setdefault("error", "")
    row["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    return row


def _fit_rows(harness, datasets, splits, methods, seeds, lams, cfg, report, jobs, cache):
    cfg = cfg or EvalConfig()
    report = report if report is not None else ExperimentReport(harness)
    done = report.completed()
    resolved = [_resolve(d) for d in datasets]
    cells = []
    for ds in resolved:
        for split in splits:
            for method in methods:
                for seed in seeds:
                    hashes = {lam: _cell_hash("fit", ds, split, method, seed, cfg, lam=float(lam)) for lam in lams}
                    todo = [lam for lam in lams if hashes[lam] not in done]
                    if not todo:
                        continue
                    cached = [lam for lam in todo if cache is not None and hashes[lam] in cache]
                    missing = [lam for lam in todo if lam not in cached]
                    cells.append((ds, split, method, seed, hashes, cached, missing))
    tasks = [(ds, split, method, seed, tuple(missing), cfg)
             for ds, split, method, seed, _, _, missing in cells if missing]
    outputs = iter(_run_jobs(_fit_cell, tasks, jobs))
    for ds, split, method, seed, hashes, cached, missing in cells:
        out = next(outputs) if missing else None
        base = {"dataset": ds.name, "split": split, "method": method, "seed": int(seed)}
        by_lam = {}
        if isinstance(out, Exception):
            for lam in missing:
                report.append(_stamp({**base, "lam": float(lam), "config_hash": hashes[lam], **_error_row(out)}))
        elif out is not None:
            for res in out["results"]:
                by_lam[res["lam"]] = res
                if cache is not None:
                    cache[hashes[res["lam"]]] = {**{k: out[k] for k in ("full", "part", "pair", "anchors")},
                                                 "result": res}
        for lam in cached:
            by_lam[float(lam)] = cache[hashes[lam]]["result"]
        for lam in (v for v in lams if v in by_lam):
            res = {k: v for k, v in by_lam[lam].items() if not k.startswith("_")}
            report.append(_stamp({**base, **res, "config_hash": hashes[lam]}))
    return report


def run_lambda_sweep(dataset, split, ma_methods, lambdas=LAMBDA_GRID, seeds=(0, 1, 2), cfg=None,
                     report=None, jobs=1, cache=None):
    """Mantel r between AE and full-alignment test distances for each (method, lambda, seed).

    ``lambdas`` must include 0, the unregularized reference.
    """
    if 0 not in [float(v) for v in lambdas]:
        raise ValueError("the lambda grid must include 0")
    datasets = dataset if isinstance(dataset, (list, tuple)) else [dataset]
    splits = split if isinstance(split, (list, tuple)) else [split]
    report = report if report is not None else ExperimentReport("lambda-sweep")
    return _fit_rows("lambda-sweep", datasets, splits, ma_methods, seeds, [float(v) for v in lambdas],
                     cfg, report, jobs, cache)


def run_embedding_fit(datasets, splits, ma_methods, seeds=(0, 1, 2), cfg=None, report=None, jobs=1, cache=None):
    """Mantel r of AE test-point distances against full-alignment distances at the configured lambda."""
    cfg = cfg or EvalConfig()
    report = report if report is not None else ExperimentReport("embedding-fit")
    return _fit_rows("embedding-fit", datasets, splits, ma_methods, seeds, [float(cfg.train.lam)],
                     cfg, report, jobs, cache)


# --- baseline comparison -----------------------------------------------------

def _baseline_cell(ds, split, methods, seed, cfg):
    if ds.labels is None:
        raise ValueError(f"dataset {ds.name!r} has no labels")
    pair, anchors, part = _prepare(ds, split, seed, cfg)
    task = pair.task
    lx, ly = part.train.labels_x, part.train.labels_y
    tx, ty = part.test.labels_x, part.test.labels_y
    k = min(cfg.knn_k, part.train.n_x)
    _, score_x = knn_predict(part.train.X, lx, part.test.X, k, task, tx)
    _, score_y = knn_predict(part.train.Y, ly, part.test.Y, k, task, ty)
    # skewed puts the strong features in X; otherwise pick the worse baseline
    weaker = "Y" if split == "skewed" or score_y <= score_x else "X"
    baseline = score_y if weaker == "Y" else score_x
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        try:
            emb = align(method, part.train, part.anchors, cfg.aligner)
            emb = replace(emb, rows_x=part.index_maps["x_train"], rows_y=part.index_maps["y_train"])
            model, _ = _train(part, emb, cfg.train.lam, seed, cfg)
            test_pts = part.test.Y if weaker == "Y" else part.test.X
            E_test = encode(model, weaker, test_pts)
            train_E = np.vstack([emb.E_x, emb.E_y])
            train_labels = np.concatenate([lx, ly])
            _, treatment = knn_predict(train_E, train_labels, E_test, k, task, ty if weaker == "Y" else tx)
            rows.append({"method": method, "weaker_domain": weaker, "task": task, "baseline": baseline,
                         "treatment": treatment, **_provenance(pair, anchors, emb, model),
                         "elapsed_s": time.perf_counter() - t0})
        except CELL_ERRORS as exc:
            rows.append({"method": method, "weaker_domain": weaker, "task": task, "baseline": baseline,
                         **_error_row(exc)})
    return rows


def run_baseline_comparison(dataset, split, ma_methods, seeds=(0, 1, 2, 3, 4), cfg=None, report=None, jobs=1):
    """Weaker-domain kNN on raw features versus kNN on the aligned embedding.

    The aligner sees training rows only; test points of the weaker domain
    are placed in the embedding by the trained encoder.
    """
    if split not in ("skewed", "even"):
        raise ValueError("baseline comparison needs a split with a weaker domain (skewed or even)")
    cfg = cfg or EvalConfig()
    report = report if report is not None else ExperimentReport("baseline")
    done = report.completed()
    datasets = [_resolve(d) for d in (dataset if isinstance(dataset, (list, tuple)) else [dataset])]
    tasks, keys = [], []
    for ds in datasets:
        for seed in seeds:
            hashes = {m: _cell_hash("baseline", ds, split, m, seed, cfg) for m in ma_methods}
            todo = tuple(m for m in ma_methods if hashes[m] not in done)
            if todo:
                tasks.append((ds, split, todo, seed, cfg))
                keys.append((ds, seed, hashes, todo))
    for (ds, seed, hashes, todo), out in zip(keys, _run_jobs(_baseline_cell, tasks, jobs)):
        base = {"dataset": ds.name, "split": split, "seed": int(seed)}
        if isinstance(out, Exception):
            for m in todo:
                report.append(_stamp({**base, "method": m, "config_hash": hashes[m], **_error_row(out)}))
            continue
        for row in out:
            report.append(_stamp({**base, **row, "config_hash": hashes[row["method"]]}))
    return report


# --- mapping comparison ------------------------------------------------------

def _projection_mse(emb, part):
    """Barycentric projection of test rows onto training-row targets, averaged over both directions."""
    tx, ty = part.index_maps["x_test"], part.index_maps["y_test"]
    rx, ry = part.index_maps["x_train"], part.index_maps["y_train"]
    xy = barycentric_project(emb.cross_xy[np.ix_(tx, ry)], part.train.Y)
    yx = barycentric_project(emb.cross_yx[np.ix_(ty, rx)], part.train.X)
    return 0.5 * (cross_domain_mse(xy, part.test.Y) + cross_domain_mse(yx, part.test.X))


def _ae_mse(model, part):
    xy = cross_map(model, "X", part.test.X)
    yx = cross_map(model, "Y", part.test.Y)
    return 0.5 * (cross_domain_mse(xy, part.test.Y) + cross_domain_mse(yx, part.test.X))


def _mapping_cell(ds, split, methods, seed, cfg, trained):
    pair, anchors, part = _prepare(ds, split, seed, cfg)
    proj = {}
    for m in ("MASH", "DTA"):
        full = align(m, pair, anchors, cfg.aligner)
        proj[m] = _projection_mse(full, part)
    rows = []
    for method in methods:
        t0 = time.perf_counter()
        try:
            if method in trained:
                model, emb_hash = trained[method]
            else:
                full = align(method, pair, anchors, cfg.aligner)
                emb = full.subset(part.index_maps["x_train"], part.index_maps["y_train"])
                model, _ = _train(part, emb, cfg.train.lam, seed, cfg)
                emb_hash = emb.hash
            mse_ae = _ae_mse(model, part)
            rows.append({"method": method, "mse_ae": mse_ae, "mse_mash": proj["MASH"], "mse_dta": proj["DTA"],
                         "ae_wins": bool(mse_ae < proj["MASH"] and mse_ae < proj["DTA"]),
                         "pair_hash": hash_array(pair.X, pair.Y), "anchors_hash": hash_array(anchors.pairs),
                         "embedding_hash": emb_hash, "model_hash": _model_hash(model),
                         "elapsed_s": time.perf_counter() - t0})
        except CELL_ERRORS as exc:
            rows.append({"method": method, **_error_row(exc)})
    return rows


def run_mapping_comparison(dataset, splits, seeds=(0, 1, 2), cfg=None, methods=("JLMA", "MAPA", "SPUD", "MASH", "DTA"),
                           report=None, jobs=1, cache=None):
    """Test-set cross-domain MSE of the decoder swap versus MASH and DTA projections.

    One row per (dataset, split, seed, regularizing method). Models trained
    by :func:`run_embedding_fit` with the same configuration are reused
    from ``cache`` when available.
    """
    cfg = cfg or EvalConfig()
    report = report if report is not None else ExperimentReport("mapping")
    done = report.completed()
    datasets = [_resolve(d) for d in (dataset if isinstance(dataset, (list, tuple)) else [dataset])]
    splits = splits if isinstance(splits, (list, tuple)) else [splits]
    tasks, keys = [], []
    lam = float(cfg.train.lam)
    for ds in datasets:
        for split in splits:
            for seed in seeds:
                hashes = {m: _cell_hash("mapping", ds, split, m, seed, cfg) for m in methods}
                todo = tuple(m for m in methods if hashes[m] not in done)
                if not todo:
                    continue
                trained = {}
                for m in todo:
                    key = _cell_hash("fit", ds, split, m, seed, cfg, lam=lam)
                    if cache is not None and key in cache:
                        res = cache[key]["result"]
                        trained[m] = (res["_model"], res["embedding_hash"])
                tasks.append((ds, split, todo, seed, cfg, trained))
                keys.append((ds, split, seed, hashes, todo))
    for (ds, split, seed, hashes, todo), out in zip(keys, _run_jobs(_mapping_cell, tasks, jobs)):
        base = {"dataset": ds.name, "split": split, "seed": int(seed)}
        if isinstance(out, Exception):
            for m in todo:
                report.append(_stamp({**base, "method": m, "config_hash": hashes[m], **_error_row(out)}))
            continue
        for row in out:
            report.append(_stamp({**base, **row, "config_hash": hashes[row["method"]]}))
    return report

