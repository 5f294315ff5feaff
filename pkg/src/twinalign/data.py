"""Datasets, unimodal-to-bimodal domain splits, anchors and partitions."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DataError
from .linalg import random_rotation

__all__ = [
    "AnchorSet",
    "Dataset",
    "DomainPair",
    "PartitionedPair",
    "SPLIT_STRATEGIES",
    "feature_importance",
    "load_builtin",
    "load_dataset",
    "make_split",
    "read_pair",
    "sample_anchors",
    "standardize",
    "train_test_partition",
    "write_pair",
]

SPLIT_STRATEGIES = ("random", "skewed", "even", "distort", "rotation")
FEATURE_SPLITS = ("random", "skewed", "even")
BUILTIN_DATASETS = ("iris", "wine", "breast_cancer", "diabetes")


@dataclass
class Dataset:
    """Feature matrix with optional labels."""

    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list = field(default_factory=list)
    name: str = "dataset"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if self.features.shape[0] < 2:
            raise DataError("a dataset needs at least 2 rows")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain missing or non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.features.shape[0],):
                raise DataError("labels must be a vector with one entry per row")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.features.shape[1])]

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def task(self):
        """``"classify"`` for categorical labels, ``"regress"`` for real ones."""
        if self.labels is None:
            return None
        return "regress" if np.issubdtype(self.labels.dtype, np.floating) else "classify"


@dataclass
class DomainPair:
    """Two domains simulated from one source; row ``i`` of X matches row ``i`` of Y."""

    X: np.ndarray
    Y: np.ndarray
    labels_x: np.ndarray | None = None
    labels_y: np.ndarray | None = None
    split_strategy: str = "random"
    seed: int = 0
    x_features: list | None = None
    y_features: list | None = None
    name: str = "dataset"

    @property
    def n_x(self):
        return self.X.shape[0]

    @property
    def n_y(self):
        return self.Y.shape[0]

    @property
    def task(self):
        if self.labels_x is None:
            return None
        return "regress" if np.issubdtype(np.asarray(self.labels_x).dtype, np.floating) else "classify"


@dataclass(frozen=True)
class AnchorSet:
    """Known correspondences as ``(x_row, y_row)`` index pairs."""

    pairs: np.ndarray
    fraction: float = 1.0

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        if pairs.shape[0] < 1:
            raise DataError("an anchor set needs at least one pair")
        if len(np.unique(pairs[:, 0])) != len(pairs) or len(np.unique(pairs[:, 1])) != len(pairs):
            raise DataError("duplicate anchor index")
        if pairs.min() < 0:
            raise DataError("negative anchor index")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return self.pairs.shape[0]

    @property
    def x(self):
        return self.pairs[:, 0]

    @property
    def y(self):
        return self.pairs[:, 1]

    def validate(self, n_x, n_y):
        if self.pairs[:, 0].max() >= n_x or self.pairs[:, 1].max() >= n_y:
            raise DataError("anchor index out of range")


@dataclass
class PartitionedPair:
    """Train/test split of a :class:`DomainPair` with anchors in train coordinates.

    ``index_maps`` holds the original row indices of the partition rows:
    ``{"x_train", "x_test", "y_train", "y_test"}``.
    """

    train: DomainPair
    test: DomainPair
    anchors: AnchorSet
    index_maps: dict


def standardize(features):
    """Z-score columns; constant columns map to zero."""
    features = np.asarray(features, dtype=float)
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    out = (features - mean) / safe
    out[:, std == 0] = 0.0
    return out


def load_dataset(path, label_column=None, standardize_features=True, delimiter=",", name=None):
    """Read a delimited numeric table with a header row.

    Rows with any missing value are dropped. The label column may hold
    category strings; every other column must be numeric.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep=delimiter, encoding="utf-8", skipinitialspace=True,
                            float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if label_column is not None and label_column not in frame.columns:
        raise DataError(f"label column {label_column!r} not in {list(frame.columns)}")
    frame = frame.replace(r"^\s*$", np.nan, regex=True).dropna(axis=0, how="any")
    if len(frame) == 0:
        raise DataError(f"{path} has no usable rows")
    labels = None
    if label_column is not None:
        labels = frame.pop(label_column).to_numpy()
        labels = _coerce_labels(labels)
    try:
        features = frame.apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise DataError(f"non-numeric feature cell in {path}: {exc}") from exc
    if standardize_features:
        features = standardize(features)
    return Dataset(features, labels, [str(c) for c in frame.columns], name or path.stem)


def _coerce_labels(labels):
    labels = np.asarray(labels)
    if labels.dtype.kind in "iub":
        return labels.astype(int)
    if labels.dtype.kind == "f":
        return labels
    try:
        numeric = np.asarray(labels, dtype=float)
    except (ValueError, TypeError):
        return labels.astype(str)
    if np.all(numeric == np.round(numeric)) and len(np.unique(numeric)) <= max(20, len(numeric) // 10):
        return numeric.astype(int)
    return numeric


def load_builtin(name, standardize_features=True):
    """Load one of the small UCI datasets that ship with scikit-learn.

    Available: ``iris``, ``wine``, ``breast_cancer`` (classification) and
    ``diabetes`` (regression).
    """
    from sklearn import datasets

    loaders = {
        "iris": datasets.load_iris,
        "wine": datasets.load_wine,
        "breast_cancer": datasets.load_breast_cancer,
        "diabetes": datasets.load_diabetes,
    }
    if name not in loaders:
        raise DataError(f"unknown builtin dataset {name!r}; choose from {sorted(loaders)}")
    bunch = loaders[name]()
    X = np.asarray(bunch.data, dtype=float)
    y = np.asarray(bunch.target)
    y = y.astype(float) if name == "diabetes" else y.astype(int)
    if standardize_features:
        X = standardize(X)
    return Dataset(X, y, [str(f) for f in bunch.feature_names], name)


def _one_rule_accuracy(x, y, n_bins=10):
    edges = np.unique(np.quantile(x, np.linspace(0, 1, n_bins + 1)[1:-1]))
    bins = np.searchsorted(edges, x, side="right")
    correct = 0
    for b in np.unique(bins):
        _, counts = np.unique(y[bins == b], return_counts=True)
        correct += counts.max()
    return correct / len(y)


def feature_importance(features, labels):
    """Univariate predictive strength of each feature.

    Absolute Pearson correlation with a real response, or one-rule
    accuracy (majority class per quantile bin) for class labels.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if np.issubdtype(labels.dtype, np.floating):
        yc = labels - labels.mean()
        Xc = features - features.mean(axis=0)
        denom = np.sqrt((Xc**2).sum(axis=0) * (yc**2).sum())
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(denom > 0, Xc.T @ yc / denom, 0.0)
        return np.abs(r)
    return np.array([_one_rule_accuracy(features[:, j], labels) for j in range(features.shape[1])])


def make_split(ds, strategy="random", seed=0, noise_sigma=0.5, importance_scores=None):
    """Simulate two domains from a single dataset.

    ``random``, ``skewed`` and ``even`` partition the features (``ceil(d/2)``
    go to X); ``distort`` adds Gaussian noise to form Y; ``rotation`` sets
    ``Y = X Q`` for a random orthogonal ``Q``. For ``skewed`` the stronger
    half of the features forms X, so Y is the weaker domain.
    """
    if strategy not in SPLIT_STRATEGIES:
        raise DataError(f"unknown split strategy {strategy!r}")
    F = ds.features
    n, d = F.shape
    rng = np.random.default_rng(seed)
    labels = ds.labels
    if strategy in FEATURE_SPLITS:
        if d < 2:
            raise DataError(f"feature split needs d >= 2, got d={d}")
        half = math.ceil(d / 2)
        if strategy == "random":
            order = rng.permutation(d)
            xf, yf = order[:half], order[half:]
        else:
            if importance_scores is None:
                if labels is None:
                    raise DataError(f"strategy {strategy!r} needs labels or importance scores")
                importance_scores = feature_importance(F, labels)
            scores = np.asarray(importance_scores, dtype=float)
            if scores.shape != (d,):
                raise DataError("importance_scores must have one entry per feature")
            # random tie-breaking keeps the split seed-dependent among equals
            ranking = np.lexsort((rng.permutation(d), -scores))
            if strategy == "skewed":
                xf, yf = ranking[:half], ranking[half:]
            else:
                xf, yf = ranking[0::2], ranking[1::2]
        xf, yf = np.sort(xf), np.sort(yf)
        return DomainPair(F[:, xf].copy(), F[:, yf].copy(), labels, labels, strategy, seed,
                          xf.tolist(), yf.tolist(), ds.name)
    if strategy == "distort":
        Y = F + rng.normal(0.0, noise_sigma, size=F.shape) if noise_sigma > 0 else F.copy()
    else:
        Y = F @ random_rotation(d, seed)
    full = list(range(d))
    return DomainPair(F.copy(), Y, labels, labels, strategy, seed, full, full, ds.name)


def sample_anchors(pair, fraction=0.1, seed=0):
    """Sample ``ceil(fraction * n)`` matched rows uniformly without replacement."""
    if not 0 < fraction <= 1:
        raise DataError(f"anchor fraction must be in (0, 1], got {fraction}")
    if pair.n_x != pair.n_y:
        raise DataError("anchor sampling needs row-matched domains")
    n = pair.n_x
    n_a = math.ceil(round(fraction * n, 9))
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(n, size=n_a, replace=False))
    return AnchorSet(np.column_stack([rows, rows]), fraction)


def _strata(labels):
    if labels is None:
        return None
    labels = np.asarray(labels)
    if np.issubdtype(labels.dtype, np.floating):
        edges = np.quantile(labels, [0.2, 0.4, 0.6, 0.8])
        return np.searchsorted(edges, labels, side="right")
    return np.unique(labels, return_inverse=True)[1]


def _allocate(n_test, class_sizes, capacity):
    """Largest-remainder allocation of ``n_test`` test rows over classes."""
    total = class_sizes.sum()
    quota = n_test * class_sizes / total
    alloc = np.minimum(np.floor(quota).astype(int), capacity)
    remainder = quota - np.floor(quota)
    for c in np.argsort(-remainder, kind="stable"):
        if alloc.sum() >= n_test:
            break
        if alloc[c] < capacity[c]:
            alloc[c] += 1
    # capacity-limited classes push the rest to whoever still has room
    while alloc.sum() < n_test:
        room = np.flatnonzero(alloc < capacity)
        if room.size == 0:
            break
        c = room[np.argmax((quota - alloc)[room])]
        alloc[c] += 1
    return alloc


def _subset(pair, rows):
    lx = None if pair.labels_x is None else pair.labels_x[rows]
    ly = None if pair.labels_y is None else pair.labels_y[rows]
    return DomainPair(pair.X[rows], pair.Y[rows], lx, ly, pair.split_strategy, pair.seed,
                      pair.x_features, pair.y_features, pair.name)


def train_test_partition(pair, anchors, test_fraction=0.2, seed=0, stratify=True):
    """Split rows into train and test, keeping every anchor in train.

    ``round(test_fraction * n)`` test rows are drawn from the non-anchor
    rows, stratified by label when labels exist (real responses are
    binned by quintile). The same rows are used in both domains.
    """
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if pair.n_x != pair.n_y:
        raise DataError("partitioning needs row-matched domains")
    anchors.validate(pair.n_x, pair.n_y)
    n = pair.n_x
    n_test = int(round(test_fraction * n))
    anchored = np.zeros(n, dtype=bool)
    anchored[anchors.x] = True
    anchored[anchors.y] = True
    free = np.flatnonzero(~anchored)
    n_test = min(n_test, free.size)
    if n - n_test < 2:
        raise DataError("test_fraction leaves fewer than 2 training rows")
    rng = np.random.default_rng(seed)
    strata = _strata(pair.labels_x) if stratify else None
    if strata is None:
        test = rng.choice(free, size=n_test, replace=False)
    else:
        classes = np.unique(strata)
        sizes = np.array([(strata == c).sum() for c in classes])
        capacity = np.array([(strata[free] == c).sum() for c in classes])
        alloc = _allocate(n_test, sizes, capacity)
        test = np.concatenate([
            rng.choice(free[strata[free] == c], size=a, replace=False)
            for c, a in zip(classes, alloc)
        ])
    test = np.sort(test)
    is_test = np.zeros(n, dtype=bool)
    is_test[test] = True
    train = np.flatnonzero(~is_test)
    position = np.full(n, -1)
    position[train] = np.arange(train.size)
    train_anchors = AnchorSet(np.column_stack([position[anchors.x], position[anchors.y]]), anchors.fraction)
    maps = {"x_train": train, "x_test": test, "y_train": train, "y_test": test}
    return PartitionedPair(_subset(pair, train), _subset(pair, test), train_anchors, maps)


def write_pair(pair, directory, anchors=None, extra=None):
    """Write ``X.csv``, ``Y.csv`` and a ``pair.json`` descriptor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for tag, M in (("X", pair.X), ("Y", pair.Y)):
        pd.DataFrame(M, columns=[f"{tag.lower()}_{i}" for i in range(M.shape[1])]).to_csv(
            directory / f"{tag}.csv", index=False, float_format="%.17g", lineterminator="\r\n"
        )
    desc = {
        "name": pair.name,
        "split_strategy": pair.split_strategy,
        "seed": int(pair.seed),
        "n_x": int(pair.n_x),
        "n_y": int(pair.n_y),
        "x_features": pair.x_features,
        "y_features": pair.y_features,
        "labels_x": None if pair.labels_x is None else np.asarray(pair.labels_x).tolist(),
        "labels_y": None if pair.labels_y is None else np.asarray(pair.labels_y).tolist(),
    }
    if anchors is not None:
        desc["anchors"] = {"pairs": anchors.pairs.tolist(), "fraction": anchors.fraction}
    if extra:
        desc.update(extra)
    (directory / "pair.json").write_text(json.dumps(desc, indent=2, sort_keys=True))
    return directory


def read_pair(directory):
    """Inverse of :func:`write_pair`; returns ``(pair, anchors_or_None, descriptor)``."""
    directory = Path(directory)
    desc = json.loads((directory / "pair.json").read_text())
    X = pd.read_csv(directory / "X.csv", float_precision="round_trip").to_numpy(dtype=float)
    Y = pd.read_csv(directory / "Y.csv", float_precision="round_trip").to_numpy(dtype=float)
    lx = None if desc.get("labels_x") is None else _coerce_labels(np.asarray(desc["labels_x"]))
    ly = None if desc.get("labels_y") is None else _coerce_labels(np.asarray(desc["labels_y"]))
    pair = DomainPair(X, Y, lx, ly, desc["split_strategy"], desc["seed"],
                      desc.get("x_features"), desc.get("y_features"), desc.get("name", "dataset"))
    anchors = None
    if "anchors" in desc:
        anchors = AnchorSet(np.asarray(desc["anchors"]["pairs"]), desc["anchors"]["fraction"])
    return pair, anchors, desc
