"""Mantel permutation test, kNN prediction and cross-domain MSE."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ["MantelResult", "cross_domain_mse", "knn_predict", "mantel_test"]

#: Permuted statistics within this distance of the observed one count as ties.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class MantelResult:
    r: float
    p_value: float
    n_permutations: int
    seed: int | None
    exhaustive: bool = False


def _upper(D):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {D.shape}")
    return D[np.triu_indices(D.shape[0], 1)]


def _standardized(v):
    c = v - v.mean()
    norm = np.sqrt(np.sum(c * c))
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("correlation undefined: distances have zero variance")
    return c / norm


def mantel_test(D1, D2, n_perm=999, seed=0, exhaustive=None):
    """Mantel test between two distance matrices.

    ``r`` is the Pearson correlation of the upper triangles. The one-sided
    p-value is ``(1 + #{r_perm >= r}) / (1 + n_perm)`` where each
    permutation relabels the rows and columns of ``D2`` jointly.

    With ``exhaustive=True`` (or ``None`` and ``n! - 1 <= n_perm``) all
    ``n! - 1`` non-identity permutations are enumerated instead of
    sampled, which gives the exact permutation p-value.
    """
    D1 = np.asarray(D1, dtype=float)
    D2 = np.asarray(D2, dtype=float)
    if D1.shape != D2.shape:
        raise ValueError(f"shape mismatch: {D1.shape} vs {D2.shape}")
    n = D1.shape[0]
    if n < 3:
        raise ValueError("Mantel test needs n >= 3")
    x = _standardized(_upper(D1))
    y = _standardized(_upper(D2))
    r = float(np.clip(x @ y, -1.0, 1.0))

    iu = np.triu_indices(n, 1)
    if exhaustive is None:
        exhaustive = n <= 8 and math.factorial(n) - 1 <= n_perm
    if exhaustive:
        perms = np.array(list(itertools.permutations(range(n)))[1:], dtype=int)
    else:
        rng = np.random.default_rng(seed)
        perms = np.array([rng.permutation(n) for _ in range(n_perm)], dtype=int).reshape(-1, n)
    count = 0
    D2 = np.asarray(D2)
    for start in range(0, len(perms), 256):
        block = perms[start:start + 256]
        # D2[p][:, p] upper triangles for a block of permutations
        vals = D2[block[:, iu[0]], block[:, iu[1]]]
        c = vals - vals.mean(axis=1, keepdims=True)
        stats = (c @ x) / np.sqrt(np.sum(c * c, axis=1))
        count += int(np.sum(stats >= r - TIE_TOL))
    total = len(perms)
    return MantelResult(r, (1 + count) / (1 + total), total, None if exhaustive else seed, bool(exhaustive))


def knn_predict(train_X, train_labels, test_X, k=5, task="classify", test_labels=None):
    """k-nearest-neighbor prediction.

    Classification takes a majority vote (ties go to the lowest label in
    sorted order); regression averages neighbor responses. Neighbor ties
    go to the lower training index.

    Returns
    -------
    predictions : ndarray
    score : float or None
        Accuracy or negative RMSE when ``test_labels`` is given.
    """
    train_X = np.asarray(train_X, dtype=float)
    test_X = np.asarray(test_X, dtype=float)
    train_labels = np.asarray(train_labels)
    n = train_X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    D = cdist(test_X, train_X)
    idx = np.argsort(D, axis=1, kind="stable")[:, :k]
    if task == "classify":
        classes, codes = np.unique(train_labels, return_inverse=True)
        votes = np.zeros((test_X.shape[0], classes.size), dtype=int)
        np.add.at(votes, (np.repeat(np.arange(test_X.shape[0]), k), codes[idx].ravel()), 1)
        pred = classes[np.argmax(votes, axis=1)]
        score = None if test_labels is None else float(np.mean(pred == np.asarray(test_labels)))
    elif task == "regress":
        pred = train_labels.astype(float)[idx].mean(axis=1)
        score = None
        if test_labels is not None:
            score = -float(np.sqrt(np.mean((pred - np.asarray(test_labels, dtype=float)) ** 2)))
    else:
        raise ValueError(f"unknown task {task!r}")
    return pred, score


def cross_domain_mse(mapped, truth):
    """Per-feature mean squared error between mapped points and their true correspondents."""
    mapped = np.asarray(mapped, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if mapped.shape != truth.shape:
        raise ValueError(f"shape mismatch: {mapped.shape} vs {truth.shape}")
    return float(np.mean((mapped - truth) ** 2))
