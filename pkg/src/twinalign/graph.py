"""Affinity graphs, Laplacians, diffusion operators and shortest paths.

Everything is dense: the problem sizes here are a few thousand nodes at
most.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial.distance import cdist

from .exceptions import DegenerateBandwidthError

__all__ = [
    "AffinityGraph",
    "DiffusionOperator",
    "affinity_to_lengths",
    "alpha_decay_kernel",
    "graph_laplacian",
    "joint_graph",
    "knn_graph",
    "knn_indices",
    "pairwise_distances",
    "row_normalize",
    "shortest_paths",
]

#: Largest finite edge length produced from an affinity.
LENGTH_CAP = 1e3


@dataclass
class AffinityGraph:
    """Nonnegative edge weights between ``n`` nodes."""

    weights: np.ndarray
    symmetric: bool = True
    kernel_params: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.weights.shape[0]


@dataclass
class DiffusionOperator:
    """Row-stochastic transition matrix, possibly already raised to a power."""

    P: np.ndarray
    steps_applied: int = 1

    def power(self, t):
        """Return the ``t``-step operator. ``t=0`` gives the identity."""
        if t < 0:
            raise ValueError("t must be >= 0")
        Pt = np.linalg.matrix_power(self.P, int(t))
        return DiffusionOperator(Pt, self.steps_applied * int(t))


def pairwise_distances(A, B=None):
    """Euclidean distances between rows of ``A`` and rows of ``B``."""
    A = np.asarray(A, dtype=float)
    B = A if B is None else np.asarray(B, dtype=float)
    return cdist(A, B)


def knn_indices(D, k):
    """Indices of the ``k`` nearest neighbors per row of a square distance matrix.

    The node itself is excluded and ties go to the lower index.
    """
    D = np.array(D, dtype=float)
    n = D.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    np.fill_diagonal(D, np.inf)
    return np.argsort(D, axis=1, kind="stable")[:, :k]


def knn_graph(points, k, metric="euclidean", weighted=False):
    """Symmetrized k-nearest-neighbor graph.

    Each node links to its ``k`` nearest other nodes, then the graph is
    symmetrized with ``max(W, W.T)``. Edges carry weight 1, or the
    Euclidean distance when ``weighted`` is set.
    """
    if metric != "euclidean":
        raise ValueError(f"unsupported metric {metric!r}")
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    D = pairwise_distances(points)
    idx = knn_indices(D, k)
    rows = np.repeat(np.arange(n), k)
    cols = idx.ravel()
    W = np.zeros((n, n))
    W[rows, cols] = D[rows, cols] if weighted else 1.0
    W = np.maximum(W, W.T)
    return AffinityGraph(W, True, {"k": k, "weighted": weighted})


def alpha_decay_kernel(points, k=10, alpha=10.0):
    """Adaptive-bandwidth alpha-decaying affinity kernel.

    ``K(i, j) = 0.5 exp(-(d_ij / s_i)^alpha) + 0.5 exp(-(d_ij / s_j)^alpha)``
    with ``s_i`` the distance from ``i`` to its ``k``-th nearest neighbor.
    The diagonal is 1 (self-affinity).
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n={n}, got {k}")
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    D = pairwise_distances(points)
    Dk = D.copy()
    np.fill_diagonal(Dk, np.inf)
    sigma = np.sort(Dk, axis=1)[:, k - 1]
    if np.any(sigma <= 0):
        bad = np.flatnonzero(sigma <= 0)
        raise DegenerateBandwidthError(
            f"{bad.size} point(s) have a zero k-th neighbor distance (k={k}); "
            f"first offending row {bad[0]}"
        )
    A_i = np.exp(-((D / sigma[:, None]) ** alpha))
    A_j = np.exp(-((D / sigma[None, :]) ** alpha))
    K = 0.5 * A_i + 0.5 * A_j
    # enforce exact symmetry (the two halves are mirror images up to rounding)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return AffinityGraph(K, True, {"k": k, "alpha": alpha, "sigma": sigma})


def joint_graph(Wx, Wy, anchors, mu=1.0):
    """Block graph ``[[Wx, mu C], [mu C^T, Wy]]`` with ``C`` the anchor indicator.

    ``anchors`` is an ``(n_A, 2)`` array of ``(x_row, y_row)`` pairs (or
    an object with a ``pairs`` attribute).
    """
    if not mu > 0:
        raise ValueError("mu must be > 0")
    Wx_ = Wx.weights if isinstance(Wx, AffinityGraph) else np.asarray(Wx, dtype=float)
    Wy_ = Wy.weights if isinstance(Wy, AffinityGraph) else np.asarray(Wy, dtype=float)
    pairs = np.asarray(getattr(anchors, "pairs", anchors), dtype=int).reshape(-1, 2)
    nx, ny = Wx_.shape[0], Wy_.shape[0]
    if pairs.size and (
        pairs[:, 0].min() < 0 or pairs[:, 0].max() >= nx or pairs[:, 1].min() < 0 or pairs[:, 1].max() >= ny
    ):
        raise IndexError("anchor index out of range")
    if pairs.size == 0:
        warnings.warn("no anchors: the joint graph is disconnected across domains", stacklevel=2)
    C = np.zeros((nx, ny))
    C[pairs[:, 0], pairs[:, 1]] = 1.0
    W = np.block([[Wx_, mu * C], [mu * C.T, Wy_]])
    return AffinityGraph(W, True, {"mu": mu, "n_x": nx, "n_y": ny})


def graph_laplacian(W, normalized=False):
    """Unnormalized ``D - W`` or symmetric normalized ``I - D^-1/2 W D^-1/2`` Laplacian.

    Isolated nodes get a zero row (unnormalized) or a unit diagonal
    (normalized).
    """
    W = W.weights if isinstance(W, AffinityGraph) else np.asarray(W, dtype=float)
    if W.shape[0] != W.shape[1]:
        raise ValueError("W must be square")
    if not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(W)))):
        raise ValueError("graph Laplacian requires a symmetric weight matrix")
    deg = W.sum(axis=1)
    if not normalized:
        return np.diag(deg) - W
    inv_sqrt = np.zeros_like(deg)
    pos = deg > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    L = np.eye(W.shape[0]) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    L = 0.5 * (L + L.T)
    return L


def row_normalize(W):
    """Turn an affinity matrix into a row-stochastic diffusion operator.

    Rows summing to zero get a unit self-loop first.
    """
    W = W.weights if isinstance(W, AffinityGraph) else np.asarray(W, dtype=float)
    W = np.array(W, dtype=float)
    if np.any(W < 0):
        raise ValueError("affinities must be nonnegative")
    s = W.sum(axis=1)
    empty = s <= 0
    if np.any(empty):
        W[empty, empty] = 1.0
        s = W.sum(axis=1)
    return DiffusionOperator(W / s[:, None], 1)


def affinity_to_lengths(K, support=None, cap=LENGTH_CAP):
    """Edge lengths ``-log K`` on ``support``; ``inf`` marks missing edges.

    Lengths are clipped at ``cap`` so that a tiny but present affinity
    stays a finite edge.
    """
    K = K.weights if isinstance(K, AffinityGraph) else np.asarray(K, dtype=float)
    if support is None:
        support = K > 0
    L = np.full(K.shape, np.inf)
    with np.errstate(divide="ignore"):
        vals = -np.log(K[support])
    L[support] = np.clip(vals, 0.0, cap)
    return L


def shortest_paths(lengths, sources=None):
    """Dijkstra distances from ``sources`` over a dense edge-length matrix.

    ``lengths[i, j]`` is the length of edge ``i -> j``; ``inf`` (or NaN)
    means no edge. Zero-length edges are real edges. Unreachable pairs are
    ``inf``.

    Returns
    -------
    (len(sources), n) ndarray
    """
    L = np.asarray(lengths, dtype=float)
    n = L.shape[0]
    if L.shape != (n, n):
        raise ValueError("lengths must be square")
    present = np.isfinite(L)
    np.fill_diagonal(present, False)
    if np.any(L[present] < 0):
        raise ValueError("negative edge length")
    if sources is None:
        sources = np.arange(n)
    sources = np.atleast_1d(np.asarray(sources, dtype=int))
    rows, cols = np.nonzero(present)
    vals = L[rows, cols]
    # csgraph drops explicit zeros, so zero-length edges are shifted by a
    # tiny positive amount that is removed again below
    tiny = np.finfo(float).tiny
    G = csr_matrix((np.where(vals == 0, tiny, vals), (rows, cols)), shape=(n, n))
    dist = dijkstra(G, directed=True, indices=sources)
    dist[dist < 1e-300] = 0.0
    return np.atleast_2d(dist)
