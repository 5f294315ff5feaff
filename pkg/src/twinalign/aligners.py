"""Semi-supervised manifold alignment: JLMA, MAPA, SPUD, MASH and DTA.

Every aligner takes a :class:`~twinalign.data.DomainPair`, an
:class:`~twinalign.data.AnchorSet` and an :class:`AlignerConfig` and
returns an :class:`AlignedEmbedding` with one row per input row.

The DTA joint-distance assembly (how within-domain diffusion distances
and coupling-derived cross-domain distances are combined before MDS) is
a construction of this package, not a transcription of the original
method; see :func:`align_dta`.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import graph
from .exceptions import AlignmentError, ConvergenceError, DataError
from .linalg import classical_mds, similarity_procrustes, sinkhorn, sym_eig
from .provenance import hash_array, hash_json

__all__ = [
    "ALIGNERS",
    "AlignedEmbedding",
    "AlignerConfig",
    "align",
    "align_dta",
    "align_jlma",
    "align_mapa",
    "align_mash",
    "align_spud",
    "barycentric_project",
    "dta_cross_cost",
    "mash_diffusion",
    "read_embedding",
    "spud_distances",
    "write_embedding",
]

METHODS = ("JLMA", "MAPA", "SPUD", "MASH", "DTA")


@dataclass(frozen=True)
class AlignerConfig:
    """Hyperparameters shared by the aligners.

    ``epsilon`` is relative: the Sinkhorn regularizer is
    ``epsilon * mean(cost)``.
    """

    dim: int = 2
    k: int = 10
    alpha: float = 10.0
    mu: float = 1.0
    t: int = 8
    epsilon: float = 0.05
    eig_tol: float = 1e-9
    procrustes_scale: bool = True
    sinkhorn_tol: float = 1e-7
    sinkhorn_max_iter: int = 100000

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        for name in ("k", "alpha", "mu", "epsilon", "eig_tol", "sinkhorn_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.t < 0:
            raise ValueError("t must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class AlignedEmbedding:
    """Shared coordinates for both domains.

    ``rows_x``/``rows_y`` are the row indices of the source pair that the
    embedding rows belong to (identity unless the embedding was subset).
    ``cross_xy``/``cross_yx`` are row-stochastic cross-domain weights
    (MASH operator block or DTA coupling), when the method provides them.
    """

    E_x: np.ndarray
    E_y: np.ndarray
    method: str
    dim: int
    provenance: dict = field(default_factory=dict)
    rows_x: np.ndarray | None = None
    rows_y: np.ndarray | None = None
    cross_xy: np.ndarray | None = None
    cross_yx: np.ndarray | None = None
    coupling: object = None

    def __post_init__(self):
        self.E_x = np.asarray(self.E_x, dtype=float)
        self.E_y = np.asarray(self.E_y, dtype=float)
        if self.rows_x is None:
            self.rows_x = np.arange(self.E_x.shape[0])
        if self.rows_y is None:
            self.rows_y = np.arange(self.E_y.shape[0])
        self.rows_x = np.asarray(self.rows_x, dtype=int)
        self.rows_y = np.asarray(self.rows_y, dtype=int)

    @property
    def stacked(self):
        return np.vstack([self.E_x, self.E_y])

    @property
    def hash(self):
        return hash_array(self.E_x, self.E_y, self.rows_x, self.rows_y)

    def subset(self, rows_x, rows_y):
        """Restrict to the given original row indices (in that order)."""
        pos_x = {r: i for i, r in enumerate(self.rows_x)}
        pos_y = {r: i for i, r in enumerate(self.rows_y)}
        try:
            ix = np.array([pos_x[r] for r in np.asarray(rows_x).tolist()], dtype=int)
            iy = np.array([pos_y[r] for r in np.asarray(rows_y).tolist()], dtype=int)
        except KeyError as exc:
            raise DataError(f"embedding has no row {exc}") from None
        return AlignedEmbedding(
            self.E_x[ix], self.E_y[iy], self.method, self.dim,
            dict(self.provenance, parent_hash=self.hash),
            self.rows_x[ix], self.rows_y[iy],
        )


def _check_inputs(pair, anchors, min_anchors=1):
    pairs = np.asarray(getattr(anchors, "pairs", anchors), dtype=int).reshape(-1, 2)
    if pairs.shape[0] < min_anchors:
        raise AlignmentError(f"need at least {min_anchors} anchor(s), got {pairs.shape[0]}")
    if pairs[:, 0].max() >= pair.X.shape[0] or pairs[:, 1].max() >= pair.Y.shape[0]:
        raise DataError("anchor index out of range")
    return pairs


def _k(cfg, n):
    return max(1, min(cfg.k, n - 1))


def _domain_kernels(pair, cfg):
    Kx = graph.alpha_decay_kernel(pair.X, _k(cfg, pair.X.shape[0]), cfg.alpha)
    Ky = graph.alpha_decay_kernel(pair.Y, _k(cfg, pair.Y.shape[0]), cfg.alpha)
    return Kx, Ky


def _provenance(method, pair, anchors, cfg, **extra):
    prov = {
        "method": method,
        "config": cfg.to_dict(),
        "pair_hash": hash_array(pair.X, pair.Y),
        "anchors_hash": hash_array(np.asarray(getattr(anchors, "pairs", anchors))),
    }
    prov.update(extra)
    prov["config_hash"] = hash_json(prov["config"])
    return prov


def _laplacian_eigenmap(W, dim, eig_tol):
    """Eigenvectors of the normalized Laplacian for the ``dim`` smallest nonzero eigenvalues."""
    L = graph.graph_laplacian(W, normalized=True)
    n = L.shape[0]
    if dim + 1 > n:
        raise AlignmentError(f"cannot embed {n} nodes into {dim} dimensions")
    extra = 1
    while True:
        k = min(n, dim + extra)
        w, V = sym_eig(L, k=k, order="smallest")
        keep = np.flatnonzero(w > eig_tol)
        keep = keep[keep >= 1]
        if keep.size >= dim or k == n:
            break
        extra *= 2
    if keep.size < dim:
        raise AlignmentError("not enough nonzero Laplacian eigenvalues")
    zeros = int(np.sum(w <= eig_tol))
    if zeros > 1:
        warnings.warn(f"graph has {zeros} connected components", stacklevel=3)
    return V[:, keep[:dim]]


def align_jlma(pair, anchors, cfg=AlignerConfig()):
    """Joint Laplacian manifold alignment.

    Per-domain alpha-decay graphs joined by anchor edges of weight ``mu``;
    Laplacian eigenmaps of the joint normalized Laplacian.
    """
    pairs = _check_inputs(pair, anchors)
    Kx, Ky = _domain_kernels(pair, cfg)
    W = graph.joint_graph(Kx, Ky, pairs, cfg.mu)
    E = _laplacian_eigenmap(W, cfg.dim, cfg.eig_tol)
    nx = pair.X.shape[0]
    return AlignedEmbedding(E[:nx], E[nx:], "JLMA", cfg.dim, _provenance("JLMA", pair, pairs, cfg))


def align_mapa(pair, anchors, cfg=AlignerConfig()):
    """Manifold alignment via Procrustes analysis.

    Each domain is embedded on its own by Laplacian eigenmaps; the anchor
    rows of ``E_y`` are matched onto those of ``E_x`` by a similarity
    transform (centering, rotation/reflection and, if enabled, uniform
    scale) that is then applied to all of ``E_y``.
    """
    pairs = _check_inputs(pair, anchors, min_anchors=cfg.dim)
    Kx, Ky = _domain_kernels(pair, cfg)
    Ex = _laplacian_eigenmap(Kx, cfg.dim, cfg.eig_tol)
    Ey = _laplacian_eigenmap(Ky, cfg.dim, cfg.eig_tol)
    T = similarity_procrustes(Ey[pairs[:, 1]], Ex[pairs[:, 0]], scale=cfg.procrustes_scale)
    Ey_aligned = T.apply(Ey)
    before = float(np.linalg.norm(Ey[pairs[:, 1]] - Ex[pairs[:, 0]]))
    after = float(np.linalg.norm(Ey_aligned[pairs[:, 1]] - Ex[pairs[:, 0]]))
    prov = _provenance("MAPA", pair, pairs, cfg, anchor_residual_before=before, anchor_residual_after=after)
    return AlignedEmbedding(Ex, Ey_aligned, "MAPA", cfg.dim, prov)


def spud_distances(pair, anchors, cfg=AlignerConfig()):
    """Shortest-path distances over the union graph used by SPUD.

    Within-domain edges live on the symmetrized kNN support with length
    ``-log K``; anchor edges have length ``max(0, -log mu)``.
    """
    pairs = _check_inputs(pair, anchors)
    nx, ny = pair.X.shape[0], pair.Y.shape[0]
    blocks = []
    for M in (pair.X, pair.Y):
        k = _k(cfg, M.shape[0])
        K = graph.alpha_decay_kernel(M, k, cfg.alpha)
        support = graph.knn_graph(M, k).weights > 0
        blocks.append(graph.affinity_to_lengths(K, support))
    cross = np.full((nx, ny), np.inf)
    cross[pairs[:, 0], pairs[:, 1]] = max(0.0, -np.log(cfg.mu))
    L = np.block([[blocks[0], cross], [cross.T, blocks[1]]])
    D = graph.shortest_paths(L)
    if not np.any(np.isfinite(D[:nx, nx:])):
        raise AlignmentError("no path connects the two domains")
    D = 0.5 * (D + D.T)
    if not np.all(np.isfinite(D)):
        finite_max = np.max(D[np.isfinite(D)])
        warnings.warn("union graph is disconnected; unreachable pairs set to the largest finite distance",
                      stacklevel=2)
        D[~np.isfinite(D)] = finite_max
    return D


def align_spud(pair, anchors, cfg=AlignerConfig()):
    """Shortest paths on the union of domains, embedded by classical MDS."""
    pairs = _check_inputs(pair, anchors)
    D = spud_distances(pair, pairs, cfg)
    E = classical_mds(D, cfg.dim)
    nx = pair.X.shape[0]
    return AlignedEmbedding(E[:nx], E[nx:], "SPUD", cfg.dim, _provenance("SPUD", pair, pairs, cfg))


def _powered(P, t):
    t = int(t)
    while True:
        Pt = np.linalg.matrix_power(P, t)
        nz = Pt[Pt > 0]
        if t <= 1 or nz.size == 0 or nz.min() >= 1e-300:
            return Pt, t
        warnings.warn(f"diffusion power t={t} underflows; halving", stacklevel=3)
        t //= 2


def _row_stochastic(W):
    s = W.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise AlignmentError("cross-domain weight row with zero mass")
    return W / s


def mash_diffusion(pair, anchors, cfg=AlignerConfig()):
    """Joint diffusion operator powered to ``cfg.t`` steps.

    Returns ``(P_t, t_used)``; ``t_used`` is smaller than ``cfg.t`` only if
    the powers underflowed.
    """
    pairs = _check_inputs(pair, anchors)
    if cfg.t < 1:
        raise ValueError("MASH needs t >= 1")
    Kx, Ky = _domain_kernels(pair, cfg)
    W = graph.joint_graph(Kx, Ky, pairs, cfg.mu)
    P = graph.row_normalize(W).P
    return _powered(P, cfg.t)


def align_mash(pair, anchors, cfg=AlignerConfig()):
    """Manifold alignment via stochastic hopping.

    The joint alpha-decay graph is row-normalized into a diffusion
    operator, raised to ``t`` steps, and diffusion distances between its
    rows are embedded by classical MDS. The cross-domain blocks of the
    powered operator are kept (row-normalized) for barycentric projection.
    """
    pairs = _check_inputs(pair, anchors)
    Pt, t_used = mash_diffusion(pair, pairs, cfg)
    D = graph.pairwise_distances(Pt)
    E = classical_mds(D, cfg.dim)
    nx = pair.X.shape[0]
    prov = _provenance("MASH", pair, pairs, cfg, t_used=t_used)
    return AlignedEmbedding(
        E[:nx], E[nx:], "MASH", cfg.dim, prov,
        cross_xy=_row_stochastic(Pt[:nx, nx:]), cross_yx=_row_stochastic(Pt[nx:, :nx]),
    )


#: Cross-domain distances from the coupling are capped at -log(COUPLING_FLOOR).
COUPLING_FLOOR = 1e-12


def dta_cross_cost(pair, anchors, cfg=AlignerConfig()):
    """Cross-domain L1 distances between anchor-restricted diffusion profiles.

    Returns ``(cost, Px_t, Py_t)``. Profiles are the rows of the powered
    per-domain operators restricted to anchor columns (ordered so column
    ``a`` of both refers to the same anchor pair) and renormalized to sum
    to one.
    """
    pairs = _check_inputs(pair, anchors)
    Kx, Ky = _domain_kernels(pair, cfg)
    Px, _ = _powered(graph.row_normalize(Kx).P, max(cfg.t, 1))
    Py, _ = _powered(graph.row_normalize(Ky).P, max(cfg.t, 1))
    Ax = Px[:, pairs[:, 0]]
    Ay = Py[:, pairs[:, 1]]
    Ax = Ax / np.maximum(Ax.sum(axis=1, keepdims=True), 1e-300)
    Ay = Ay / np.maximum(Ay.sum(axis=1, keepdims=True), 1e-300)
    cost = np.abs(Ax[:, None, :] - Ay[None, :, :]).sum(axis=2)
    return cost, Px, Py


def align_dta(pair, anchors, cfg=AlignerConfig()):
    """Diffusion transport alignment.

    1. Per-domain diffusion operators ``P_X^t``, ``P_Y^t``.
    2. Cross-domain cost from anchor-restricted diffusion profiles
       (:func:`dta_cross_cost`).
    3. Entropic OT with uniform marginals, regularizer
       ``cfg.epsilon * mean(cost)``.
    4. Joint distance matrix: within-domain diffusion distances on the
       diagonal blocks; cross block ``-log(pi / max pi)`` clipped at
       ``-log(1e-12)`` and rescaled so its median matches the median
       within-domain distance.
    5. Classical MDS.
    """
    pairs = _check_inputs(pair, anchors)
    cost, Px, Py = dta_cross_cost(pair, pairs, cfg)
    eps = cfg.epsilon * float(cost.mean()) if cost.mean() > 0 else cfg.epsilon
    try:
        coupling = sinkhorn(cost, epsilon=eps, tol=cfg.sinkhorn_tol, max_iter=cfg.sinkhorn_max_iter)
    except ConvergenceError as exc:
        raise AlignmentError(f"DTA Sinkhorn failed: {exc}") from exc
    pi = coupling.values
    with np.errstate(divide="ignore"):
        cross = -np.log(pi / pi.max())
    cross = np.clip(cross, 0.0, -np.log(COUPLING_FLOOR))
    Dx = graph.pairwise_distances(Px)
    Dy = graph.pairwise_distances(Py)
    within = np.concatenate([Dx[np.triu_indices_from(Dx, 1)], Dy[np.triu_indices_from(Dy, 1)]])
    med_w = np.median(within)
    med_c = np.median(cross)
    if med_c > 0 and med_w > 0:
        cross = cross * (med_w / med_c)
    D = np.block([[Dx, cross], [cross.T, Dy]])
    E = classical_mds(D, cfg.dim)
    nx = pair.X.shape[0]
    prov = _provenance("DTA", pair, pairs, cfg, sinkhorn_epsilon=eps,
                       marginal_error=coupling.marginal_error, sinkhorn_iter=coupling.n_iter)
    return AlignedEmbedding(E[:nx], E[nx:], "DTA", cfg.dim, prov,
                            cross_xy=_row_stochastic(pi), cross_yx=_row_stochastic(pi.T), coupling=coupling)


ALIGNERS = {
    "JLMA": align_jlma,
    "MAPA": align_mapa,
    "SPUD": align_spud,
    "MASH": align_mash,
    "DTA": align_dta,
}


def align(method, pair, anchors, cfg=AlignerConfig()):
    """Dispatch to the aligner registered under ``method`` (case-insensitive)."""
    key = method.upper()
    if key not in ALIGNERS:
        raise ValueError(f"unknown alignment method {method!r}; choose from {sorted(ALIGNERS)}")
    return ALIGNERS[key](pair, anchors, cfg)


def barycentric_project(weights, targets):
    """Project rows as weighted averages of ``targets``.

    ``weights`` rows are renormalized to sum to one; an all-zero row is an
    error.
    """
    W = np.asarray(weights, dtype=float)
    T = np.asarray(targets, dtype=float)
    if W.ndim != 2 or W.shape[1] != T.shape[0]:
        raise ValueError(f"weights {W.shape} do not match targets {T.shape}")
    if np.any(W < 0):
        raise ValueError("weights must be nonnegative")
    s = W.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise ValueError("all-zero weight row")
    return (W / s) @ T


def write_embedding(emb, path):
    """Write ``domain,row_index,e_1..e_m`` CSV plus a ``.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["domain", "row_index"] + [f"e_{i + 1}" for i in range(emb.E_x.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for tag, E, rows in (("X", emb.E_x, emb.rows_x), ("Y", emb.E_y, emb.rows_y)):
            for r, e in zip(rows, E):
                w.writerow([tag, int(r)] + [repr(float(v)) for v in e])
    sidecar = {"method": emb.method, "dim": emb.dim, "provenance": emb.provenance, "embedding_hash": emb.hash}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_embedding(path, method=None):
    """Read an embedding CSV (ours or an external tool's) and its optional sidecar."""
    path = Path(path)
    rows = {"X": [], "Y": []}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["domain", "row_index"] or len(header) < 3:
            raise DataError(f"{path}: expected header domain,row_index,e_1..e_m")
        for line in reader:
            if not line:
                continue
            if line[0] not in rows:
                raise DataError(f"{path}: bad domain tag {line[0]!r}")
            rows[line[0]].append([int(line[1])] + [float(v) for v in line[2:]])
    if not rows["X"] or not rows["Y"]:
        raise DataError(f"{path}: both domains must be present")
    X = np.asarray(rows["X"])
    Y = np.asarray(rows["Y"])
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    m = X.shape[1] - 1
    return AlignedEmbedding(
        X[:, 1:], Y[:, 1:], method or meta.get("method", "EXTERNAL"), m,
        meta.get("provenance", {}), X[:, 0].astype(int), Y[:, 0].astype(int),
    )


def with_config(cfg, **changes):
    """Copy of ``cfg`` with some fields replaced."""
    return replace(cfg, **changes)
