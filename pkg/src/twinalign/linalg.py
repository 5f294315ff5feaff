"""Dense numerical kernels shared by the aligners.

Symmetric eigendecomposition, classical MDS, orthogonal Procrustes,
random rotations and Sinkhorn entropic optimal transport.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .exceptions import ConvergenceError

__all__ = [
    "Coupling",
    "classical_mds",
    "jacobi_eigh",
    "procrustes_align",
    "random_rotation",
    "similarity_procrustes",
    "sinkhorn",
    "sym_eig",
]


def _check_finite(A, name):
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")


def jacobi_eigh(A, tol=1e-13, max_sweeps=100):
    """Cyclic Jacobi eigenvalue algorithm for a dense symmetric matrix.

    Returns all eigenvalues (unsorted) and the matrix of eigenvectors as
    columns. Intended for small matrices; it is O(n^3) per sweep with a
    Python-level loop over the n(n-1)/2 rotation pairs.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        if off <= tol * scale:
            return np.diag(A).copy(), V
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    off = np.sqrt(max(np.sum(A**2) - np.sum(np.diag(A) ** 2), 0.0))
    raise ConvergenceError(
        f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal norm {off:.3e})",
        residual=off,
        n_iter=max_sweeps,
    )


def sym_eig(A, k=None, order="smallest", method="lapack"):
    """Partial eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    A : (n, n) array_like
        Symmetric matrix. Asymmetry up to 1e-8 is removed by averaging
        with the transpose.
    k : int, optional
        Number of eigenpairs to return (default: all).
    order : {"smallest", "largest"}
        Which end of the spectrum to return; eigenvalues are sorted
        ascending for ``"smallest"`` and descending for ``"largest"``.
    method : {"lapack", "jacobi"}
        ``"lapack"`` uses ``scipy.linalg.eigh``; ``"jacobi"`` uses the
        in-package cyclic Jacobi solver.

    Returns
    -------
    eigenvalues : (k,) ndarray
    eigenvectors : (n, k) ndarray
        Orthonormal columns.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    _check_finite(A, "A")
    n = A.shape[0]
    if k is None:
        k = n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if order not in ("smallest", "largest"):
        raise ValueError(f"unknown order {order!r}")
    asym = np.max(np.abs(A - A.T)) if n else 0.0
    if asym > 1e-8 * max(1.0, np.max(np.abs(A))):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.2e})")
    A = 0.5 * (A + A.T)

    if method == "lapack":
        if order == "smallest":
            w, V = scipy.linalg.eigh(A, subset_by_index=[0, k - 1])
        else:
            w, V = scipy.linalg.eigh(A, subset_by_index=[n - k, n - 1])
            w, V = w[::-1], V[:, ::-1]
    elif method == "jacobi":
        w, V = jacobi_eigh(A)
        idx = np.argsort(w, kind="stable")
        if order == "largest":
            idx = idx[::-1]
        idx = idx[:k]
        w, V = w[idx], V[:, idx]
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.ascontiguousarray(w), np.ascontiguousarray(V)


def classical_mds(D, dim=2):
    """Classical (Torgerson) multidimensional scaling.

    The squared distances are double-centered into a Gram matrix whose
    top ``dim`` eigenpairs give the coordinates. Negative eigenvalues are
    clamped to zero, which yields zero columns.
    """
    D = np.asarray(D, dtype=float)
    _check_finite(D, "D")
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n:
        raise ValueError(f"expected a square distance matrix, got shape {D.shape}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n == 1:
        return np.zeros((1, dim))
    if dim > n - 1:
        raise ValueError(f"dim must be <= n - 1 = {n - 1}, got {dim}")
    D2 = D**2
    D2 = 0.5 * (D2 + D2.T)
    # -1/2 J D^2 J without forming J
    row = D2.mean(axis=1)
    B = -0.5 * (D2 - row[:, None] - row[None, :] + row.mean())
    w, V = sym_eig(B, k=dim, order="largest")
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)[None, :]


def procrustes_align(source, target):
    """Orthogonal Procrustes: rotate ``source`` onto ``target``.

    Solves ``min ||source @ Q - target||_F`` over orthogonal ``Q``
    (reflections allowed) through the SVD of ``source.T @ target``.

    Returns
    -------
    rotation : (m, m) ndarray
    aligned : (n, m) ndarray
        ``source @ rotation``.
    residual : float
        The minimized Frobenius norm.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape or source.ndim != 2:
        raise ValueError(f"shape mismatch: {source.shape} vs {target.shape}")
    if source.shape[0] < 1:
        raise ValueError("need at least one row")
    _check_finite(source, "source")
    _check_finite(target, "target")
    U, _, Vt = np.linalg.svd(source.T @ target)
    rotation = U @ Vt
    aligned = source @ rotation
    residual = float(np.linalg.norm(aligned - target))
    return rotation, aligned, residual


@dataclass(frozen=True)
class SimilarityTransform:
    """``x -> scale * (x - source_mean) @ rotation + target_mean``."""

    rotation: np.ndarray
    scale: float
    source_mean: np.ndarray
    target_mean: np.ndarray

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return self.scale * (points - self.source_mean) @ self.rotation + self.target_mean


def similarity_procrustes(source, target, scale=True):
    """Procrustes with centering and an optional uniform scale factor."""
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    S = source - mu_s
    T = target - mu_t
    rotation, aligned, _ = procrustes_align(S, T)
    s = 1.0
    if scale:
        denom = np.sum(S**2)
        # optimal scale is trace(S^T T Q^T) / ||S||^2 = <S Q, T> / ||S||^2
        s = float(np.sum(aligned * T) / denom) if denom > 0 else 1.0
    return SimilarityTransform(rotation, s, mu_s, mu_t)


def random_rotation(d, seed=None):
    """Random orthogonal matrix from the QR factorization of a Gaussian matrix.

    Column signs are fixed so that R has a positive diagonal, which makes
    Q Haar-distributed.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs[None, :]


@dataclass(frozen=True)
class Coupling:
    """Transport plan between two discrete measures."""

    values: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    marginal_error: float
    n_iter: int

    @property
    def shape(self):
        return self.values.shape


def _marginal_error(P, mu, nu):
    return float(np.abs(P.sum(axis=1) - mu).sum() + np.abs(P.sum(axis=0) - nu).sum())


def sinkhorn(cost, mu=None, nu=None, epsilon=0.05, tol=1e-9, max_iter=10000, check_every=10):
    """Entropic optimal transport by Sinkhorn iterations.

    Plain matrix scaling is used when ``exp(-cost / epsilon)`` has a safe
    dynamic range; otherwise the iterations run on log-potentials.

    Parameters
    ----------
    cost : (n, m) array_like
        Finite transport costs.
    mu, nu : array_like, optional
        Source and target probability vectors (uniform by default).
    epsilon : float
        Entropic regularization strength (absolute, in cost units).
    tol : float
        Stop when the L1 errors of both marginals sum to at most ``tol``.
    max_iter : int
        Iteration cap; a :class:`ConvergenceError` carrying the achieved
        marginal error is raised when it is hit.

    Returns
    -------
    Coupling
    """
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    _check_finite(C, "cost")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    n, m = C.shape
    mu = np.full(n, 1.0 / n) if mu is None else np.asarray(mu, dtype=float)
    nu = np.full(m, 1.0 / m) if nu is None else np.asarray(nu, dtype=float)
    if mu.shape != (n,) or nu.shape != (m,):
        raise ValueError("marginal lengths do not match the cost matrix")
    for name, v in (("mu", mu), ("nu", nu)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
            raise ValueError(f"{name} must be a probability vector")

    if (C.max() - C.min()) / epsilon < _SCALING_RANGE and np.all(mu > 0) and np.all(nu > 0):
        return _sinkhorn_scaling(C, mu, nu, epsilon, tol, max_iter, check_every)
    return _sinkhorn_log(C, mu, nu, epsilon, tol, max_iter, check_every)


#: Plain (non-log) scaling is used while exp(-C/epsilon) stays far from underflow.
_SCALING_RANGE = 500.0


def _sinkhorn_scaling(C, mu, nu, epsilon, tol, max_iter, check_every):
    K = np.exp(-(C - C.min()) / epsilon)
    u = np.ones_like(mu)
    v = np.ones_like(nu)
    err = np.inf
    for it in range(1, max_iter + 1):
        u = mu / (K @ v)
        v = nu / (K.T @ u)
        if it % check_every == 0 or it == max_iter:
            row = u * (K @ v)
            # column marginals are exact right after the v update
            err = float(np.abs(row - mu).sum() + np.abs(v * (K.T @ u) - nu).sum())
            if err <= tol:
                P = u[:, None] * K * v[None, :]
                return Coupling(P, mu, nu, _marginal_error(P, mu, nu), it)
    _raise_unconverged(err, tol, max_iter)


def _sinkhorn_log(C, mu, nu, epsilon, tol, max_iter, check_every):
    with np.errstate(divide="ignore"):
        log_mu = np.log(mu)
        log_nu = np.log(nu)
    K = -C / epsilon
    f = np.zeros(C.shape[0])
    g = np.zeros(C.shape[1])
    err = np.inf
    for it in range(1, max_iter + 1):
        f = log_mu - logsumexp(K + g[None, :], axis=1)
        g = log_nu - logsumexp(K + f[:, None], axis=0)
        if it % check_every == 0 or it == max_iter:
            P = np.exp(K + f[:, None] + g[None, :])
            err = _marginal_error(P, mu, nu)
            if err <= tol:
                return Coupling(P, mu, nu, err, it)
    _raise_unconverged(err, tol, max_iter)


def _raise_unconverged(err, tol, max_iter):
    raise ConvergenceError(
        f"Sinkhorn reached max_iter={max_iter} with marginal error {err:.3e} > tol={tol:.1e}",
        residual=err,
        n_iter=max_iter,
    )
