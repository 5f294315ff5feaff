import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog
from scipy.spatial.distance import pdist, squareform

from twinalign.exceptions import ConvergenceError
from twinalign.linalg import (
    classical_mds,
    jacobi_eigh,
    procrustes_align,
    random_rotation,
    similarity_procrustes,
    sinkhorn,
    sym_eig,
)


def random_symmetric(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n))
    return A + A.T


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_sym_eig_identity(method):
    w, V = sym_eig(np.eye(5), k=5, method=method)
    npt.assert_allclose(w, np.ones(5))
    npt.assert_allclose(V.T @ V, np.eye(5), atol=1e-12)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_sym_eig_diag_order(method):
    A = np.diag([3.0, 1.0, 2.0])
    w, _ = sym_eig(A, k=3, order="smallest", method=method)
    npt.assert_allclose(w, [1, 2, 3])
    w, _ = sym_eig(A, k=2, order="largest", method=method)
    npt.assert_allclose(w, [3, 2])


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
@pytest.mark.parametrize("seed", range(5))
def test_sym_eig_residual_oracle(method, seed):
    A = random_symmetric(8, seed)
    w, V = sym_eig(A, k=8, method=method)
    for i in range(8):
        v = V[:, i]
        assert np.linalg.norm(A @ v - w[i] * v) / np.linalg.norm(v) <= 1e-8
    assert np.max(np.abs(V.T @ V - np.eye(8))) <= 1e-8
    assert np.all(np.diff(w) >= 0)


def test_jacobi_matches_lapack_spectrum():
    A = random_symmetric(12, 42)
    w_j, _ = jacobi_eigh(A)
    npt.assert_allclose(np.sort(w_j), np.linalg.eigvalsh(A), atol=1e-10)


def test_sym_eig_errors():
    with pytest.raises(ValueError):
        sym_eig(np.array([[np.nan, 0], [0, 1]]))
    with pytest.raises(ValueError):
        sym_eig(np.eye(3), k=4)
    with pytest.raises(ValueError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_jacobi_reports_nonconvergence():
    with pytest.raises(ConvergenceError):
        jacobi_eigh(random_symmetric(6, 0), max_sweeps=1)


def test_mds_equilateral_triangle():
    D = np.ones((3, 3)) - np.eye(3)
    Y = classical_mds(D, 2)
    npt.assert_allclose(squareform(pdist(Y)), D, atol=1e-9)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_mds_realizable_distances(dim):
    P = np.random.default_rng(dim).standard_normal((15, dim))
    D = squareform(pdist(P))
    Y = classical_mds(D, dim)
    rec = squareform(pdist(Y))
    assert np.max(np.abs(rec - D)) / np.max(D) <= 1e-9


def test_mds_single_point():
    npt.assert_array_equal(classical_mds(np.zeros((1, 1)), 2), np.zeros((1, 2)))


def test_mds_negative_eigenvalues_clamped():
    # non-Euclidean: triangle inequality violated
    D = np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float)
    Y = classical_mds(D, 2)
    assert np.all(np.isfinite(Y))
    assert np.allclose(Y[:, 1], 0.0)


def test_mds_errors():
    with pytest.raises(ValueError):
        classical_mds(np.array([[0, np.inf], [np.inf, 0]]), 1)
    with pytest.raises(ValueError):
        classical_mds(np.zeros((3, 3)), 3)


def test_procrustes_identity():
    S = np.random.default_rng(0).standard_normal((10, 3))
    Q, aligned, res = procrustes_align(S, S)
    npt.assert_allclose(aligned, S, atol=1e-12)
    assert res <= 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_procrustes_planted_rotation(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 6))
    S = rng.standard_normal((20, m))
    Q0 = random_rotation(m, seed + 100)
    if seed % 2:
        Q0[:, 0] *= -1  # reflections are allowed
    T = S @ Q0
    Q, aligned, res = procrustes_align(S, T)
    assert np.linalg.norm(S @ Q - T) <= 1e-8
    assert res <= 1e-8
    npt.assert_allclose(Q.T @ Q, np.eye(m), atol=1e-12)


def test_procrustes_single_row():
    _, aligned, res = procrustes_align(np.array([[1.0, 2.0]]), np.array([[-2.0, 1.0]]))
    assert res <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 12))
def test_procrustes_never_worse_than_identity(seed, m, n):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((n, m))
    T = rng.standard_normal((n, m))
    _, _, res = procrustes_align(S, T)
    assert res <= np.linalg.norm(S - T) + 1e-10


def test_procrustes_errors():
    with pytest.raises(ValueError):
        procrustes_align(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        procrustes_align(np.array([[np.nan, 1.0]]), np.ones((1, 2)))


def test_similarity_procrustes_recovers_scale_and_shift():
    rng = np.random.default_rng(3)
    S = rng.standard_normal((12, 2))
    Q0 = random_rotation(2, 7)
    T = 2.5 * S @ Q0 + np.array([1.0, -4.0])
    tf = similarity_procrustes(S, T)
    npt.assert_allclose(tf.apply(S), T, atol=1e-10)
    assert tf.scale == pytest.approx(2.5)


@pytest.mark.parametrize("d", [1, 2, 5, 17])
def test_random_rotation_orthogonal(d):
    Q = random_rotation(d, 11)
    assert np.max(np.abs(Q.T @ Q - np.eye(d))) <= 1e-10
    npt.assert_array_equal(Q, random_rotation(d, 11))


def test_random_rotation_d1():
    assert abs(abs(random_rotation(1, 0)[0, 0]) - 1.0) < 1e-15


def test_sinkhorn_constant_cost():
    C = np.full((4, 6), 3.0)
    P = sinkhorn(C, epsilon=0.1).values
    npt.assert_allclose(P, np.full((4, 6), 1 / 24), atol=1e-12)


def test_sinkhorn_two_by_two_against_lp():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    mu = nu = np.array([0.5, 0.5])
    res = linprog(C.ravel(), A_eq=np.array([[1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 1, 0], [0, 1, 0, 1]]),
                  b_eq=np.r_[mu, nu], bounds=(0, None))
    lp = res.x.reshape(2, 2)
    P = sinkhorn(C, mu, nu, epsilon=0.01).values
    assert P[0, 1] <= 0.01 and P[1, 0] <= 0.01
    npt.assert_allclose(P, lp, atol=0.01)


@pytest.mark.parametrize("seed", range(3))
def test_sinkhorn_marginal_residual(seed):
    rng = np.random.default_rng(seed)
    C = rng.random((10, 12))
    mu = rng.random(10)
    mu /= mu.sum()
    nu = rng.random(12)
    nu /= nu.sum()
    cp = sinkhorn(C, mu, nu, epsilon=0.05, tol=1e-9)
    P = cp.values
    err = np.abs(P.sum(1) - mu).sum() + np.abs(P.sum(0) - nu).sum()
    assert err <= 1e-9
    assert np.all(P >= 0)
    # Gibbs form: log P = (f + g - C) / eps has rank-2 structure in (i, j)
    L = np.log(P) + C / 0.05
    npt.assert_allclose(L - L[:, :1] - L[:1, :] + L[0, 0], 0.0, atol=1e-8)


def test_sinkhorn_small_epsilon_stable():
    # range/epsilon = 1000 forces the log-domain path
    C = np.random.default_rng(0).random((20, 20))
    cp = sinkhorn(C, epsilon=1e-3, tol=1e-4, max_iter=50000)
    assert np.all(np.isfinite(cp.values))
    assert cp.marginal_error <= 1e-4


def test_sinkhorn_paths_agree():
    rng = np.random.default_rng(5)
    C = rng.random((8, 9))
    a = sinkhorn(C, epsilon=0.05, tol=1e-12)
    from twinalign.linalg import _sinkhorn_log

    b = _sinkhorn_log(C, np.full(8, 1 / 8), np.full(9, 1 / 9), 0.05, 1e-12, 100000, 10)
    npt.assert_allclose(a.values, b.values, atol=1e-12)


def test_sinkhorn_errors():
    C = np.random.default_rng(0).random((5, 5))
    with pytest.raises(ValueError):
        sinkhorn(C, epsilon=0.0)
    with pytest.raises(ConvergenceError) as info:
        sinkhorn(C, epsilon=1e-3, tol=1e-15, max_iter=3, check_every=1)
    assert info.value.residual is not None
