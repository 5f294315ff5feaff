import warnings

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import floyd_warshall, random_length_graph
from twinalign.exceptions import DegenerateBandwidthError
from twinalign.graph import (
    DiffusionOperator,
    affinity_to_lengths,
    alpha_decay_kernel,
    graph_laplacian,
    joint_graph,
    knn_graph,
    knn_indices,
    pairwise_distances,
    row_normalize,
    shortest_paths,
)


# --- knn_graph ---------------------------------------------------------------

def test_knn_collinear_middle_links_left():
    pts = np.array([[0.0], [1.0], [3.0]])
    assert knn_indices(pairwise_distances(pts), 1)[1, 0] == 0
    W = knn_graph(pts, k=1).weights
    # (3) picks (1) as its neighbor, so symmetrization adds that edge too
    npt.assert_array_equal(W, [[0, 1, 0], [1, 0, 1], [0, 1, 0]])


def test_knn_symmetric():
    pts = np.random.default_rng(0).standard_normal((30, 3))
    W = knn_graph(pts, 4).weights
    npt.assert_array_equal(W, W.T)


@pytest.mark.parametrize("seed", range(5))
def test_knn_matches_sort_oracle(seed):
    pts = np.random.default_rng(seed).standard_normal((20, 3))
    k = 4
    idx = knn_indices(pairwise_distances(pts), k)
    for i in range(20):
        d = [(float(np.sum((pts[i] - pts[j]) ** 2)), j) for j in range(20) if j != i]
        expected = [j for _, j in sorted(d)[:k]]
        assert list(idx[i]) == expected


def test_knn_ties_go_to_lower_index():
    pts = np.array([[0.0], [1.0], [-1.0], [5.0]])
    assert knn_indices(pairwise_distances(pts), 1)[0, 0] == 1


def test_knn_each_row_has_k_before_symmetrization():
    pts = np.random.default_rng(1).standard_normal((15, 2))
    W = knn_graph(pts, 3).weights
    assert np.all(W.sum(axis=1) >= 3)
    assert np.all(np.diag(W) == 0)


def test_knn_duplicates_allowed_and_weighted():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    W = knn_graph(pts, 1, weighted=True).weights
    assert W[0, 1] == 0.0  # zero-length edge is present but carries weight 0
    assert W[2, 0] == 1.0


@pytest.mark.parametrize("k", [0, 3])
def test_knn_k_out_of_range(k):
    with pytest.raises(ValueError):
        knn_graph(np.zeros((3, 1)) + np.arange(3)[:, None], k)


# --- alpha_decay_kernel ------------------------------------------------------

def test_alpha_kernel_diagonal_and_symmetry():
    pts = np.random.default_rng(2).standard_normal((25, 4))
    K = alpha_decay_kernel(pts, k=5, alpha=10).weights
    npt.assert_array_equal(np.diag(K), 1.0)
    npt.assert_array_equal(K, K.T)
    assert np.all((K >= 0) & (K <= 1))


def test_alpha_kernel_direct_formula():
    pts = np.random.default_rng(3).standard_normal((12, 2))
    k, a = 3, 4.0
    K = alpha_decay_kernel(pts, k, a).weights
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    sig = np.array([np.sort(np.delete(D[i], i))[k - 1] for i in range(12)])
    for i in range(12):
        for j in range(12):
            if i != j:
                expect = 0.5 * np.exp(-(D[i, j] / sig[i]) ** a) + 0.5 * np.exp(-(D[i, j] / sig[j]) ** a)
                assert K[i, j] == pytest.approx(expect, rel=1e-12, abs=1e-300)


def test_alpha_kernel_hard_threshold_limit():
    # each half of the kernel becomes an indicator of d <= sigma, so with
    # alpha=40 K is about 1 inside both bandwidths, 1/2 inside exactly one
    # of them and 0 outside both
    g = np.linspace(0, 3, 7)
    pts = np.array([[x, y] for x in g for y in g]) + np.random.default_rng(4).normal(0, 0.05, (49, 2))
    G = alpha_decay_kernel(pts, k=4, alpha=40)
    K, sig = G.weights, G.kernel_params["sigma"]
    D = pairwise_distances(pts)
    lo = np.minimum(sig[:, None], sig[None, :])
    hi = np.maximum(sig[:, None], sig[None, :])
    # stay clear of the transition band around each bandwidth
    clear = (np.abs(D / lo - 1) > 0.1) & (np.abs(D / hi - 1) > 0.1)
    np.fill_diagonal(clear, False)
    inside_both = clear & (D < lo)
    inside_one = clear & (D > lo) & (D < hi)
    outside = clear & (D > hi)
    assert inside_both.any() and inside_one.any() and outside.any()
    assert np.all(K[inside_both] > 0.98)
    assert np.all(np.abs(K[inside_one] - 0.5) < 0.02)
    assert np.all(K[outside] < 0.01)
    # K >= 0.49 exactly when d is inside the larger bandwidth
    npt.assert_array_equal((K >= 0.49)[clear], (D <= hi)[clear])


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(1.0, 20.0))
def test_alpha_kernel_monotone_in_distance(s1, s2, alpha):
    d = np.linspace(0, 10, 50)
    K = 0.5 * np.exp(-(d / s1) ** alpha) + 0.5 * np.exp(-(d / s2) ** alpha)
    assert np.all(np.diff(K) <= 1e-15)


def test_alpha_kernel_degenerate_bandwidth():
    pts = np.array([[0.0], [0.0], [0.0], [1.0]])
    with pytest.raises(DegenerateBandwidthError):
        alpha_decay_kernel(pts, k=2)


def test_alpha_kernel_rejects_small_alpha():
    with pytest.raises(ValueError):
        alpha_decay_kernel(np.arange(5.0)[:, None], k=2, alpha=0.5)


# --- joint_graph -------------------------------------------------------------

def test_joint_graph_without_anchors_is_block_diagonal():
    Wx, Wy = np.ones((3, 3)), 2 * np.ones((4, 4))
    with pytest.warns(UserWarning):
        J = joint_graph(Wx, Wy, np.zeros((0, 2), dtype=int)).weights
    npt.assert_array_equal(J[:3, 3:], 0)
    npt.assert_array_equal(J[:3, :3], Wx)


def test_joint_graph_full_correspondence_permutation():
    perm = np.array([2, 0, 3, 1])
    J = joint_graph(np.zeros((4, 4)), np.zeros((4, 4)), np.column_stack([np.arange(4), perm])).weights
    C = J[:4, 4:]
    npt.assert_array_equal(C.sum(0), 1)
    npt.assert_array_equal(C.sum(1), 1)
    npt.assert_array_equal(C @ np.arange(4), perm)


def test_joint_graph_row_sums():
    rng = np.random.default_rng(5)
    Wx, Wy = rng.random((6, 6)), rng.random((5, 5))
    Wx, Wy = Wx + Wx.T, Wy + Wy.T
    pairs = np.array([[0, 1], [3, 4], [5, 0]])
    mu = 0.7
    J = joint_graph(Wx, Wy, pairs, mu).weights
    cx = np.bincount(pairs[:, 0], minlength=6)
    cy = np.bincount(pairs[:, 1], minlength=5)
    npt.assert_allclose(J.sum(1), np.r_[Wx.sum(1) + mu * cx, Wy.sum(1) + mu * cy], rtol=1e-14)
    npt.assert_array_equal(J, J.T)


def test_joint_graph_bad_anchor():
    with pytest.raises(IndexError):
        joint_graph(np.zeros((2, 2)), np.zeros((2, 2)), np.array([[0, 5]]))


# --- laplacian ---------------------------------------------------------------

def test_laplacian_path_graph():
    W = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    npt.assert_array_equal(graph_laplacian(W), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_laplacian_constant_null_vector():
    W = alpha_decay_kernel(np.random.default_rng(6).standard_normal((20, 2)), 5).weights
    npt.assert_allclose(graph_laplacian(W) @ np.ones(20), 0, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_laplacians_psd(seed):
    W = np.random.default_rng(seed).random((15, 15))
    W = W + W.T
    W[0, :] = W[:, 0] = 0  # isolated node
    for normalized in (False, True):
        L = graph_laplacian(W, normalized)
        assert np.linalg.eigvalsh(L).min() >= -1e-10
    Ln = graph_laplacian(W, True)
    assert Ln[0, 0] == 1.0
    npt.assert_array_equal(graph_laplacian(W)[0], 0)


def test_laplacian_rejects_asymmetric():
    with pytest.raises(ValueError):
        graph_laplacian(np.array([[0, 1.0], [0, 0]]))


# --- diffusion ---------------------------------------------------------------

def test_row_normalize_uniform():
    npt.assert_allclose(row_normalize(np.ones((4, 4))).P, 0.25)


def test_row_normalize_isolated_self_loop():
    W = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
    P = row_normalize(W).P
    assert P[2, 2] == 1.0
    npt.assert_allclose(P.sum(1), 1.0, atol=1e-12)


@pytest.mark.parametrize("t", [1, 8, 32])
def test_powers_stay_stochastic(t):
    W = alpha_decay_kernel(np.random.default_rng(7).standard_normal((30, 3)), 5).weights
    op = row_normalize(W)
    Pt = op.power(t).P
    ref = np.eye(30)
    for _ in range(t):
        ref = ref @ op.P
    npt.assert_allclose(Pt, ref, atol=1e-12)
    assert np.max(np.abs(Pt.sum(1) - 1)) <= 1e-9
    assert op.power(t).steps_applied == t


def test_power_zero_is_identity():
    op = DiffusionOperator(np.full((3, 3), 1 / 3))
    npt.assert_array_equal(op.power(0).P, np.eye(3))


# --- shortest paths ----------------------------------------------------------

def test_path_graph_distances():
    n = 6
    L = np.full((n, n), np.inf)
    for i in range(n - 1):
        L[i, i + 1] = L[i + 1, i] = 1.0
    D = shortest_paths(L)
    i, j = np.indices((n, n))
    npt.assert_array_equal(D, np.abs(i - j))


@pytest.mark.parametrize("seed", range(20))
def test_shortest_paths_floyd_warshall(seed):
    # integer lengths make every path sum exact regardless of order
    L = random_length_graph(12, seed, directed=bool(seed % 2), integer=True)
    npt.assert_array_equal(shortest_paths(L), floyd_warshall(L))


@pytest.mark.parametrize("seed", range(5))
def test_shortest_paths_floyd_warshall_real_lengths(seed):
    L = random_length_graph(12, seed)
    npt.assert_allclose(shortest_paths(L), floyd_warshall(L), rtol=1e-14)


def test_shortest_paths_zero_length_edges():
    L = np.full((3, 3), np.inf)
    L[0, 1] = L[1, 0] = 0.0
    L[1, 2] = L[2, 1] = 2.0
    D = shortest_paths(L)
    assert D[0, 1] == 0.0 and D[0, 2] == 2.0


def test_shortest_paths_disconnected_and_sources():
    L = np.full((4, 4), np.inf)
    L[0, 1] = L[1, 0] = 1.0
    D = shortest_paths(L, sources=[0, 3])
    assert D.shape == (2, 4)
    assert np.isinf(D[0, 2]) and D[1, 3] == 0.0


def test_shortest_paths_triangle_inequality():
    D = shortest_paths(random_length_graph(15, 99, density=0.5))
    fin = np.where(np.isfinite(D), D, 1e300)
    assert np.all(fin[:, None, :] <= fin[:, :, None] + fin[None, :, :] + 1e-12)


def test_shortest_paths_negative_length():
    L = np.full((2, 2), np.inf)
    L[0, 1] = -1
    with pytest.raises(ValueError):
        shortest_paths(L)


def test_affinity_to_lengths():
    K = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 1e-600], [0.0, 1e-600, 1.0]])
    L = affinity_to_lengths(K, support=np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], bool))
    assert L[0, 1] == pytest.approx(np.log(2))
    assert L[1, 2] == 1e3  # zero affinity on the support is capped, not dropped
    assert np.isinf(L[0, 2]) and np.isinf(L[0, 0])


def test_no_warning_with_anchors():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        joint_graph(np.zeros((2, 2)), np.zeros((2, 2)), np.array([[0, 0]]))
