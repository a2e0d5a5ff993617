import numpy as np
import pytest

from stemo.graph import (Graph, GraphError, build_spatial_adjacency, coords_to_distances,
                         default_eta)


def make_graph(dist):
    dist = np.asarray(dist, dtype=float)
    return Graph(node_ids=[f"n{i}" for i in range(dist.shape[0])], dist=dist)


def test_colocated_nodes_full_weight():
    g = make_graph([[0.0, 0.0], [0.0, 0.0]])
    adj = build_spatial_adjacency(g, eta=1.0)
    assert adj.a_s[0, 1] == 1.0
    assert adj.a_s[0, 0] == 0.0


def test_distance_equals_eta():
    g = make_graph([[0.0, 2.5], [2.5, 0.0]])
    adj = build_spatial_adjacency(g, eta=2.5)
    assert adj.a_s[0, 1] == pytest.approx(np.exp(-1.0))


def test_two_node_normalization_against_linalg_oracle():
    eta = 2.5
    g = make_graph([[0.0, eta], [eta, 0.0]])
    adj = build_spatial_adjacency(g, eta=eta)
    # independent brute-force: D^{-1/2} (A + I) D^{-1/2} via dense linalg
    a_tilde = np.array([[1.0, np.exp(-1.0)], [np.exp(-1.0), 1.0]])
    d = np.diag(a_tilde.sum(axis=1))
    expected = np.linalg.inv(np.sqrt(d)) @ a_tilde @ np.linalg.inv(np.sqrt(d))
    assert np.allclose(adj.a_s_norm, expected, atol=1e-12)
    assert np.allclose(adj.a_s_norm, adj.a_s_norm.T)


def test_coords_345():
    d = coords_to_distances(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert d[0, 1] == pytest.approx(5.0)


def test_coords_identical_points():
    d = coords_to_distances(np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert d[0, 1] == 0.0


def test_coords_random_matrix_properties():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(5, 2))
    d = coords_to_distances(pts)
    # direct recomputation oracle
    for i in range(5):
        for j in range(5):
            assert d[i, j] == pytest.approx(np.hypot(*(pts[i] - pts[j])))
    assert np.allclose(d, d.T)
    assert np.all(np.diag(d) == 0)


@pytest.mark.parametrize("seed", range(5))
def test_spectral_radius_at_most_one(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 10, size=(6, 2))
    g = Graph(node_ids=[str(i) for i in range(6)], dist=coords_to_distances(pts))
    adj = build_spatial_adjacency(g)
    # power iteration
    v = rng.normal(size=6)
    for _ in range(200):
        v = adj.a_s_norm @ v
        v /= np.linalg.norm(v)
    lam = v @ adj.a_s_norm @ v
    assert lam <= 1.0 + 1e-9


def test_kernel_monotone_in_distance():
    eta = 3.0
    d1 = make_graph([[0.0, 1.0], [1.0, 0.0]])
    d2 = make_graph([[0.0, 2.0], [2.0, 0.0]])
    a1 = build_spatial_adjacency(d1, eta).a_s[0, 1]
    a2 = build_spatial_adjacency(d2, eta).a_s[0, 1]
    assert a2 < a1


def test_asymmetric_distance_rejected():
    with pytest.raises(GraphError, match="symmetric"):
        make_graph([[0.0, 1.0], [2.0, 0.0]])


def test_negative_distance_rejected():
    with pytest.raises(GraphError, match="negative"):
        make_graph([[0.0, -1.0], [-1.0, 0.0]])


def test_default_eta_is_offdiag_std():
    dist = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]])
    g = make_graph(dist)
    off = np.array([1.0, 2.0, 1.0, 3.0, 2.0, 3.0])
    assert default_eta(dist) == pytest.approx(off.std())
    adj = build_spatial_adjacency(g)
    assert adj.eta == pytest.approx(off.std())
