import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chorded_ring, connection_graphs, cycle_graph, triangle
from magsparse import ConnectionGraph, Mtsf
from magsparse.oracle import (
    SingularLaplacianError,
    dense_laplacian,
    enumerate_mtsfs,
    enumeration_mass,
    exact_kernel,
    expected_size,
    expected_walk_steps,
    inclusion_probability,
    mtsf_probability,
)


def test_single_edge_angle_pi_is_singular():
    # the only subgraph with n edges would need a cycle; a tree carries no holonomy
    g = ConnectionGraph(2, [0], [1], angles=[np.pi])
    with pytest.raises(SingularLaplacianError):
        exact_kernel(g, 0.0)
    k = exact_kernel(g, 1.0)
    assert k.ls[0] == pytest.approx(2.0 / 3.0)  # eigenvalue 2 of Delta: 2 / (2 + 1)


def test_tree_without_cycles_is_singular_at_q0():
    g = ConnectionGraph(3, [0, 1], [1, 2], angles=[1.0, 2.0])
    with pytest.raises(SingularLaplacianError):
        exact_kernel(g, 0.0)


def test_triangle_kernel_diagonal():
    # spectrum {1, 1, 4}: d_eff = 1/2 + 1/2 + 4/5 = 1.8 spread evenly
    k = exact_kernel(triangle(), 1.0)
    np.testing.assert_allclose(k.ls, 0.6, atol=1e-10)
    assert k.d_eff == pytest.approx(1.8)


def test_projection_at_q0():
    g = chorded_ring()
    k = exact_kernel(g, 0.0)
    np.testing.assert_allclose(k.K @ k.K, k.K, atol=1e-8)
    assert k.d_eff == pytest.approx(g.n)
    assert k.var_edges == pytest.approx(0.0, abs=1e-10)


def test_kernel_statistics_decrease_in_q():
    g = chorded_ring()
    ks = [exact_kernel(g, q) for q in (0.01, 0.1, 1.0, 10.0)]
    for a, b in zip(ks, ks[1:]):
        assert b.d_eff <= a.d_eff + 1e-12
        assert b.kappa <= a.kappa + 1e-12
        assert b.intrinsic_ratio <= a.intrinsic_ratio + 1e-12
        assert np.all(b.ls <= a.ls + 1e-12)


def test_enumeration_on_triangle():
    g = triangle()
    pairs = enumerate_mtsfs(g, 1.0)
    assert sum(p for _, p in pairs) == pytest.approx(1.0, abs=1e-10)
    k = exact_kernel(g, 1.0)
    for e in range(3):
        marg = sum(p for f, p in pairs if e in f.edges)
        assert marg == pytest.approx(k.ls[e], abs=1e-10)


def test_spanning_tree_limit():
    g = triangle(0.0)
    pairs = enumerate_mtsfs(g, 1e-8)
    trees = [p for f, p in pairs if len(f) == 2]
    assert len(trees) == 3
    np.testing.assert_allclose(trees, 1 / 3, atol=1e-6)


def test_square_with_inconsistent_cycle():
    g = cycle_graph(4, 0.4)
    assert enumeration_mass(g, 1.0) == pytest.approx(
        np.linalg.det(dense_laplacian(g, 1.0)).real, rel=1e-10)


def test_consistent_cycle_has_probability_zero():
    g = cycle_graph(4, 0.0)
    f = Mtsf.from_edges(g, [0, 1, 2, 3], 1.0)
    assert mtsf_probability(g, 1.0, f) == 0.0


def test_spanning_forest_law():
    # trivial connection: probability proportional to q^{#trees} times the root choices
    g = triangle(0.0)
    q = 0.7
    f_two = Mtsf.from_edges(g, [0, 1], q)   # one tree of three nodes
    f_one = Mtsf.from_edges(g, [0], q)      # trees of sizes 2 and 1
    ratio = mtsf_probability(g, q, f_one) / mtsf_probability(g, q, f_two)
    assert ratio == pytest.approx(q ** 2 * 2 / (q * 3))
    assert mtsf_probability(g, q, f_one, rooted=True) * 2 == pytest.approx(
        mtsf_probability(g, q, f_one))


def test_pair_inclusion_is_a_minor():
    g = chorded_ring()
    q = 0.5
    pairs = enumerate_mtsfs(g, q)
    k = exact_kernel(g, q)
    for a, b in [(0, 1), (2, 8), (4, 7)]:
        emp = sum(p for f, p in pairs if a in f.edges and b in f.edges)
        assert emp == pytest.approx(inclusion_probability(k, [a, b]), abs=1e-10)


def test_size_moments_against_enumeration():
    g = chorded_ring()
    for q in (0.0, 0.3, 2.0):
        pairs = enumerate_mtsfs(g, q)
        sizes = np.array([len(f) for f, _ in pairs])
        p = np.array([p for _, p in pairs])
        mean, var = expected_size(g, q)
        assert mean == pytest.approx(p @ sizes, abs=1e-10)
        assert var == pytest.approx(p @ sizes**2 - (p @ sizes) ** 2, abs=1e-9)


def test_walk_steps_limits():
    g = chorded_ring().trivialized()
    assert expected_walk_steps(g, 1e7) == pytest.approx(g.n, rel=1e-5)
    q = 0.3
    lap = dense_laplacian(g, q)
    inv = np.linalg.inv(lap)
    d = np.diag(g.degrees.astype(float))
    closed = np.trace(d @ inv).real + np.trace(q * inv).real
    assert expected_walk_steps(g, q) == pytest.approx(closed)


def test_enumeration_size_guard():
    n = 8
    pairs = list(itertools.combinations(range(n), 2))[:21]
    u, v = zip(*pairs)
    g = ConnectionGraph(n, u, v, angles=np.full(21, 0.2))
    with pytest.raises(ValueError, match="m <= 20"):
        enumerate_mtsfs(g, 1.0)


@settings(max_examples=50, deadline=None)
@given(connection_graphs(max_n=7, max_m=10), st.sampled_from([0.0, 0.5, 2.0]))
def test_determinant_identity(g, q):
    if q == 0 and not g.every_component_inconsistent:
        return
    det = np.linalg.det(dense_laplacian(g, q)).real
    assert enumeration_mass(g, q) == pytest.approx(det, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(connection_graphs(max_n=7, max_m=10), st.sampled_from([0.1, 1.0]))
def test_kernel_is_a_contraction(g, q):
    k = exact_kernel(g, q)
    ev = np.linalg.eigvalsh(k.K)
    assert ev[0] >= -1e-8 and ev[-1] <= 1 + 1e-8
    assert np.all((k.ls >= -1e-12) & (k.ls <= 1 + 1e-12))
