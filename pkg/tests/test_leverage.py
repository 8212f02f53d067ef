import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chorded_ring, connection_graphs, cycle_graph
from magsparse import ConnectionGraph, exact_ls, gen_mun, jl_ls, jl_width, leverage_scores, uniform_ls
from magsparse.oracle import exact_kernel


def test_inconsistent_cycle_scores_are_one():
    ls = exact_ls(cycle_graph(7, 0.3), 0.0)
    np.testing.assert_allclose(ls.values, 1.0, atol=1e-10)


def test_scores_decrease_in_q():
    g = chorded_ring()
    prev = None
    for q in (0.1, 1.0, 10.0):
        cur = exact_ls(g, q).values
        if prev is not None:
            assert np.all(cur <= prev + 1e-12)
        prev = cur


def test_uniform_scores():
    ls = uniform_ls(10, 40)
    np.testing.assert_allclose(ls.values, 0.25)
    assert ls.total == pytest.approx(10)
    assert uniform_ls(9, 30).values[0] == pytest.approx(9 / 30)
    with pytest.raises(ValueError):
        uniform_ls(0, 5)


def test_jl_width():
    # natural log: ceil(40 log 2500 + 1) = 314
    assert jl_width(2000, 500, 0.5) == 314
    assert jl_width(2000, 500, 0.0) == math.ceil(40 * math.log(2000) + 1)


def test_jl_scores_close_and_nonnegative():
    g = gen_mun(150, 0.2, 0.1, seed=1).graph
    for q in (0.0, 1.0):
        ex = exact_ls(g, q).values
        jl = jl_ls(g, q, seed=3)
        assert np.all(jl.values > 0)
        rel = np.abs(jl.values - ex) / ex
        assert abs(np.mean((jl.values - ex) / ex)) < 0.02
        assert np.mean(rel < 0.2) > 0.8


def test_jl_reproducible():
    g = chorded_ring()
    np.testing.assert_array_equal(jl_ls(g, 0.5, seed=2).values, jl_ls(g, 0.5, seed=2).values)


def test_dispatch():
    g = chorded_ring()
    assert leverage_scores(g, 0.5, "exact").method == "exact"
    assert leverage_scores(g, 0.5, "jl", seed=0).method == "jl"
    assert leverage_scores(g, 0.5, "uniform", sample_size=4).total == pytest.approx(4)
    with pytest.raises(ValueError):
        leverage_scores(g, 0.5, "bogus")


def test_singular_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        exact_ls(ConnectionGraph(3, [0, 1], [1, 2]), 0.0)


@settings(max_examples=40, deadline=None)
@given(connection_graphs(max_n=8, max_m=14), st.sampled_from([0.1, 1.0, 5.0]))
def test_exact_scores_match_kernel_diagonal(g, q):
    ls = exact_ls(g, q)
    k = exact_kernel(g, q)
    np.testing.assert_allclose(ls.values, k.ls, atol=1e-10)
    assert ls.total == pytest.approx(k.d_eff, abs=1e-9)
