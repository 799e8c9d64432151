import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nai.graph import build_graph, normalize, second_eigenvalue
from nai.propagation import (Combinator, combine, depth_bound, distance, distance_exit_depth,
                             distance_trace, precompute_depths, spmm_step, stationary,
                             stationary_matrix)
from nai.verify import random_connected_graph

from conftest import k3, path


def test_spmm_identity():
    g = build_graph([], 3)
    x = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(spmm_step(normalize(g), x), x)


def test_spmm_k3():
    out = spmm_step(normalize(k3()), np.eye(3))
    assert np.allclose(out, 1 / 3)


def test_spmm_path_gamma0():
    out = spmm_step(normalize(path(2), 0.0), np.array([[1.0], [0.0]]))
    assert np.allclose(out, [[0.5], [0.5]])


def test_spmm_rows_subset(rng):
    g = random_connected_graph(30, 0.1, rng)
    adj = normalize(g)
    x = rng.standard_normal((30, 4))
    rows = np.array([7, 2, 19])
    assert np.allclose(spmm_step(adj, x, rows), spmm_step(adj, x)[rows])
    with pytest.raises(ValueError):
        spmm_step(adj, x[:5])


def test_precompute_examples():
    x = np.arange(6.0).reshape(3, 2)
    df = precompute_depths(normalize(build_graph([], 3)), x, 1)
    assert len(df.stack) == 2 and np.array_equal(df.stack[1], x)
    df = precompute_depths(normalize(k3()), np.eye(3), 2)
    assert np.allclose(df.stack[1], 1 / 3) and np.allclose(df.stack[2], 1 / 3)
    assert df.k == 2
    with pytest.raises(ValueError):
        precompute_depths(normalize(k3()), np.eye(3), 0)


def test_depth_seven_stack(rng):
    g = random_connected_graph(20, 0.1, rng)
    x = rng.standard_normal((20, 3))
    df = precompute_depths(normalize(g), x, 7)
    assert len(df.stack) == 8
    assert np.array_equal(df.stack[0], x)
    assert all(s.shape == x.shape for s in df.stack)


def test_combine_modes(rng):
    x = rng.standard_normal((5, 4))
    adj = normalize(path(5))
    assert np.array_equal(combine(precompute_depths(adj, x, 2, "sgc"), 0), x)
    sign = precompute_depths(adj, x, 2, "sign")
    assert combine(sign, 2).shape == (5, 12) and sign.width(2) == 12
    same = precompute_depths(normalize(build_graph([], 5)), x, 1, "s2gc")
    assert np.allclose(combine(same, 1), 2 * x)
    assert np.allclose(combine(same, 1, "mean"), x)
    assert np.array_equal(combine(same, 0), x)
    with pytest.raises(ValueError):
        combine(same, 2)


def test_stationary_examples():
    x = np.array([[2.0, -1.0]])
    st_ = stationary(build_graph([], 1), x)
    assert np.allclose(st_.coeff, [1.0]) and np.allclose(st_.dense(), x)
    x = np.arange(9.0).reshape(3, 3)
    assert np.allclose(stationary_matrix(k3()), 1 / 3)
    assert np.allclose(stationary(k3(), x).dense(), x.mean(axis=0))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 50), st.floats(0.0, 0.5), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_rank_one_matches_naive(n, p, gamma, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, p, rng)
    x = rng.standard_normal((n, 3))
    a_inf = stationary_matrix(g, gamma)
    if gamma == 0.0:
        assert np.allclose(a_inf.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(stationary(g, x, gamma).dense(), a_inf @ x, atol=1e-12, rtol=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 50), st.floats(0.02, 0.4), st.integers(0, 2**31))
def test_fixed_point(n, p, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, p, rng)
    xinf = stationary(g, rng.standard_normal((n, 4))).dense()
    assert np.allclose(spmm_step(normalize(g), xinf), xinf, atol=1e-10, rtol=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 50), st.floats(0.05, 0.5), st.integers(0, 2**31))
def test_convergence(n, p, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, p, rng)
    adj = normalize(g)
    if second_eigenvalue(adj) > 0.9:
        return
    x = rng.standard_normal((n, 4))
    tr = distance_trace(adj, x, stationary(g, x), 100)
    # K3-like graphs hit the limit after one step; compare above roundoff only
    assert tr[99].max() <= max(1e-4 * tr[0].max(), 1e-12)


def test_distance_examples():
    assert distance([1.0, 2.0], [1.0, 2.0]) == 0
    assert math.isclose(distance([1.0, 0.0], [0.0, 1.0]), math.sqrt(2))
    x = np.eye(3)
    g = k3()
    tr = distance_trace(normalize(g), x, stationary(g, x), 1)
    assert np.allclose(tr, 0, atol=1e-15)
    with pytest.raises(ValueError):
        distance([1.0], [1.0, 2.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6))
def test_distance_nonnegative_zero_iff_equal(row):
    a = np.array(row)
    assert distance(a, a) == 0
    b = a.copy()
    b[0] += 1.0
    assert distance(a, b) > 0


def test_distance_exit_depth_examples():
    tr = [0.5, 0.1, 0.01]
    assert distance_exit_depth(tr, 0.2, 1, 3) == 2
    assert distance_exit_depth(tr, 0.0, 1, 3) == 3
    assert distance_exit_depth(tr, 1e9, 3, 3) == 3
    assert distance_exit_depth([0.2, 0.2], 0.2, 1, 2) == 2  # strict comparison
    assert distance_exit_depth(tr, 1.0, 2, 3) == 2
    with pytest.raises(ValueError):
        distance_exit_depth(tr, 0.1, 3, 2)


def test_depth_bound_small_lambda_goes_to_zero():
    g = k3()
    b = depth_bound(g, 1e-12, 0.5, 0)
    assert b.applicable and 0 < b.log_term < 0.05


def test_depth_bound_neighbor_term():
    g = path(3)
    b = depth_bound(g, 0.5, 0.5, 1, neighbor_depths=[4, 1, 2])
    assert b.neighbor_term == 5
    assert b.value <= b.neighbor_term


def test_depth_bound_guard():
    g = k3()
    assert not depth_bound(g, 0.5, 10.0, 0).applicable
    assert not depth_bound(g, 1.0, 0.1, 0).applicable
    assert not depth_bound(g, 0.0, 0.1, 0).applicable
    assert depth_bound(g, 0.5, 10.0, 0).value == math.inf
