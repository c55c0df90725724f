import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlmatch.align import (
    backtrack, bresenham_path, cost_matrix, delannoy, dtw, dtw_batch, enumerate_paths, is_valid_path,
    path_cost, path_from_json, path_to_json, sdtw_backward, sdtw_batch, sdtw_forward, softmin,
)

C = np.array([[1.0, 2.0], [3.0, 1.0]])


def test_softmin_example():
    assert softmin([2, 4, 5], 1.0) == pytest.approx(-math.log(math.exp(-2) + math.exp(-4) + math.exp(-5)))
    assert softmin([2, 4, 5], 1.0) == pytest.approx(1.8302, abs=1e-4)


def test_softmin_gamma_zero_is_min():
    assert softmin([3.0, 1.0, 2.0], 0.0) == 1.0


def test_softmin_stable_for_large_values():
    assert math.isfinite(softmin([1e4, 1e4 + 1], 1e-3))


def test_dtw_example():
    cost, path = dtw(C)
    assert cost == 2.0 and path == [(1, 1), (2, 2)]


def test_sdtw_example():
    value, _ = sdtw_forward(C, 1.0)
    costs = [path_cost(C, p) for p in enumerate_paths(2, 2)]
    assert sorted(costs) == [2.0, 4.0, 5.0]
    assert value == pytest.approx(softmin(costs, 1.0), abs=1e-12)
    assert value == pytest.approx(1.8302, abs=1e-4)


def test_path_counts():
    assert len(enumerate_paths(2, 2)) == 3
    assert len(enumerate_paths(3, 3)) == 13
    for n, m in [(1, 1), (1, 5), (2, 3), (4, 4)]:
        assert len(enumerate_paths(n, m)) == delannoy(n, m)


def test_enumerate_guard():
    with pytest.raises(ValueError):
        enumerate_paths(7, 7)


def test_dtw_rejects_empty():
    with pytest.raises(ValueError):
        dtw(np.zeros((0, 3)))


def test_backtrack_tie_prefers_diagonal():
    _, path = dtw(np.zeros((3, 3)))
    assert path == [(1, 1), (2, 2), (3, 3)]


def test_sdtw_small_gamma_grad_is_path_indicator():
    rng = np.random.default_rng(0)
    cost = rng.random((5, 6))
    _, path = dtw(cost)
    value, R = sdtw_forward(cost, 1e-3)
    E = sdtw_backward(R, cost, 1e-3)
    ind = np.zeros_like(cost)
    for i, j in path:
        ind[i - 1, j - 1] = 1.0
    assert np.abs(E - ind).max() < 1e-2


def test_sdtw_gradient_sums_and_bounds():
    rng = np.random.default_rng(1)
    cost = rng.random((4, 7))
    _, R = sdtw_forward(cost, 1.0)
    E = sdtw_backward(R, cost, 1.0)
    assert np.all(E >= -1e-12) and np.all(E <= 1 + 1e-12)
    assert E[0, 0] == pytest.approx(1.0) and E[-1, -1] == pytest.approx(1.0)


def test_batch_matches_sequential():
    rng = np.random.default_rng(2)
    costs = [rng.random(s) for s in [(2, 3), (5, 4), (1, 1)]]
    values, grads = sdtw_batch(costs, 0.7)
    for c, v, g in zip(costs, values, grads):
        v1, R = sdtw_forward(c, 0.7)
        assert v == pytest.approx(v1, abs=1e-12)
        assert g.shape == c.shape
        assert np.allclose(g, sdtw_backward(R, c, 0.7), atol=1e-12)
    for c, (v, p) in zip(costs, dtw_batch(costs)):
        assert (v, p) == dtw(c)


def test_batch_without_gradients():
    values, grads = sdtw_batch([np.ones((2, 2))], 1.0, gradients=False)
    assert grads is None and len(values) == 1


def test_bresenham_example():
    assert bresenham_path(2, 4) == [(1, 1), (1, 2), (2, 3), (2, 4)]
    assert bresenham_path(3, 3) == [(1, 1), (2, 2), (3, 3)]
    assert bresenham_path(1, 1) == [(1, 1)]


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 100), st.integers(1, 100))
def test_bresenham_invariants(n, m):
    path = bresenham_path(n, m)
    assert is_valid_path(path, n, m)
    assert len(path) == max(n, m)


def test_is_valid_path():
    assert is_valid_path([(1, 1), (2, 2)], 2, 2)
    assert not is_valid_path([(1, 1), (2, 2)], 2, 3)
    assert not is_valid_path([(1, 1), (1, 3)], 1, 3)
    assert not is_valid_path([(1, 1), (2, 1), (1, 2)], 2, 2)
    assert not is_valid_path([], 1, 1)


def test_cost_matrix():
    X = np.eye(3)[:2]
    Y = np.eye(3)
    assert np.allclose(cost_matrix(X, Y), 1 - X @ Y.T)
    with pytest.raises(ValueError):
        cost_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_path_json_roundtrip():
    path = [(1, 1), (1, 2), (2, 3)]
    assert path_from_json(path_to_json(path)) == path


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1),
       st.sampled_from([0.1, 1.0, 10.0]))
def test_softmin_bound_and_oracle(n, m, seed, gamma):
    cost = np.random.default_rng(seed).random((n, m)) * 4 - 1
    hard, path = dtw(cost)
    costs = [path_cost(cost, p) for p in enumerate_paths(n, m)]
    assert hard == pytest.approx(min(costs), abs=1e-9)
    assert path_cost(cost, path) == pytest.approx(hard, abs=1e-12)
    soft, _ = sdtw_forward(cost, gamma)
    assert soft == pytest.approx(softmin(costs, gamma), abs=1e-9)
    assert soft <= hard + 1e-12
