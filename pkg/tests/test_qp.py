import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cempc.qp import QPError, kkt_residual, solve_qp


def test_unconstrained_minimizer_when_inactive():
    H = np.array([[2.0, 0.0], [0.0, 4.0]])
    g = np.array([-1.0, -2.0])
    res = solve_qp(H, g, np.eye(2), np.ones(2) * 10)
    assert np.allclose(res.x, [0.5, 0.5])
    assert res.active == []


def test_box_clipped_solution():
    res = solve_qp(np.eye(1), np.array([-3.0]), np.array([[1.0], [-1.0]]), np.ones(2))
    assert res.x[0] == pytest.approx(1.0)
    assert res.multipliers[0] == pytest.approx(2.0)


def test_infeasible_start_rejected():
    with pytest.raises(QPError):
        solve_qp(np.eye(1), np.zeros(1), np.array([[1.0]]), np.array([-1.0]))


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_kkt_conditions_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    n, p = rng.integers(1, 5), rng.integers(1, 7)
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.standard_normal(n) * 3
    A = rng.standard_normal((p, n))
    b = rng.uniform(0.1, 1.0, p)
    res = solve_qp(H, g, A, b)
    assert res.converged
    assert kkt_residual(H, g, A, b, res.x, res.multipliers) < 1e-8


def test_matches_grid_minimum_in_two_dimensions():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([-4.0, 1.0])
    A = np.vstack([np.eye(2), -np.eye(2)])
    res = solve_qp(H, g, A, np.ones(4))
    grid = np.linspace(-1, 1, 401)
    best = min((0.5 * np.array(z) @ H @ np.array(z) + g @ np.array(z), z) for z in itertools.product(grid, grid))
    f = 0.5 * res.x @ H @ res.x + g @ res.x
    assert f <= best[0] + 1e-12
    assert np.linalg.norm(res.x - np.array(best[1])) <= 2 * (grid[1] - grid[0])
