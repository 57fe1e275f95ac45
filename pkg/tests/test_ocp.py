import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cempc.cost import quadratic_cost
from cempc.model import InputConstraint, TANH_THETA_HAT, linear_model, tanh_model
from cempc.ocp import (
    OcpProblem,
    SolverError,
    lq_batch_matrices,
    lq_infinite_horizon_value,
    reduced_hessian_min_eig,
    rollout,
    shift_warm_start,
    solve,
    solve_lq_constrained,
    solve_lq_riccati,
    solve_lq_unconstrained,
    solve_pg,
    trajectory_cost,
)


def random_lq(rng, n_max=3, m_max=2):
    n, m = int(rng.integers(1, n_max + 1)), int(rng.integers(1, m_max + 1))
    A = rng.standard_normal((n, n)) * 0.6
    B = rng.standard_normal((n, m))
    Mq, Mr = rng.standard_normal((n, n)), rng.standard_normal((m, m))
    return A, B, Mq @ Mq.T + 0.5 * np.eye(n), Mr @ Mr.T + 0.5 * np.eye(m)


def test_scalar_lq_by_hand():
    # N = 1: min x^2 + u^2 + (x + u)^2 at x = 1 -> u = -0.5, V = 1.5
    sol = solve_lq_unconstrained([[1.0]], [[1.0]], [[1.0]], [[1.0]], 1, [1.0])
    assert sol.inputs[0, 0] == pytest.approx(-0.5)
    assert sol.value == pytest.approx(1.5)
    con = solve_lq_constrained([[1.0]], [[1.0]], [[1.0]], [[1.0]], InputConstraint.symmetric_box(0.1).E, 1, [1.0])
    assert con.inputs[0, 0] == pytest.approx(-0.1)


@given(st.integers(0, 100_000))
@settings(max_examples=30, deadline=None)
def test_batch_riccati_and_gradient_agree(seed):
    rng = np.random.default_rng(seed)
    A, B, Q, R = random_lq(rng)
    N = int(rng.integers(1, 6))
    x = rng.standard_normal(A.shape[0])
    batch = solve_lq_unconstrained(A, B, Q, R, N, x)
    ric = solve_lq_riccati(A, B, Q, R, N, x)
    model, th = linear_model(A, B)
    pg = solve_pg(OcpProblem(model, quadratic_cost(Q, R), InputConstraint.symmetric_box(1e6, B.shape[1]), N, th), x, tol=1e-10)
    assert abs(batch.value - ric.value) <= 1e-9 * (1 + abs(ric.value))
    assert abs(pg.value - ric.value) <= 1e-6 * (1 + abs(ric.value))


def test_batch_gains_reproduce_optimal_inputs():
    rng = np.random.default_rng(3)
    A, B, Q, R = random_lq(rng)
    mats = lq_batch_matrices(A, B, Q, R, 4)
    for _ in range(5):
        x = rng.standard_normal(A.shape[0])
        sol = solve_lq_unconstrained(A, B, Q, R, 4, x)
        assert np.allclose(mats.gains @ x, sol.inputs, atol=1e-9)
        assert np.allclose(solve_lq_riccati(A, B, Q, R, 4, x).inputs, sol.inputs, atol=1e-9)


def test_constrained_qp_matches_projected_gradient():
    A = np.array([[1.1, 0.4], [0.0, 0.9]])
    B = np.array([[0.0], [1.0]])
    model, th = linear_model(A, B)
    con = InputConstraint.symmetric_box(0.3)
    prob = OcpProblem(model, quadratic_cost(np.eye(2), np.eye(1)), con, 5, th)
    x = np.array([1.0, -1.5])
    qp = solve(prob, x, method="qp")
    pg = solve(prob, x, method="pg", tol=1e-10)
    assert qp.converged and pg.converged
    assert np.any(np.isclose(np.abs(qp.inputs), 0.3))
    assert abs(qp.value - pg.value) < 1e-8
    assert np.allclose(qp.inputs, pg.inputs, atol=1e-5)


def test_infinite_horizon_value_bounds_finite_horizon():
    A, B = np.array([[0.9, 0.2], [0.0, 0.8]]), np.array([[0.0], [1.0]])
    x = np.array([1.0, 1.0])
    Vinf = lq_infinite_horizon_value(A, B, np.eye(2), np.eye(1), x)
    vals = [solve_lq_riccati(A, B, np.eye(2), np.eye(1), N, x).value for N in (1, 5, 20, 80)]
    assert all(v <= Vinf + 1e-9 for v in vals)
    assert np.all(np.diff(vals) >= -1e-12)
    assert vals[-1] == pytest.approx(Vinf, rel=1e-9)


def test_zero_state_gives_zero_solution(tanh):
    sol = solve(tanh.problem(10), np.zeros(2))
    assert sol.value == 0.0 and np.all(sol.inputs == 0.0)


def test_pg_history_is_monotone_up_to_roundoff(tanh):
    hist = []
    solve_pg(tanh.problem(25), np.array([1.0, -1.0]), history=hist)
    d = np.diff(hist)
    assert np.all(d <= 8 * np.finfo(float).eps * np.abs(np.array(hist[:-1])) + 1e-300)


def test_pg_solution_is_feasible_and_consistent(tanh):
    prob = tanh.problem(10)
    sol = solve(prob, np.array([1.2, 0.4]))
    assert sol.converged
    assert np.all(np.abs(sol.inputs) <= 0.05 + 1e-15)
    X = rollout(prob, sol.states[0], sol.inputs)
    assert np.array_equal(X, sol.states)
    assert sol.value == pytest.approx(trajectory_cost(prob.cost, X, sol.inputs), rel=1e-14)


def test_multistart_never_worse_than_single_start(tanh):
    prob = tanh.problem(8)
    x = np.array([-1.0, 0.7])
    one = solve_pg(prob, x)
    many = solve_pg(prob, x, restarts=3, seed=2)
    assert many.value <= one.value + 1e-12


def test_shift_warm_start_repeats_last_input():
    U = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(shift_warm_start(U), [[2, 3], [4, 5], [4, 5]])


def test_nonfinite_state_raises(tanh):
    with pytest.raises(SolverError):
        solve_pg(tanh.problem(3), np.array([np.nan, 0.0]))


def test_problem_validation(tanh):
    with pytest.raises(ValueError):
        OcpProblem(tanh.model, tanh.cost, tanh.constraint, 0, TANH_THETA_HAT)
    with pytest.raises(ValueError):
        OcpProblem(tanh.model, tanh.cost, tanh.constraint, 3, np.zeros(2))


def test_reduced_hessian_positive_at_lq_optimum():
    A, B = np.array([[0.9, 0.2], [0.0, 0.8]]), np.array([[0.0], [1.0]])
    model, th = linear_model(A, B)
    prob = OcpProblem(model, quadratic_cost(np.eye(2), np.eye(1)), InputConstraint.symmetric_box(5.0), 4, th)
    x = np.array([0.5, 0.5])
    sol = solve(prob, x)
    lam = reduced_hessian_min_eig(prob, x, sol)
    # the reduced Hessian is 2(R + G'QG) >= 2 lambda_min(R)
    assert lam >= 2.0 - 1e-4
