import math

import numpy as np
import pytest

from cempc.bounds import eds_constants, SpectrumBounds
from cempc.experiments import (
    ClosedLoopTrace,
    aggregate,
    check_nominal_descent,
    estimate_empirical_constants,
    estimate_eta_bar,
    estimate_gamma,
    estimate_infinite_cost,
    estimate_oracle_value,
    fit_eds,
    linear_envelope,
    lq_setup,
    resimulation_residual,
    sample_disk,
    scenario_seed,
    simulate_closed_loop,
    sweep_competitive_ratio,
    sweep_horizon,
    sweep_input_perturbation,
    sweep_scalable_perturbation,
)
from cempc.model import InputConstraint
from cempc.ocp import lq_infinite_horizon_value


def fake_trace(costs, last_state):
    n = len(costs)
    states = np.zeros((n + 1, 1))
    states[-1] = last_state
    return ClosedLoopTrace(states, np.zeros((n, 1)), np.array(costs, float), np.zeros(n), np.zeros(1), 1, False)


def test_zero_state_trace_is_all_zero(tanh):
    tr = simulate_closed_loop(tanh.model, tanh.cost, tanh.constraint, tanh.theta_hat, tanh.theta_hat, 10, np.zeros(2))
    assert tr.cost == 0.0 and tr.terminated_early and len(tr.inputs) == 0
    assert estimate_infinite_cost(tr) == (0.0, 0.0)


def test_trace_resimulates_exactly(tanh):
    th = tanh.theta_hat + np.array([1e-3, -2e-3, 1e-3])
    tr = simulate_closed_loop(tanh.model, tanh.cost, tanh.constraint, th, tanh.theta_hat, 8, np.array([1.0, -0.5]), T=60)
    assert resimulation_residual(tr, tanh.model) <= 1e-12
    manual = sum(tanh.cost.stage(x, u) for x, u in zip(tr.states, tr.inputs))
    assert tr.cost == pytest.approx(manual, abs=1e-10)
    assert len(tr.states) == len(tr.inputs) + 1


def test_tanh_closed_loop_converges_at_small_mismatch(tanh):
    rng = np.random.default_rng(5)
    for _ in range(2):
        d = rng.standard_normal(3)
        th = tanh.theta_hat + 1e-3 * d / np.linalg.norm(d)
        x0 = math.sqrt(2) * np.array([math.cos(1.0), math.sin(1.0)])
        tr = simulate_closed_loop(tanh.model, tanh.cost, tanh.constraint, th, tanh.theta_hat, 10, x0, T=500)
        assert tr.final_norm < 1e-3 and not tr.failed


def test_tail_geometric_halving():
    J, tail = estimate_infinite_cost(fake_trace([8, 4, 2, 1, 0.5], [1.0]), k=4)
    assert J == 15.5
    assert tail == pytest.approx(0.5 * 0.5 / 0.5)


def test_tail_diverging_is_infinite():
    assert estimate_infinite_cost(fake_trace([1, 2, 4, 8], [1.0]))[1] == math.inf


def test_tail_zero_when_trace_ends_at_origin():
    assert estimate_infinite_cost(fake_trace([1, 0.5], [0.0]))[1] == 0.0


def test_oracle_zero_state():
    lq = lq_setup(np.eye(1) * 0.5, np.eye(1))
    o = estimate_oracle_value(lq.model, lq.cost, lq.constraint, lq.theta_hat, np.zeros(1))
    assert (o.lower, o.upper) == (0.0, 0.0)


def test_oracle_brackets_riccati_value_and_tightens():
    A, B = np.array([[1.05, 0.3], [0.0, 0.9]]), np.array([[0.0], [1.0]])
    lq = lq_setup(A, B, constraint=InputConstraint.symmetric_box(1e6))
    x = np.array([0.8, -0.6])
    Vinf = lq_infinite_horizon_value(A, B, np.eye(2), np.eye(1), x)
    widths = []
    for N in (3, 6, 12):
        o = estimate_oracle_value(lq.model, lq.cost, lq.constraint, lq.theta_hat, x, N_long=N, stop_tol=1e-10)
        assert o.lower <= Vinf + 1e-9
        assert Vinf <= o.upper + o.upper_tail + 1e-9
        widths.append(o.upper - o.lower)
    assert widths[0] >= widths[1] >= widths[2] - 1e-12


def test_nominal_descent_certificate_on_lq(lq):
    tr = simulate_closed_loop(lq.model, lq.cost, lq.constraint, lq.theta_hat, lq.theta_hat, 5, np.array([1.0, -1.0]), T=80, final_value=True)
    c = estimate_empirical_constants(lq, 5, 5, 0.0, 0.5, n_states=12, n_pairs=8, n_eta=4)
    from cempc.bounds import ControllabilityConstants, nominal_stability
    eps_N, _ = nominal_stability(5, ControllabilityConstants(c.gamma[5], c.gamma_bar, c.nu))
    chk = check_nominal_descent(tr, lq.cost, eps_N, c.gamma[5])
    assert chk.steps > 10
    assert chk.decrease_violations == 0 and chk.next_value_violations == 0


def test_linear_envelope_exact_line():
    fit = linear_envelope([1, 2, 3, 4], [2, 4, 6, 8])
    assert fit.slope == pytest.approx(2.0) and abs(fit.intercept) < 1e-12
    assert fit.passes() and fit.dominating_slope == pytest.approx(2.0)


def test_aggregate_ordering_and_failures():
    recs = [
        {"group": "", "axis_value": 1.0, "measured_value": v, "failed": f}
        for v, f in [(1.0, False), (3.0, False), (100.0, True)]
    ]
    (row,) = aggregate(recs)
    assert row["count"] == 2 and row["max"] >= row["mean"] >= row["min"]
    assert row["mean"] == 2.0


def test_scenario_seeds_are_distinct_and_stable():
    seeds = {scenario_seed(0, a, s) for a in range(3) for s in range(50)}
    assert len(seeds) == 150
    assert scenario_seed(7, 1, 2) == scenario_seed(7, 1, 2)


def test_input_perturbation_sweep_basic_invariants(tanh):
    res = sweep_input_perturbation(tanh, [0.0, 2e-3, 4e-3], 4, 5, seed=1)
    assert len(res.records) == 12
    assert all(r["measured_value"] == 0.0 for r in res.records if r["epsilon"] == 0.0)
    for row in res.aggregates:
        assert row["max"] >= row["mean"] >= row["min"]


def test_scalable_sweep_zero_rows_and_columns(tanh):
    res = sweep_scalable_perturbation(tanh, [0.0, 5e-3], [0.0, 1.0], 3, 5, seed=2)
    zero = [r for r in res.records if r["epsilon"] == 0.0 or r["x_norm"] == 0.0]
    assert len(zero) == 9 and all(r["measured_value"] == 0.0 for r in zero)


def test_sweeps_identical_under_threads(tanh):
    a = sweep_input_perturbation(tanh, [1e-3, 3e-3], 4, 5, seed=3, workers=1)
    b = sweep_input_perturbation(tanh, [1e-3, 3e-3], 4, 5, seed=3, workers=3)
    assert a.records_csv(["h"]) == b.records_csv(["h"])
    assert a.aggregates_csv() == b.aggregates_csv()


def test_ratio_sweep_zero_mismatch_sandwich(lq):
    res = sweep_competitive_ratio(lq, [0.0], 3, 5, seed=0, N_long=20, theory=lambda e: 2.0)
    for r in res.records:
        assert r["measured_value"] >= 1.0 - 1e-9
    assert res.aggregates[0]["theoretical_overlay"] == 2.0


def test_horizon_sweep_single_horizon(lq):
    res = sweep_horizon(lq, [0.0], [4], 2, seed=0, T=100)
    assert res.meta["best_N"] == {0.0: 4}


def test_fit_eds_on_linear_model(lq):
    fit = fit_eds(lq, 6, n_pairs=12, seed=0)
    assert 0.0 <= fit.rho < 1.0 and fit.C > 0.0
    assert np.all(fit.envelope <= fit.C * fit.rho ** np.arange(6) * (1 + 1e-9))


def test_eta_bar_ignores_zero_mismatch(lq):
    assert estimate_eta_bar(lq, 4, lq.spec(0.0), 0.5) == (0.0, 0)


def test_gamma_estimates_bounded_by_their_max(lq):
    g = estimate_gamma(lq, 6, sample_disk(lq, 6, 0))
    assert np.all(g[1:] <= g[1:].max())
    assert g[1] > 0
