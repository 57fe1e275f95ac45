import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cempc.bounds import (
    BoundError,
    BoundInputs,
    BoundVariants,
    ControllabilityConstants,
    EdsConstants,
    SpectrumBounds,
    StabilityError,
    alpha_star,
    asymptotic_class,
    beta_general,
    beta_star,
    build_report,
    competitive_ratio,
    eds_constants,
    eta_bar_star,
    gamma_sequence,
    lambda_factor,
    lq_specialize,
    max_mismatch,
    nominal_stability,
    omega_bar,
    optimal_horizon,
    p_growth,
    performance_bounds,
    stability_check,
)
from cempc.cost import SeparableCost, quadratic_cost
from cempc.model import InputConstraint, ParameterSpec, linear_model


def unit_cost():
    """All curvature constants equal to 2 (identity weights)."""
    return quadratic_cost(np.eye(1), np.eye(1))


def general_cost(mlx, Llx, mlu, Llu):
    z = lambda v: 0.0
    g = lambda v: np.zeros_like(v)
    return SeparableCost(z, z, g, g, mlx, Llx, mlu, Llu)


# --- sensitivity decay -----------------------------------------------------


def test_eds_constants_examples():
    e = eds_constants(SpectrumBounds(1.0, 1.0, 1.0))
    assert (e.C, e.rho) == (1.0, 0.0)
    e = eds_constants(SpectrumBounds(2.0, 2.0, 1.0))
    assert e.C == pytest.approx(2.0, rel=1e-15)
    assert e.rho == pytest.approx((3 / 5) ** 0.125, rel=1e-15)


def test_eds_rho_shrinks_as_hessian_bounds_meet():
    rhos = [eds_constants(SpectrumBounds(1.0 + h, 1.0, 1.0)).rho for h in (1.0, 0.1, 0.01, 0.001)]
    assert all(a > b for a, b in zip(rhos, rhos[1:]))


def test_spectrum_bounds_validation():
    with pytest.raises(BoundError):
        SpectrumBounds(1.0, 1.0, 2.0)
    with pytest.raises(BoundError):
        SpectrumBounds(0.0, 1.0, 1.0)


def test_lambda_factor_examples():
    assert lambda_factor(7, 3, 0.0) == 1.0
    assert lambda_factor(3, 1, 0.5) == pytest.approx(2.0)


@given(st.integers(1, 50), st.data(), st.floats(0.0, 0.999))
@settings(max_examples=200, deadline=None)
def test_lambda_factor_capped(N, data, rho):
    k = data.draw(st.integers(0, N - 1))
    assert lambda_factor(N, k, rho) <= 2 / (1 - rho) * (1 + 1e-12)


def test_gamma_sequence_examples():
    eds = EdsConstants(2.0, 0.5)
    G = gamma_sequence(3, 0.5, 1.0, eds)
    assert G[0] == 1.0 and G[1] == pytest.approx(1.5)
    assert np.allclose(gamma_sequence(4, 1.3, 0.0, eds), 1.3 ** np.arange(5))


@given(st.integers(0, 30), st.floats(0.1, 1.5), st.floats(0, 2), st.floats(0.1, 5), st.floats(0, 0.99))
@settings(max_examples=100, deadline=None)
def test_gamma_dominates_state_term(N, Lx, Lu, C, rho):
    G = gamma_sequence(N, Lx, Lu, EdsConstants(C, rho))
    assert G[0] == 1.0
    assert np.all(G >= Lx ** np.arange(N + 1) * (1 - 1e-12))


def test_p_growth_examples():
    assert p_growth(3, 0.0, 1.0) == 6.0
    for N in (1, 4, 9):
        assert p_growth(N, 1.0, 0.0) == N * (N + 1) / 2


def test_p_growth_regimes():
    # contractive O(N), marginal O(N^3), expansive O(L^{2N})
    r = p_growth(400, 0.5, 1.0) / p_growth(200, 0.5, 1.0)
    assert r == pytest.approx(2.0, rel=0.02)
    r = p_growth(400, 1.0, 1.0) / p_growth(200, 1.0, 1.0)
    assert r == pytest.approx(8.0, rel=0.02)
    r = p_growth(101, 1.1, 1.0) / p_growth(100, 1.1, 1.0)
    assert r == pytest.approx(1.21, rel=0.01)


# --- nominal stability ------------------------------------------------------


def test_nominal_stability_examples():
    assert nominal_stability(4, ControllabilityConstants(1.0, 1.0, 1.0)) == (0.25, 1)
    eps, floor = nominal_stability(5, ControllabilityConstants(1.0, 3.0, 0.0))
    assert eps == 0.0 and floor == 1
    eps, floor = nominal_stability(4, ControllabilityConstants(2.0, 2.0, math.inf))
    assert eps == pytest.approx(6 / 3) and floor == 7


def test_eps_n_decays_like_one_over_n():
    c = ControllabilityConstants(1.5, 2.0, 0.7)
    a = 1000 * nominal_stability(1000, c)[0]
    b = 2000 * nominal_stability(2000, c)[0]
    assert abs(a / b - 1) < 0.01


@pytest.mark.parametrize("g,nu", [(1.0, 1.0), (10.8, 2.36), (0.7, 0.45), (3.0, math.inf), (2.0, math.inf)])
def test_minimal_horizon_reaches_unit_deficit(g, nu):
    c = ControllabilityConstants(g, g, nu)
    floor = nominal_stability(2, c)[1]
    N = max(floor, 2)
    # at an integer boundary the floor gives eps_N = 1 exactly; one more step is strict
    assert nominal_stability(N, c)[0] <= 1.0 + 1e-15
    assert nominal_stability(N + 1, c)[0] < 1.0


def test_eps_n_matches_oracle():
    for N, g, gb, nu in [(4, 1.0, 1.0, 1.0), (25, 10.0, 10.8, 2.3), (7, 0.5, 0.9, math.inf)]:
        eps, floor = nominal_stability(N, ControllabilityConstants(g, gb, nu))
        assert eps == pytest.approx(oracles.eps_n(N, g, gb, nu), rel=1e-12)
        assert floor == oracles.n_floor(g, gb, nu)


# --- alpha / beta -----------------------------------------------------------


def test_alpha_star_unit_example():
    # Gamma = [1], C = 1, rho = 0, gamma_bar + eps_N = 1, all cost constants 2
    a = alpha_star(unit_cost(), [1.0], EdsConstants(1.0, 0.0), 1.0, 0.0)
    assert a.pi2 == pytest.approx(4.0)
    assert a.pi1 == pytest.approx(4.0)
    assert a(0.0) == 0.0


def test_alpha_pi2_grows_like_l_to_the_2n():
    eds = EdsConstants(1.0, 0.5)
    p = [alpha_star(unit_cost(), gamma_sequence(N, 1.2, 0.1, eds), eds, 1.0, 0.0).pi2 for N in (60, 61)]
    assert p[1] / p[0] == pytest.approx(1.44, rel=0.01)


def test_omega_bar_examples():
    eds = EdsConstants(1.0, 0.0)
    assert omega_bar(0.1, 1.0, True, eds) == pytest.approx(0.2)
    assert omega_bar(0.1, 2.0, False, eds, R0=1.0) == pytest.approx(0.4)
    assert omega_bar(0.0, 2.0, True, eds) == 0.0 == omega_bar(0.0, 2.0, False, eds, 1.0)
    with pytest.raises(BoundError):
        omega_bar(0.1, 2.0, False, eds)


def test_beta_general_vanishes_at_origin_and_zero_mismatch():
    eds = EdsConstants(1.0, 0.3)
    b = beta_general(3, [0.0], unit_cost(), p_growth(3, 0.9, 0.2), 1.0, eds, R0=0.5)
    assert b.pi2 == b.pi1 == b.zeta1 == 0.0
    assert b(0.2) == 0.0
    b = beta_general(3, [0.7], unit_cost(), p_growth(3, 0.9, 0.2), 1.0, eds, R0=0.5)
    assert b(0.0) == 0.0 and not b.inside


def test_beta_star_variants():
    P = p_growth(3, 0.9, 0.2)
    corr = beta_star(3, unit_cost(), P, 1.5, 2.0)
    printed = beta_star(3, unit_cost(), P, 1.5, 2.0, variant="printed", lstar_x=3.0)
    assert printed.pi2 == pytest.approx(3.0 * corr.pi2)
    assert (printed.pi1, printed.zeta1, printed.zeta2) == (corr.pi1, corr.zeta1, corr.zeta2)
    with pytest.raises(BoundError):
        beta_star(3, unit_cost(), P, 1.5, 2.0, variant="printed")


def test_eta_bar_star_takes_max():
    eds = EdsConstants(1.0, 0.5)
    assert eta_bar_star(eds, 2.0, 0.1) == pytest.approx(2.0)
    assert eta_bar_star(eds, 2.0, 7.0) == 7.0


cost_constants = st.tuples(st.floats(0.1, 5), st.floats(1.0, 3.0), st.floats(0.1, 5), st.floats(1.0, 3.0)).map(
    lambda t: (t[0], t[0] * t[1], t[2], t[2] * t[3])
)


@given(
    st.integers(1, 30), cost_constants, st.floats(0.05, 5), st.floats(0, 0.95), st.floats(0.1, 1.4), st.floats(0, 2),
    st.floats(0.01, 20), st.floats(0, 0.99), st.floats(0, 10), st.floats(0.01, 5), st.booleans(),
)
@settings(max_examples=100, deadline=None)
def test_coefficients_match_independent_rederivation(N, cc, C, rho, Lx, Lu, gbar, epsN, eta, lstar, printed):
    mlx, Llx, mlu, Llu = cc
    cost = general_cost(mlx, Llx, mlu, Llu)
    eds = EdsConstants(C, rho)
    var = "printed" if printed else "corrected"
    G = gamma_sequence(N, Lx, Lu, eds)
    G_o = oracles.gammas(N, Lx, Lu, C, rho)
    assert np.allclose(G, G_o, rtol=1e-12, atol=0)
    a = alpha_star(cost, G, eds, gbar, epsN, variant=var)
    pa = oracles.alpha_coeffs(G_o, C, rho, Llx, Llu, mlx, mlu, gbar, epsN, printed)
    assert (a.pi2, a.pi1) == pytest.approx(pa, rel=1e-12)
    P = p_growth(N, Lx, Lu)
    assert P == pytest.approx(oracles.growth_p(N, Lx, Lu), rel=1e-12)
    x = np.array([math.sqrt(lstar / 1.0)])  # identity-weighted lx would be lstar; use the oracle's lstar directly
    b = beta_general(N, x, quadratic_cost(np.eye(1), np.eye(1)), P, gbar, eds, None, variant=var)
    pb = oracles.beta_coeffs(N, P, 2.0, 2.0, 2.0, 2.0, gbar, float(x @ x), printed)
    assert (b.pi2, b.pi1, b.zeta2, b.zeta1) == pytest.approx(pb, rel=1e-12)
    bs = beta_star(N, cost, P, gbar, eta, variant=var, lstar_x=lstar)
    ps = oracles.beta_star_coeffs(N, P, Llx, Llu, mlx, mlu, gbar, eta, lstar if printed else None)
    assert (bs.pi2, bs.pi1, bs.zeta2, bs.zeta1) == pytest.approx(ps, rel=1e-12)


@given(st.floats(0, 0.05), st.floats(0.01, 3), st.floats(0.1, 0.9), st.floats(0.5, 5))
@settings(max_examples=100, deadline=None)
def test_alpha_and_beta_star_monotone_on_grid(eps, slope, rho, C):
    eds = EdsConstants(C, rho)
    Ld = lambda d: slope * d
    G = gamma_sequence(10, 1.005, 0.02, eds)
    a = alpha_star(unit_cost(), G, eds, 2.0, 0.3, Ld)
    b = beta_star(10, unit_cost(), p_growth(10, 1.005, 0.02), 2.0, 3.0, Ld)
    grid = np.linspace(0, eps, 50)
    av = [a(d) for d in grid]
    bv = [b(d) for d in grid]
    assert av[0] == 0.0 and bv[0] == 0.0
    assert np.all(np.diff(av) >= 0) and np.all(np.diff(bv) >= 0)


# --- stability and performance -------------------------------------------------


def test_stability_check_examples():
    a = alpha_star(unit_cost(), [1.0], EdsConstants(1.0, 0.0), 1.0, 0.0)
    assert stability_check(0.25, a, 0.0) == (True, 0.75)
    holds, margin = stability_check(0.25, lambda e: 1.0, 0.1)
    assert not holds and margin == pytest.approx(-0.25)


def test_max_mismatch_examples():
    assert max_mismatch(0.0, 0.0, 1.0) == pytest.approx(1.0)
    assert max_mismatch(0.5, 2.0, 0.0) == pytest.approx(0.25)
    assert max_mismatch(0.3, 0.0, 0.0) == math.inf
    with pytest.raises(BoundError):
        max_mismatch(1.0, 1.0, 1.0)


@given(st.floats(0, 0.99), st.floats(1e-6, 100), st.floats(1e-6, 1e5), st.floats(0.1, 10))
@settings(max_examples=200, deadline=None)
def test_max_mismatch_plugs_back(epsN, pi1, pi2, slope):
    d = max_mismatch(epsN, pi1, pi2, lambda y: y / slope)
    z = slope * d
    assert epsN + pi2 * z * z + pi1 * z == pytest.approx(1.0, abs=1e-9)


def test_competitive_ratio_examples():
    assert competitive_ratio(0.5, 0.1, 0.2, 10.0) == pytest.approx(3.0)
    assert competitive_ratio(0.5, 0.0, 5.0, 1.0) == pytest.approx(4.0)
    assert competitive_ratio(0.2, 0.0, 0.0, 1.0) == 1 / 0.8
    with pytest.raises(StabilityError):
        competitive_ratio(0.6, 0.5, 0.0, 1.0)


def test_asymptotic_classes():
    assert asymptotic_class(0.5).name == "contractive"
    assert asymptotic_class(1.0).name == "marginal"
    assert asymptotic_class(1.0 + 5e-13).name == "marginal"
    assert asymptotic_class(1.005).name == "expansive"
    assert "N^3" in asymptotic_class(1.0).ratio


def simple_inputs(**kw):
    base = dict(
        cost=unit_cost(),
        eds=EdsConstants(0.5, 0.4),
        L_fx=lambda e: 0.8 + e,
        L_fu=lambda e: 1.0 + e,
        gamma_bar=0.7,
        nu=0.5,
        omega_radius=1.0,
        eta_bar=0.5,
        R0=lambda e: 0.1 * e,
    )
    base.update(kw)
    return BoundInputs(**base)


def test_zero_mismatch_report_recovers_nominal_ratio():
    rep = build_report(simple_inputs(), 6, 0.0)
    assert rep.alpha_eps == 0.0 and rep.beta_star_eps == 0.0
    assert rep.ratio == 1.0 / (1.0 - rep.epsilon_N)


def test_report_serializes_flat_json():
    rep = build_report(simple_inputs(), 6, 1e-3)
    doc = rep.to_dict()
    json.dumps(doc)
    assert all(not isinstance(v, (dict, list)) for v in doc.values())
    for key in ("epsilon_N", "pi_alpha_1", "pi_star_beta_2", "variant.pi_alpha1", "stable", "Gamma.6", "asymptotic_class"):
        assert key in doc


def test_performance_bounds_zero_mismatch():
    inp = simple_inputs()
    rep = build_report(inp, 6, 0.0)
    aff, ratio = performance_bounds(rep, inp, np.array([0.3]), 2.0)
    assert ratio == pytest.approx(1 / (1 - rep.epsilon_N))
    assert aff == pytest.approx(2.0 / (1 - rep.epsilon_N))


def test_optimal_horizon_zero_mismatch_picks_upper_end():
    N, R, table = optimal_horizon(simple_inputs(), 0.0, range(2, 12))
    assert N == 11
    assert [r[0] for r in table] == list(range(2, 12))
    assert optimal_horizon(simple_inputs(), 0.0, [5])[0] == 5


def test_optimal_horizon_large_mismatch_prefers_short_horizon():
    inp = simple_inputs(L_fx=lambda e: 1.2, L_fu=lambda e: 1.0)
    N, R, table = optimal_horizon(inp, 2e-3, range(2, 30))
    assert N < 29


def test_optimal_horizon_without_stable_horizon_raises():
    with pytest.raises(StabilityError):
        optimal_horizon(simple_inputs(gamma_bar=50.0), 0.0, range(2, 5))


def test_lq_specialize_parameter_free_matrices():
    model, th = linear_model([[0.5]], [[1.0]], A_fn=lambda t: np.array([[0.5]]), B_fn=lambda t: np.eye(1), theta_hat=[0.0])
    out = lq_specialize(model, unit_cost(), InputConstraint.symmetric_box(1.0), 3, ParameterSpec(th, 0.1), EdsConstants(1.0, 0.5), budget=16)
    assert out.e_ab == 0.0 and out.L_K == 0.0 and out.L_d(0.1) == 0.0


def test_lq_specialize_region_matches_hand_computation():
    # scalar, N = 1: K = -a b q/(r + b^2 q) = -0.25 for a = 0.5, b = q = r = 1; box |u| <= 1
    model, th = linear_model([[0.5]], [[1.0]], A_fn=lambda t: np.array([[t[0]]]), B_fn=lambda t: np.eye(1), theta_hat=[0.5])
    spec = ParameterSpec(th, 0.0)
    out = lq_specialize(model, unit_cost(), InputConstraint.symmetric_box(1.0), 1, spec, EdsConstants(1.0, 0.5))
    assert out.eps_K == pytest.approx(1 / 0.25**2)
    assert out.r_LQ == pytest.approx(4.0)
