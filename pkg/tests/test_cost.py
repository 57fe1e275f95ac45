import math

import numpy as np
import pytest

from cempc.cost import (
    error_matching_constant,
    estimate_clf_constant,
    optimized_stage_cost,
    quadratic_cost,
    verify_cost_bounds,
)
from cempc.model import InputConstraint, linear_model


def test_quadratic_cost_constants():
    c = quadratic_cost(np.diag([1.0, 3.0]), np.array([[2.0]]))
    assert (c.m_lx, c.L_lx, c.m_lu, c.L_lu) == (2.0, 6.0, 4.0, 4.0)
    assert error_matching_constant(c) == pytest.approx(2 * (1 / 2 + 1 / 4))


def test_identity_weights_give_unit_error_matching_constant_two():
    c = quadratic_cost(np.eye(2), np.eye(1))
    assert error_matching_constant(c) == 2.0


def test_non_positive_definite_weights_rejected():
    with pytest.raises(ValueError):
        quadratic_cost(np.diag([1.0, 0.0]), np.eye(1))
    with pytest.raises(ValueError):
        quadratic_cost(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(1))


def test_optimized_stage_cost_drops_input_term():
    c = quadratic_cost(np.eye(2), np.eye(1))
    assert optimized_stage_cost(c, [3.0, 4.0]) == 25.0


@pytest.mark.parametrize("Q,R", [(np.eye(2), np.eye(1)), (np.diag([0.5, 4.0]), np.array([[0.1]]))])
def test_cost_perturbation_and_lower_bounds_hold_on_samples(Q, R):
    rep = verify_cost_bounds(quadratic_cost(Q, R), 2, 1, budget=500)
    assert rep.passed


def test_clf_constant_of_scalar_lq_matches_riccati_step():
    # V_1(x) = min_u (x^2 + u^2 + (a x + u)^2) = (1 + a^2/2) x^2 unconstrained
    a = 0.8
    model, th = linear_model([[a]], [[1.0]])
    cost = quadratic_cost(np.eye(1), np.eye(1))
    nu = estimate_clf_constant(cost, model, InputConstraint.symmetric_box(10.0), [np.array([1.0]), np.array([-0.3])], th)
    assert nu == pytest.approx(a * a / 2, rel=1e-9)


def test_clf_constant_requires_samples():
    model, th = linear_model([[0.5]], [[1.0]])
    with pytest.raises(ValueError):
        estimate_clf_constant(quadratic_cost(np.eye(1), np.eye(1)), model, InputConstraint.symmetric_box(1.0), [], th)
