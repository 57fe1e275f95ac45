"""Separable stage costs and their curvature constants.

Constants follow the strong-convexity/strong-smoothness convention: for
``lx(x) = x' Q x`` the moduli are ``m = 2 lambda_min(Q)`` and
``L = 2 lambda_max(Q)``, which makes ``lx(x) >= (m/2)||x||^2`` tight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class SeparableCost:
    lx: Callable[[Array], float]
    lu: Callable[[Array], float]
    grad_lx: Callable[[Array], Array]
    grad_lu: Callable[[Array], Array]
    m_lx: float
    L_lx: float
    m_lu: float
    L_lu: float
    nu: Optional[float] = None
    Q: Optional[Array] = None
    R: Optional[Array] = None

    def __post_init__(self):
        if not (0.0 < self.m_lx <= self.L_lx and 0.0 < self.m_lu <= self.L_lu):
            raise ValueError("curvature constants must satisfy 0 < m <= L")

    def stage(self, x, u) -> float:
        return float(self.lx(x) + self.lu(u))

    def terminal(self, x) -> float:
        return float(self.lx(x))

    @property
    def is_quadratic(self) -> bool:
        return self.Q is not None and self.R is not None


def quadratic_cost(Q, R, nu: Optional[float] = None) -> SeparableCost:
    """``l(x, u) = x'Qx + u'Ru`` with ``Q, R`` symmetric positive definite."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    for name, M in (("Q", Q), ("R", R)):
        if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
            raise ValueError(f"{name} must be square and symmetric")
    eq, er = np.linalg.eigvalsh(Q), np.linalg.eigvalsh(R)
    if eq[0] <= 0 or er[0] <= 0:
        raise ValueError("Q and R must be positive definite")
    Q2, R2 = 2.0 * Q, 2.0 * R
    return SeparableCost(
        lx=lambda x: float(x @ Q @ x),
        lu=lambda u: float(u @ R @ u),
        grad_lx=lambda x: Q2 @ x,
        grad_lu=lambda u: R2 @ u,
        m_lx=2.0 * float(eq[0]),
        L_lx=2.0 * float(eq[-1]),
        m_lu=2.0 * float(er[0]),
        L_lu=2.0 * float(er[-1]),
        nu=nu,
        Q=Q,
        R=R,
    )


def optimized_stage_cost(cost: SeparableCost, x) -> float:
    """``min_u l(x, u)``, which is ``lx(x)`` because ``lu(0) = 0`` and ``0`` lies in ``U``."""
    return cost.terminal(np.atleast_1d(np.asarray(x, dtype=float)))


def error_matching_constant(cost: SeparableCost) -> float:
    """``c_m = 2 (1/m_lx + 1/m_lu)``."""
    if cost.m_lx <= 0 or cost.m_lu <= 0:
        raise ValueError("curvature constants must be positive")
    return 2.0 * (1.0 / cost.m_lx + 1.0 / cost.m_lu)


def estimate_clf_constant(cost: SeparableCost, model, constraint, states: Sequence, theta_hat, **solver_kw) -> float:
    """Smallest ``nu`` with ``min_u {lx(f(x,u)) + l(x,u)} <= (1 + nu) lx(x)`` on all samples.

    The inner minimum is the horizon-one problem, so this equals the sampled
    ``max V_1(x)/lx(x) - 1`` (clipped at 0). Returns ``inf`` when some sample
    has ``lx(x) = 0`` but a positive left side.
    """
    from .ocp import OcpProblem, solve

    states = list(states)
    if not states:
        raise ValueError("need at least one sample state")
    problem = OcpProblem(model, cost, constraint, 1, np.asarray(theta_hat, dtype=float))
    nu = 0.0
    for x in states:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lhs = solve(problem, x, **solver_kw).value
        lx = cost.lx(x)
        if lx == 0.0:
            if lhs > 0.0:
                return math.inf
            continue
        nu = max(nu, lhs / lx - 1.0)
    return nu


@dataclass
class CostBoundReport:
    passed: bool
    worst_margin_perturb_x: float
    worst_margin_perturb_u: float
    worst_margin_lower_x: float
    worst_margin_lower_u: float
    samples: int


def verify_cost_bounds(
    cost: SeparableCost, n_x: int, n_u: int, budget: int = 2000, scale: float = 2.0, seed: int = 0
) -> CostBoundReport:
    """Check the quadratic perturbation and lower bounds on random samples.

    Margins are ``rhs - lhs``; the report passes when every margin is
    ``>= -1e-12 * (1 + |rhs|)``.
    """
    rng = np.random.default_rng(seed)
    worst = [math.inf] * 4
    ok = True

    def check(idx, lhs, rhs):
        nonlocal ok
        margin = rhs - lhs
        worst[idx] = min(worst[idx], margin)
        if margin < -1e-12 * (1.0 + abs(rhs)):
            ok = False

    for _ in range(budget):
        x = rng.uniform(-scale, scale, n_x)
        dx = rng.uniform(-scale, scale, n_x) * rng.uniform()
        u = rng.uniform(-scale, scale, n_u)
        du = rng.uniform(-scale, scale, n_u) * rng.uniform()
        ndx, ndu = np.linalg.norm(dx), np.linalg.norm(du)
        check(0, abs(cost.lx(x + dx) - cost.lx(x)), 0.5 * cost.L_lx * ndx**2 + cost.L_lx * np.linalg.norm(x) * ndx)
        check(1, abs(cost.lu(u + du) - cost.lu(u)), 0.5 * cost.L_lu * ndu**2 + cost.L_lu * np.linalg.norm(u) * ndu)
        check(2, 0.5 * cost.m_lx * np.linalg.norm(x) ** 2, cost.lx(x))
        check(3, 0.5 * cost.m_lu * np.linalg.norm(u) ** 2, cost.lu(u))
    return CostBoundReport(ok, *worst, samples=budget)
