"""Finite-horizon input-constrained optimal control without terminal cost.

    min_u  sum_{k<N} l(x_k, u_k) + lx(x_N),   x_{k+1} = f(x_k, u_k; theta),  u_k in U

Nonlinear problems use single shooting with projected gradient steps
(adjoint gradients, Barzilai-Borwein trial step, Armijo backtracking along
the projection arc). Linear-quadratic problems have a dense batch form that
is solved in closed form or as a QP.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cost import SeparableCost, quadratic_cost
from .model import InputConstraint, ParametricModel, linear_model
from .qp import solve_qp

Array = np.ndarray

GRAD_TOL = 1e-8
MAX_ITERS = 5000
LS_CONTRACTION = 0.5
ARMIJO_C = 1e-4
ROUNDOFF = 8 * np.finfo(float).eps


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OcpProblem:
    model: ParametricModel
    cost: SeparableCost
    constraint: InputConstraint
    horizon: int
    theta: Array

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be an integer >= 1")
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.shape != (self.model.param_dim,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.model.param_dim},)")
        if self.constraint.dim != self.model.input_dim:
            raise ValueError("constraint and model disagree on the input dimension")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "theta", theta)

    def with_theta(self, theta) -> "OcpProblem":
        return OcpProblem(self.model, self.cost, self.constraint, self.horizon, theta)

    def with_horizon(self, horizon: int) -> "OcpProblem":
        return OcpProblem(self.model, self.cost, self.constraint, horizon, self.theta)


@dataclass
class OcpSolution:
    inputs: Array  # (N, m)
    states: Array  # (N + 1, n)
    value: float
    iterations: int = 0
    grad_norm: float = 0.0
    converged: bool = True
    method: str = "pg"
    diagnostics: dict = field(default_factory=dict)

    @property
    def first_input(self) -> Array:
        return self.inputs[0]


def rollout(problem: OcpProblem, x, inputs) -> Array:
    f, th = problem.model.dynamics, problem.theta
    X = np.empty((problem.horizon + 1, problem.model.state_dim))
    X[0] = x
    for k in range(problem.horizon):
        X[k + 1] = f(X[k], inputs[k], th)
    return X


def trajectory_cost(cost: SeparableCost, states, inputs) -> float:
    J = sum(cost.lx(states[k]) + cost.lu(inputs[k]) for k in range(len(inputs)))
    return float(J + cost.lx(states[-1]))


def _gradient(problem: OcpProblem, X, U) -> Array:
    m, c, th = problem.model, problem.cost, problem.theta
    N = problem.horizon
    G = np.empty_like(U)
    lam = c.grad_lx(X[N])
    for k in range(N - 1, -1, -1):
        G[k] = c.grad_lu(U[k]) + m.jac_u(X[k], U[k], th).T @ lam
        lam = c.grad_lx(X[k]) + m.jac_x(X[k], U[k], th).T @ lam
    return G


def _project(constraint: InputConstraint, U) -> Array:
    if constraint.kind == "box":
        return np.clip(U, constraint.lo, constraint.hi)
    return np.array([constraint.project(u) for u in U])


def _evaluate(problem, x, U):
    X = rollout(problem, x, U)
    if not np.all(np.isfinite(X)):
        raise SolverError("non-finite state in rollout")
    return X, trajectory_cost(problem.cost, X, U)


def _projected_gradient(problem, x, U, tol, max_iters, history=None):
    con = problem.constraint
    U = _project(con, U)
    X, J = _evaluate(problem, x, U)
    if history is not None:
        history.append(J)
    G = _gradient(problem, X, U)
    step = 1.0 / max(problem.cost.L_lu, problem.cost.L_lx)
    pg = np.linalg.norm(_project(con, U - G) - U)
    it = 0
    while pg > tol and it < max_iters:
        it += 1
        t = step
        while True:
            Un = _project(con, U - t * G)
            D = Un - U
            Xn, Jn = _evaluate(problem, x, Un)
            # slack of a few ulps: near the optimum the Armijo decrease drops below the rounding of J
            if Jn <= J + ARMIJO_C * float(np.sum(G * D)) + ROUNDOFF * abs(J) or t < 1e-16:
                break
            t *= LS_CONTRACTION
        if not np.any(D):
            break
        Gn = _gradient(problem, Xn, Un)
        s, y = D.ravel(), (Gn - G).ravel()
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 10.0 * t
        step = min(max(step, 1e-10), 1e10)
        U, X, J, G = Un, Xn, Jn, Gn
        pg = np.linalg.norm(_project(con, U - G) - U)
        if history is not None:
            history.append(J)
    return U, X, J, it, pg


def solve_pg(
    problem: OcpProblem,
    x,
    u0=None,
    tol: float = GRAD_TOL,
    max_iters: int = MAX_ITERS,
    restarts: int = 0,
    seed: int = 0,
    history: Optional[list] = None,
) -> OcpSolution:
    """Projected-gradient single shooting.

    Starts from ``u0`` (default zeros). With ``restarts > 0`` additional
    starts are drawn from scaled random feasible sequences and the lowest
    value is kept. On non-convergence the best iterate is returned with
    ``converged = False``. Objective values of the first start are appended
    to ``history`` when a list is given.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise SolverError("initial state is not finite")
    N, mdim = problem.horizon, problem.model.input_dim
    starts = [np.zeros((N, mdim)) if u0 is None else np.array(u0, dtype=float).reshape(N, mdim)]
    if restarts:
        rng = np.random.default_rng(seed)
        for _ in range(restarts):
            starts.append(rng.uniform() * problem.constraint.sample(rng.random((N, mdim))))
    best = None
    total = 0
    for i, U0 in enumerate(starts):
        U, X, J, it, pg = _projected_gradient(problem, x, U0, tol, max_iters, history if i == 0 else None)
        total += it
        if best is None or J < best[2]:
            best = (U, X, J, pg)
    U, X, J, pg = best
    return OcpSolution(U, X, J, total, float(pg), bool(pg <= tol), "pg")


def shift_warm_start(inputs) -> Array:
    """Shift by one stage and repeat the last input."""
    inputs = np.asarray(inputs, dtype=float)
    return np.vstack([inputs[1:], inputs[-1:]])


# ---------------------------------------------------------------------------
# linear-quadratic problems


@dataclass
class LqBatchMatrices:
    Phi_A: Array  # ((N+1) n, n)
    G_AB: Array  # ((N+1) n, N m)
    Qbar: Array
    Rbar: Array
    gains: Array  # (N, m, n)
    hessian: Array  # Rbar + G' Qbar G


def lq_batch_matrices(A, B, Q, R, N: int) -> LqBatchMatrices:
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Q, R = np.atleast_2d(Q).astype(float), np.atleast_2d(R).astype(float)
    n, m = B.shape
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    Phi = np.vstack(powers)
    G = np.zeros(((N + 1) * n, N * m))
    for i in range(1, N + 1):
        for j in range(i):
            G[i * n:(i + 1) * n, j * m:(j + 1) * m] = powers[i - j - 1] @ B
    Qbar = np.kron(np.eye(N + 1), Q)
    Rbar = np.kron(np.eye(N), R)
    H = Rbar + G.T @ Qbar @ G
    K = -np.linalg.solve(H, G.T @ Qbar @ Phi)
    return LqBatchMatrices(Phi, G, Qbar, Rbar, K.reshape(N, m, n), H)


def _lq_problem(A, B, Q, R, N, constraint):
    model, theta = linear_model(A, B)
    return OcpProblem(model, quadratic_cost(Q, R), constraint, N, theta)


def _wide_box(m):
    return InputConstraint.symmetric_box(1e300, m)


def solve_lq_unconstrained(A, B, Q, R, N: int, x) -> OcpSolution:
    """Batch closed form; ``diagnostics['gains']`` holds ``K_k`` with ``u_k = K_k x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mats = lq_batch_matrices(A, B, Q, R, N)
    U = mats.gains @ x
    X = (mats.Phi_A @ x + mats.G_AB @ U.ravel()).reshape(N + 1, -1)
    cost = quadratic_cost(Q, R)
    return OcpSolution(U, X, trajectory_cost(cost, X, U), 0, 0.0, True, "lq-batch", {"gains": mats.gains})


def solve_lq_riccati(A, B, Q, R, N: int, x) -> OcpSolution:
    """Backward Riccati recursion with ``P_N = Q`` (independent of the batch form)."""
    A, B = np.atleast_2d(A).astype(float), np.atleast_2d(B).astype(float)
    Q, R = np.atleast_2d(Q).astype(float), np.atleast_2d(R).astype(float)
    P = Q.copy()
    gains = [None] * N
    for k in range(N - 1, -1, -1):
        S = R + B.T @ P @ B
        K = -np.linalg.solve(S, B.T @ P @ A)
        gains[k] = K
        P = Q + A.T @ P @ (A + B @ K)
        P = 0.5 * (P + P.T)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = [x]
    U = []
    for k in range(N):
        U.append(gains[k] @ X[-1])
        X.append(A @ X[-1] + B @ U[-1])
    X, U = np.array(X), np.array(U)
    return OcpSolution(U, X, float(x @ P @ x), 0, 0.0, True, "riccati", {"gains": np.array(gains), "P0": P})


def lq_infinite_horizon_value(A, B, Q, R, x) -> float:
    from scipy.linalg import solve_discrete_are

    P = solve_discrete_are(np.atleast_2d(A), np.atleast_2d(B), np.atleast_2d(Q), np.atleast_2d(R))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(x @ P @ x)


def solve_lq_constrained(A, B, Q, R, E_u, N: int, x, tol: float = 1e-8) -> OcpSolution:
    """Dense QP over the stacked inputs with ``(I_N kron E_u) u <= 1``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mats = lq_batch_matrices(A, B, Q, R, N)
    E_u = np.atleast_2d(np.asarray(E_u, dtype=float))
    m = mats.Rbar.shape[0] // N
    H = 2.0 * mats.hessian
    g = 2.0 * mats.G_AB.T @ mats.Qbar @ mats.Phi_A @ x
    Ain = np.kron(np.eye(N), E_u)
    res = solve_qp(H, g, Ain, np.ones(Ain.shape[0]))
    U = res.x.reshape(N, m)
    X = (mats.Phi_A @ x + mats.G_AB @ res.x).reshape(N + 1, -1)
    cost = quadratic_cost(Q, R)
    converged = res.converged and res.kkt_residual <= tol * (1.0 + np.abs(g).max(initial=0.0))
    return OcpSolution(
        U, X, trajectory_cost(cost, X, U), res.iterations, res.kkt_residual, bool(converged), "lq-qp",
        {"active": res.active, "multipliers": res.multipliers},
    )


# ---------------------------------------------------------------------------
# dispatch


def solve(problem: OcpProblem, x, method: str = "auto", u0=None, **kw) -> OcpSolution:
    """Solve ``P_MPC(theta)`` at ``x``.

    ``method='auto'`` routes linear models with quadratic costs to the QP and
    everything else to projected gradient.
    """
    if method == "auto":
        method = "qp" if problem.model.is_linear and problem.cost.is_quadratic else "pg"
    if method == "qp":
        A, B = problem.model.matrices(problem.theta)
        c = problem.cost
        return solve_lq_constrained(A, B, c.Q, c.R, problem.constraint.E, problem.horizon, x)
    if method == "pg":
        return solve_pg(problem, x, u0=u0, **kw)
    raise ValueError(f"unknown method {method!r}")


def policy(problem: OcpProblem, x, **kw) -> Array:
    return solve(problem, x, **kw).inputs[0]


def value(problem: OcpProblem, x, **kw) -> float:
    return solve(problem, x, **kw).value


def reduced_hessian_min_eig(problem: OcpProblem, x, sol: OcpSolution, h: float = 1e-5, active_tol: float = 1e-7) -> float:
    """Smallest eigenvalue of a central-difference Hessian restricted to inactive inputs.

    A diagnostic for a regular (strict local) minimizer; ``inf`` when every
    input is active.
    """
    con = problem.constraint
    U = sol.inputs
    free = [
        (k, j)
        for k in range(U.shape[0])
        for j in range(U.shape[1])
        if np.all(con.g(U[k]) < 1.0 - active_tol)
    ]
    if not free:
        return math.inf

    def J(V):
        return trajectory_cost(problem.cost, rollout(problem, x, V), V)

    n = len(free)
    Hs = np.empty((n, n))
    for a, ia in enumerate(free):
        for b, ib in enumerate(free[a:], start=a):
            vals = []
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                V = U.copy()
                V[ia] += sa * h
                V[ib] += sb * h
                vals.append(J(V))
            Hs[a, b] = Hs[b, a] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h * h)
    return float(np.linalg.eigvalsh(Hs)[0])
