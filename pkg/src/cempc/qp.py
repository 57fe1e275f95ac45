"""Primal active-set method for small dense strictly convex QPs.

    minimize    0.5 z' H z + g' z
    subject to  A z <= b

Used for the constrained LQ problem and for Euclidean projection onto polytopes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QPResult:
    x: np.ndarray
    multipliers: np.ndarray
    active: list
    iterations: int
    kkt_residual: float
    converged: bool


class QPError(RuntimeError):
    pass


def _eq_qp(H, g, Aw, x):
    """Solve the equality-constrained step ``min 0.5 p'Hp + (Hx+g)'p  s.t. Aw p = 0``."""
    n = H.shape[0]
    grad = H @ x + g
    k = Aw.shape[0]
    if k == 0:
        return np.linalg.solve(H, -grad), np.zeros(0)
    K = np.block([[H, Aw.T], [Aw, np.zeros((k, k))]])
    rhs = np.concatenate([-grad, np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def kkt_residual(H, g, A, b, x, lam) -> float:
    """Max of stationarity, primal infeasibility, dual infeasibility and complementarity."""
    stat = H @ x + g + A.T @ lam
    slack = A @ x - b
    return float(
        max(
            np.max(np.abs(stat), initial=0.0),
            np.max(np.maximum(slack, 0.0), initial=0.0),
            np.max(np.maximum(-lam, 0.0), initial=0.0),
            np.max(np.abs(lam * slack), initial=0.0),
        )
    )


def solve_qp(H, g, A, b, x0=None, max_iter: int = 500, tol: float = 1e-12) -> QPResult:
    """Solve the QP from a feasible start (default ``x0 = 0``, which needs ``b >= 0``)."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    n = H.shape[0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if np.any(A @ x - b > 1e-9):
        raise QPError("starting point is infeasible")
    scale = np.maximum(np.linalg.norm(A, axis=1), 1e-300)
    work: list[int] = []
    lam_w = np.zeros(0)
    for it in range(1, max_iter + 1):
        Aw = A[work] if work else np.zeros((0, n))
        p, lam_w = _eq_qp(H, g, Aw, x)
        if np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(x)):
            # dual multipliers of K are lambda (with sign convention H p + g + Aw' lam = 0)
            if lam_w.size == 0 or lam_w.min() >= -tol:
                break
            drop = int(np.argmin(lam_w))
            work.pop(drop)
            continue
        # ratio test over inactive constraints moving toward their bound
        Ap = A @ p
        alpha, block = 1.0, None
        for i in range(A.shape[0]):
            if i in work or Ap[i] <= 1e-14 * scale[i]:
                continue
            step = (b[i] - A[i] @ x) / Ap[i]
            if step < alpha:
                alpha, block = max(step, 0.0), i
        x = x + alpha * p
        if block is not None:
            work.append(block)
    else:
        lam = np.zeros(A.shape[0])
        lam[work] = lam_w if lam_w.size == len(work) else 0.0
        return QPResult(x, lam, list(work), max_iter, kkt_residual(H, g, A, b, x, lam), False)
    lam = np.zeros(A.shape[0])
    if work:
        lam[work] = lam_w
    return QPResult(x, lam, list(work), it, kkt_residual(H, g, A, b, x, lam), True)
