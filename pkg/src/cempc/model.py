"""Parametric discrete-time models, input constraint sets and model-error quantities.

Two systems ship with the package:

* :func:`tanh_model` -- the second-order tanh network model with parameter
  ``theta = [w1, w2, b]``;
* :func:`linear_model` -- ``x+ = A(theta) x + B(theta) u`` where ``theta`` is
  ``vec([A B])`` (row-major) unless custom parameter maps are given.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class ParameterSpec:
    """Nominal parameter and the radius of the ball ``||theta - theta_hat|| <= epsilon``."""

    theta_hat: Array
    epsilon: float

    def __post_init__(self):
        theta_hat = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        if theta_hat.ndim != 1:
            raise ValueError("theta_hat must be a vector")
        if not self.epsilon >= 0.0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        object.__setattr__(self, "theta_hat", theta_hat)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @property
    def dim(self) -> int:
        return self.theta_hat.size

    def delta(self, theta) -> float:
        return float(np.linalg.norm(np.asarray(theta, dtype=float) - self.theta_hat))

    def contains(self, theta, atol: float = 1e-12) -> bool:
        return self.delta(theta) <= self.epsilon + atol

    def with_epsilon(self, epsilon: float) -> "ParameterSpec":
        return ParameterSpec(self.theta_hat, epsilon)

    def sample_sphere(self, rng: np.random.Generator, n: int, radius: Optional[float] = None) -> Array:
        """Draw ``n`` parameters with ``||theta - theta_hat|| = radius`` (default ``epsilon``).

        Directions are normalized Gaussians, hence uniform on the sphere.
        """
        radius = self.epsilon if radius is None else float(radius)
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return self.theta_hat + radius * g


@dataclass(frozen=True, eq=False)
class InputConstraint:
    """Input set ``U = {u : E u <= 1}``; boxes keep their bounds for exact clipping."""

    kind: str
    lo: Optional[Array] = None
    hi: Optional[Array] = None
    E: Optional[Array] = None

    def __post_init__(self):
        if self.kind == "box":
            lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
            hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
            if lo.shape != hi.shape:
                raise ValueError("box bounds must have equal shape")
            if not (np.all(lo < 0.0) and np.all(hi > 0.0)):
                raise ValueError("box must satisfy lo < 0 < hi so that u = 0 is interior")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
            E = np.vstack([np.diag(1.0 / hi), np.diag(-1.0 / np.abs(lo))])
            object.__setattr__(self, "E", E)
        elif self.kind == "polytope":
            E = np.atleast_2d(np.asarray(self.E, dtype=float))
            if not np.all(np.isfinite(E)):
                raise ValueError("polytope matrix must be finite")
            object.__setattr__(self, "E", E)
        else:
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    @classmethod
    def box(cls, lo, hi) -> "InputConstraint":
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def polytope(cls, E) -> "InputConstraint":
        return cls("polytope", E=E)

    @classmethod
    def symmetric_box(cls, bound, dim: int = 1) -> "InputConstraint":
        b = np.broadcast_to(np.asarray(bound, dtype=float), (dim,))
        return cls.box(-b, b)

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    def g(self, u) -> Array:
        return self.E @ np.atleast_1d(u)

    def contains(self, u, tol: float = 1e-9) -> bool:
        return bool(np.all(self.g(u) <= 1.0 + tol))

    def project(self, v: Array) -> Array:
        """Euclidean projection onto ``U``."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if self.kind == "box":
            return np.clip(v, self.lo, self.hi)
        if self.contains(v, tol=0.0):
            return v.copy()
        from .qp import solve_qp  # local import: qp depends on nothing here

        res = solve_qp(np.eye(v.size), -v, self.E, np.ones(self.E.shape[0]))
        return res.x

    def max_step(self, d: Array) -> float:
        """Largest ``t >= 0`` with ``t d`` in ``U`` (``inf`` for unbounded rays)."""
        s = self.E @ d
        pos = s[s > 0]
        return float(1.0 / pos.max()) if pos.size else math.inf

    def radius(self) -> float:
        """Largest input norm in ``U`` (vertices of a box; sampled rays otherwise)."""
        if self.kind == "box":
            return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))
        rng = np.random.default_rng(0)
        d = rng.standard_normal((4096, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return max(self.max_step(di) for di in d)

    def bounding_box(self) -> tuple[Array, Array]:
        if self.kind == "box":
            return self.lo, self.hi
        from scipy.optimize import linprog

        m = self.dim
        lo, hi = np.empty(m), np.empty(m)
        for i in range(m):
            c = np.zeros(m)
            c[i] = 1.0
            for sign, out in ((1.0, lo), (-1.0, hi)):
                res = linprog(sign * c, A_ub=self.E, b_ub=np.ones(self.E.shape[0]), bounds=[(None, None)] * m)
                if res.status != 0:
                    raise ValueError("polytope is unbounded; sampling needs a bounded input set")
                out[i] = res.x[i]
        return lo, hi

    def sample(self, points: Array) -> Array:
        """Map points of the unit cube ``[0, 1)^m`` into ``U``.

        Boxes map affinely. Polytopes map through their bounding box, with
        infeasible points pulled radially onto the boundary.
        """
        points = np.atleast_2d(points)
        lo, hi = self.bounding_box()
        U = lo + points * (hi - lo)
        if self.kind == "box":
            return U
        worst = (U @ self.E.T).max(axis=1)
        scale = np.where(worst > 1.0, 1.0 / np.maximum(worst, 1e-300), 1.0)
        return U * scale[:, None]


@dataclass(frozen=True, eq=False)
class ParametricModel:
    """Dynamics ``x+ = f(x, u; theta)`` with Jacobians and Lipschitz data.

    ``lipschitz_*_nominal`` are the constants at ``theta_hat``;
    ``lipschitz_*_uniform`` map a mismatch level to the supremum over the ball.
    ``mismatch_lipschitz`` is an analytic ``L_d`` when one is known.
    """

    name: str
    state_dim: int
    input_dim: int
    param_dim: int
    dynamics: Callable[[Array, Array, Array], Array]
    jac_x: Callable[[Array, Array, Array], Array]
    jac_u: Callable[[Array, Array, Array], Array]
    jac_theta: Optional[Callable[[Array, Array, Array], Array]] = None
    lipschitz_x_nominal: Optional[float] = None
    lipschitz_u_nominal: Optional[float] = None
    lipschitz_x_uniform: Optional[Callable[[float], float]] = None
    lipschitz_u_uniform: Optional[Callable[[float], float]] = None
    mismatch_lipschitz: Optional["LinearEnvelope"] = None
    linear_maps: Optional[tuple] = None  # (A_fn, B_fn) for linear models
    metadata: dict = field(default_factory=dict)

    @property
    def is_linear(self) -> bool:
        return self.linear_maps is not None

    def matrices(self, theta) -> tuple[Array, Array]:
        if not self.is_linear:
            raise TypeError(f"model {self.name!r} is not linear")
        A_fn, B_fn = self.linear_maps
        theta = np.asarray(theta, dtype=float)
        return np.asarray(A_fn(theta), dtype=float), np.asarray(B_fn(theta), dtype=float)


def _check_dims(model: ParametricModel, x, u, theta):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if x.shape != (model.state_dim,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.state_dim},)")
    if u.shape != (model.input_dim,):
        raise ValueError(f"input has shape {u.shape}, expected ({model.input_dim},)")
    if theta.shape != (model.param_dim,):
        raise ValueError(f"parameter has shape {theta.shape}, expected ({model.param_dim},)")
    return x, u, theta


def step(model: ParametricModel, x, u, theta, spec: Optional[ParameterSpec] = None) -> Array:
    """One step of the model. Parameters outside ``spec``'s ball only warn."""
    x, u, theta = _check_dims(model, x, u, theta)
    if spec is not None and not spec.contains(theta):
        warnings.warn(
            f"theta at distance {spec.delta(theta):.3g} lies outside the ball of radius {spec.epsilon:.3g}",
            stacklevel=2,
        )
    return np.asarray(model.dynamics(x, u, theta), dtype=float)


def model_error(model: ParametricModel, x, u, theta, theta_hat) -> Array:
    """``f(x, u; theta) - f(x, u; theta_hat)``."""
    x, u, theta = _check_dims(model, x, u, theta)
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if np.array_equal(theta, theta_hat):
        return np.zeros(model.state_dim)
    return model.dynamics(x, u, theta) - model.dynamics(x, u, theta_hat)


# ---------------------------------------------------------------------------
# mismatch Lipschitz envelopes


@dataclass(frozen=True)
class LinearEnvelope:
    """``L_d(delta) = slope * delta``; the class-K envelope used by both case studies."""

    slope: float
    source: str = "analytic"
    samples: int = 0

    def __call__(self, delta):
        return self.slope * np.asarray(delta, dtype=float) if np.ndim(delta) else self.slope * float(delta)

    def inverse(self, value: float) -> float:
        if self.slope == 0.0:
            return math.inf if value > 0 else 0.0
        return float(value) / self.slope


def _normal_ppf(p: Array) -> Array:
    from scipy.special import ndtri

    return ndtri(np.clip(p, 1e-12, 1 - 1e-12))


def _sobol(dim: int, n: int, seed: int) -> Array:
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = max(1, math.ceil(math.log2(max(n, 1))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pts = sampler.random_base2(m)
    return pts[:n]


def _sphere_from_cube(points: Array) -> Array:
    z = _normal_ppf(points)
    n = np.linalg.norm(z, axis=1, keepdims=True)
    n[n == 0.0] = 1.0
    return z / n


def max_one_step_deviation(
    model: ParametricModel,
    x,
    constraint: InputConstraint,
    spec: ParameterSpec,
    budget: int = 1024,
    seed: int = 0,
    polish: bool = True,
) -> float:
    """Sample-maximum estimate of ``R(x; eps) = max_{u in U, theta in Theta} ||Delta_f||``.

    Points come from a scrambled Sobol sequence over ``U x dTheta`` (prefixes are
    nested, so the unpolished estimate is nondecreasing in ``budget``), followed by
    a coordinate-ascent polish of the best sample. The result is a lower estimate.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if spec.epsilon == 0.0:
        return 0.0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m, p = model.input_dim, spec.dim
    pts = _sobol(m + p, budget, seed)
    U = constraint.sample(pts[:, :m])
    dirs = _sphere_from_cube(pts[:, m:]) if p > 1 else np.where(pts[:, m:] < 0.5, -1.0, 1.0)
    fhat = {}

    def value(u, d):
        theta = spec.theta_hat + spec.epsilon * d
        key = tuple(u)
        if key not in fhat:
            fhat[key] = model.dynamics(x, u, spec.theta_hat)
        return float(np.linalg.norm(model.dynamics(x, u, theta) - fhat[key]))

    vals = np.array([value(U[i], dirs[i]) for i in range(budget)])
    best = int(np.argmax(vals))
    best_val = float(vals[best])
    if polish:
        best_val = max(best_val, _polish(value, U[best], dirs[best], constraint))
    return best_val


def _polish(value, u0: Array, d0: Array, constraint: InputConstraint, sweeps: int = 30) -> float:
    """Coordinate ascent over the input and the sphere direction."""
    u, d = u0.copy(), d0.copy()
    f = value(u, d)
    h_u = 0.25 * max(constraint.radius(), 1e-12)
    h_d = 0.25
    for _ in range(sweeps):
        improved = False
        for i in range(u.size):
            for s in (h_u, -h_u):
                cand = u.copy()
                cand[i] += s
                cand = constraint.project(cand)
                fc = value(cand, d)
                if fc > f:
                    u, f, improved = cand, fc, True
        for i in range(d.size):
            for s in (h_d, -h_d):
                cand = d.copy()
                cand[i] += s
                nrm = np.linalg.norm(cand)
                if nrm == 0.0:
                    continue
                cand /= nrm
                fc = value(u, cand)
                if fc > f:
                    d, f, improved = cand, fc, True
        if not improved:
            h_u *= 0.5
            h_d *= 0.5
            if h_d < 1e-6:
                break
    return f


class DegenerateSamplingError(ValueError):
    """All sampled states and inputs are zero, so the envelope ratio is undefined."""


def fit_mismatch_lipschitz(
    model: ParametricModel,
    spec: ParameterSpec,
    constraint: Optional[InputConstraint] = None,
    budget: int = 4096,
    levels: int = 4,
    state_box: float = 2.0,
    seed: int = 0,
    polish: bool = True,
    use_analytic: bool = False,
) -> LinearEnvelope:
    """Smallest linear envelope ``L_d(delta) = c delta`` with ``||Delta_f|| <= L_d(delta) (||x|| + ||u||)``.

    The slope ``c`` is the maximum over samples of
    ``||Delta_f(x, u; theta)|| / (delta(theta) (||x|| + ||u||))`` with
    ``delta`` spread over ``levels`` mismatch levels in ``(0, epsilon]``. Linear
    models with a known ``e_AB`` return the exact law; ``use_analytic`` does the
    same for any model that carries an analytic envelope.
    """
    if levels < 2:
        raise ValueError("need at least two mismatch levels")
    if spec.epsilon == 0.0:
        return LinearEnvelope(0.0, source="zero-mismatch")
    analytic = model.mismatch_lipschitz
    if analytic is not None and (use_analytic or model.is_linear):
        return analytic
    n, m, p = model.state_dim, model.input_dim, spec.dim
    pts = _sobol(n + m + p + 1, budget, seed)
    X = (2.0 * pts[:, :n] - 1.0) * state_box
    if constraint is not None:
        U = constraint.sample(pts[:, n : n + m])
    else:
        U = (2.0 * pts[:, n : n + m] - 1.0) * state_box
    dirs = _sphere_from_cube(pts[:, n + m : n + m + p]) if p > 1 else np.where(pts[:, n + m :n + m + 1] < 0.5, -1.0, 1.0)
    lv = spec.epsilon * np.arange(1, levels + 1) / levels
    deltas = lv[np.minimum((pts[:, -1] * levels).astype(int), levels - 1)]
    scale = np.linalg.norm(X, axis=1) + np.linalg.norm(U, axis=1)
    if not np.any(scale > 0):
        raise DegenerateSamplingError("all sampled (x, u) are zero")

    def ratio(x, u, d, delta):
        s = np.linalg.norm(x) + np.linalg.norm(u)
        if s == 0.0:
            return 0.0
        theta = spec.theta_hat + delta * d
        err = model.dynamics(x, u, theta) - model.dynamics(x, u, spec.theta_hat)
        return float(np.linalg.norm(err)) / (delta * s)

    vals = np.array([ratio(X[i], U[i], dirs[i], deltas[i]) for i in range(budget)])
    best = int(np.argmax(vals))
    slope = float(vals[best])
    if polish:
        slope = max(slope, _polish_ratio(ratio, X[best], U[best], dirs[best], deltas[best], constraint, state_box))
    return LinearEnvelope(slope, source="sampled", samples=budget)


def _polish_ratio(ratio, x0, u0, d0, delta, constraint, state_box, sweeps: int = 60) -> float:
    """Coordinate ascent of the envelope ratio; the state may also shrink toward 0."""
    z = [x0.copy(), u0.copy(), d0.copy()]
    f = ratio(z[0], z[1], z[2], delta)
    h = [0.25 * state_box, 0.25 * state_box, 0.25]
    for _ in range(sweeps):
        improved = False
        for blk in range(3):
            for i in range(z[blk].size):
                for s in (h[blk], -h[blk]):
                    cand = [c.copy() for c in z]
                    cand[blk][i] += s
                    if blk == 0:
                        cand[0] = np.clip(cand[0], -state_box, state_box)
                    elif blk == 1:
                        cand[1] = constraint.project(cand[1]) if constraint is not None else np.clip(cand[1], -state_box, state_box)
                    else:
                        nrm = np.linalg.norm(cand[2])
                        if nrm == 0.0:
                            continue
                        cand[2] = cand[2] / nrm
                    fc = ratio(cand[0], cand[1], cand[2], delta)
                    if fc > f:
                        z, f, improved = cand, fc, True
        if not improved:
            h = [0.5 * v for v in h]
            if h[2] < 1e-7:
                break
    return f


def jacobian_norm_max(model: ParametricModel, theta, states: Array, inputs: Array, ord="max") -> tuple[float, float]:
    """Largest sampled norms of ``df/dx`` and ``df/du``.

    ``ord="max"`` is the largest absolute entry; ``ord=2`` the induced 2-norm.
    """

    def nrm(J):
        return float(np.max(np.abs(J))) if ord == "max" else float(np.linalg.norm(J, ord))

    lx = lu = 0.0
    for x in states:
        for u in inputs:
            lx = max(lx, nrm(model.jac_x(x, u, theta)))
            lu = max(lu, nrm(model.jac_u(x, u, theta)))
    return lx, lu


# ---------------------------------------------------------------------------
# built-in systems

TANH_THETA_HAT = np.array([0.85, 0.995, 0.01])


def tanh_model() -> ParametricModel:
    """Second-order tanh network model, ``theta = [w1, w2, b]``.

    ``x1+ = -0.99 x2``, ``x2+ = w1 tanh(x1) + w2 tanh(x2) + b u``.

    The nominal Lipschitz constants (0.995, 0.01) are the largest absolute
    Jacobian entries at ``theta_hat``; the uniform ones add ``epsilon`` to
    the parameter-dependent entries. ``L_d(delta) = delta`` follows from
    Cauchy-Schwarz on the second row.
    """

    def f(x, u, th):
        return np.array([-0.99 * x[1], th[0] * math.tanh(x[0]) + th[1] * math.tanh(x[1]) + th[2] * u[0]])

    def fx(x, u, th):
        s0 = 1.0 - math.tanh(x[0]) ** 2
        s1 = 1.0 - math.tanh(x[1]) ** 2
        return np.array([[0.0, -0.99], [th[0] * s0, th[1] * s1]])

    def fu(x, u, th):
        return np.array([[0.0], [th[2]]])

    def fth(x, u, th):
        return np.array([[0.0, 0.0, 0.0], [math.tanh(x[0]), math.tanh(x[1]), u[0]]])

    w = TANH_THETA_HAT
    return ParametricModel(
        name="tanh",
        state_dim=2,
        input_dim=1,
        param_dim=3,
        dynamics=f,
        jac_x=fx,
        jac_u=fu,
        jac_theta=fth,
        lipschitz_x_nominal=float(max(0.99, abs(w[0]), abs(w[1]))),
        lipschitz_u_nominal=float(abs(w[2])),
        lipschitz_x_uniform=lambda eps: float(max(0.99, abs(w[0]) + eps, abs(w[1]) + eps)),
        lipschitz_u_uniform=lambda eps: float(abs(w[2]) + eps),
        mismatch_lipschitz=LinearEnvelope(1.0, source="analytic"),
        metadata={"theta_hat": TANH_THETA_HAT.tolist()},
    )


def linear_model(
    A_hat,
    B_hat,
    A_fn: Optional[Callable] = None,
    B_fn: Optional[Callable] = None,
    e_ab: Optional[float] = None,
    theta_hat=None,
) -> tuple[ParametricModel, Array]:
    """``x+ = A(theta) x + B(theta) u``.

    Without custom maps, ``theta = vec([A B])`` (row-major), so that
    ``max(||dA||, ||dB||) <= ||d theta||`` and ``e_AB = 1`` exactly.
    Returns ``(model, theta_hat)``.
    """
    A_hat = np.atleast_2d(np.asarray(A_hat, dtype=float))
    B_hat = np.atleast_2d(np.asarray(B_hat, dtype=float))
    n, m = B_hat.shape
    if A_hat.shape != (n, n):
        raise ValueError("A and B have inconsistent shapes")
    if A_fn is None:
        if B_fn is not None:
            raise ValueError("give both parameter maps or neither")
        theta_hat = np.hstack([A_hat, B_hat]).ravel()

        def A_fn(th):
            return th.reshape(n, n + m)[:, :n]

        def B_fn(th):
            return th.reshape(n, n + m)[:, n:]

        e_ab = 1.0 if e_ab is None else e_ab
    elif theta_hat is None:
        raise ValueError("custom parameter maps need theta_hat")
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))

    def f(x, u, th):
        return A_fn(th) @ x + B_fn(th) @ u

    def fx(x, u, th):
        return np.asarray(A_fn(th), dtype=float)

    def fu(x, u, th):
        return np.asarray(B_fn(th), dtype=float)

    nA = float(np.linalg.norm(A_fn(theta_hat), 2))
    nB = float(np.linalg.norm(B_fn(theta_hat), 2))
    model = ParametricModel(
        name="linear",
        state_dim=n,
        input_dim=m,
        param_dim=theta_hat.size,
        dynamics=f,
        jac_x=fx,
        jac_u=fu,
        lipschitz_x_nominal=nA,
        lipschitz_u_nominal=nB,
        lipschitz_x_uniform=(lambda eps: nA + e_ab * eps) if e_ab is not None else None,
        lipschitz_u_uniform=(lambda eps: nB + e_ab * eps) if e_ab is not None else None,
        mismatch_lipschitz=LinearEnvelope(float(e_ab), source="analytic") if e_ab is not None else None,
        linear_maps=(A_fn, B_fn),
        metadata={"e_ab": e_ab},
    )
    return model, theta_hat


def estimate_e_ab(model: ParametricModel, spec: ParameterSpec, budget: int = 512, seed: int = 0) -> float:
    """Sampled ``max(||A(theta)-A_hat||, ||B(theta)-B_hat||) / delta(theta)`` over the sphere."""
    if spec.epsilon == 0.0:
        return 0.0
    A0, B0 = model.matrices(spec.theta_hat)
    rng = np.random.default_rng(seed)
    best = 0.0
    for th in spec.sample_sphere(rng, budget):
        A, B = model.matrices(th)
        d = spec.delta(th)
        best = max(best, np.linalg.norm(A - A0, 2) / d, np.linalg.norm(B - B0, 2) / d)
    return float(best)
