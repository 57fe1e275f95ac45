"""Closed-loop simulation and Monte-Carlo sweeps for certainty-equivalence MPC.

The controller plans with ``theta_hat`` while the plant evolves with
``theta_true``. Every scenario draws its randomness from its own seed,
derived from ``(master_seed, axis_index, scenario_index)``, so results do
not depend on execution order or thread count.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cost import SeparableCost, estimate_clf_constant, quadratic_cost
from .model import InputConstraint, ParameterSpec, ParametricModel, TANH_THETA_HAT, linear_model, tanh_model
from .ocp import OcpProblem, OcpSolution, SolverError, shift_warm_start, solve

Array = np.ndarray

FAILURE_CAP = 0.05


class SweepInvalid(RuntimeError):
    """Too many scenarios failed for the sweep to be meaningful."""


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# setups


@dataclass(frozen=True, eq=False)
class Setup:
    model: ParametricModel
    cost: SeparableCost
    constraint: InputConstraint
    theta_hat: Array
    x0_radius: float = math.sqrt(2.0)
    method: str = "auto"

    def problem(self, N: int, theta=None) -> OcpProblem:
        return OcpProblem(self.model, self.cost, self.constraint, N, self.theta_hat if theta is None else theta)

    def spec(self, epsilon: float) -> ParameterSpec:
        return ParameterSpec(self.theta_hat, epsilon)


def tanh_setup(u_max: float = 0.05, theta_hat=None, x0_radius: float = math.sqrt(2.0)) -> Setup:
    th = TANH_THETA_HAT if theta_hat is None else np.asarray(theta_hat, dtype=float)
    return Setup(tanh_model(), quadratic_cost(np.eye(2), np.eye(1)), InputConstraint.symmetric_box(u_max), th, x0_radius)


def lq_setup(A, B, Q=None, R=None, constraint: Optional[InputConstraint] = None, x0_radius: float = 1.0) -> Setup:
    model, th = linear_model(A, B)
    n, m = model.state_dim, model.input_dim
    Q = np.eye(n) if Q is None else Q
    R = np.eye(m) if R is None else R
    constraint = InputConstraint.symmetric_box(1.0, m) if constraint is None else constraint
    return Setup(model, quadratic_cost(Q, R), constraint, th, x0_radius)


# ---------------------------------------------------------------------------
# seeding and sampling


def scenario_seed(master: int, axis_index: int, scenario_index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(axis_index), int(scenario_index)]).generate_state(1)[0])


def unit_vector(rng: np.random.Generator, dim: int) -> Array:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def sample_scenario(rng: np.random.Generator, setup: Setup, epsilon: float, x_norm: Optional[float] = None):
    """``(x0, theta_true)``: ``x0`` uniform in the disk (or on the circle of
    radius ``x_norm``), ``theta_true`` on the sphere of radius ``epsilon``."""
    n = setup.model.state_dim
    direction = unit_vector(rng, n)
    radius_draw = rng.uniform()
    d = unit_vector(rng, setup.theta_hat.size)
    if x_norm is None:
        x0 = setup.x0_radius * radius_draw ** (1.0 / n) * direction
    else:
        x0 = x_norm * direction
    return x0, setup.theta_hat + epsilon * d


def sample_disk(setup: Setup, n: int, seed: int, radius: Optional[float] = None, boundary: int = 0) -> Array:
    """``n`` states uniform in the ball plus ``boundary`` states on its sphere."""
    rng = np.random.default_rng(seed)
    r = setup.x0_radius if radius is None else radius
    dim = setup.model.state_dim
    out = [r * rng.uniform() ** (1.0 / dim) * unit_vector(rng, dim) for _ in range(n)]
    out += [r * unit_vector(rng, dim) for _ in range(boundary)]
    return np.array(out)


def run_tasks(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Apply ``fn`` to every task; results come back in task order."""
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# closed loop


@dataclass
class ClosedLoopTrace:
    states: Array
    inputs: Array
    stage_costs: Array
    values: Array  # V_N(x_t; theta_hat) at each visited state where a solve happened
    theta_true: Array
    horizon: int
    terminated_early: bool
    failed: bool = False
    message: str = ""
    nonconverged: int = 0
    wall_time: float = 0.0

    @property
    def cost(self) -> float:
        return float(math.fsum(self.stage_costs))

    @property
    def final_norm(self) -> float:
        return float(np.linalg.norm(self.states[-1]))


def simulate_closed_loop(
    model: ParametricModel,
    cost: SeparableCost,
    constraint: InputConstraint,
    theta_true,
    theta_hat,
    N: int,
    x0,
    T: int = 500,
    stop_tol: float = 1e-6,
    method: str = "auto",
    warm_start: bool = True,
    final_value: bool = False,
) -> ClosedLoopTrace:
    """Apply the first input of ``P_MPC(theta_hat)`` to the ``theta_true`` plant.

    Stops early once ``||x_t|| <= stop_tol``. A solver exception ends the
    trace with ``failed = True``. With ``final_value`` the nominal value at
    the last state is appended to ``values`` as well.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    t0 = time.perf_counter()
    problem = OcpProblem(model, cost, constraint, N, theta_hat)
    theta_true = np.asarray(theta_true, dtype=float)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    xs, us, cs, vs = [x], [], [], []
    warm = None
    early = failed = False
    msg = ""
    nonconv = 0
    for _ in range(T):
        if np.linalg.norm(x) <= stop_tol:
            early = True
            break
        try:
            sol = solve(problem, x, method=method, u0=warm if method != "qp" else None)
        except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
            failed, msg = True, str(exc)
            break
        nonconv += not sol.converged
        u = sol.inputs[0]
        vs.append(sol.value)
        us.append(u)
        cs.append(cost.stage(x, u))
        if warm_start:
            warm = shift_warm_start(sol.inputs)
        x = np.asarray(model.dynamics(x, u, theta_true), dtype=float)
        if not np.all(np.isfinite(x)):
            failed, msg = True, "state diverged"
            xs.append(x)
            break
        xs.append(x)
    else:
        early = bool(np.linalg.norm(x) <= stop_tol)
    if final_value and not failed and len(vs) == len(xs) - 1:
        vs.append(solve(problem, x, method=method).value if np.linalg.norm(x) > 0 else 0.0)
    m = model.input_dim
    return ClosedLoopTrace(
        np.array(xs),
        np.array(us).reshape(-1, m),
        np.array(cs),
        np.array(vs),
        theta_true,
        N,
        early,
        failed,
        msg,
        nonconv,
        time.perf_counter() - t0,
    )


def resimulation_residual(trace: ClosedLoopTrace, model: ParametricModel) -> float:
    worst = 0.0
    for t, u in enumerate(trace.inputs):
        nxt = model.dynamics(trace.states[t], u, trace.theta_true)
        worst = max(worst, float(np.max(np.abs(nxt - trace.states[t + 1]))))
    return worst


def estimate_infinite_cost(trace: ClosedLoopTrace, k: int = 10) -> tuple[float, float]:
    """``(J_T, tail)``; the tail extrapolates the last ``k`` stage-cost ratios geometrically.

    The tail is never added to ``J_T``. It is 0 when the trace ends exactly
    at the origin and ``inf`` when the fitted ratio is ``>= 1``.
    """
    J = trace.cost
    c = np.asarray(trace.stage_costs, dtype=float)
    if trace.failed:
        return J, math.inf
    if not np.any(trace.states[-1]) or c.size == 0 or c[-1] == 0.0:
        return J, 0.0
    last = c[-(k + 1):]
    if last.size < 2 or np.any(last <= 0):
        return J, math.inf
    r = float(np.exp(np.mean(np.diff(np.log(last)))))
    if r >= 1.0:
        return J, math.inf
    return J, float(c[-1] * r / (1.0 - r))


@dataclass
class OracleValue:
    lower: float
    upper: float
    upper_tail: float
    N_long: int


def estimate_oracle_value(
    model, cost, constraint, theta_true, x, N_long: int = 60, T: int = 500, stop_tol: float = 1e-6, upper: bool = True, method: str = "auto"
) -> OracleValue:
    """Bracket the infinite-horizon optimal value with perfect model knowledge.

    ``lower = V_{N_long}(x; theta_true)``; ``upper`` is the closed-loop cost
    of the horizon-``N_long`` controller that knows ``theta_true``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.any(x):
        return OracleValue(0.0, 0.0, 0.0, N_long)
    lower = solve(OcpProblem(model, cost, constraint, N_long, theta_true), x, method=method).value
    if not upper:
        return OracleValue(lower, math.nan, math.nan, N_long)
    tr = simulate_closed_loop(model, cost, constraint, theta_true, theta_true, N_long, x, T, stop_tol, method)
    J, tail = estimate_infinite_cost(tr)
    if tr.failed or math.isinf(tail):
        raise OracleError("the long-horizon oracle controller did not stabilize the system")
    return OracleValue(lower, J, tail, N_long)


# ---------------------------------------------------------------------------
# descent certificates


@dataclass
class DescentCheck:
    steps: int
    decrease_violations: int
    next_value_violations: int
    worst_decrease_margin: float
    worst_next_value_margin: float


def check_nominal_descent(trace: ClosedLoopTrace, cost: SeparableCost, eps_N: float, gamma_N: float, rtol: float = 1e-9) -> DescentCheck:
    """Per-step checks of ``V(x+) - V(x) <= -(1 - eps_N) l(x, u)`` and
    ``V(x+) <= (gamma_N + eps_N) l(x, u)`` along a nominal trace."""
    n = min(len(trace.values) - 1, len(trace.inputs))
    dec = nxt = 0
    wd = wn = math.inf
    for t in range(n):
        V0, V1 = trace.values[t], trace.values[t + 1]
        ell = cost.stage(trace.states[t], trace.inputs[t])
        tol = rtol * (1.0 + abs(V0))
        m1 = -(1.0 - eps_N) * ell - (V1 - V0)
        m2 = (gamma_N + eps_N) * ell - V1
        wd, wn = min(wd, m1), min(wn, m2)
        dec += m1 < -tol
        nxt += m2 < -tol
    return DescentCheck(n, dec, nxt, wd, wn)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class EnvelopeFit:
    slope: float
    intercept: float
    max_residual: float
    relative_residual: float
    dominating_slope: float

    def passes(self, tol: float = 0.05) -> bool:
        return math.isfinite(self.slope) and self.relative_residual <= tol


def linear_envelope(axis, worst) -> EnvelopeFit:
    """Least-squares line through ``(axis, worst)`` and its worst residual
    relative to ``max(worst)``; ``dominating_slope`` is the smallest slope of
    a line through the origin lying above every point."""
    a = np.asarray(axis, dtype=float)
    w = np.asarray(worst, dtype=float)
    Amat = np.column_stack([a, np.ones_like(a)])
    (slope, icpt), *_ = np.linalg.lstsq(Amat, w, rcond=None)
    res = float(np.max(np.abs(w - (slope * a + icpt))))
    top = float(np.max(np.abs(w))) or 1.0
    pos = a > 0
    dom = float(np.max(w[pos] / a[pos])) if np.any(pos) else 0.0
    return EnvelopeFit(float(slope), float(icpt), res, res / top, dom)


@dataclass
class SweepResult:
    kind: str
    axis_name: str
    axis_values: list
    records: list
    aggregates: list
    seed: int
    n_scenarios: int
    failures: int = 0
    meta: dict = field(default_factory=dict)

    def best_axis_value(self, group=None, key: str = "mean"):
        """Axis value minimizing ``key`` within ``group`` (ties to the smaller value)."""
        rows = [r for r in self.aggregates if group is None or r["group"] == group]
        rows.sort(key=lambda r: (r[key], r["axis_value"]))
        return rows[0]["axis_value"]

    def worst_case(self, group=None) -> tuple[list, list]:
        rows = [r for r in self.aggregates if group is None or r["group"] == group]
        return [r["axis_value"] for r in rows], [r["max"] for r in rows]

    def records_csv(self, header: Sequence[str] = ()) -> str:
        return _to_csv(self.records, header)

    def aggregates_csv(self, header: Sequence[str] = ()) -> str:
        return _to_csv(self.aggregates, header)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _to_csv(rows: list, header: Sequence[str]) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    if rows:
        cols = list(rows[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def aggregate(records: list, overlay: Optional[Callable] = None) -> list:
    """Mean, variance, min and max of ``measured_value`` per ``(group, axis_value)``, skipping failures."""
    keys = []
    groups: dict = {}
    for r in records:
        k = (r["group"], r["axis_value"])
        if k not in groups:
            groups[k] = []
            keys.append(k)
        if not r["failed"]:
            groups[k].append(r["measured_value"])
    out = []
    for g, a in keys:
        vals = np.array(groups[g, a], dtype=float)
        row = {"group": g, "axis_value": a, "count": int(vals.size)}
        if vals.size:
            fin = vals[np.isfinite(vals)]
            row.update(
                mean=float(np.mean(vals)) if fin.size == vals.size else math.inf,
                var=float(np.var(vals)) if fin.size == vals.size else math.inf,
                min=float(np.min(vals)),
                max=float(np.max(vals)),
            )
        else:
            row.update(mean=math.nan, var=math.nan, min=math.nan, max=math.nan)
        row["theoretical_overlay"] = float(overlay(g, a)) if overlay is not None else math.nan
        out.append(row)
    return out


def _record(axis_value, group, sid, seed, x0, value, failed, **extra):
    r = {"group": group, "axis_value": axis_value, "scenario_id": sid, "theta_seed": seed}
    for i, xi in enumerate(x0):
        r[f"x0_{i}"] = float(xi)
    r["measured_value"] = float(value)
    r["failed"] = bool(failed)
    r.update(extra)
    return r


def _check_failures(records, n_total):
    fails = sum(r["failed"] for r in records)
    if n_total and fails / n_total > FAILURE_CAP:
        raise SweepInvalid(f"{fails} of {n_total} scenarios failed (cap {FAILURE_CAP:.0%})")
    return fails


def _input_gap(setup: Setup, N: int, x0, theta) -> tuple[float, bool]:
    a = solve(setup.problem(N), x0, method=setup.method)
    b = solve(setup.problem(N, theta), x0, method=setup.method)
    return float(np.linalg.norm(b.inputs - a.inputs)), not (a.converged and b.converged)


def sweep_input_perturbation(
    setup: Setup, eps_levels: Sequence[float], n_scenarios: int, N: int, seed: int, workers: int = 1, crn: bool = True
) -> SweepResult:
    """``||u*_N(theta) - u*_N(theta_hat)||`` (stacked sequence) for sampled
    ``theta`` on each sphere ``||theta - theta_hat|| = eps``.

    With ``crn`` (common random numbers) every level reuses the same
    directions and initial states, so level-to-level differences come from
    ``eps`` alone.
    """
    tasks = [(i, float(e), s) for i, e in enumerate(eps_levels) for s in range(n_scenarios)]

    def run(task):
        i, eps, s = task
        sd = scenario_seed(seed, 0 if crn else i, s)
        x0, th = sample_scenario(np.random.default_rng(sd), setup, eps)
        if eps == 0.0:
            return _record(eps, "", s, sd, x0, 0.0, False, epsilon=eps)
        try:
            gap, bad = _input_gap(setup, N, x0, th)
        except SolverError:
            gap, bad = math.nan, True
        return _record(eps, "", s, sd, x0, gap, bad, epsilon=eps)

    records = run_tasks(run, tasks, workers)
    fails = _check_failures(records, len(records))
    return SweepResult("input-perturb", "epsilon", [float(e) for e in eps_levels], records, aggregate(records), seed, n_scenarios, fails, {"N": N, "crn": crn})


def sweep_scalable_perturbation(
    setup: Setup,
    eps_levels: Sequence[float],
    x_norms: Sequence[float],
    n_scenarios: int,
    N: int,
    seed: int,
    workers: int = 1,
    crn: bool = True,
) -> SweepResult:
    """Input perturbation on an ``(eps, ||x0||)`` grid; the axis is the product ``eps * ||x0||``.

    ``group`` holds ``eps`` so that every grid cell aggregates separately.
    """
    cells = [(float(e), float(r)) for e in eps_levels for r in x_norms]
    tasks = [(c, eps, r, s) for c, (eps, r) in enumerate(cells) for s in range(n_scenarios)]

    def run(task):
        c, eps, r, s = task
        sd = scenario_seed(seed, 0 if crn else c, s)
        x0, th = sample_scenario(np.random.default_rng(sd), setup, eps, x_norm=r)
        if eps == 0.0 or r == 0.0:
            return _record(eps * r, eps, s, sd, x0, 0.0, False, epsilon=eps, x_norm=r)
        try:
            gap, bad = _input_gap(setup, N, x0, th)
        except SolverError:
            gap, bad = math.nan, True
        return _record(eps * r, eps, s, sd, x0, gap, bad, epsilon=eps, x_norm=r)

    records = run_tasks(run, tasks, workers)
    fails = _check_failures(records, len(records))
    axis = sorted({e * r for e, r in cells})
    return SweepResult("scalable", "epsilon*|x0|", axis, records, aggregate(records), seed, n_scenarios, fails, {"N": N, "crn": crn})


def sweep_competitive_ratio(
    setup: Setup,
    eps_levels: Sequence[float],
    n_scenarios: int,
    N: int,
    seed: int,
    N_long: int = 60,
    T: int = 500,
    stop_tol: float = 1e-6,
    theory: Optional[Callable[[float], float]] = None,
    workers: int = 1,
    crn: bool = True,
    oracle_upper: bool = False,
) -> SweepResult:
    """Closed-loop cost over the oracle lower proxy ``V_{N_long}(x0; theta_true)``.

    Unstable or failed scenarios are recorded with ratio ``inf`` and flagged.
    ``theory`` maps ``eps`` to the ratio bound for the overlay column.
    """
    tasks = [(i, float(e), s) for i, e in enumerate(eps_levels) for s in range(n_scenarios)]

    def run(task):
        i, eps, s = task
        sd = scenario_seed(seed, 0 if crn else i, s)
        x0, th = sample_scenario(np.random.default_rng(sd), setup, eps)
        tr = simulate_closed_loop(setup.model, setup.cost, setup.constraint, th, setup.theta_hat, N, x0, T, stop_tol, setup.method)
        J, tail = estimate_infinite_cost(tr)
        orc = estimate_oracle_value(setup.model, setup.cost, setup.constraint, th, x0, N_long, T, stop_tol, oracle_upper, setup.method)
        unstable = tr.failed or math.isinf(tail)
        ratio = math.inf if unstable else (J / orc.lower if orc.lower > 0 else 1.0)
        return _record(
            eps, "", s, sd, x0, ratio, tr.failed, epsilon=eps, J=J, tail=tail, oracle_lower=orc.lower,
            oracle_upper=orc.upper, unstable=unstable,
        )

    records = run_tasks(run, tasks, workers)
    fails = _check_failures(records, len(records))
    overlay = (lambda g, a: theory(a)) if theory is not None else None
    return SweepResult("ratio", "epsilon", [float(e) for e in eps_levels], records, aggregate(records, overlay), seed, n_scenarios, fails, {"N": N, "N_long": N_long})


def sweep_horizon(
    setup: Setup,
    eps_levels: Sequence[float],
    N_range: Sequence[int],
    n_scenarios: int,
    seed: int,
    T: int = 500,
    stop_tol: float = 1e-6,
    workers: int = 1,
    crn: bool = True,
) -> SweepResult:
    """Closed-loop cost ``J_T`` per ``(eps, N, scenario)``.

    Scenarios are shared across horizons, so horizons are compared on the
    same plants and initial states. ``group`` is ``eps``, the axis is ``N``.
    """
    Ns = sorted(set(int(n) for n in N_range))
    tasks = [(i, float(e), s, N) for i, e in enumerate(eps_levels) for s in range(n_scenarios) for N in Ns]

    def run(task):
        i, eps, s, N = task
        sd = scenario_seed(seed, 0 if crn else i, s)
        x0, th = sample_scenario(np.random.default_rng(sd), setup, eps)
        tr = simulate_closed_loop(setup.model, setup.cost, setup.constraint, th, setup.theta_hat, N, x0, T, stop_tol, setup.method)
        J, tail = estimate_infinite_cost(tr)
        return _record(N, eps, s, sd, x0, J, tr.failed, epsilon=eps, horizon=N, tail=tail, final_norm=tr.final_norm)

    records = run_tasks(run, tasks, workers)
    fails = _check_failures(records, len(records))
    res = SweepResult("horizon", "N", Ns, records, aggregate(records), seed, n_scenarios, fails, {"eps_levels": [float(e) for e in eps_levels]})
    res.meta["best_N"] = {float(e): res.best_axis_value(float(e)) for e in eps_levels}
    return res


# ---------------------------------------------------------------------------
# empirical constants


@dataclass
class EdsFit:
    C: float
    rho: float
    envelope: Array  # per-stage percentile of the sensitivity ratios
    pairs: int
    percentile: float


def fit_eds(
    setup: Setup,
    N: int,
    n_pairs: int = 64,
    seed: int = 0,
    step: float = 1e-3,
    percentile: float = 99.0,
    param_spec: Optional[ParameterSpec] = None,
    rho_cap: float = 0.999,
) -> EdsFit:
    """Fit ``||u_k(x') - u_k(x'')|| <= C rho^k ||x' - x''||`` on sampled pairs.

    ``rho`` comes from a least-squares fit of the log percentile envelope
    against ``k``; ``C`` is then raised until the envelope lies below
    ``C rho^k``. With ``param_spec`` the fit also covers parameter
    perturbations, ``||u_k(theta) - u_k(theta_hat)|| <= C Lambda_N(k) delta``.
    """
    from .bounds import lambda_factor

    rng = np.random.default_rng(seed)
    prob = setup.problem(N)
    xs = sample_disk(setup, n_pairs, seed)
    ratios = np.zeros((n_pairs, N))
    for j, x in enumerate(xs):
        d = unit_vector(rng, x.size) * step
        a = solve(prob, x, method=setup.method).inputs
        b = solve(prob, x + d, method=setup.method).inputs
        ratios[j] = np.linalg.norm(a - b, axis=1) / step
    env = np.percentile(ratios, percentile, axis=0)
    good = env > 1e-14
    if good.sum() >= 2:
        k = np.arange(N)[good]
        slope = np.polyfit(k, np.log(env[good]), 1)[0]
        rho = float(min(max(math.exp(slope), 0.0), rho_cap))
    else:
        rho = 0.0
    ks = np.arange(N)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(env > 0, env / np.power(rho, ks) if rho > 0 else np.where(ks == 0, env, np.inf), 0.0)
    C = float(np.max(scaled[np.isfinite(scaled)], initial=0.0))
    if rho == 0.0 and np.any(env[1:] > 1e-14):
        raise ValueError("sensitivity does not vanish after the first stage; cannot fit rho = 0")
    if param_spec is not None and param_spec.epsilon > 0:
        lam = np.array([lambda_factor(N, k, rho) for k in range(N)])
        for th in param_spec.sample_sphere(rng, n_pairs):
            x = xs[rng.integers(len(xs))]
            a = solve(prob, x, method=setup.method).inputs
            b = solve(setup.problem(N, th), x, method=setup.method).inputs
            gaps = np.linalg.norm(a - b, axis=1) / param_spec.delta(th)
            C = max(C, float(np.max(gaps / lam)))
    return EdsFit(max(C, 1e-12), rho, env, n_pairs, percentile)


def estimate_gamma(setup: Setup, N_max: int, states: Array) -> Array:
    """``gamma_hat_i = max_x V_i(x; theta_hat) / lx(x) - 1`` for ``i = 1..N_max`` (index 0 unused)."""
    out = np.zeros(N_max + 1)
    for x in states:
        lx = setup.cost.lx(x)
        if lx == 0.0:
            continue
        for i in range(1, N_max + 1):
            out[i] = max(out[i], solve(setup.problem(i), x, method=setup.method).value / lx - 1.0)
    return out


def estimate_eta_bar(setup: Setup, N: int, spec: ParameterSpec, radius: float, n: int = 64, seed: int = 0) -> tuple[float, int]:
    """``max ||u_k(x; theta_hat) - u_k(x; theta)|| / (delta ||x||)`` inside the ball of ``radius``.

    Returns ``(eta_bar, used_samples)``; pairs with ``delta = 0`` or ``x = 0``
    carry no information and are skipped.
    """
    if spec.epsilon == 0.0:
        return 0.0, 0
    rng = np.random.default_rng(seed)
    xs = sample_disk(setup, n, seed + 1, radius=radius)
    ths = spec.sample_sphere(rng, n)
    prob = setup.problem(N)
    best, used = 0.0, 0
    for x, th in zip(xs, ths):
        nx, d = float(np.linalg.norm(x)), spec.delta(th)
        if nx == 0.0 or d == 0.0:
            continue
        a = solve(prob, x, method=setup.method).inputs
        b = solve(setup.problem(N, th), x, method=setup.method).inputs
        best = max(best, float(np.max(np.linalg.norm(a - b, axis=1))) / (d * nx))
        used += 1
    return best, used


@dataclass
class EmpiricalConstants:
    C: float
    rho: float
    gamma: Array
    gamma_bar: float
    nu: float
    eta_bar: float
    L_d_slope: float
    budgets: dict

    def to_dict(self) -> dict:
        d = {
            "C_K": self.C,
            "rho_K": self.rho,
            "gamma_bar": self.gamma_bar,
            "nu": self.nu,
            "eta_bar": self.eta_bar,
            "L_d_slope": self.L_d_slope,
        }
        for i, g in enumerate(self.gamma):
            if i:
                d[f"gamma.{i}"] = float(g)
        d.update({f"budget.{k}": v for k, v in self.budgets.items()})
        return d


def estimate_empirical_constants(
    setup: Setup,
    N: int,
    N_max: int,
    epsilon: float,
    omega_radius: float,
    n_states: int = 48,
    n_pairs: int = 48,
    n_eta: int = 48,
    seed: int = 0,
    lipschitz_budget: int = 2048,
    extra_horizons: Sequence[int] = (),
) -> EmpiricalConstants:
    """Sampled estimates of every assumption-level constant for ``setup``.

    ``gamma_bar`` is the maximum over horizons ``1..N_max`` and any
    ``extra_horizons`` (useful when certifying horizons beyond ``N_max``).
    """
    from .model import fit_mismatch_lipschitz

    spec = setup.spec(epsilon)
    eds = fit_eds(setup, N, n_pairs, seed, param_spec=spec)
    states = sample_disk(setup, n_states, seed + 11, boundary=max(n_states // 4, 1))
    gam = estimate_gamma(setup, N_max, states)
    gam[1:] = np.maximum(gam[1:], 1e-12)
    gamma_bar = float(np.max(gam[1:]))
    for h in extra_horizons:
        gamma_bar = max(gamma_bar, max(solve(setup.problem(int(h)), x, method=setup.method).value / setup.cost.lx(x) - 1.0 for x in states if np.any(x)))
    nu = estimate_clf_constant(setup.cost, setup.model, setup.constraint, states, setup.theta_hat, method=setup.method)
    eta, used = estimate_eta_bar(setup, N, spec, omega_radius, n_eta, seed + 23)
    if setup.model.mismatch_lipschitz is not None:
        slope = setup.model.mismatch_lipschitz.slope
    else:
        slope = fit_mismatch_lipschitz(setup.model, spec, setup.constraint, budget=lipschitz_budget, seed=seed).slope
    return EmpiricalConstants(
        eds.C, eds.rho, gam, gamma_bar, float(nu), eta, float(slope),
        {"eds_pairs": n_pairs, "gamma_states": len(states), "eta_samples": used, "eds_percentile": eds.percentile,
         "gamma_horizon_max": max([N_max, *[int(h) for h in extra_horizons]])},
    )


def bound_inputs_for(
    setup: Setup,
    consts: EmpiricalConstants,
    variants=None,
    gamma_mode: str = "uniform",
    omega_radius: Optional[float] = None,
    lipschitz_eps: Optional[float] = None,
    r0_budget: int = 512,
    seed: int = 0,
):
    """Assemble :class:`~cempc.bounds.BoundInputs` from sampled constants.

    ``R(0; eps)`` is evaluated lazily by sampling the one-step deviation at
    the origin; results are cached per level.
    """
    from .bounds import BoundInputs, BoundVariants, EdsConstants
    from .model import max_one_step_deviation

    model = setup.model
    if model.lipschitz_x_uniform is None or model.lipschitz_u_uniform is None:
        raise ValueError(f"model {model.name!r} has no uniform Lipschitz constants")
    cache: dict = {}

    def R0(eps):
        if eps not in cache:
            x0 = np.zeros(model.state_dim)
            cache[eps] = 0.0 if eps == 0 else max_one_step_deviation(
                model, x0, setup.constraint, setup.spec(eps), budget=r0_budget, seed=seed
            )
        return cache[eps]

    slope = consts.L_d_slope
    gamma = None
    if gamma_mode == "per-horizon":
        g = consts.gamma

        def gamma(N):
            return float(g[N]) if 1 <= N < len(g) else consts.gamma_bar

    return BoundInputs(
        cost=setup.cost,
        eds=EdsConstants(consts.C, consts.rho, "fitted"),
        L_fx=model.lipschitz_x_uniform,
        L_fu=model.lipschitz_u_uniform,
        gamma_bar=consts.gamma_bar,
        nu=consts.nu,
        L_d=lambda d: slope * d,
        L_d_inverse=(lambda y: y / slope) if slope > 0 else (lambda y: math.inf),
        gamma=gamma,
        R0=R0,
        eta_bar=consts.eta_bar,
        omega_radius=omega_radius,
        variants=variants or BoundVariants(),
        lipschitz_eps=lipschitz_eps,
        meta={"L_d_slope": slope, **{f"budget.{k}": v for k, v in consts.budgets.items()}},
    )
