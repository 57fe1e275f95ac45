"""Command-line entry point: ``cempc <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 stability condition
violated, 4 solver failure budget exceeded.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as cfgmod
from .bounds import BoundError, EdsConstants, StabilityError, build_report, horizon_table, lq_specialize
from .config import ConfigError, RunConfig
from .cost import quadratic_cost
from .experiments import (
    EmpiricalConstants,
    Setup,
    SweepInvalid,
    bound_inputs_for,
    estimate_empirical_constants,
    simulate_closed_loop,
    sweep_competitive_ratio,
    sweep_horizon,
    sweep_input_perturbation,
    sweep_scalable_perturbation,
    unit_vector,
)
from .model import InputConstraint, linear_model, tanh_model, TANH_THETA_HAT
from .ocp import SolverError, solve

log = logging.getLogger("cempc")

EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_SOLVER = 0, 2, 3, 4
SWEEP_KINDS = ("input-perturb", "scalable", "ratio", "horizon")
PRESETS = {"tanh": RunConfig, "lq": cfgmod.lq_default}

FIELD_DOCS = {
    "model.kind": "tanh (two-state neural model) or linear (A, B below)",
    "model.theta_hat": "nominal parameters for the tanh model; null uses [0.85, 0.995, 0.01]",
    "model.A": "nominal state matrix of the linear model; its entries and B's form theta",
    "model.B": "nominal input matrix of the linear model",
    "cost.Q": "state weight (null: identity)",
    "cost.R": "input weight (null: identity)",
    "constraint.kind": "box (lo/hi) or polytope (E u <= 1)",
    "epsilon": "mismatch level ||theta - theta_hat||",
    "horizon": "prediction horizon N",
    "horizon_range": "[lo, hi] horizons for optimal-horizon and the horizon sweep",
    "x0_radius": "initial states are drawn uniformly from this disk",
    "solver.method": "auto (QP for linear-quadratic, projected gradient otherwise), pg or qp",
    "estimation.N_max": "largest horizon used when sampling gamma_i",
    "estimation.omega_radius": "radius of the local ball; null: r_LQ (linear) or 0.1 * x0_radius",
    "estimation.gamma_mode": "uniform (gamma_N = gamma_bar) or per-horizon (sampled gamma_N)",
    "estimation.lipschitz_eps": "mismatch level for the uniform Lipschitz constants; null: epsilon",
    "constants": "optional overrides for the sampled constants",
    "sweep.eps_levels": "mismatch levels of the sweeps",
    "sweep.x_norms": "initial-state norms of the scalable sweep",
    "sweep.n_scenarios": "scenarios per axis value",
    "sweep.N_long": "horizon of the oracle controller",
    "sweep.T": "closed-loop simulation length",
    "sweep.stop_tol": "stop a closed loop once ||x|| falls below this",
    "sweep.workers": "threads; results do not depend on this",
    "sweep.crn": "reuse initial states and directions across levels",
    "variants": "printed or corrected form of the three ambiguous coefficients",
    "seed": "master seed; every scenario derives its own seed from it",
    "output_dir": "where result files go",
}


# ---------------------------------------------------------------------------
# config -> objects


def build_setup(cfg: RunConfig) -> Setup:
    n, m = cfgmod.dimensions(cfg)
    Q = np.eye(n) if cfg.cost.Q is None else np.asarray(cfg.cost.Q, dtype=float)
    R = np.eye(m) if cfg.cost.R is None else np.asarray(cfg.cost.R, dtype=float)
    try:
        cost = quadratic_cost(Q, R)
    except ValueError as exc:
        raise ConfigError(f"cost.Q: {exc}") from exc
    c = cfg.constraint
    if c.kind == "box":
        con = InputConstraint.box(np.asarray(c.lo, dtype=float), np.asarray(c.hi, dtype=float))
    else:
        con = InputConstraint.polytope(np.asarray(c.E, dtype=float))
    if cfg.model.kind == "tanh":
        model = tanh_model()
        th = TANH_THETA_HAT if cfg.model.theta_hat is None else np.asarray(cfg.model.theta_hat, dtype=float)
    else:
        model, th = linear_model(np.asarray(cfg.model.A, dtype=float), np.asarray(cfg.model.B, dtype=float))
    return Setup(model, cost, con, np.asarray(th, dtype=float), cfg.x0_radius, cfg.solver.method)


@dataclasses.dataclass
class Pipeline:
    cfg: RunConfig
    setup: Setup
    constants: EmpiricalConstants
    lq: Optional[object]
    omega_radius: float

    def inputs(self):
        est = self.cfg.estimation
        return bound_inputs_for(
            self.setup,
            self.constants,
            self.cfg.variants.to_variants(),
            est.gamma_mode,
            self.omega_radius,
            est.lipschitz_eps,
            est.r0_budget,
            self.cfg.seed,
        )

    def constants_doc(self) -> dict:
        d = self.constants.to_dict()
        d["omega_radius"] = self.omega_radius
        if self.lq is not None:
            d.update({f"lq.{k}": v for k, v in self.lq.to_dict().items()})
        return d


def prepare(cfg: RunConfig, epsilon: Optional[float] = None) -> Pipeline:
    """Sample every constant the bounds need for ``cfg`` at mismatch ``epsilon``."""
    setup = build_setup(cfg)
    eps = cfg.epsilon if epsilon is None else epsilon
    est = cfg.estimation
    omega = est.omega_radius if est.omega_radius is not None else 0.1 * cfg.x0_radius
    consts = estimate_empirical_constants(
        setup,
        cfg.horizon,
        est.N_max,
        eps,
        omega,
        n_states=est.gamma_states,
        n_pairs=est.eds_pairs,
        n_eta=est.eta_samples,
        seed=cfg.seed,
        lipschitz_budget=est.lipschitz_budget,
    )
    ov = cfg.constants
    for name, attr in (("C_K", "C"), ("rho_K", "rho"), ("gamma_bar", "gamma_bar"), ("nu", "nu"), ("eta_bar", "eta_bar")):
        if getattr(ov, name) is not None:
            setattr(consts, attr, float(getattr(ov, name)))
    lq = None
    if cfg.model.kind == "linear":
        eds = EdsConstants(consts.C, consts.rho, "fitted")
        lq = lq_specialize(setup.model, setup.cost, setup.constraint, cfg.horizon, setup.spec(eps), eds, est.lq_thetas, cfg.seed)
        if est.omega_radius is None:
            omega = lq.r_LQ
        if ov.eta_bar is None:
            consts.eta_bar = lq.eta_bar
    return Pipeline(cfg, setup, consts, lq, omega)


# ---------------------------------------------------------------------------
# output helpers


def _header(cfg: RunConfig, command: str) -> list:
    return [f"cempc {command}", f"config_hash={cfgmod.config_hash(cfg)}", f"seed={cfg.seed}"]


def _out_dir(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, cfg: RunConfig, command: str, doc: dict) -> None:
    full = {"command": command, "config_hash": cfgmod.config_hash(cfg), "seed": cfg.seed}
    full.update({k: _plain(v) for k, v in doc.items()})
    path.write_text(json.dumps(full, indent=2, sort_keys=False) + "\n")


def _plain(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _write_rows(path: Path, header: list, cols: list, rows: list) -> None:
    lines = [f"# {h}" for h in header] + [",".join(cols)]
    for r in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r))
    path.write_text("\n".join(lines) + "\n")


PLOT_TEMPLATE = '''"""Plot {csv}. Run with: python {script}"""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv}"
with open(path) as fh:
    rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
groups = {{}}
for r in rows:
    groups.setdefault(r.get("group", ""), []).append(r)
fig, ax = plt.subplots()
for g, rs in groups.items():
    x = [float(r["{x}"]) for r in rs]
    label = f"group {{g}}" if g else ""
{body}
ax.set_xlabel("{xlabel}")
ax.set_ylabel("{ylabel}")
if any(groups):
    ax.legend(fontsize="small")
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''

AGG_BODY = '''    mean = [float(r["mean"]) for r in rs]
    ax.plot(x, [float(r["max"]) for r in rs], "o-", label=label + " max")
    ax.plot(x, mean, "s--", label=label + " mean")
    ax.fill_between(x, [float(r["min"]) for r in rs], [float(r["max"]) for r in rs], alpha=0.2)
    theory = [float(r["theoretical_overlay"]) for r in rs]
    if any(t == t for t in theory):
        ax.plot(x, theory, "k:", label=label + " bound")'''

SERIES_BODY = '''    ax.plot(x, [float(r["{y}"]) for r in rs], "o-", label=label)'''


def write_plot_script(csv_path: Path, x: str, xlabel: str, ylabel: str, y: Optional[str] = None) -> Path:
    script = csv_path.with_name("plot_" + csv_path.stem + ".py")
    body = AGG_BODY if y is None else SERIES_BODY.format(y=y)
    script.write_text(PLOT_TEMPLATE.format(csv=csv_path.name, script=script.name, x=x, body=body, xlabel=xlabel, ylabel=ylabel))
    return script


def _parse_x0(text: Optional[str], n: int) -> np.ndarray:
    if text is None:
        raise ConfigError(f"--x0: an initial state with {n} entries is required")
    try:
        x = np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"--x0: {exc}") from exc
    if x.size != n:
        raise ConfigError(f"--x0: expected {n} entries, got {x.size}")
    return x


def _parse_horizon(text: str, cfg: dict) -> None:
    try:
        if ".." in text:
            a, b = (int(t) for t in text.split(".."))
            cfg["horizon_range"] = [a, b]
        else:
            cfg["horizon"] = int(text)
    except ValueError as exc:
        raise ConfigError(f"--horizon: expected n or a..b, got {text!r}") from exc


def load_config(args) -> RunConfig:
    """Config file (or preset) with command-line overrides applied, then validated."""
    if args.config:
        base = cfgmod.load(args.config)
    else:
        base = PRESETS[args.preset]()
    d = cfgmod.to_dict(base)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["output_dir"] = args.out
    if args.epsilon is not None:
        d["epsilon"] = args.epsilon
    if args.horizon is not None:
        _parse_horizon(args.horizon, d)
    for item in args.variant or []:
        name, _, val = item.partition("=")
        if name not in d["variants"]:
            raise ConfigError(f"variants.{name}: unknown toggle")
        d["variants"][name] = val
    return cfgmod.from_dict(d)


# ---------------------------------------------------------------------------
# commands


def cmd_bounds(cfg: RunConfig, args) -> int:
    pipe = prepare(cfg)
    rep = build_report(pipe.inputs(), cfg.horizon, cfg.epsilon)
    doc = rep.to_dict()
    doc.update({f"constants.{k}": v for k, v in pipe.constants_doc().items()})
    path = _out_dir(cfg) / "bounds.json"
    _write_json(path, cfg, "bounds", doc)
    print(f"N={rep.N} eps={rep.epsilon:g} eps_N={rep.epsilon_N:.6g} alpha*={rep.alpha_eps:.6g} "
          f"margin={rep.stability_margin:.6g} ratio={rep.ratio:.6g} class={rep.asymptotic.name}")
    print(f"wrote {path}")
    return EXIT_OK if rep.stable else EXIT_UNSTABLE


def cmd_solve(cfg: RunConfig, args) -> int:
    setup = build_setup(cfg)
    x0 = _parse_x0(args.x0, setup.model.state_dim)
    sol = solve(setup.problem(cfg.horizon), x0, method=cfg.solver.method, tol=cfg.solver.tol, max_iters=cfg.solver.max_iters)
    n, m = setup.model.state_dim, setup.model.input_dim
    cols = ["k"] + [f"u_{j}" for j in range(m)] + [f"x_{i}" for i in range(n)]
    rows = []
    for k in range(cfg.horizon + 1):
        u = sol.inputs[k] if k < cfg.horizon else [float("nan")] * m
        rows.append([k, *map(float, u), *map(float, sol.states[k])])
    out = _out_dir(cfg)
    _write_rows(out / "solve.csv", _header(cfg, "solve") + [f"value={sol.value!r}", f"converged={int(sol.converged)}"], cols, rows)
    print(f"V_N={sol.value:.10g} iterations={sol.iterations} converged={sol.converged}")
    print(f"wrote {out / 'solve.csv'}")
    return EXIT_OK if sol.converged else EXIT_SOLVER


def cmd_simulate(cfg: RunConfig, args) -> int:
    setup = build_setup(cfg)
    x0 = _parse_x0(args.x0, setup.model.state_dim)
    d = unit_vector(np.random.default_rng(cfg.seed), setup.theta_hat.size)
    theta = setup.theta_hat + cfg.epsilon * d
    tr = simulate_closed_loop(setup.model, setup.cost, setup.constraint, theta, setup.theta_hat, cfg.horizon, x0,
                              cfg.sweep.T, cfg.sweep.stop_tol, cfg.solver.method)
    n, m = setup.model.state_dim, setup.model.input_dim
    cols = ["t"] + [f"x_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)] + ["stage_cost", "value"]
    rows = []
    for t, x in enumerate(tr.states):
        if t < len(tr.inputs):
            rows.append([t, *map(float, x), *map(float, tr.inputs[t]), float(tr.stage_costs[t]), float(tr.values[t])])
        else:
            rows.append([t, *map(float, x), *([float("nan")] * m), float("nan"), float("nan")])
    head = _header(cfg, "simulate") + ["theta_true=" + ",".join(repr(float(v)) for v in theta),
                                       f"J={tr.cost!r}", f"terminated_early={int(tr.terminated_early)}", f"failed={int(tr.failed)}"]
    out = _out_dir(cfg)
    _write_rows(out / "trace.csv", head, cols, rows)
    write_plot_script(out / "trace.csv", "t", "t", "x_0", y="x_0")
    print(f"J={tr.cost:.10g} steps={len(tr.inputs)} final_norm={tr.final_norm:.3g} failed={tr.failed}")
    return EXIT_SOLVER if tr.failed else EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    setup = build_setup(cfg)
    s = cfg.sweep
    status = EXIT_OK
    if args.kind == "input-perturb":
        res = sweep_input_perturbation(setup, s.eps_levels, s.n_scenarios, cfg.horizon, cfg.seed, s.workers, s.crn)
        xlabel, ylabel = "epsilon", "||u*(theta) - u*(theta_hat)||"
    elif args.kind == "scalable":
        res = sweep_scalable_perturbation(setup, s.eps_levels, s.x_norms, s.n_scenarios, cfg.horizon, cfg.seed, s.workers, s.crn)
        xlabel, ylabel = "epsilon * ||x0||", "||u*(theta) - u*(theta_hat)||"
    elif args.kind == "ratio":
        pipe = prepare(cfg, max(s.eps_levels))
        inputs = pipe.inputs()
        theory = {float(e): build_report(inputs, cfg.horizon, float(e)).ratio for e in s.eps_levels}
        if any(math.isinf(v) for v in theory.values()):
            log.warning("the stability condition fails at some levels; their overlay is inf")
            status = EXIT_UNSTABLE
        res = sweep_competitive_ratio(setup, s.eps_levels, s.n_scenarios, cfg.horizon, cfg.seed, s.N_long, s.T, s.stop_tol,
                                      theory=lambda e: theory[float(e)], workers=s.workers, crn=s.crn)
        xlabel, ylabel = "epsilon", "J / V_long"
    else:
        lo, hi = cfg.horizon_range
        res = sweep_horizon(setup, s.eps_levels, range(lo, hi + 1), s.n_scenarios, cfg.seed, s.T, s.stop_tol, s.workers, s.crn)
        xlabel, ylabel = "N", "closed-loop cost"
        for e, N in res.meta["best_N"].items():
            print(f"eps={e:g}: best N = {N}")
    out = _out_dir(cfg)
    head = _header(cfg, f"sweep {args.kind}") + [f"n_scenarios={res.n_scenarios}", f"failures={res.failures}"]
    stem = "sweep_" + args.kind.replace("-", "_")
    (out / f"{stem}.csv").write_text(res.records_csv(head))
    (out / f"{stem}_aggregates.csv").write_text(res.aggregates_csv(head))
    write_plot_script(out / f"{stem}_aggregates.csv", "axis_value", xlabel, ylabel)
    print(f"{len(res.records)} records, {res.failures} failures; wrote {out / stem}*.csv")
    return status


def cmd_optimal_horizon(cfg: RunConfig, args) -> int:
    pipe = prepare(cfg)
    lo, hi = cfg.horizon_range
    table = horizon_table(pipe.inputs(), cfg.epsilon, range(lo, hi + 1))
    finite = [r for r in table if math.isfinite(r[5])]
    out = _out_dir(cfg)
    head = _header(cfg, "optimal-horizon") + [f"epsilon={cfg.epsilon!r}"]
    best = min(finite, key=lambda r: (r[5], r[0])) if finite else None
    head.append(f"N_star={best[0] if best else 'none'}")
    rows = [[r[0], r[1], r[2], math.nan if r[3] is None else r[3], r[4], r[5]] for r in table]
    _write_rows(out / "optimal_horizon.csv", head, ["N", "epsilon_N", "alpha_star", "beta_star", "margin", "R_N"], rows)
    write_plot_script(out / "optimal_horizon.csv", "N", "N", "R_N", y="R_N")
    if best is None:
        print("no horizon in range satisfies the stability condition")
        return EXIT_UNSTABLE
    print(f"N*={best[0]} R={best[5]:.6g}")
    return EXIT_OK


def cmd_constants(cfg: RunConfig, args) -> int:
    pipe = prepare(cfg)
    path = _out_dir(cfg) / "constants.json"
    _write_json(path, cfg, "constants", pipe.constants_doc())
    c = pipe.constants
    print(f"C_K={c.C:.6g} rho_K={c.rho:.6g} gamma_bar={c.gamma_bar:.6g} nu={c.nu:.6g} eta_bar={c.eta_bar:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def config_reference(cfg: Optional[RunConfig] = None) -> str:
    """Default configuration as YAML with one comment per documented field."""
    cfg = RunConfig() if cfg is None else cfg
    lines = ["# cempc configuration reference (all values are the defaults)"]
    for line in cfgmod.dump(cfg).splitlines():
        key = line.strip().split(":")[0]
        indent = len(line) - len(line.lstrip())
        # nested keys: find the parent by tracking the last top-level key
        if indent == 0:
            parent = key
            doc = FIELD_DOCS.get(key)
        else:
            doc = FIELD_DOCS.get(f"{parent}.{key}")
        if doc and not line.lstrip().startswith("-"):
            lines.append(" " * indent + f"# {doc}")
        lines.append(line)
    return "\n".join(lines) + "\n"


def cmd_config_reference(cfg: RunConfig, args) -> int:
    sys.stdout.write(config_reference(cfg))
    return EXIT_OK


COMMANDS = {
    "bounds": cmd_bounds,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "optimal-horizon": cmd_optimal_horizon,
    "constants": cmd_constants,
    "config-reference": cmd_config_reference,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--preset", choices=sorted(PRESETS), default="tanh", help="built-in configuration when --config is absent")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--x0", help="initial state, comma separated")
    common.add_argument("--horizon", help="N, or a..b for a horizon range")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--variant", action="append", metavar="NAME=printed|corrected",
                        help="pi_alpha1, zeta_beta1 or beta_star_pi2; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="cempc", description="Certainty-equivalence MPC bounds and experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "sweep":
            sp.add_argument("kind", choices=SWEEP_KINDS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StabilityError,) as exc:
        print(f"stability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (SweepInvalid, SolverError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
