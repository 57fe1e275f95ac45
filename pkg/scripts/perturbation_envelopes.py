"""Worst-case input perturbation of the tanh controller.

Two sweeps at horizon 10 with U = [-0.05, 0.05]: the stacked input gap
against the mismatch level, and the same gap on a grid of mismatch levels
and initial-state norms. Prints the linear envelope fits.
"""
import math

import numpy as np

import _common
from cempc.experiments import linear_envelope, sweep_input_perturbation, sweep_scalable_perturbation, tanh_setup

EPS = [i * 1e-3 for i in range(1, 11)]
NORMS = [0.25, 0.5, 0.75, 1.0, 1.25, math.sqrt(2.0)]


def main():
    p = _common.parser(__doc__.splitlines()[0], 100)
    p.add_argument("--horizon", type=int, default=10)
    args = p.parse_args()
    _common.setup_logging(args.verbose)
    out = _common.out_dir(args.out)
    s = tanh_setup()
    header = [f"seed={args.seed}", f"N={args.horizon}"]

    inp = sweep_input_perturbation(s, EPS, args.scenarios, args.horizon, args.seed, args.workers)
    fit = linear_envelope(*inp.worst_case())
    print(f"input sweep: worst = {fit.slope:.4f} eps + {fit.intercept:.2e}, residual {100 * fit.relative_residual:.2f}% of max")
    _common.write_sweep(inp, out, "input_perturb", header, "epsilon", "||u(theta) - u(theta_hat)||")

    sc = sweep_scalable_perturbation(s, EPS, NORMS, args.scenarios, args.horizon, args.seed, args.workers)
    worst = {}
    for r in sc.records:
        if not r["failed"]:
            k = (r["epsilon"], r["x_norm"])
            worst[k] = max(worst.get(k, 0.0), r["measured_value"])
    pooled = linear_envelope([e * r for e, r in worst], list(worst.values()))
    print(f"scalable sweep: dominating slope {pooled.dominating_slope:.3f}, single-line residual {100 * pooled.relative_residual:.1f}%")
    for r in NORMS:
        row = np.array([worst[(e, r)] for e in EPS])
        f = linear_envelope(np.array(EPS) * r, row)
        print(f"  ||x0|| = {r:.3f}: slope {f.slope:.3f}, residual {100 * f.relative_residual:.2f}%")
    _common.write_sweep(sc, out, "scalable", header, "epsilon * ||x0||", "||u(theta) - u(theta_hat)||")


if __name__ == "__main__":
    main()
