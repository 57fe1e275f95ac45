"""Empirical competitive ratio of the constrained LQ controller against the certified bound.

The bound at each level comes from the sampled constants at that level;
the oracle is bracketed by a long-horizon controller that knows the true
parameters.
"""
import dataclasses
import math

import _common
from cempc import cli
from cempc.bounds import build_report
from cempc.config import lq_default
from cempc.experiments import sweep_competitive_ratio


def main():
    p = _common.parser(__doc__.splitlines()[0], 50)
    p.add_argument("--eps", type=float, nargs="+", default=[0.0, 5e-4, 1e-3, 2e-3, 5e-3])
    p.add_argument("--N-long", type=int, default=40)
    args = p.parse_args()
    _common.setup_logging(args.verbose)
    out = _common.out_dir(args.out)
    cfg = lq_default()
    cfg = dataclasses.replace(cfg, seed=args.seed)
    bound = {}
    for eps in args.eps:
        pipe = cli.prepare(cfg, epsilon=eps)
        bound[eps] = build_report(pipe.inputs(), cfg.horizon, eps).ratio
    res = sweep_competitive_ratio(pipe.setup, args.eps, args.scenarios, cfg.horizon, args.seed, N_long=args.N_long,
                                  theory=lambda e: bound[e], workers=args.workers, oracle_upper=True)
    for row in res.aggregates:
        eps = row["axis_value"]
        upper = max(r["J"] / r["oracle_upper"] for r in res.records if r["axis_value"] == eps and r["oracle_upper"] > 0) \
            if eps > 0 else 1.0
        print(f"eps = {eps:g}: J/V_lower max {row['max']:.6f}, J/V_upper max {upper:.6f}, bound {bound[eps]:.6f}"
              + ("" if math.isfinite(bound[eps]) else " (not certified)"))
    _common.write_sweep(res, out, "ratio", [f"seed={args.seed}", f"N={cfg.horizon}"], "epsilon", "J / V_oracle")


if __name__ == "__main__":
    main()
