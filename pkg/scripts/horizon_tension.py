"""Closed-loop cost of the tanh controller against the horizon at two mismatch levels."""
import _common
from cempc.experiments import sweep_horizon, tanh_setup


def main():
    p = _common.parser(__doc__, 100)
    p.add_argument("--eps", type=float, nargs="+", default=[1e-3, 1e-2])
    p.add_argument("--horizons", type=int, nargs=2, default=[10, 25], metavar=("LO", "HI"))
    p.add_argument("--T", type=int, default=500)
    args = p.parse_args()
    _common.setup_logging(args.verbose)
    out = _common.out_dir(args.out)
    res = sweep_horizon(tanh_setup(), args.eps, range(args.horizons[0], args.horizons[1] + 1), args.scenarios, args.seed,
                        T=args.T, workers=args.workers)
    for eps, n in res.meta["best_N"].items():
        print(f"eps = {eps:g}: lowest mean closed-loop cost at N = {n}")
    _common.write_sweep(res, out, "horizon", [f"seed={args.seed}"], "N", "closed-loop cost")


if __name__ == "__main__":
    main()
