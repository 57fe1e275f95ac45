"""Certified ratio bound over the horizon for the LQ reference system at several mismatch levels."""
import math

import _common
from cempc import cli
from cempc.bounds import horizon_table
from cempc.config import lq_default


def main():
    p = _common.parser(__doc__, 1)
    p.add_argument("--eps", type=float, nargs="+", default=[1e-4, 1e-3, 5e-3, 1e-2])
    p.add_argument("--horizons", type=int, nargs=2, default=[2, 10], metavar=("LO", "HI"))
    args = p.parse_args()
    _common.setup_logging(args.verbose)
    out = _common.out_dir(args.out)
    cfg = lq_default()
    rows = []
    for eps in args.eps:
        table = horizon_table(cli.prepare(cfg, epsilon=eps).inputs(), eps, range(args.horizons[0], args.horizons[1] + 1))
        finite = [r for r in table if math.isfinite(r[5])]
        best = min(finite, key=lambda r: r[5]) if finite else None
        print(f"eps = {eps:g}: " + (f"N* = {best[0]}, R = {best[5]:.6f}" if best else "no certified horizon"))
        rows += [[eps, *r] for r in table]
    path = out / "optimal_horizon_lq.csv"
    cli._write_rows(path, [f"seed={args.seed}"], ["epsilon", "N", "eps_N", "alpha", "beta_star", "margin", "R_N"], rows)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
