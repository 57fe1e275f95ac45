"""Largest certified mismatch of the tanh controller at long horizons, checked in closed loop.

Constants are sampled at each candidate horizon (with the cost-controllability
constant taken over long horizons as well); the uniform Lipschitz constants
are evaluated at ``--lipschitz-eps``, which must exceed every tested level.
"""
import numpy as np

import _common
from cempc.bounds import build_report
from cempc.experiments import bound_inputs_for, estimate_empirical_constants, sample_scenario, simulate_closed_loop, tanh_setup


def main():
    p = _common.parser(__doc__.splitlines()[0], 20)
    p.add_argument("--horizons", type=int, nargs="+", default=[100, 150, 200])
    p.add_argument("--fractions", type=float, nargs="+", default=[0.25, 0.5, 0.9, 0.99])
    p.add_argument("--lipschitz-eps", type=float, default=1e-2)
    p.add_argument("--T", type=int, default=500)
    args = p.parse_args()
    _common.setup_logging(args.verbose)
    out = _common.out_dir(args.out)
    s = tanh_setup()
    omega = 0.1 * s.x0_radius
    reports = {}
    for N in args.horizons:
        c = estimate_empirical_constants(s, N, 25, 1e-3, omega, n_states=32, n_pairs=32, n_eta=16, seed=args.seed,
                                         extra_horizons=(50, 100, 200, 300))
        rep = build_report(bound_inputs_for(s, c, omega_radius=omega, lipschitz_eps=args.lipschitz_eps), N, 0.0)
        reports[N] = rep
        print(f"N = {N}: eps_N {rep.epsilon_N:.4f}, max mismatch {rep.max_mismatch:.4e}")
    N = max(reports, key=lambda n: reports[n].max_mismatch)
    d_max = reports[N].max_mismatch
    if d_max <= 0:
        raise SystemExit("no candidate horizon is certified")
    lines = ["fraction,epsilon,scenario,steps,final_norm,failed"]
    for i, f in enumerate(args.fractions):
        eps = f * d_max
        rng = np.random.default_rng([args.seed, i])
        finals = []
        for k in range(args.scenarios):
            x0, th = sample_scenario(rng, s, eps)
            tr = simulate_closed_loop(s.model, s.cost, s.constraint, th, s.theta_hat, N, x0, T=args.T)
            finals.append(tr.final_norm)
            lines.append(f"{f!r},{eps!r},{k},{len(tr.inputs)},{tr.final_norm!r},{int(tr.failed)}")
        print(f"N = {N}, eps = {eps:.4e} ({f:g} of max): max ||x_T|| {max(finals):.2e}")
    path = out / "stability_frontier.csv"
    path.write_text("\n".join([f"# seed={args.seed}", f"# N={N}", f"# max_mismatch={d_max!r}"] + lines) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
