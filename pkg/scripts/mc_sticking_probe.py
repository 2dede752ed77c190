"""Monte Carlo check of the weakly self-avoiding walk two-point function.

Jump chains with the holding times integrated out; nu is tuned so the
estimated susceptibility hits --chi, then G(0, r) is fitted to a power law.

    python3 scripts/mc_sticking_probe.py --chi 500 1000 2000 --samples 4000
"""
import argparse
import time

from lrlab import wsaw
from lrlab.flow import HeatKernelCoefficients
from lrlab.lattice import LatticeSpec, fit_power_law, resolvent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--chi", type=float, nargs="+", default=[2000.0])
    ap.add_argument("--samples", type=int, default=16_000)
    ap.add_argument("--N", type=int, default=20)
    ap.add_argument("--alpha", type=float, default=0.55)
    ap.add_argument("--g", type=float, default=None, help="default: s_bar at n = 0")
    ap.add_argument("--kfactor", type=float, default=8.0, help="k_max = kfactor * chi * K(0,0)")
    ap.add_argument("--seed", type=int, default=12)
    args = ap.parse_args()

    spec = LatticeSpec(1, 2, args.N, args.alpha)
    g = args.g if args.g is not None else HeatKernelCoefficients(LatticeSpec(1, 2, 40, args.alpha), 0.0).s_bar(0)
    radii = [4, 8, 16, 32, 64]
    K = wsaw.jump_kernel(spec).rate
    print(f"d=1 alpha={args.alpha} N={args.N} g={g:.6g} K(0,0)={K:.6g} samples={args.samples}")
    for chi in args.chi:
        t0 = time.time()
        S = wsaw.draw_chains(spec, g, args.samples, int(args.kfactor * chi * K), radii=radii, seed=args.seed)
        nu = wsaw.tune_nu_by_susceptibility(S, chi)
        G = S.two_point(nu, radii)
        fit = fit_power_law(radii, [e.mean for e in G])
        gauss = fit_power_law(radii, resolvent(spec, 1 / chi).axis(radii))
        print(f"\nchi*={chi:g}  nu={nu:.6g}  ess={S.effective_size(nu):.0f}  "
              f"truncation={S.truncation(nu):.2g}  ({time.time() - t0:.0f}s)")
        for r, e in zip(radii, G):
            print(f"  r={r:>3}  G={e.mean:.6g} +- {e.stderr:.2g}")
        print(f"  slope {fit.slope:.4f}   Gaussian with m2=1/chi*: {gauss.slope:.4f}   target {args.alpha - 1:.2f}")


if __name__ == "__main__":
    main()
