"""Predicted two-point function vs the free one, with nu0 tuned to criticality.

    python3 scripts/sticking_experiment.py --n 0 1 2 --N 30
"""
import argparse

import numpy as np

from lrlab.flow import FlowParams, HeatKernelCoefficients, predict_two_point, tune_critical_nu
from lrlab.lattice import LatticeSpec, fit_power_law


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--N", type=int, default=30)
    ap.add_argument("--alpha", type=float, default=0.55)
    ap.add_argument("--m2", type=float, default=1e-12)
    ap.add_argument("--rmax", type=int, default=1024)
    args = ap.parse_args()

    co = HeatKernelCoefficients(LatticeSpec(1, 2, args.N, args.alpha), args.m2)
    radii = [r for r in (2 ** k for k in range(1, 31)) if r <= args.rmax]
    print(f"d=1 alpha={args.alpha} N={args.N} m2={args.m2:g}")
    for n in args.n:
        sb = co.s_bar(n)
        nu0 = tune_critical_nu(co, n, sb)
        G = []
        print(f"\nn={n}  s_bar={sb:.6g}  nu0c={nu0:.10g}")
        print(f"{'r':>6} {'G_pred':>14} {'C_free':>14} {'ratio':>8}")
        for r in radii:
            g, _ = predict_two_point(FlowParams(n, co.spec, co.m2, (0,), (r,), sb, nu0), co, nu0)
            c = co.free_two_point((r,))
            G.append(g)
            print(f"{r:>6} {g:>14.8g} {c:>14.8g} {g / c:>8.5f}")
        big = [i for i, r in enumerate(radii) if r >= 16]
        fit = fit_power_law(np.array(radii)[big], np.array(G)[big])
        print(f"slope over r >= 16: {fit.slope:.5f}  (free value {args.alpha - 1:.2f})")


if __name__ == "__main__":
    main()
