"""Effective susceptibility exponent from the linearised nu flow, against 1 + (n+2)/(n+8) eps/alpha."""
import argparse

from lrlab.flow import HeatKernelCoefficients, gamma_target, nu_eigenvalue_and_gamma
from lrlab.lattice import LatticeSpec

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, nargs="+", default=[0, 1, 2, 3, 4])
ap.add_argument("--eps", type=float, nargs="+", default=[0.05, 0.1, 0.15])
ap.add_argument("--N", type=int, default=40)
args = ap.parse_args()

print(f"{'eps':>5} {'n':>3} {'gamma_eff':>10} {'target':>10} {'diff':>9} {'5eps^2+.02':>10}")
for eps in args.eps:
    alpha = (1 + eps) / 2          # d = 1, eps = 2 alpha - d
    co = HeatKernelCoefficients(LatticeSpec(1, 2, args.N, alpha), 0.0)
    for n in args.n:
        ge = nu_eigenvalue_and_gamma(co, n, co.s_bar(n)).gamma_eff
        t = gamma_target(n, eps, alpha)
        print(f"{eps:>5} {n:>3} {ge:>10.5f} {t:>10.5f} {ge - t:>9.5f} {5 * eps ** 2 + 0.02:>10.4f}")
