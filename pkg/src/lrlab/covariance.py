"""Finite-range decomposition of the torus resolvent.

Slice j collects the heat-kernel times s in a window W_j = [s_{j-1}, s_j):

    C_j = int_{W_j} rho(s) exp(s Delta) ds,        rho from heat.potential_density.

Each slice is positive semidefinite before truncation.  The window ends s_j
are the largest times at which the nearest-neighbour walk has probability at
most ``tau`` of having travelled distance >= L^j / 2, so the mass we cut off
by enforcing the finite range is below ``tau`` relative to the slice.  The
last slice is defined as resolvent minus the truncated earlier slices, so the
decomposition telescopes exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import heat
from .lattice import (KernelField, LatticeSpec, _torus_lambda, kernel_from_multiplier,
                      resolvent, torus_distance)


def slice_ranges(spec: LatticeSpec) -> np.ndarray:
    """Range ½L^j of slice j = 1..N (index 0 unused); the last slice is unbounded."""
    r = np.array([0.5 * spec.L ** j for j in range(spec.N + 1)], dtype=float)
    r[0] = 0.0
    r[spec.N] = np.inf
    return r


def window_bounds(spec: LatticeSpec, tau: float = 1e-6) -> np.ndarray:
    """s_0 = 0 < s_1 < ... < s_{N-1}; slice N covers [s_{N-1}, inf)."""
    s = [0.0]
    for j in range(1, spec.N):
        s.append(heat.range_time(0.5 * spec.L ** j, spec.d, tau))
    return np.array(s)


@dataclass(eq=False)
class CovarianceDecomposition:
    spec: LatticeSpec
    m2: float
    tau: float
    s_bounds: np.ndarray
    slices: np.ndarray          # shape (N, M, ..., M); slices[j-1] is C_j
    trunc_mass: np.ndarray      # relative, before truncation; index j-1
    max_amp: np.ndarray
    min_eig: np.ndarray
    _partials: tuple | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.spec.N

    def slice(self, j: int) -> KernelField:
        return KernelField(self.spec, self.slices[j - 1], m2=self.m2, label=f"C_{j}")

    def window(self, j: int) -> tuple[float, float]:
        lo = self.s_bounds[j - 1]
        hi = self.s_bounds[j] if j < self.N else math.inf
        return float(lo), float(hi)

    def total(self) -> np.ndarray:
        return np.sum(self.slices, axis=0)

    def manifest(self):
        """Rows (j, t_lo, t_hi, range, max_amp, trunc_mass)."""
        rng = slice_ranges(self.spec)
        return [(j, *self.window(j), float(rng[j]), float(self.max_amp[j - 1]),
                 float(self.trunc_mass[j - 1])) for j in range(1, self.N + 1)]


def decompose(spec: LatticeSpec, m2: float, tau: float = 1e-6, nodes: int = 48,
              max_entries: int | None = None) -> CovarianceDecomposition:
    """Build C_1, ..., C_{N-1}, C_{N,N} for ((-Delta)^{alpha/2} + m2)^{-1} on the torus."""
    spec.check_budget(spec.N + 4, max_entries)
    N, d, M = spec.N, spec.d, spec.M
    full = resolvent(spec, m2, max_entries=max_entries).values
    lam = _torus_lambda(M, d)
    dist = torus_distance(M, d)
    s_b = window_bounds(spec, tau)
    slices = np.zeros((N,) + (M,) * d)
    trunc = np.zeros(N)
    min_eig = np.zeros(N)
    acc = np.zeros((M,) * d)
    for j in range(1, N):
        s, w = heat.window_rule(s_b[j - 1], s_b[j], spec.alpha, m2, nodes)
        mult = np.zeros_like(lam)
        for si, wi in zip(s, w):
            mult += wi * np.exp(-si * lam)
        pre = kernel_from_multiplier(mult)
        out = dist >= 0.5 * spec.L ** j
        tot = float(np.sum(np.abs(pre)))
        trunc[j - 1] = float(np.sum(np.abs(pre[out]))) / tot if tot > 0 else 0.0
        pre[out] = 0.0
        slices[j - 1] = pre
        acc += pre
        min_eig[j - 1] = float(np.min(np.fft.fftn(pre).real))
    slices[N - 1] = full - acc
    min_eig[N - 1] = float(np.min(np.fft.fftn(slices[N - 1]).real))
    max_amp = np.max(np.abs(slices.reshape(N, -1)), axis=1)
    return CovarianceDecomposition(spec, float(m2), tau, s_b, slices, trunc, max_amp, min_eig)


@dataclass(frozen=True)
class FiniteRangeReport:
    max_out_of_range: np.ndarray   # per slice j < N, max |C_j| beyond the range
    trunc_mass: np.ndarray         # per slice j < N
    ok: bool


def verify_finite_range(decomp: CovarianceDecomposition) -> FiniteRangeReport:
    spec = decomp.spec
    dist = torus_distance(spec.M, spec.d)
    worst = np.zeros(spec.N - 1)
    for j in range(1, spec.N):
        out = dist >= 0.5 * spec.L ** j
        vals = np.abs(decomp.slices[j - 1][out])
        worst[j - 1] = float(vals.max()) if vals.size else 0.0
    return FiniteRangeReport(worst, decomp.trunc_mass[: spec.N - 1].copy(),
                             bool(np.all(worst == 0.0)))


@dataclass(frozen=True)
class ScalingReport:
    slope: float
    expected: float
    constants: np.ndarray
    window: tuple[int, int]
    ok: bool


def verify_scaling(decomp: CovarianceDecomposition, j_min: int | None = None,
                   rel_tol: float = 0.1) -> ScalingReport:
    """Fit log max|C_j| against j below the mass scale.

    The first few slices are lattice-dominated (their windows have not yet
    reached the diffusive regime s_j ~ L^{2j}), so by default the fit starts
    at the first j with range L^j/2 >= 32, or three slices below the top if
    that leaves too few points.  Returns the fitted constants
    c_j = max|C_j| L^{(d-alpha)(j-1)} (1 + m^4 L^{2 alpha (j-1)}) as well.
    """
    from .flow import mass_scale

    spec = decomp.spec
    L, d, a = spec.L, spec.d, spec.alpha
    expected = -(d - a) * math.log(L)
    j = np.arange(1, spec.N + 1)
    consts = decomp.max_amp * L ** ((d - a) * (j - 1)) * (1 + decomp.m2 ** 2 * L ** (2 * a * (j - 1)))
    if spec.N < 4:
        return ScalingReport(expected, expected, consts, (1, spec.N), True)
    jm = mass_scale(decomp.m2, a, L) if decomp.m2 > 0 else math.inf
    hi = int(min(spec.N - 1, jm - 1))
    if j_min is None:
        lo = next(j for j in range(1, 64) if 0.5 * L ** j >= 32)
        lo = max(1, min(lo, hi - 3))
    else:
        lo = j_min
    if hi - lo < 2:
        return ScalingReport(float("nan"), expected, consts, (lo, hi), False)
    sel = slice(lo - 1, hi)
    slope = float(np.polyfit(j[sel], np.log(decomp.max_amp[sel]), 1)[0])
    ok = abs(slope - expected) <= rel_tol * abs(expected)
    return ScalingReport(slope, expected, consts, (lo, hi), ok)


def partial_sums(decomp: CovarianceDecomposition):
    """(w, w1): w[j] = sum_{i<=j} C_i as arrays (w[0] = 0), w1[j] = sum_x w_j(x)."""
    if decomp._partials is None:
        N = decomp.N
        w = np.zeros((N + 1,) + decomp.slices.shape[1:])
        np.cumsum(decomp.slices, axis=0, out=w[1:])
        w1 = np.array([float(np.fft.fftn(wj).real.flat[0]) for wj in w])
        w1[0] = 0.0
        decomp._partials = (w, w1)
    return decomp._partials
