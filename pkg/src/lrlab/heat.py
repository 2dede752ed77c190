"""Nearest-neighbour heat kernel on Z^d and subordination to the fractional resolvent.

Everything here rests on two facts.  The continuous-time simple random walk
with generator Delta (each coordinate jumps at rate 2) has transition kernel

    p_s(x) = prod_i exp(-2s) I_{x_i}(2s) = prod_i ive(x_i, 2s),

and with beta = alpha/2 the fractional resolvent is a Laplace mixture of it,

    1/(lambda^beta + m^2) = int_0^inf rho(s) exp(-s lambda) ds,
    rho(s) = s^(beta-1) E_{beta,beta}(-m^2 s^beta).

rho is completely monotone: rho(s) = int_0^inf sigma(r) exp(-s r) dr with the
explicit spectral density `spectral_density` below.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, NumericalError

__all__ = [
    "ive",
    "heat_kernel",
    "potential_density",
    "spectral_density",
    "gauss_legendre",
    "window_rule",
    "integrate_to_infinity",
    "sup_tail",
    "range_time",
]


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def ive(nu, z):
    """exp(-z) I_nu(z), with a Hankel expansion where scipy overflows (z > 1e9)."""
    nu, z = np.broadcast_arrays(np.asarray(nu, dtype=float), np.asarray(z, dtype=float))
    out = special.ive(nu, z)
    big = z > 1e9
    if np.any(big):
        mu, zb = 4.0 * nu[big] ** 2, z[big]
        t = 1.0 - (mu - 1) / (8 * zb) + (mu - 1) * (mu - 9) / (128 * zb ** 2)
        out = np.array(out, copy=True)
        out[big] = t / np.sqrt(2 * np.pi * zb)
    return out


def heat_kernel(x, s):
    """p_s(x) for the rate-2d nearest-neighbour walk; x has shape (..., d)."""
    x = np.abs(np.asarray(x, dtype=float))
    s = np.asarray(s, dtype=float)
    return np.prod(ive(x, 2.0 * s[..., None]), axis=-1)


def _check(alpha, m2):
    if not 0.0 < alpha <= 2.0:
        raise DomainError(f"alpha={alpha} outside (0, 2]")
    if m2 < 0:
        raise DomainError(f"m2={m2} < 0")


def spectral_density(r, alpha, m2):
    """sigma(r) with rho(s) = int sigma(r) exp(-s r) dr (valid for alpha < 2)."""
    b = 0.5 * alpha
    r = np.asarray(r, dtype=float)
    rb = r ** b
    den = rb * rb + 2.0 * m2 * rb * math.cos(math.pi * b) + m2 * m2
    return math.sin(math.pi * b) / math.pi * rb / den


def _ml_series(z, b):
    # E_{b,b}(-z) for small z; terms z^k / Gamma(b(k+1)) with alternating sign
    k = np.arange(200)
    coef = special.rgamma(b * (k + 1.0))
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    term = np.ones_like(z)
    for kk in range(200):
        out += term * coef[kk]
        term = term * (-z)
        if np.all(np.abs(term) < 1e-18):
            break
    return out


def _phi_large(t, b):
    # int_0^inf y^b e^{-t y} / (y^{2b} + 2 y^b cos(pi b) + 1) dy, in log y
    c = math.cos(math.pi * b)

    def f(u):
        y = math.exp(u)
        yb = y ** b
        return y * yb * math.exp(-t * y) / (yb * yb + 2.0 * c * yb + 1.0)

    hi = math.log(80.0 / t)
    pk = math.log(1.0 / t)
    val, err = integrate.quad(f, -60.0, hi, points=[min(0.0, pk), max(0.0, pk)],
                              limit=400, epsabs=0.0, epsrel=1e-13)
    return val


def potential_density(s, alpha, m2=0.0):
    """rho(s) = s^(beta-1) E_{beta,beta}(-m2 s^beta), beta = alpha/2.

    Small arguments use the power series of the Mittag-Leffler function, large
    ones the spectral integral (the series cancels catastrophically there).
    """
    _check(alpha, m2)
    b = 0.5 * alpha
    s = np.asarray(s, dtype=float)
    if m2 == 0.0:
        return s ** (b - 1.0) / special.gamma(b)
    if alpha == 2.0:
        return np.exp(-m2 * s)
    z = m2 * s ** b
    out = np.empty_like(s)
    small = z <= 0.5
    out[small] = s[small] ** (b - 1.0) * _ml_series(z[small], b)
    if np.any(~small):
        scale = m2 ** (1.0 / b)
        # r = scale * y turns sigma(r) dr into (sin(pi b)/pi) (scale/m2) y^b dy / (...)
        pref = math.sin(math.pi * b) / math.pi * scale / m2
        uniq, inv = np.unique(s[~small] * scale, return_inverse=True)
        vals = np.array([_phi_large(t, b) for t in uniq])
        out[~small] = pref * vals[inv]
    return out


def window_rule(s_lo, s_hi, alpha, m2=0.0, nodes=48, s_core=1e-6, panel=2.0):
    """Quadrature rule (s, w) with sum_i w_i g(s_i) ~ int_{s_lo}^{s_hi} rho(s) g(s) ds.

    Near s = 0 we substitute s = s_c v^(1/beta) on [0, s_c], s_c = min(s_hi, s_core),
    which absorbs the s^(beta-1) singularity of rho.  The substitution makes a
    smooth g non-smooth in v, so it is kept to a tiny interval; everything else
    is Gauss-Legendre in log s on panels at most ``panel`` e-folds wide.
    """
    b = 0.5 * alpha
    v, wv = gauss_legendre(nodes)
    ss, ws = [], []
    if s_lo == 0.0:
        sc = min(s_hi, s_core)
        s0 = sc * v ** (1.0 / b)
        ss.append(s0)
        ws.append(wv * sc ** b / b)  # = s^(b-1) ds
        s_lo = sc
    if s_hi > s_lo:
        a, c = math.log(s_lo), math.log(s_hi)
        k = max(1, math.ceil((c - a) / panel))
        edges = np.linspace(a, c, k + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            s1 = np.exp(lo + (hi - lo) * v)
            ss.append(s1)
            ws.append(wv * (hi - lo) * s1 ** b)
    s = np.concatenate(ss)
    w = np.concatenate(ws)
    # w currently integrates against s^(b-1); multiply by the rest of rho
    return s, w * potential_density(s, alpha, m2) * s ** (1.0 - b)


def integrate_to_infinity(g, s_lo, alpha, m2, nodes=32, rtol=1e-15, tail=None, max_panels=2000):
    """int_{s_lo}^inf rho(s) g(s) ds over geometric panels of ratio 4.

    ``tail(S)``, when given, returns an asymptotic estimate of the remainder
    beyond S and is added once the panels have shrunk below ``rtol``.  Without
    it the panel sum must converge on its own.
    """
    total = None
    lo = s_lo
    for _ in range(max_panels):
        hi = lo * 4.0
        s, w = window_rule(lo, hi, alpha, m2, nodes)
        part = np.tensordot(w, g(s), axes=(0, 0))
        total = part if total is None else total + part
        lo = hi
        if np.all(np.abs(part) <= rtol * np.abs(total)):
            break
    else:
        if tail is None:
            raise NumericalError("tail integral did not converge")
    if tail is not None:
        total = total + tail(lo)
    return total


def _tail_1d(q, s):
    """P(|X_s| >= q) for one coordinate of the walk (q >= 1)."""
    width = 30 + int(12.0 * math.sqrt(2.0 * s + 1.0))
    xs = np.arange(q, q + width, dtype=float)
    return 2.0 * float(np.sum(ive(xs, 2.0 * s)))


def sup_tail(q: int, s: float, d: int) -> float:
    """P(max_i |X_s^i| >= q) for the d-dimensional walk."""
    t1 = _tail_1d(q, s)
    return -math.expm1(d * math.log1p(-min(t1, 1.0 - 1e-300)))


@lru_cache(maxsize=4096)
def _range_time_exact(q: int, d: int, tau: float) -> float:
    f = lambda u: math.log(max(sup_tail(q, math.exp(u), d), 1e-300)) - math.log(tau)
    lo, hi = math.log(1e-14), math.log(4.0 * q * q + 1.0)
    while f(lo) > 0:
        lo -= 5.0
    while f(hi) < 0:
        hi += 1.0
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-13, rtol=1e-14))


def range_time(r: float, d: int, tau: float = 1e-4, exact_limit: int = 4096) -> float:
    """Largest heat time s with P(|X_s| >= r) <= tau, bounded via the sup norm.

    Euclidean |x| >= r forces |x_i| >= r/sqrt(d) for some i, so the sup-norm
    tail at q = ceil(r/sqrt(d)) dominates.  For q beyond ``exact_limit`` the
    walk is diffusive and s scales as q^2, so we extrapolate.
    """
    q = max(1, math.ceil(r / math.sqrt(d) - 1e-12))
    if q <= exact_limit:
        return _range_time_exact(q, d, tau)
    return _range_time_exact(exact_limit, d, tau) * (q / exact_limit) ** 2
