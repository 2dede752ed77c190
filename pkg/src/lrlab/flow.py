"""Perturbative RG flow of the bulk couplings (g, nu, u) and observables (lambda, q).

The flow only ever touches a handful of numbers per scale, collected in a
coefficient table:

    c_diag[j] = C_{j;0,0}                      (tadpole)
    c_sum[j]  = sum_x C_{j;0,x}                (so w1[j] = sum_{i<=j} c_sum[i])
    bubble[j] = sum_x C_{j+1;0,x} (w_{j+1} + w_j)_{0,x}
    c_ab(sep)[j] = C_{j;a,b}

Two backends provide them.  `TorusCoefficients` reads a dense
`CovarianceDecomposition`, so finite range and telescoping are exact but the
torus must fit in memory.  `HeatKernelCoefficients` evaluates the same slices
on Z^d as one- and two-dimensional heat-time integrals, which reaches depths
like N = 40 and also allows m2 = 0.

Bulk couplings are evolved over the scales 0 -> N-1.  The last slice C_{N,N}
is the finite-volume remainder (with m2 = 0 on Z^d its bubble is infinite),
so the step into scale N only updates the observables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import heat
from .covariance import CovarianceDecomposition, decompose, partial_sums, window_bounds
from .errors import DomainError, ExtractionError, FlowDomainError, TuningError
from .lattice import LatticeSpec, zd_resolvent

# relative slack when deciding m2 L^{alpha(j-1)} >= 1, so that m2 = L^{-alpha k}
# computed in floating point lands on j_m = k + 1
MASS_SCALE_RTOL = 1e-12


def mass_scale(m2: float, alpha: float, L: int) -> int | float:
    """j_m: the smallest j >= 1 with m2 L^{alpha (j-1)} >= 1 (inf when m2 = 0)."""
    if m2 < 0:
        raise DomainError("m2 must be >= 0")
    if m2 == 0:
        return math.inf
    f = 1.0 + math.log(1.0 / m2) / (alpha * math.log(L))
    return max(1, math.ceil(f - MASS_SCALE_RTOL * max(1.0, abs(f))))


def coalescence_scale(a, b, L: int) -> int:
    """j_ab with ½L^{j_ab} <= |a-b| < ½L^{j_ab+1}; exact integer arithmetic."""
    diff = np.atleast_1d(np.asarray(a)) - np.atleast_1d(np.asarray(b))
    D4 = 4 * int(sum(int(v) * int(v) for v in diff))
    if D4 == 0:
        raise DomainError("a and b must differ")
    j, p = 0, L * L
    while p <= D4:
        j += 1
        p *= L * L
    return j


def gamma_target(n: int, epsilon: float, alpha: float) -> float:
    return 1.0 + (n + 2) / (n + 8) * epsilon / alpha


# --------------------------------------------------------------------------- coefficients

class ScaleCoefficients:
    """Per-scale covariance data consumed by the flow (index j = 0..N)."""

    spec: LatticeSpec
    m2: float
    c_diag: np.ndarray
    c_sum: np.ndarray
    bubble: np.ndarray   # bubble[j] feeds the step j -> j+1, j = 0..N-1
    backend: str

    @property
    def N(self) -> int:
        return self.spec.N

    @cached_property
    def w1(self) -> np.ndarray:
        w = np.concatenate([[0.0], np.cumsum(self.c_sum[1:])])
        return w

    def c_ab(self, sep) -> np.ndarray:
        raise NotImplementedError

    def beta(self, n: int) -> np.ndarray:
        """beta_j = (n+8) bubble_j."""
        return (n + 8) * self.bubble

    def plateau_a(self, n: int, j_lo: int = 10) -> float:
        """a = mean of beta_j L^{-eps j} over the scales where it has settled."""
        eps = self.spec.epsilon
        jm = mass_scale(self.m2, self.spec.alpha, self.spec.L)
        hi = int(min(jm, self.N - 1)) - 1     # last bulk step is j = N-2
        lo = min(j_lo, max(0, hi - 4))
        j = np.arange(lo, hi + 1)
        vals = self.beta(n)[j] * float(self.spec.L) ** (-eps * j)
        return float(np.mean(vals))

    def s_bar(self, n: int) -> float:
        eps = self.spec.epsilon
        return (1.0 - float(self.spec.L) ** (-eps)) / self.plateau_a(n)


class TorusCoefficients(ScaleCoefficients):
    backend = "torus"

    def __init__(self, decomp: CovarianceDecomposition):
        self.decomp = decomp
        self.spec = decomp.spec
        self.m2 = decomp.m2
        N = decomp.N
        w, w1 = partial_sums(decomp)
        flat = decomp.slices.reshape(N, -1)
        self.c_diag = np.concatenate([[0.0], flat[:, 0]])
        self.c_sum = np.concatenate([[0.0], np.diff(w1)])
        wf = w.reshape(N + 1, -1)
        self.bubble = np.array([float(np.dot(flat[j], wf[j + 1] + wf[j])) for j in range(N)])
        self.__dict__["w1"] = w1

    def c_ab(self, sep) -> np.ndarray:
        idx = tuple(np.atleast_1d(np.asarray(sep)) % self.spec.M)
        return np.concatenate([[0.0], self.decomp.slices[(slice(None),) + idx]])


class HeatKernelCoefficients(ScaleCoefficients):
    """Slices on Z^d: C_j = int_{W_j} rho(s) p_s ds with the same windows as the torus.

    Slices j < N are not range-truncated here except in `c_ab`, where entries
    beyond ½L^j are set to exactly 0 (the neglected heat-kernel mass is below
    ``tau``).  The last slice is the resolvent minus the earlier ones.
    """

    backend = "heat"

    def __init__(self, spec: LatticeSpec, m2: float = 0.0, tau: float = 1e-6, nodes: int = 48):
        if m2 < 0:
            raise DomainError("m2 must be >= 0")
        if m2 == 0 and spec.alpha >= spec.d:
            raise DomainError("massless flow on Z^d needs alpha < d")
        self.spec, self.m2, self.tau, self.nodes = spec, float(m2), tau, nodes
        N, d, a = spec.N, spec.d, spec.alpha
        self.s_bounds = window_bounds(spec, tau)
        rules = [heat.window_rule(self.s_bounds[j - 1], self.s_bounds[j], a, m2, nodes)
                 for j in range(1, N)]
        self._rules = rules
        P0 = lambda s: heat.ive(0.0, 2.0 * np.asarray(s)) ** d
        c_diag = np.zeros(N + 1)
        c_sum = np.zeros(N + 1)
        for j, (s, w) in enumerate(rules, start=1):
            c_diag[j] = float(w @ P0(s))
            c_sum[j] = float(np.sum(w))
        g0 = self._resolvent_at(np.zeros(d))
        c_diag[N] = g0 - float(np.sum(c_diag[1:N]))
        c_sum[N] = (1.0 / m2 - float(np.sum(c_sum[1:N]))) if m2 > 0 else math.inf
        self.c_diag, self.c_sum = c_diag, c_sum

        # bubble[j] = int_{W_{j+1}} rho(s) [F_{j+1}(s) + F_j(s)] ds,
        # F_k(s) = int_0^{s_k} rho(s') P0(s + s') ds'   (Chapman-Kolmogorov)
        S = np.concatenate([r[0] for r in rules])
        Wt = np.concatenate([r[1] for r in rules])
        K = P0(S[:, None] + S[None, :]) * Wt[None, :]
        starts = np.concatenate([[0], np.cumsum([len(r[0]) for r in rules])])
        blocks = np.add.reduceat(K, starts[:-1], axis=1)   # per inner window
        F = np.concatenate([np.zeros((len(S), 1)), np.cumsum(blocks, axis=1)], axis=1)
        # bubble[N-1] would feed the frozen final bulk step; it is left undefined
        bubble = np.full(N, np.nan)
        for j in range(N - 1):
            rows = slice(starts[j], starts[j + 1])
            bubble[j] = float(Wt[rows] @ (F[rows, j + 1] + F[rows, j]))
        self.bubble = bubble
        self._cab_cache: dict = {}

    def _resolvent_at(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.m2 == 0:
            return zd_resolvent(x, self.spec.alpha)
        a, d = self.spec.alpha, self.spec.d
        s0 = max(1.0, float(x @ x))
        g = lambda s: heat.heat_kernel(np.broadcast_to(x, np.shape(s) + (d,)), s)
        s, w = heat.window_rule(0.0, s0, a, self.m2, 64)
        return float(w @ g(s)) + float(heat.integrate_to_infinity(g, s0, a, self.m2, nodes=48))

    def c_ab(self, sep) -> np.ndarray:
        sep = np.atleast_1d(np.asarray(sep, dtype=float))
        key = tuple(sep.tolist())
        if key in self._cab_cache:
            return self._cab_cache[key]
        N, d, L = self.spec.N, self.spec.d, self.spec.L
        dist = float(np.sqrt(sep @ sep))
        out = np.zeros(N + 1)
        for j, (s, w) in enumerate(self._rules, start=1):
            if dist >= 0.5 * L ** j:
                continue    # exact zero beyond the range
            out[j] = float(w @ heat.heat_kernel(np.broadcast_to(sep, s.shape + (d,)), s))
        out[N] = self._resolvent_at(sep) - float(np.sum(out[1:N]))
        self._cab_cache[key] = out
        return out

    def free_two_point(self, sep) -> float:
        """Resolvent entry on Z^d, equal to sum_j c_ab(sep)[j] by construction."""
        return float(np.sum(self.c_ab(sep)))


# --------------------------------------------------------------------------- flow

@dataclass(frozen=True)
class Couplings:
    g: float
    nu: float
    u: float = 0.0
    lambda_a: float = 1.0
    lambda_b: float = 1.0
    q_a: float = 0.0
    q_b: float = 0.0


@dataclass(frozen=True)
class FlowParams:
    n: int
    spec: LatticeSpec
    m2: float
    a: tuple
    b: tuple
    g0: float
    nu0: float | None = None
    second_order: bool = True
    backend: str = "heat"        # "heat" (Z^d integrals) or "torus" (dense)
    tau: float = 1e-6

    def __post_init__(self):
        if self.n < 0:
            raise DomainError("n must be >= 0")
        if tuple(self.a) == tuple(self.b):
            raise DomainError("a and b must differ")
        if self.backend not in ("heat", "torus"):
            raise DomainError(f"unknown backend {self.backend!r}")

    @property
    def epsilon(self) -> float:
        return self.spec.epsilon

    @property
    def separation(self) -> tuple:
        return tuple(int(x) - int(y) for x, y in zip(self.a, self.b))


_COEFF_CACHE: dict = {}


def coefficients_for(params: FlowParams) -> ScaleCoefficients:
    key = (params.spec, params.m2, params.backend, params.tau)
    if key not in _COEFF_CACHE:
        if params.backend == "torus":
            _COEFF_CACHE[key] = TorusCoefficients(decompose(params.spec, params.m2, params.tau))
        else:
            _COEFF_CACHE[key] = HeatKernelCoefficients(params.spec, params.m2, params.tau)
    return _COEFF_CACHE[key]


def delta_nu_w1(nu, g, n, C_plus_diag, w_plus_1, w_1):
    """delta[nu w1] = (nu + (n+2) g C_{+;0,0}) w1_+ - nu w1."""
    return (nu + (n + 2) * g * C_plus_diag) * w_plus_1 - nu * w_1


def step_bulk(c: Couplings, j: int, coeffs: ScaleCoefficients, n: int,
              second_order: bool = True) -> Couplings:
    B = coeffs.bubble[j]
    g_new = c.g - (n + 8) * B * c.g ** 2
    nu_new = c.nu + (n + 2) * c.g * coeffs.c_diag[j + 1]
    if second_order:
        nu_new -= (n + 2) * c.g * c.nu * B
    if c.g > 0 and not g_new > 0:
        raise FlowDomainError(f"g left its domain at scale {j + 1}: g={g_new}")
    return replace(c, g=g_new, nu=nu_new)


def step_observable(c: Couplings, j: int, coeffs: ScaleCoefficients, j_ab: int, n: int,
                    c_ab: np.ndarray) -> Couplings:
    """lambda_x -> (1 - delta[nu w1]) lambda_x while j+1 < j_ab; q_x += lambda_a lambda_b C_{j+1;a,b}."""
    dq = c.lambda_a * c.lambda_b * c_ab[j + 1]
    if j + 1 < j_ab:
        f = 1.0 - delta_nu_w1(c.nu, c.g, n, coeffs.c_diag[j + 1], coeffs.w1[j + 1], coeffs.w1[j])
        la, lb = f * c.lambda_a, f * c.lambda_b
    else:
        la, lb = c.lambda_a, c.lambda_b
    return replace(c, lambda_a=la, lambda_b=lb, q_a=c.q_a + dq, q_b=c.q_b + dq)


@dataclass(frozen=True)
class FlowTrajectory:
    couplings: list
    g_hat: np.ndarray
    C_diag: np.ndarray
    C_ab: np.ndarray
    w1: np.ndarray
    j_ab: int
    L: int
    epsilon: float

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(c, name) for c in self.couplings])

    def rows(self):
        """CSV rows j,g,nu,u,lambda_a,lambda_b,q_a,q_b,g_hat,C_diag,C_ab,w1."""
        out = []
        for j, c in enumerate(self.couplings):
            out.append((j, c.g, c.nu, c.u, c.lambda_a, c.lambda_b, c.q_a, c.q_b,
                        self.g_hat[j], self.C_diag[j], self.C_ab[j], self.w1[j]))
        return out


def run_flow(coeffs: ScaleCoefficients, n: int, g0: float, nu0: float, sep=None,
             second_order: bool = True, stop: int | None = None) -> FlowTrajectory:
    """Iterate from scale 0 to N (or ``stop``).

    Bulk couplings are updated for j+1 <= N-1 and frozen on the final step.
    Without ``sep`` the observables are left at their initial values.
    """
    N = coeffs.N
    last = N if stop is None else stop
    if sep is not None:
        j_ab = coalescence_scale(sep, np.zeros_like(np.atleast_1d(sep)), coeffs.spec.L)
        cab = coeffs.c_ab(sep)
    else:
        j_ab, cab = 0, np.zeros(N + 1)
    c = Couplings(g=g0, nu=nu0)
    traj = [c]
    for j in range(last):
        obs = step_observable(c, j, coeffs, j_ab, n, cab) if sep is not None else c
        if j + 1 <= N - 1:
            bulk = step_bulk(c, j, coeffs, n, second_order)
            c = replace(obs, g=bulk.g, nu=bulk.nu)
        else:
            c = obs
        traj.append(c)
    L, eps = coeffs.spec.L, coeffs.spec.epsilon
    js = np.arange(len(traj))
    g = np.array([t.g for t in traj])
    return FlowTrajectory(traj, g * float(L) ** (eps * js), coeffs.c_diag[: len(traj)].copy(),
                          cab[: len(traj)].copy(), coeffs.w1[: len(traj)].copy(), j_ab, L, eps)


def _nu_path(coeffs, n, g0, nu0, J, second_order):
    """nu_0..nu_J without building Couplings objects (used in tight loops)."""
    g, nu = g0, nu0
    out = [nu]
    for j in range(J):
        B = coeffs.bubble[j]
        nu_new = nu + (n + 2) * g * coeffs.c_diag[j + 1]
        if second_order:
            nu_new -= (n + 2) * g * nu * B
        g_new = g - (n + 8) * B * g * g
        if g > 0 and not g_new > 0:
            raise FlowDomainError(f"g left its domain at scale {j + 1}")
        g, nu = g_new, nu_new
        out.append(nu)
    return np.array(out)


def _classify(nus, L, alpha, jm, threshold):
    j = np.arange(len(nus))
    resc = np.abs(nus) * float(L) ** (alpha * np.minimum(j, jm))
    esc = np.nonzero(resc > threshold)[0]
    last = nus[esc[0]] if esc.size else nus[-1]
    return int(np.sign(last))


def tune_critical_nu(coeffs: ScaleCoefficients, n: int, g0: float, second_order: bool = True,
                     escape: float = 1e3, rtol: float = 1e-12) -> float:
    """Bisection for nu0 whose trajectory stays bounded longest.

    A trajectory escapes once |nu_j| L^{alpha min(j, j_m)} > escape * s_bar; it is
    classified by the sign at escape, or by the sign at the last bulk scale
    J = min(j_m, N-1) if it never escapes.
    """
    spec = coeffs.spec
    jm = mass_scale(coeffs.m2, spec.alpha, spec.L)
    J = int(min(jm, coeffs.N - 1))
    thr = escape * coeffs.s_bar(n)
    guess = -(n + 2) * float(coeffs.c_diag[1:J + 1].sum()) * g0
    width = max(abs(guess), 1e-8)
    cls = lambda nu0: _classify(_nu_path(coeffs, n, g0, nu0, J, second_order),
                                spec.L, spec.alpha, jm, thr)
    for _ in range(60):
        lo, hi = guess - width, guess + width
        if cls(lo) < 0 < cls(hi):
            break
        width *= 4.0
    else:
        raise TuningError("no bracket straddles the critical nu0")
    span = hi - lo
    while hi - lo > rtol * span:
        mid = 0.5 * (lo + hi)
        s = cls(mid)
        if s == 0:
            return mid
        if s > 0:
            hi = mid
        else:
            lo = mid
        if mid in (lo, hi) and hi - lo <= 4 * np.spacing(abs(mid)):
            break
    return 0.5 * (lo + hi)


def lambda_closed_form(traj: FlowTrajectory, j: int) -> float:
    if j >= traj.j_ab:
        raise DomainError(f"closed form only holds for j < j_ab = {traj.j_ab}")
    return 1.0 - traj.couplings[j].nu * traj.w1[j]


def predict_two_point(params: FlowParams, coeffs: ScaleCoefficients | None = None,
                      nu0: float | None = None) -> tuple[float, FlowTrajectory]:
    """½(q_a + q_b) at scale N, with nu0 tuned when not supplied."""
    coeffs = coeffs or coefficients_for(params)
    spec = params.spec
    jm = mass_scale(params.m2, spec.alpha, spec.L)
    j_ab = coalescence_scale(params.a, params.b, spec.L)
    if not j_ab < jm:
        raise DomainError(f"need j_ab={j_ab} < j_m={jm}")
    if nu0 is None:
        nu0 = params.nu0
    if nu0 is None:
        nu0 = tune_critical_nu(coeffs, params.n, params.g0, params.second_order)
    traj = run_flow(coeffs, params.n, params.g0, nu0, params.separation, params.second_order)
    last = traj.couplings[-1]
    return 0.5 * (last.q_a + last.q_b), traj


@dataclass(frozen=True)
class GammaResult:
    Lambda_nu: float
    gamma_eff: float
    per_scale: np.ndarray
    window: tuple[int, int]
    nu0c: float


def nu_eigenvalue_and_gamma(coeffs: ScaleCoefficients, n: int, g0: float,
                            nu0c: float | None = None, delta: float | None = None,
                            j_transient: int = 10, plateau_tol: float = 0.05,
                            second_order: bool = True) -> GammaResult:
    """Rescaled nu-eigenvalue from two trajectories at nu0c +/- delta.

    Lambda_hat_j = L^alpha (nu_{j+1}(+) - nu_{j+1}(-)) / (nu_j(+) - nu_j(-));
    its geometric mean over [j_transient, min(j_m, N) - 2] gives
    gamma_eff = alpha / log_L(Lambda_hat).
    """
    spec = coeffs.spec
    L, alpha = spec.L, spec.alpha
    if nu0c is None:
        nu0c = tune_critical_nu(coeffs, n, g0, second_order)
    if delta is None:
        delta = 1e-6 * max(abs(nu0c), 1e-6)
    jm = mass_scale(coeffs.m2, alpha, L)
    hi = int(min(jm, coeffs.N)) - 2
    lo = min(j_transient, hi - 2)
    if lo < 0:
        raise ExtractionError("not enough scales for a plateau window")
    J = hi + 1
    dnu = (_nu_path(coeffs, n, g0, nu0c + delta, J, second_order)
           - _nu_path(coeffs, n, g0, nu0c - delta, J, second_order))
    lam = float(L) ** alpha * dnu[lo + 1: hi + 2] / dnu[lo: hi + 1]
    if np.any(~(lam > 0)):
        raise ExtractionError("eigenvalue estimate changed sign")
    logs = np.log(lam)
    mean = float(np.mean(logs))
    if np.max(np.abs(logs - mean)) > plateau_tol * abs(mean):
        raise ExtractionError("no plateau in the nu eigenvalue")
    Lam = math.exp(mean)
    gamma = alpha / (mean / math.log(L))
    return GammaResult(Lam, gamma, lam, (lo, hi), nu0c)
