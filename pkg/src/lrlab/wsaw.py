"""Monte Carlo for the continuous-time weakly self-avoiding walk.

The walk jumps from x to x+y at rate -K(0,y), K the torus fractional
Laplacian, so holding times are exponential with rate K(0,0).  For the
two-point function we draw T ~ Exp(nu) and average

    e^{-g I_T} 1{X(T) = b} / nu,        I_T = sum_x (local time at x)^2,

which is an unbiased estimate of int_0^inf E_a(e^{-g I_T} 1{X(T)=b}) e^{-nu T} dT.
Given a separate proposal rate mu we draw T ~ Exp(mu) instead and use the
weight e^{-g I_T - (nu - mu) T} / mu.  That is how nu <= 0 is reached: with
g > 0 the walk only becomes critical at a negative nu.

Near criticality those weights are hopelessly heavy tailed, so there is a
second estimator (ChainSample) that integrates every holding time out and
keeps only the discrete jump chain.

Sampling is done in fixed-size chunks.  Chunk c draws from its own
generator, spawned from SeedSequence(seed), and chunk statistics are merged
in chunk order.  The worker count (LRLAB_THREADS) only changes which thread
runs a chunk, never the numbers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .errors import ConfigError, ConstructionError, DomainError, TuningError
from .lattice import LatticeSpec, torus_displacements, torus_frac_laplacian

RNG_FAMILY = "numpy.PCG64 via SeedSequence.spawn (one substream per chunk)"
CHUNK = 4096


# --------------------------------------------------------------------------- alias table

class AliasTable:
    """Vose's alias method over a finite discrete distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float).ravel()
        if w.size == 0 or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
            raise ConstructionError("alias table needs finite nonnegative weights with positive sum")
        n = w.size
        p = w * (n / w.sum())
        prob = np.zeros(n)
        alias = np.zeros(n, dtype=np.int64)
        small = [i for i in range(n) if p[i] < 1.0]
        large = [i for i in range(n) if p[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            prob[s] = p[s]
            alias[s] = l
            p[l] = (p[l] + p[s]) - 1.0
            (small if p[l] < 1.0 else large).append(l)
        for i in large + small:
            prob[i] = 1.0
            alias[i] = i
        self.prob, self.alias, self.n = prob, alias, n
        self.weights = w / w.sum()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        i = rng.integers(0, self.n, size=size)
        u = rng.random(size)
        return np.where(u < self.prob[i], i, self.alias[i])


@dataclass(frozen=True, eq=False)
class JumpKernel:
    spec: LatticeSpec
    rate: float                 # K(0,0)
    table: AliasTable           # over linear site indices
    steps: np.ndarray           # (M^d, d) minimal-image displacement per site


@lru_cache(maxsize=8)
def jump_kernel(spec: LatticeSpec, rel_tol: float = 1e-12) -> JumpKernel:
    K = torus_frac_laplacian(spec).values.ravel().copy()
    diag = float(K[0])
    off = -K
    off[0] = 0.0
    bad = off < 0
    if np.any(off[bad] < -rel_tol * diag):
        raise ConstructionError(
            f"fractional Laplacian has a positive off-diagonal entry {-off[bad].min():.3g}")
    off[bad] = 0.0
    steps = torus_displacements(spec.M, spec.d).reshape(-1, spec.d)
    return JumpKernel(spec, diag, AliasTable(off), steps)


# --------------------------------------------------------------------------- paths

@dataclass(frozen=True)
class MCConfig:
    spec: LatticeSpec
    g: float
    nu: float
    samples: int
    seed: int = 0
    b: tuple = (1,)
    rate: float | None = None    # draw T ~ Exp(rate) and reweight; needed when nu <= 0

    def __post_init__(self):
        if self.rate is None and not self.nu > 0:
            raise ConfigError("nu must be > 0 unless a proposal rate is given")
        if self.rate is not None and not self.rate > 0:
            raise ConfigError("proposal rate must be > 0")
        if self.g < 0:
            raise ConfigError("g must be >= 0")
        if self.samples < 2:
            raise ConfigError("need at least 2 samples")
        if len(self.b) != self.spec.d:
            raise ConfigError("endpoint b has the wrong dimension")

    @property
    def proposal(self) -> float:
        return self.nu if self.rate is None else self.rate


@dataclass(frozen=True, eq=False)
class WalkPath:
    times: np.ndarray        # (k,) jump times in (0, T]
    positions: np.ndarray    # (k+1, d) torus coordinates, positions[0] = start
    T: float
    unwrapped: np.ndarray    # (k+1, d) positions without the periodic identification

    def __post_init__(self):
        if self.times.size and (np.any(np.diff(self.times) <= 0) or self.times[0] <= 0
                                or self.times[-1] > self.T):
            raise DomainError("jump times must be strictly increasing in (0, T]")

    @property
    def end(self) -> tuple:
        return tuple(int(v) for v in self.positions[-1])

    def max_excursion(self) -> float:
        return float(np.max(np.abs(self.unwrapped - self.unwrapped[0])))


def sample_walk(config: MCConfig, T: float, rng: np.random.Generator, start=None) -> WalkPath:
    spec = config.spec
    jk = jump_kernel(spec)
    start = np.zeros(spec.d, dtype=np.int64) if start is None else np.asarray(start, dtype=np.int64)
    k = int(rng.poisson(jk.rate * T))
    times = np.sort(rng.uniform(0.0, T, size=k))
    steps = jk.steps[jk.table.sample(rng, k)]
    unwrapped = np.vstack([start[None, :], start[None, :] + np.cumsum(steps, axis=0)])
    return WalkPath(times, unwrapped % spec.M, float(T), unwrapped)


def self_intersection_time(path: WalkPath) -> float:
    """sum_x L_T(x)^2 for the piecewise-constant path."""
    edges = np.concatenate([[0.0], path.times, [path.T]])
    dur = np.diff(edges)
    occ: dict = {}
    for site, t in zip(map(tuple, path.positions), dur):
        occ[site] = occ.get(site, 0.0) + t
    return float(sum(v * v for v in occ.values()))


# --------------------------------------------------------------------------- estimators

@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int


@dataclass
class _Moments:
    """Streaming mean / M2 for a vector of observables (Chan et al. merge)."""
    n: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        mu = x.mean(axis=0)
        return cls(x.shape[0], mu, ((x - mu) ** 2).sum(axis=0))

    def merge(self, o: "_Moments") -> "_Moments":
        if self.n == 0:
            return o
        n = self.n + o.n
        delta = o.mean - self.mean
        mean = self.mean + delta * (o.n / n)
        m2 = self.m2 + o.m2 + delta ** 2 * (self.n * o.n / n)
        return _Moments(n, mean, m2)

    def estimates(self) -> list[Estimate]:
        var = self.m2 / (self.n - 1)
        return [Estimate(float(m), float(math.sqrt(v / self.n)), self.n) for m, v in zip(self.mean, var)]


def _walks(config: MCConfig, size: int, seed_seq) -> tuple:
    """One vectorised batch of walks: (T, I_T, endpoint mod M, wrapped flags)."""
    spec = config.spec
    d, M = spec.d, spec.M
    jk = jump_kernel(spec)
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    T = rng.exponential(1.0 / config.proposal, size=size)
    k = rng.poisson(jk.rate * T)
    total = int(k.sum())
    owner = np.repeat(np.arange(size), k)
    times = rng.uniform(0.0, 1.0, size=total) * T[owner]
    steps = jk.steps[jk.table.sample(rng, total)]
    # order jumps by (walk, time)
    order = np.lexsort((times, owner))
    times, steps = times[order], steps[order]
    starts = np.concatenate([[0], np.cumsum(k)])
    # unwrapped positions after each jump, restarted per walk
    cum = np.cumsum(steps, axis=0)
    base = np.zeros((size, d), dtype=np.int64)
    nz = k > 0
    offset = np.zeros((total, d), dtype=np.int64)
    if total:
        prev = np.vstack([np.zeros((1, d), dtype=np.int64), cum])[starts[:-1]]
        offset = prev[owner]
    pos = cum - offset
    # endpoint and excursion diagnostic
    end = base.copy()
    if total:
        end[nz] = pos[starts[1:][nz] - 1]
    exc = np.zeros(size, dtype=np.int64)
    if total:
        np.maximum.at(exc, owner, np.max(np.abs(pos), axis=1))
    wrapped = 4 * exc >= M
    # segment durations: segment 0 of a walk sits at the origin until its first jump
    prev_t = np.zeros(total)
    if total:
        prev_t[1:] = times[:-1]
        prev_t[starts[:-1][nz]] = 0.0
    dur_jumps = times - prev_t                      # time spent before each jump
    last_t = np.zeros(size)
    if total:
        last_t[nz] = times[starts[1:][nz] - 1]
    dur_final = T - last_t                          # time spent after the last jump
    # site before jump i is pos[i-1] (or origin); site after last jump is end
    site_before = np.zeros((total, d), dtype=np.int64)
    if total:
        site_before[1:] = pos[:-1]
        site_before[starts[:-1][nz]] = 0
    seg_owner = np.concatenate([owner, np.arange(size)])
    seg_site = np.vstack([site_before, end]) % M
    seg_dur = np.concatenate([dur_jumps, dur_final])
    lin = np.ravel_multi_index(tuple(seg_site.T), (M,) * d) if d else np.zeros(len(seg_owner))
    key = seg_owner.astype(np.int64) * (M ** d) + lin
    uniq, inv = np.unique(key, return_inverse=True)
    occ = np.bincount(inv, weights=seg_dur)
    I = np.bincount(uniq // (M ** d), weights=occ * occ, minlength=size)
    return T, I, end % M, wrapped


def _chunk(config: MCConfig, targets: np.ndarray, size: int, seed_seq) -> tuple:
    """Estimator values (size, n_targets+1) for one batch, and its wrapped count."""
    T, I, endw, wrapped = _walks(config, size, seed_seq)
    mu = config.proposal
    weight = np.exp(-config.g * I - (config.nu - mu) * T) / mu
    vals = np.empty((size, len(targets) + 1))
    for t, b in enumerate(targets):
        vals[:, t] = weight * np.all(endw == b, axis=1)
    vals[:, -1] = weight
    return vals, int(np.count_nonzero(wrapped))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LRLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class MCResult:
    two_point: list          # Estimate per target
    susceptibility: Estimate
    wrap_fraction: float
    targets: tuple


def _map_chunks(config: MCConfig, work, chunk: int) -> list:
    """Apply work(size, seed_seq) to every chunk; results come back in chunk order."""
    sizes = [chunk] * (config.samples // chunk)
    if config.samples % chunk:
        sizes.append(config.samples % chunk)
    seqs = np.random.SeedSequence(config.seed).spawn(len(sizes))
    jump_kernel(config.spec)   # build once before threads start
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        return list(ex.map(lambda a: work(*a), zip(sizes, seqs)))


def run_mc(config: MCConfig, targets=None, chunk: int = CHUNK) -> MCResult:
    """Estimate G(0, b) for every b in targets and the susceptibility on shared samples."""
    spec = config.spec
    if targets is None:
        targets = [config.b]
    tg = np.array([[int(c) % spec.M for c in b] for b in targets], dtype=np.int64).reshape(-1, spec.d)
    parts = _map_chunks(config, lambda size, seq: _chunk(config, tg, size, seq), chunk)
    acc, wrapped = _Moments(), 0
    for vals, w in parts:
        acc = acc.merge(_Moments.of(vals))
        wrapped += w
    est = acc.estimates()
    return MCResult(est[:-1], est[-1], wrapped / config.samples, tuple(map(tuple, targets)))


def two_point_estimate(config: MCConfig, a=None, b=None) -> Estimate:
    """G(a, b); by translation invariance this is G(0, b - a)."""
    d = config.spec.d
    a = (0,) * d if a is None else tuple(a)
    b = config.b if b is None else tuple(b)
    return run_mc(config, [tuple(bi - ai for ai, bi in zip(a, b))]).two_point[0]


def susceptibility_estimate(config: MCConfig) -> Estimate:
    return run_mc(config, []).susceptibility


def two_point_profile(config: MCConfig, radii) -> MCResult:
    """G(0, r e_1) for each r, all from one set of samples."""
    d = config.spec.d
    return run_mc(config, [(int(r),) + (0,) * (d - 1) for r in radii])


# --------------------------------------------------------------------------- reweighting in nu

@dataclass(frozen=True, eq=False)
class WalkSample:
    """Raw walks drawn once; the killing rate nu enters only through the weights.

    Each walk has T ~ Exp(rate), so for any nu the weight
    exp(-g I_T - (nu - rate) T) / rate gives an unbiased estimate.  The same
    walks therefore serve every nu (common random numbers), and the
    estimated susceptibility is a smooth decreasing function of nu.
    """
    spec: LatticeSpec
    g: float
    rate: float
    T: np.ndarray
    I: np.ndarray
    end: np.ndarray          # (n, d) endpoints mod M
    wrapped: np.ndarray      # bool per walk

    @property
    def n(self) -> int:
        return self.T.size

    @property
    def wrap_fraction(self) -> float:
        return float(np.mean(self.wrapped))

    @property
    def nu_scale(self) -> float:
        return self.rate

    def _log_weights(self, nu: float) -> np.ndarray:
        return -self.g * self.I - (nu - self.rate) * self.T - math.log(self.rate)

    def _estimate(self, logw, mask=None) -> Estimate:
        # scale by the largest weight so nu far below rate cannot overflow
        top = float(np.max(logw))
        w = np.exp(logw - top)
        if mask is not None:
            w = w * mask
        mean = float(np.mean(w))
        se = float(np.std(w, ddof=1) / math.sqrt(w.size))
        s = math.exp(top)
        return Estimate(mean * s, se * s, w.size)

    def susceptibility(self, nu: float) -> Estimate:
        return self._estimate(self._log_weights(nu))

    def two_point(self, nu: float, radii) -> list[Estimate]:
        lw = self._log_weights(nu)
        d, M = self.spec.d, self.spec.M
        out = []
        for r in radii:
            b = np.array([int(r) % M] + [0] * (d - 1))
            out.append(self._estimate(lw, np.all(self.end == b, axis=1)))
        return out

    def effective_size(self, nu: float) -> float:
        """Kish effective sample size of the weights at nu."""
        lw = self._log_weights(nu)
        w = np.exp(lw - lw.max())
        return float(w.sum() ** 2 / (w * w).sum())


def draw_walks(config: MCConfig, chunk: int = CHUNK) -> WalkSample:
    """Draw config.samples walks with T ~ Exp(config.proposal); config.nu is not used."""
    parts = _map_chunks(config, lambda size, seq: _walks(config, size, seq), chunk)
    cat = lambda i: np.concatenate([p[i] for p in parts])
    return WalkSample(config.spec, config.g, config.proposal, cat(0), cat(1), cat(2), cat(3))


def tune_nu_by_susceptibility(sample, chi_target: float, xtol: float = 1e-12) -> float:
    """nu at which the reweighted susceptibility estimate equals chi_target.

    The estimate is strictly decreasing in nu, so a bracket is found by
    stepping away from the proposal rate and the root is polished by brentq.
    """
    if not chi_target > 0:
        raise DomainError("target susceptibility must be positive")
    if hasattr(sample, "log_susceptibility"):
        f = lambda nu: sample.log_susceptibility(nu) - math.log(chi_target)
    else:
        f = lambda nu: math.log(sample.susceptibility(nu).mean) - math.log(chi_target)
    floor = getattr(sample, "nu_floor", -math.inf)
    lo = hi = sample.nu_scale
    step = sample.nu_scale
    for _ in range(200):
        if f(lo) > 0:
            break
        nxt = lo - step
        if nxt <= floor:
            nxt = 0.5 * (lo + floor)
        hi, lo, step = lo, nxt, 2 * step
    else:
        raise TuningError("susceptibility never reaches the target")
    for _ in range(200):
        if f(hi) < 0:
            break
        lo, hi, step = hi, hi + step, 2 * step
    else:
        raise TuningError("susceptibility never drops below the target")
    return float(optimize.brentq(f, lo, hi, xtol=xtol))


# --------------------------------------------------------------------------- holding times integrated out

def visit_factors(K: float, g: float, nu: float, m_max: int) -> np.ndarray:
    """log(K^m F_m(nu)) for m = 0..m_max (entry 0 is 0).

    F_m = int_0^inf S^{m-1}/(m-1)! exp(-(K+nu) S - g S^2) dS is what a site
    visited m times contributes once its m holding times are integrated
    against e^{-nu T} and e^{-g L^2} (L their sum, Gamma distributed).
    """
    a = K + nu
    if not a > 0:
        raise DomainError(f"nu must exceed -K(0,0) = {-K}")
    out = np.zeros(m_max + 1)
    m = np.arange(1, m_max + 1)
    if g == 0:
        out[1:] = m * math.log(K / a)
        return out
    from scipy import integrate, special
    peak = lambda mm: max(0.0, (-a + math.sqrt(a * a + 8 * g * (mm - 1))) / (4 * g))
    for mm in m:
        f = lambda S, mm=mm: math.exp((mm - 1) * math.log(S) - special.gammaln(mm) - a * S - g * S * S) if S > 0 else float(mm == 1)
        p = peak(mm)
        val = integrate.quad(f, 0.0, p, epsabs=0.0, epsrel=1e-13, limit=200)[0] if p > 0 else 0.0
        val += integrate.quad(f, p, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        out[mm] = mm * math.log(K) + math.log(val)
    return out


@dataclass(frozen=True, eq=False)
class ChainSample:
    """Jump chains with every holding time integrated out.

    Conditional on its jump chain x_0, x_1, ..., the continuous-time walk
    contributes  (1/K) sum_k 1{x_k = b} W_k  to G(0, b), where
    W_k = prod_x K^{m_x} F_{m_x}(nu) over the visit counts m_x of x_0..x_k.  Only
    the revisit pattern is random, so the weights fluctuate far less than
    e^{-g I_T} does, and nu enters through a handful of numbers F_m(nu).

    A chain only records its revisits (step k, new visit count m); between
    revisits log W_k grows by log(K F_1) per step and the sums over k are
    geometric.  Chains stop after k_max jumps; ``truncation`` reports the
    neglected tail.
    """
    spec: LatticeSpec
    g: float
    K: float
    k_max: int
    n: int
    ev_chain: np.ndarray     # revisit events, sorted by (chain, step)
    ev_step: np.ndarray
    ev_m: np.ndarray
    hits: dict               # r -> (chain, step) arrays where x_step = r e_1
    wrapped: np.ndarray

    @property
    def wrap_fraction(self) -> float:
        return float(np.mean(self.wrapped))

    BLOCK = 512    # chains processed together; bounds the temporary arrays

    def _blocks(self):
        starts = np.searchsorted(self.ev_chain, np.arange(0, self.n + 1))
        for lo in range(0, self.n, self.BLOCK):
            hi = min(lo + self.BLOCK, self.n)
            yield lo, hi, starts[lo:hi + 1]

    def _log_w_events(self, c, starts):
        """log W at each revisit event of a block; starts are the block's chain offsets."""
        e0, e1 = starts[0], starts[-1]
        m = self.ev_m[e0:e1]
        # a revisit step adds c[m] - c[m-1] instead of c[1]
        cum = np.cumsum(c[m] - c[m - 1] - c[1])
        before = np.concatenate([[0.0], cum])[starts[:-1] - e0]
        local = np.repeat(np.arange(starts.size - 1), np.diff(starts))
        return (self.ev_step[e0:e1] + 1.0) * c[1] + cum - before[local], local

    @staticmethod
    def _log_geo(length, c1):
        """log sum_{i<length} e^{i c1} for length >= 1."""
        if c1 > 0:
            return length * c1 + np.log(-np.expm1(-length * c1)) - math.log(math.expm1(c1))
        if c1 < 0:
            return np.log(-np.expm1(length * c1)) - math.log(-math.expm1(c1))
        return np.log(length)

    @staticmethod
    def _logsum_by(index, logs, size):
        out = np.full(size, -np.inf)
        if logs.size:
            top = np.max(logs)
            if np.isfinite(top):
                acc = np.zeros(size)
                np.add.at(acc, index, np.exp(logs - top))
                with np.errstate(divide="ignore"):
                    out = np.log(acc) + top
        return out

    def _log_chain_sums(self, nu: float, cut: int | None = None) -> np.ndarray:
        """Per chain, log of (1/K) sum_{k <= cut} W_k (cut defaults to k_max)."""
        cut = self.k_max if cut is None else cut
        c = visit_factors(self.K, self.g, nu, int(self.ev_m.max(initial=1)))
        out = np.empty(self.n)
        for lo, hi, starts in self._blocks():
            logw, local = self._log_w_events(c, starts)
            step = self.ev_step[starts[0]:starts[-1]]
            keep = step <= cut
            size = hi - lo
            # the stretch before a chain's first revisit starts at k = 0 with log W = c1
            first = np.full(size, cut + 1.0)
            has = np.diff(starts) > 0
            first[has] = np.minimum(step[starts[:-1][has] - starts[0]], cut + 1)
            # each revisit starts a stretch running to the next kept revisit of the same chain
            nxt = np.append(step[1:], cut + 1)
            same = np.append(local[1:] == local[:-1], False)
            nxt = np.where(same & (nxt <= cut), nxt, cut + 1)
            logs = np.concatenate([c[1] + self._log_geo(first, c[1]),
                                   logw[keep] + self._log_geo((nxt - step)[keep].astype(float), c[1])])
            idx = np.concatenate([np.arange(size), local[keep]])
            out[lo:hi] = self._logsum_by(idx, logs, size)
        return out - math.log(self.K)

    def _log_two_point(self, nu: float, r: int) -> np.ndarray:
        """Per chain, log of (1/K) sum_k 1{x_k = r e_1} W_k."""
        c = visit_factors(self.K, self.g, nu, int(self.ev_m.max(initial=1)))
        hc, hs = self.hits[int(r)]
        out = np.empty(self.n)
        hit_starts = np.searchsorted(hc, np.arange(0, self.n + 1))
        for lo, hi, starts in self._blocks():
            logw, local = self._log_w_events(c, starts)
            step = self.ev_step[starts[0]:starts[-1]].astype(np.int64)
            h0, h1 = hit_starts[lo], hit_starts[hi]
            ch, st = hc[h0:h1] - lo, hs[h0:h1].astype(np.int64)
            # log W_k = (k+1) c1 + correction of the last revisit at or before k
            key_ev = local * (self.k_max + 2) + step
            idx = np.searchsorted(key_ev, ch * (self.k_max + 2) + st, side="right") - 1
            corr = logw - (step + 1.0) * c[1]
            found = (idx >= 0) & (local[np.maximum(idx, 0)] == ch) if idx.size and key_ev.size else np.zeros(ch.size, bool)
            lw = (st + 1.0) * c[1] + np.where(found, corr[np.maximum(idx, 0)] if corr.size else 0.0, 0.0)
            out[lo:hi] = self._logsum_by(ch, lw, hi - lo)
        return out - math.log(self.K)

    def _estimate(self, logs: np.ndarray) -> Estimate:
        top = np.max(logs)
        if not np.isfinite(top):
            return Estimate(0.0 if top == -np.inf else math.inf, 0.0, self.n)
        v = np.exp(logs - top)
        scale = math.exp(top) if top < 700 else math.inf
        return Estimate(float(v.mean() * scale), float(v.std(ddof=1) / math.sqrt(self.n) * scale), self.n)

    def log_susceptibility(self, nu: float) -> float:
        logs = self._log_chain_sums(nu)
        top = np.max(logs)
        return float(top + math.log(np.mean(np.exp(logs - top))))

    def susceptibility(self, nu: float) -> Estimate:
        return self._estimate(self._log_chain_sums(nu))

    def two_point(self, nu: float, radii) -> list[Estimate]:
        return [self._estimate(self._log_two_point(nu, r)) for r in radii]

    def effective_size(self, nu: float) -> float:
        """Kish effective size of the per-chain susceptibility contributions."""
        logs = self._log_chain_sums(nu)
        w = np.exp(logs - np.max(logs))
        return float(w.sum() ** 2 / (w * w).sum())

    def truncation(self, nu: float) -> float:
        """Relative change of the susceptibility when chains are cut at 3/4 of k_max.

        A convergence check in k only: near criticality K F_1 can exceed 1,
        so the weights need not decay step by step and no tail bound is tried.
        """
        full = self.log_susceptibility(nu)
        logs = self._log_chain_sums(nu, 3 * self.k_max // 4)
        top = np.max(logs)
        part = top + math.log(np.mean(np.exp(logs - top)))
        return float(abs(math.expm1(part - full)))

    # tune_nu_by_susceptibility starts its bracket at nu_scale and never goes below nu_floor
    @property
    def nu_scale(self) -> float:
        return self.K / self.k_max

    @property
    def nu_floor(self) -> float:
        return -self.K


def visit_counts(sites: np.ndarray) -> np.ndarray:
    """visits[i, k] = how often row i has seen sites[i, k] among sites[i, :k+1]."""
    rows, cols = sites.shape
    key = (np.arange(rows, dtype=np.int64)[:, None] * (int(sites.max(initial=0)) + 1) + sites).ravel()
    order = np.argsort(key, kind="stable")
    sk = key[order]
    new_group = np.ones(sk.size, dtype=bool)
    new_group[1:] = sk[1:] != sk[:-1]
    group_start = np.maximum.accumulate(np.where(new_group, np.arange(sk.size), 0))
    out = np.empty(sk.size, dtype=np.int64)
    out[order] = np.arange(sk.size) - group_start + 1
    return out.reshape(rows, cols)


def _chains(spec: LatticeSpec, size: int, k_max: int, radii, seed_seq) -> tuple:
    d, M = spec.d, spec.M
    jk = jump_kernel(spec)
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    steps = jk.steps[jk.table.sample(rng, size * k_max)].reshape(size, k_max, d)
    pos = np.zeros((size, k_max + 1, d), dtype=np.int64)
    np.cumsum(steps, axis=1, out=pos[:, 1:])
    wrapped = 4 * np.max(np.abs(pos).reshape(size, -1), axis=1) >= M
    site = pos % M
    lin = np.ravel_multi_index(tuple(np.moveaxis(site, -1, 0)), (M,) * d)     # (size, k_max+1)
    visits = visit_counts(lin)
    ch, st = np.nonzero(visits > 1)
    hits = {}
    for r in radii:
        b = np.ravel_multi_index(tuple([int(r) % M] + [0] * (d - 1)), (M,) * d)
        hc, hs = np.nonzero(lin == b)
        hits[int(r)] = (hc, hs)
    return ch, st, visits[ch, st], hits, wrapped


def draw_chains(spec: LatticeSpec, g: float, samples: int, k_max: int, radii=(), seed: int = 0,
                chunk: int = 256) -> ChainSample:
    """Jump chains of length k_max in chunks with their own PCG64 substreams."""
    if g < 0:
        raise ConfigError("g must be >= 0")
    if samples < 2 or k_max < 1:
        raise ConfigError("need samples >= 2 and k_max >= 1")
    cfg = MCConfig(spec, g, 1.0, samples, seed)
    parts = _map_chunks(cfg, lambda size, seq: _chains(spec, size, k_max, radii, seq), chunk)
    off, evc, evs, evm, wr = 0, [], [], [], []
    hits = {int(r): ([], []) for r in radii}
    for (ch, st, m, h, w), size in zip(parts, [len(p[4]) for p in parts]):
        evc.append(ch + off)
        evs.append(st)
        evm.append(m)
        wr.append(w)
        for r in hits:
            hits[r][0].append(h[r][0] + off)
            hits[r][1].append(h[r][1])
        off += size
    cat = lambda xs, dt=np.int32: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    ev_m = cat(evm, np.int64)
    ev_m = ev_m.astype(np.int16 if ev_m.max(initial=1) < 2 ** 15 else np.int32)
    return ChainSample(spec, g, jump_kernel(spec).rate, k_max, samples, cat(evc), cat(evs), ev_m,
                       {r: (cat(a), cat(b)) for r, (a, b) in hits.items()}, np.concatenate(wr))
