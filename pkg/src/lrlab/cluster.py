"""Polymer gas: Ursell functions, the cluster series for log z, and brute-force oracles.

Conventions.  For polymers X_1..X_n let G be their touching graph (X touches
itself, so repeated polymers are joined).  ``ursell`` returns

    u(X_1..X_n) = sum over connected spanning subgraphs H of G of (-1)^{|E(H)|},

without the 1/n! (so three pairwise touching polymers give 2).  The cluster
series is then

    log z = sum_n 1/n! sum_{(X_1..X_n)} p(X_1)...p(X_n) u(X_1..X_n).

Ordered tuples are grouped into multisets: a multiset with multiplicities m_i
appears n!/prod m_i! times, so its weight is prod p_i^{m_i}/m_i! * u(m).
u(m) is computed by the standard recursion on the vertex holding a fixed
copy v0 of the first polymer,

    u(S) = W(S) - sum_{T subsetneq S, v0 in T} u(T) W(S \\ T),

where W(S) = 1 if S is an independent set of the touching graph and 0 else.
Only single copies of pairwise non-touching polymers can form S \\ T, which
keeps the recursion small.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import geometry as geo
from .errors import DomainError, ResourceError
from .jets import Jet, jet_exp, jet_log, PHI, SA, SB
from .lattice import LatticeSpec


# --------------------------------------------------------------------------- Ursell

def touching_graph(polys) -> list[tuple[int, int]]:
    n = len(polys)
    return [(i, k) for i in range(n) for k in range(i + 1, n) if geo.touching(polys[i], polys[k])]


def _connected(n: int, edges) -> bool:
    if n == 0:
        return False
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def connected_sum_bruteforce(n: int, edges) -> int:
    """Sum of (-1)^{|E(H)|} over connected spanning subgraphs H (2^|E| subsets)."""
    edges = list(edges)
    total = 0
    for k in range(len(edges) + 1):
        for sub in itertools.combinations(edges, k):
            if n == 1 or _connected(n, sub):
                total += (-1) ** k
    return total


@lru_cache(maxsize=None)
def _canonical(n: int, edges: frozenset) -> tuple:
    best = None
    for perm in itertools.permutations(range(n)):
        form = tuple(sorted(tuple(sorted((perm[a], perm[b]))) for a, b in edges))
        if best is None or form < best:
            best = form
    return best


@lru_cache(maxsize=None)
def _bruteforce_by_class(n: int, form: tuple) -> int:
    return connected_sum_bruteforce(n, form)


def ursell(*polys) -> int:
    """u(X_1..X_n) by brute force over spanning subgraphs.

    Results are cached by isomorphism class of the touching graph for n <= 5.
    """
    n = len(polys)
    if not 1 <= n <= 8:
        raise DomainError("ursell needs 1 <= n <= 8 polymers")
    edges = touching_graph(polys)
    if n <= 5:
        return _bruteforce_by_class(n, _canonical(n, frozenset(edges)))
    return connected_sum_bruteforce(n, edges)


class _MultisetUrsell:
    """u(m) for multiplicity vectors over a fixed polymer list."""

    def __init__(self, touch: np.ndarray):
        self.touch = touch            # boolean, diagonal True
        self.memo: dict = {}

    def _independent_subsets(self, supp):
        # nonempty subsets of supp with no two members touching
        out = []

        def rec(idx, cur):
            if idx == len(supp):
                if cur:
                    out.append(tuple(cur))
                return
            rec(idx + 1, cur)
            i = supp[idx]
            if all(not self.touch[i, k] for k in cur):
                cur.append(i)
                rec(idx + 1, cur)
                cur.pop()

        rec(0, [])
        return out

    def __call__(self, m: tuple) -> int:
        if m in self.memo:
            return self.memo[m]
        supp = [i for i, v in enumerate(m) if v]
        size = sum(m)
        if size == 1:
            self.memo[m] = 1
            return 1
        i0 = supp[0]
        W = int(all(m[i] == 1 for i in supp)
                and all(not self.touch[a, b] for a, b in itertools.combinations(supp, 2)))
        total = W
        for R in self._independent_subsets(supp):
            ways = 1
            for i in R:
                ways *= m[i] - (1 if i == i0 else 0)
            if ways == 0:
                continue
            sub = list(m)
            for i in R:
                sub[i] -= 1
            total -= ways * self(tuple(sub))
        self.memo[m] = total
        return total


# --------------------------------------------------------------------------- activities

@dataclass
class ClusterActivity:
    """Connected polymers at one scale mapped to scalars or jets."""

    spec: LatticeSpec
    j: int
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for X in self.values:
            if X.j != self.j:
                raise DomainError("activity mixes scales")
            if not geo.is_connected(X):
                raise DomainError(f"activity on disconnected polymer {X}")

    def __call__(self, X: geo.Polymer):
        return self.values.get(X, 0.0)

    @property
    def support(self) -> list:
        return [X for X, v in self.values.items() if _norm(v) > 0]

    @property
    def is_jet(self) -> bool:
        return any(isinstance(v, Jet) for v in self.values.values())


def _norm(v) -> float:
    return v.norm() if isinstance(v, Jet) else abs(float(v))


def synthetic_activity(spec: LatticeSpec, j: int, s_bar: float, max_size: int,
                       M_prime: float = 1.0, a_prime: float = 0.5) -> ClusterActivity:
    """p(X) = M' s_bar^{3 + a'(|X| - 2^d)_+} on every connected polymer up to max_size blocks."""
    vals = {}
    for X in geo.connected_polymers(spec, j, max_size):
        vals[X] = M_prime * s_bar ** (3 + a_prime * max(0, len(X) - 2 ** spec.d))
    return ClusterActivity(spec, j, vals)


# --------------------------------------------------------------------------- partition functions

def partition_bruteforce(activity: ClusterActivity):
    """z = sum over all block subsets X of prod over components of p(component)."""
    spec, j = activity.spec, activity.j
    all_blocks = [b.index for b in geo.blocks(spec, j)]
    if len(all_blocks) > 16:
        raise ResourceError("brute force limited to 16 blocks")
    one = Jet.const(1.0) if activity.is_jet else 1.0
    z = one
    for mask in range(1, 1 << len(all_blocks)):
        X = geo.Polymer(spec, j, tuple(b for i, b in enumerate(all_blocks) if mask >> i & 1))
        term = one
        for comp in geo.components(X):
            p = activity(comp)
            if _norm(p) == 0:
                term = None
                break
            term = term * p
        if term is not None:
            z = z + term
    return z


@dataclass(frozen=True)
class ClusterSeries:
    value: object            # float or Jet: truncated log z
    orders: tuple            # contribution of each n = 1..n_max
    tail_estimate: float
    n_terms: int


def _connected_supports(touch: np.ndarray, max_size: int, budget=None):
    """Connected vertex sets (sorted tuples) of the touching graph with <= max_size members.

    Each set is produced once (Wernicke's ESU scheme: a set is grown from its
    smallest vertex, and a new vertex may only bring in neighbours that are
    not already adjacent to the current set).  ``budget(size)`` is called per
    set and may raise to stop the enumeration early.
    """
    n = touch.shape[0]
    adj = [frozenset(np.nonzero(touch[i])[0].tolist()) - {i} for i in range(n)]
    out = []

    def grow(root, cur, ext, seen):
        out.append(tuple(sorted(cur)))
        if budget is not None:
            budget(len(cur))
        if len(cur) == max_size:
            return
        ext = list(ext)
        while ext:
            v = ext.pop()
            fresh = [w for w in adj[v] if w > root and w not in seen]
            grow(root, cur | {v}, ext + fresh, seen | adj[v])

    for root in range(n):
        grow(root, frozenset([root]), [w for w in adj[root] if w > root], adj[root] | {root})
    return sorted(out)


def _compositions(k: int, total_max: int):
    """Vectors of k positive integers with sum <= total_max."""
    if k == 0:
        yield ()
        return

    def rec(prefix, left, remaining):
        if left == 0:
            yield tuple(prefix)
            return
        for v in range(1, remaining - (left - 1) + 1):
            prefix.append(v)
            yield from rec(prefix, left - 1, remaining - v)
            prefix.pop()

    yield from rec([], k, total_max)


def log_partition(activity: ClusterActivity, n_max: int, max_terms: int = 2_000_000) -> ClusterSeries:
    """Truncated cluster series for log z through n_max polymers per cluster."""
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    polys = activity.support
    P = len(polys)
    touch = np.zeros((P, P), dtype=bool)
    for i in range(P):
        for k in range(i, P):
            touch[i, k] = touch[k, i] = geo.touching(polys[i], polys[k])
    vals = [activity(X) for X in polys]
    U = _MultisetUrsell(touch)
    zero = Jet.const(0.0) if activity.is_jet else 0.0
    orders = [zero] * (n_max + 1)
    planned = 0

    def budget(k):
        # k positive parts summing to at most n_max: C(n_max, k) of them
        nonlocal planned
        planned += math.comb(n_max, k)
        if planned > max_terms:
            raise ResourceError(f"cluster series needs more than {max_terms} terms")

    supports = _connected_supports(touch, n_max, budget)
    count = 0
    for supp in supports:
        for mult in _compositions(len(supp), n_max):
            count += 1
            m = [0] * P
            for i, v in zip(supp, mult):
                m[i] = v
            u = U(tuple(m))
            if u == 0:
                continue
            w = float(u)
            term = None
            for i, v in zip(supp, mult):
                f = vals[i] ** v if isinstance(vals[i], Jet) else vals[i] ** v
                term = f if term is None else term * f
                w /= math.factorial(v)
            orders[sum(mult)] = orders[sum(mult)] + w * term
    value = zero
    for o in orders[1:]:
        value = value + o
    mags = [_norm(o) for o in orders[1:]]
    tail = 0.0
    if n_max >= 2 and mags[-2] > 0:
        r = mags[-1] / mags[-2]
        tail = mags[-1] * r / (1 - r) if r < 1 else math.inf
    return ClusterSeries(value, tuple(orders[1:]), tail, count)


def log_partition_bruteforce(activity: ClusterActivity):
    z = partition_bruteforce(activity)
    return jet_log(z) if isinstance(z, Jet) else math.log(z)


# --------------------------------------------------------------------------- convergence

@dataclass(frozen=True)
class ConvergenceReport:
    per_block: dict
    threshold: float
    ok: dict

    @property
    def max(self) -> float:
        return max(self.per_block.values()) if self.per_block else 0.0


def convergence_check(activity: ClusterActivity, threshold: float = 1.0) -> ConvergenceReport:
    """Per block B: sum over Y touching B of ||p(Y)|| e^{|Y|}."""
    spec, j = activity.spec, activity.j
    out = {}
    supp = activity.support
    for b in geo.blocks(spec, j):
        B = geo.Polymer(spec, j, (b.index,))
        out[b.index] = float(sum(_norm(activity(Y)) * math.exp(len(Y))
                                 for Y in supp if geo.touching(B, Y)))
    return ConvergenceReport(out, threshold, {k: v <= threshold for k, v in out.items()})


def convergence_by_size(activity: ClusterActivity, block) -> dict:
    """The convergence sum at one block split by polymer size |Y|."""
    spec, j = activity.spec, activity.j
    B = geo.Polymer.of(spec, j, [block])
    out: dict = {}
    for Y in activity.support:
        if geo.touching(B, Y):
            out[len(Y)] = out.get(len(Y), 0.0) + _norm(activity(Y)) * math.exp(len(Y))
    return dict(sorted(out.items()))


def ursell_tail(activity: ClusterActivity, X1: geo.Polymer, n_max: int) -> float:
    """sum_{n<=n_max} n sum_{X_2..X_n} ||p(X_2)||...||p(X_n)|| |u(X_1..X_n)| / n!.

    The quantity bounded by e^{|X_1|} in the Kotecky-Preiss type criterion.
    """
    polys = [X1] + [Y for Y in activity.support if Y != X1]
    norms = [_norm(activity(Y)) for Y in polys]
    P = len(polys)
    touch = np.zeros((P, P), dtype=bool)
    for i in range(P):
        for k in range(i, P):
            touch[i, k] = touch[k, i] = geo.touching(polys[i], polys[k])
    U = _MultisetUrsell(touch)
    total = 0.0
    for supp in _connected_supports(touch, n_max):
        if supp[0] != 0:
            continue
        for mult in _compositions(len(supp), n_max):
            m = [0] * P
            for i, v in zip(supp, mult):
                m[i] = v
            # X1 takes one copy; the rest are X_2..X_n
            rest = list(m)
            rest[0] -= 1
            w = 1.0
            for i, v in enumerate(rest):
                if v:
                    w *= norms[i] ** v / math.factorial(v)
            total += w * abs(U(tuple(m)))
    return total


# --------------------------------------------------------------------------- jets of e^{-V}

@dataclass(frozen=True)
class DerivativeReport:
    d2_bar: float
    d2_expected: float
    d_sigma_a: float
    d_sigma_a_expected: float
    d_sigma_b: float
    d_sigma_b_expected: float

    @property
    def ok(self) -> bool:
        return (self.d2_bar == self.d2_expected and self.d_sigma_a == self.d_sigma_a_expected
                and self.d_sigma_b == self.d_sigma_b_expected)


def interaction_jet(g: float, nu: float, lambda_a: float, lambda_b: float, volume: int) -> Jet:
    """Jet of V(Lambda) along the constant field phi_x^1 = p (W = 0, u = 0).

    V = sum_x (g tau_x^2 + nu tau_x) - lambda_a sigma_a phi_a^1 - lambda_b sigma_b phi_b^1
    with tau_x = p^2/2; the g p^4/4 term is beyond the truncation.
    """
    return (0.5 * nu * volume) * PHI * PHI - lambda_a * SA * PHI - lambda_b * SB * PHI


def derivative_identities_check(g: float, nu: float, lambda_a: float, lambda_b: float,
                                volume: int) -> DerivativeReport:
    """D-bar^2 I = -nu |Lambda| and D-bar D_sigma_x I = lambda_x for I = e^{-V}."""
    I = jet_exp(-interaction_jet(g, nu, lambda_a, lambda_b, volume))
    return DerivativeReport(I.derivative(0, 0, 2), -nu * volume,
                            I.derivative(1, 0, 1), float(lambda_a),
                            I.derivative(0, 1, 1), float(lambda_b))
