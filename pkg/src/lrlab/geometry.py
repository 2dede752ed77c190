"""Blocks and polymers on the torus.

A j-block is stored by its block index (anchor / L^j, one integer per axis in
[0, M/L^j)).  Two j-blocks touch iff their indices differ by at most one in
every coordinate, cyclically; this is the same as their point sets being within
sup-distance 1.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable

from .errors import DomainError
from .lattice import LatticeSpec


@dataclass(frozen=True, order=True)
class Block:
    j: int
    index: tuple

    def anchor(self, spec: LatticeSpec) -> tuple:
        return tuple(i * spec.L ** self.j for i in self.index)


@dataclass(frozen=True)
class Polymer:
    spec: LatticeSpec
    j: int
    blocks: tuple      # sorted tuple of block-index tuples

    @classmethod
    def of(cls, spec: LatticeSpec, j: int, indices: Iterable) -> "Polymer":
        nb = spec.L ** (spec.N - j)
        canon = sorted({tuple(int(c) % nb for c in (i if isinstance(i, tuple) else (i,)))
                        for i in indices})
        for t in canon:
            if len(t) != spec.d:
                raise DomainError(f"block index {t} has wrong dimension")
        return cls(spec, j, tuple(canon))

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __contains__(self, b):
        return b in self.blocks

    def union(self, other: "Polymer") -> "Polymer":
        return Polymer.of(self.spec, self.j, set(self.blocks) | set(other.blocks))

    def minus(self, other: "Polymer") -> "Polymer":
        return Polymer(self.spec, self.j, tuple(b for b in self.blocks if b not in set(other.blocks)))

    def anchors(self):
        s = self.spec.L ** self.j
        return [tuple(c * s for c in b) for b in self.blocks]

    def __repr__(self):
        return f"Polymer(j={self.j}, anchors={self.anchors()})"


def blocks_per_side(spec: LatticeSpec, j: int) -> int:
    if not 0 <= j <= spec.N:
        raise DomainError(f"scale j={j} outside [0, {spec.N}]")
    return spec.L ** (spec.N - j)


def blocks(spec: LatticeSpec, j: int) -> list[Block]:
    nb = blocks_per_side(spec, j)
    return [Block(j, idx) for idx in itertools.product(range(nb), repeat=spec.d)]


def whole_torus(spec: LatticeSpec, j: int) -> Polymer:
    return Polymer.of(spec, j, [b.index for b in blocks(spec, j)])


def _adjacent(u: tuple, v: tuple, nb: int) -> bool:
    for a, b in zip(u, v):
        diff = (a - b) % nb
        if diff not in (0, 1, nb - 1):
            return False
    return True


def neighbours(spec: LatticeSpec, j: int, b: tuple) -> set:
    """Blocks touching b (including b itself)."""
    nb = blocks_per_side(spec, j)
    return {tuple((c + o) % nb for c, o in zip(b, off))
            for off in itertools.product((-1, 0, 1), repeat=spec.d)}


def touching(X: Polymer, Y: Polymer) -> bool:
    if X.j != Y.j:
        raise DomainError("polymers at different scales")
    if not X.blocks or not Y.blocks:
        return False
    nb = blocks_per_side(X.spec, X.j)
    ys = set(Y.blocks)
    for b in X.blocks:
        if b in ys:
            return True
    return any(_adjacent(u, v, nb) for u in X.blocks for v in Y.blocks)


def components(X: Polymer) -> list[Polymer]:
    left = set(X.blocks)
    out = []
    while left:
        seed = left.pop()
        comp, stack = {seed}, [seed]
        while stack:
            cur = stack.pop()
            for nbr in neighbours(X.spec, X.j, cur):
                if nbr in left:
                    left.remove(nbr)
                    comp.add(nbr)
                    stack.append(nbr)
        out.append(Polymer.of(X.spec, X.j, comp))
    return sorted(out, key=lambda p: p.blocks)


def is_connected(X: Polymer) -> bool:
    return len(X) > 0 and len(components(X)) == 1


def is_small_set(X: Polymer) -> bool:
    return is_connected(X) and len(X) <= 2 ** X.spec.d


def _grow(spec, j, seed: tuple, n: int, allowed=None) -> set:
    """All connected n-block sets containing ``seed`` (as frozensets)."""
    found = set()
    start = frozenset([seed])

    def rec(cur: frozenset, frontier: frozenset):
        if len(cur) == n:
            found.add(cur)
            return
        for b in sorted(frontier):
            new = cur | {b}
            if new in seen:
                continue
            seen.add(new)
            fr = (frontier | neighbours(spec, j, b)) - new
            if allowed is not None:
                fr = fr & allowed
            rec(new, frozenset(fr))

    seen = {start}
    fr0 = neighbours(spec, j, seed) - {seed}
    if allowed is not None:
        fr0 &= allowed
    rec(start, frozenset(fr0))
    return found


def small_sets_containing(spec: LatticeSpec, j: int, b: tuple) -> list[Polymer]:
    out = set()
    for n in range(1, 2 ** spec.d + 1):
        out |= _grow(spec, j, b, n)
    return [Polymer.of(spec, j, s) for s in out]


def small_set_neighbourhood(X: Polymer) -> Polymer:
    """Union of all small sets that intersect X."""
    acc = set()
    for b in X.blocks:
        for Y in small_sets_containing(X.spec, X.j, b):
            acc |= set(Y.blocks)
    return Polymer.of(X.spec, X.j, acc)


def subpolymers(Y: Polymer):
    """All 2^|Y| block subsets of Y."""
    bl = Y.blocks
    for mask in range(1 << len(bl)):
        yield Polymer(Y.spec, Y.j, tuple(b for i, b in enumerate(bl) if mask >> i & 1))


def circle_product(F1: Callable, F2: Callable, Y: Polymer):
    """(F1 o F2)(Y) = sum over X subset of Y of F1(Y \\ X) F2(X)."""
    if len(Y) > 20:
        raise DomainError("circle product limited to 20 blocks")
    bl = Y.blocks
    total = None
    for mask in range(1 << len(bl)):
        X = Polymer(Y.spec, Y.j, tuple(b for i, b in enumerate(bl) if mask >> i & 1))
        R = Polymer(Y.spec, Y.j, tuple(b for i, b in enumerate(bl) if not mask >> i & 1))
        term = F1(R) * F2(X)
        total = term if total is None else total + term
    return total


def enumerate_connected_polymers(spec: LatticeSpec, j: int, n: int, B) -> list[Polymer]:
    """Connected n-block polymers touching block B, each once."""
    if not 1 <= n <= 8:
        raise DomainError("n must be in [1, 8]")
    if isinstance(B, Block):
        B = B.index
    B = tuple(B) if isinstance(B, (tuple, list)) else (int(B),)
    found = set()
    for root in neighbours(spec, j, B):
        found |= _grow(spec, j, root, n)
    return sorted((Polymer.of(spec, j, s) for s in found), key=lambda p: p.blocks)


def connected_polymers(spec: LatticeSpec, j: int, max_size: int) -> list[Polymer]:
    """Every connected polymer of at most ``max_size`` blocks on the torus."""
    found = set()
    for b in blocks(spec, j):
        for n in range(1, max_size + 1):
            found |= _grow(spec, j, b.index, n)
    return sorted((Polymer.of(spec, j, s) for s in found), key=lambda p: (len(p), p.blocks))
