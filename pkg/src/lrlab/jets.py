"""Truncated jets in the formal variables (sigma_a, sigma_b, phi).

The ring is R[sa, sb, p] modulo sa^2, sb^2 and all monomials of total degree
>= 3.  That leaves eight coordinates:

    1, sa, sb, p, sa*sb, sa*p, sb*p, p^2

Any element with zero constant term is nilpotent (its cube vanishes), so exp
and log are finite sums and exactly inverse to each other.

Derivative convention: ``x.derivative(i, j, k)`` returns
i! j! k! * coeff(sa^i sb^j p^k), i.e. the mixed partial derivative at zero.
With p standing for the direction D-bar (sum over sites of d/dphi_x^1) this
makes the second D-bar derivative of exp(-nu |Lambda| p^2 / 2) equal to
-nu |Lambda|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MONOMIALS = ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
             (1, 1, 0), (1, 0, 1), (0, 1, 1), (0, 0, 2))
NAMES = ("1", "sa", "sb", "phi", "sa*sb", "sa*phi", "sb*phi", "phi^2")
_INDEX = {m: i for i, m in enumerate(MONOMIALS)}


def _build_table():
    table = []
    for i, mi in enumerate(MONOMIALS):
        for j, mj in enumerate(MONOMIALS):
            m = tuple(a + b for a, b in zip(mi, mj))
            if m[0] > 1 or m[1] > 1 or sum(m) > 2:
                continue
            table.append((i, j, _INDEX[m]))
    return table


_TABLE = _build_table()


@dataclass(frozen=True, eq=False)
class Jet:
    c: tuple  # eight floats in MONOMIALS order

    @classmethod
    def const(cls, v: float) -> "Jet":
        return cls((float(v),) + (0.0,) * 7)

    @classmethod
    def from_dict(cls, d: dict) -> "Jet":
        c = [0.0] * 8
        for k, v in d.items():
            c[NAMES.index(k) if isinstance(k, str) else _INDEX[k]] = float(v)
        return cls(tuple(c))

    @classmethod
    def coerce(cls, x) -> "Jet":
        return x if isinstance(x, Jet) else cls.const(x)

    def __getitem__(self, name) -> float:
        return self.c[NAMES.index(name) if isinstance(name, str) else _INDEX[name]]

    def as_array(self) -> np.ndarray:
        return np.array(self.c)

    def __add__(self, o):
        o = Jet.coerce(o)
        return Jet(tuple(a + b for a, b in zip(self.c, o.c)))

    __radd__ = __add__

    def __neg__(self):
        return Jet(tuple(-a for a in self.c))

    def __sub__(self, o):
        return self + (-Jet.coerce(o))

    def __rsub__(self, o):
        return Jet.coerce(o) - self

    def __mul__(self, o):
        if not isinstance(o, Jet):
            return Jet(tuple(a * o for a in self.c))
        out = [0.0] * 8
        for i, j, k in _TABLE:
            out[k] += self.c[i] * o.c[j]
        return Jet(tuple(out))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Jet):
            return self * jet_inv(o)
        return Jet(tuple(a / o for a in self.c))

    def __pow__(self, k: int):
        out = Jet.const(1.0)
        for _ in range(k):
            out = out * self
        return out

    def __abs__(self):
        return self.norm()

    def norm(self) -> float:
        """l1 norm of the coefficients (submultiplicative on this ring)."""
        return float(sum(abs(a) for a in self.c))

    def nilpotent(self) -> "Jet":
        return Jet((0.0,) + self.c[1:])

    def derivative(self, i: int, j: int, k: int) -> float:
        m = (i, j, k)
        if m not in _INDEX:
            return 0.0
        return math.factorial(i) * math.factorial(j) * math.factorial(k) * self.c[_INDEX[m]]

    def allclose(self, o, atol=0.0, rtol=0.0) -> bool:
        o = Jet.coerce(o)
        return all(abs(a - b) <= atol + rtol * abs(b) for a, b in zip(self.c, o.c))

    def __repr__(self):
        terms = [f"{v:+.6g}*{n}" for v, n in zip(self.c, NAMES) if v != 0.0]
        return "Jet(" + (" ".join(terms) if terms else "0") + ")"


def jet_exp(x) -> Jet:
    x = Jet.coerce(x)
    c0 = x.c[0]
    n = x.nilpotent()
    return math.exp(c0) * (1.0 + n + 0.5 * (n * n))


def jet_log(x) -> Jet:
    x = Jet.coerce(x)
    c0 = x.c[0]
    if not c0 > 0:
        raise ValueError("jet_log needs a positive constant term")
    m = x.nilpotent() / c0
    return math.log(c0) + m - 0.5 * (m * m)


def jet_inv(x) -> Jet:
    x = Jet.coerce(x)
    c0 = x.c[0]
    if c0 == 0:
        raise ZeroDivisionError("jet with zero constant term is not invertible")
    m = x.nilpotent() / c0
    return (1.0 - m + m * m) / c0


SA = Jet.from_dict({"sa": 1.0})
SB = Jet.from_dict({"sb": 1.0})
PHI = Jet.from_dict({"phi": 1.0})
ONE = Jet.const(1.0)
