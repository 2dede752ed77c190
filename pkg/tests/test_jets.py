import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrlab.jets import NAMES, ONE, PHI, SA, SB, Jet, jet_exp, jet_inv, jet_log

coef = st.floats(-3, 3, allow_nan=False)
jets = st.tuples(*[coef] * 8).map(Jet)
pos_jets = st.tuples(st.floats(0.1, 5), *[coef] * 7).map(Jet)


def test_truncation():
    assert (SA * SA).norm() == 0.0
    assert (PHI * PHI * PHI).norm() == 0.0
    assert (SA * SB * PHI).norm() == 0.0
    assert (SA * SB)["sa*sb"] == 1.0
    assert (PHI * PHI)["phi^2"] == 1.0


@given(jets, jets, jets)
def test_ring_axioms(a, b, c):
    assert (a * b).allclose(b * a, atol=1e-12)
    assert ((a * b) * c).allclose(a * (b * c), atol=1e-9, rtol=1e-12)
    assert (a * (b + c)).allclose(a * b + a * c, atol=1e-9, rtol=1e-12)
    assert (a * ONE).allclose(a)


def test_exp_log_small_cases():
    assert jet_exp(Jet.const(0.0)).allclose(ONE)
    c = 0.37
    assert jet_log(1.0 + c * SA).allclose(c * SA, atol=1e-16)


@given(jets)
def test_log_exp_round_trip(x):
    x = Jet((x.c[0] / 3,) + x.c[1:])
    assert jet_log(jet_exp(x)).allclose(x, atol=1e-13, rtol=1e-13)


@given(pos_jets)
def test_exp_log_round_trip(x):
    assert jet_exp(jet_log(x)).allclose(x, atol=1e-12, rtol=1e-12)


@given(pos_jets, pos_jets)
def test_exp_log_homomorphism(x, y):
    assert jet_log(x * y).allclose(jet_log(x) + jet_log(y), atol=1e-11)


@given(pos_jets)
def test_inverse(x):
    assert (x * jet_inv(x)).allclose(ONE, atol=1e-12)
    assert (x / x).allclose(ONE, atol=1e-12)


def test_log_needs_positive_constant():
    with pytest.raises(ValueError):
        jet_log(PHI)
    with pytest.raises(ZeroDivisionError):
        jet_inv(SA)


def test_derivative_convention():
    # second derivative of exp(-k p^2 / 2) at 0 is -k
    k = 1.7
    f = jet_exp(-0.5 * k * PHI * PHI)
    assert f.derivative(0, 0, 2) == -k
    assert (3.0 * SA * PHI).derivative(1, 0, 1) == 3.0
    assert ONE.derivative(2, 0, 0) == 0.0


def test_matches_finite_differences():
    # the jet of a genuine function agrees with its numerical Taylor coefficients
    f = lambda sa, sb, p: math.exp(0.3 * sa - 0.2 * sb * p + 0.5 * p * p + 0.1 * p)
    J = jet_exp(0.3 * SA - 0.2 * SB * PHI + 0.5 * PHI * PHI + 0.1 * PHI)
    h = 1e-4
    d_p2 = (f(0, 0, h) - 2 * f(0, 0, 0) + f(0, 0, -h)) / h ** 2
    d_sbp = (f(0, h, h) - f(0, h, -h) - f(0, -h, h) + f(0, -h, -h)) / (4 * h * h)
    assert J.derivative(0, 0, 2) == pytest.approx(d_p2, rel=1e-6)
    assert J.derivative(0, 1, 1) == pytest.approx(d_sbp, rel=1e-6)


def test_norm_submultiplicative():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = Jet(tuple(rng.normal(size=8))), Jet(tuple(rng.normal(size=8)))
        assert (a * b).norm() <= a.norm() * b.norm() + 1e-12


def test_from_dict_and_names():
    j = Jet.from_dict({"sa": 2.0, "phi^2": -1.0, (0, 1, 1): 4.0})
    assert j["sa"] == 2.0 and j["sb*phi"] == 4.0 and j[(0, 0, 2)] == -1.0
    assert len(NAMES) == 8
    assert "sa" in repr(j)
