import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrlab.covariance import decompose
from lrlab.errors import DomainError, FlowDomainError
from lrlab.flow import (Couplings, FlowParams, HeatKernelCoefficients, TorusCoefficients,
                        coalescence_scale, delta_nu_w1, gamma_target, lambda_closed_form, mass_scale,
                        nu_eigenvalue_and_gamma, predict_two_point, run_flow, step_bulk,
                        step_observable, tune_critical_nu)
from lrlab.lattice import LatticeSpec, greens_diagonal_tau


@pytest.fixture(scope="module")
def torus12():
    return TorusCoefficients(decompose(LatticeSpec(1, 2, 12, 0.55), 1e-6))


@pytest.fixture(scope="module")
def heat12():
    return HeatKernelCoefficients(LatticeSpec(1, 2, 12, 0.55), 1e-6)


# ---------------------------------------------------------------------------- scales

def test_mass_scale_examples():
    assert mass_scale(1 / 8, 1.0, 2) == 4
    assert mass_scale(1.0, 0.55, 2) == 1
    assert mass_scale(5.0, 0.55, 2) == 1
    assert mass_scale(0.0, 0.55, 2) == math.inf
    for J in range(1, 30):
        assert mass_scale(2.0 ** (-0.55 * (J - 1)), 0.55, 2) == J
    with pytest.raises(DomainError):
        mass_scale(-1.0, 1.0, 2)


def test_coalescence_examples():
    assert coalescence_scale((8,), (0,), 2) == 4
    assert coalescence_scale((1,), (0,), 2) == 1
    assert coalescence_scale((3, 4), (0, 0), 2) == 3        # |a-b| = 5
    with pytest.raises(DomainError):
        coalescence_scale((2,), (2,), 2)


@given(st.lists(st.integers(-300, 300), min_size=1, max_size=3), st.integers(2, 5))
def test_coalescence_definition(v, L):
    if not any(v):
        return
    j = coalescence_scale(tuple(v), (0,) * len(v), L)
    D2 = Fraction(sum(x * x for x in v))
    assert Fraction(L ** (2 * j), 4) <= D2 < Fraction(L ** (2 * j + 2), 4)


def test_coalescence_matches_slices(torus12):
    for r in (1, 3, 8, 20, 100):
        jab = coalescence_scale((r,), (0,), 2)
        cab = torus12.c_ab((r,))
        assert np.all(cab[1: jab + 1] == 0.0)
        assert cab[jab + 1] != 0.0


def test_gamma_target():
    assert gamma_target(1, 0.1, 0.55) == pytest.approx(1 + 3 / 9 * 0.1 / 0.55)


# ---------------------------------------------------------------------------- backends

def test_backends_agree(torus12, heat12):
    sl = slice(1, 11)
    assert np.allclose(heat12.c_diag[sl], torus12.c_diag[sl], rtol=1e-10)
    assert np.allclose(heat12.bubble[:10], torus12.bubble[:10], rtol=1e-6)
    # torus slices lose their truncated tails (relative mass < 1e-6), heat sums keep them
    assert np.allclose(heat12.w1[sl], torus12.w1[sl], rtol=1e-6)
    assert np.allclose(heat12.c_ab((8,))[:11], torus12.c_ab((8,))[:11], rtol=1e-10, atol=1e-15)


def test_heat_backend_telescopes(heat12):
    for r in (1, 5, 40):
        assert np.sum(heat12.c_ab((r,))) == pytest.approx(heat12.free_two_point((r,)), rel=1e-15)


# ---------------------------------------------------------------------------- single steps

def test_delta_nu_w1_forms(torus12):
    assert delta_nu_w1(0.0, 0.0, 1, 0.3, 2.0, 1.0) == 0.0
    assert delta_nu_w1(0.0, 0.2, 1, 0.3, 2.0, 1.0) == pytest.approx(3 * 0.2 * 0.3 * 2.0)
    nu, g, n = -0.07, 0.04, 2
    for j in range(0, 10):
        C, wp, w = torus12.c_diag[j + 1], torus12.w1[j + 1], torus12.w1[j]
        alt = nu * torus12.c_sum[j + 1] + (n + 2) * g * C * wp
        assert delta_nu_w1(nu, g, n, C, wp, w) == pytest.approx(alt, rel=1e-12, abs=1e-15)


def test_step_bulk(torus12):
    c = Couplings(g=0.0, nu=0.3)
    assert step_bulk(c, 3, torus12, 1) == c
    c = Couplings(g=0.05, nu=0.0)
    nxt = step_bulk(c, 3, torus12, 1, second_order=False)
    assert nxt.nu == 3 * 0.05 * torus12.c_diag[4]
    assert nxt.g == pytest.approx(0.05 - 9 * torus12.bubble[3] * 0.05 ** 2)
    with pytest.raises(FlowDomainError):
        step_bulk(Couplings(g=50.0, nu=0.0), 3, torus12, 1)


def test_step_observable(torus12):
    cab = torus12.c_ab((8,))
    jab = coalescence_scale((8,), (0,), 2)
    c = Couplings(g=0.04, nu=-0.1)
    for j in range(jab - 1, 11):
        nxt = step_observable(c, j, torus12, jab, 1, cab)
        assert (nxt.lambda_a, nxt.lambda_b) == (c.lambda_a, c.lambda_b)
    for j in range(0, jab):
        nxt = step_observable(c, j, torus12, jab, 1, cab)
        assert nxt.q_a == 0.0
        if j + 1 < jab:
            assert nxt.lambda_a != c.lambda_a


# ---------------------------------------------------------------------------- trajectories

def test_gaussian_reduction(torus12, heat12):
    for coeffs in (torus12, heat12):
        for r in (1, 8, 100):
            p = FlowParams(1, coeffs.spec, 1e-6, (0,), (r,), 0.0, backend=coeffs.backend)
            G, traj = predict_two_point(p, coeffs)
            assert G == pytest.approx(coeffs.free_two_point((r,)) if coeffs.backend == "heat"
                                      else float(np.sum(coeffs.c_ab((r,)))), rel=1e-12)
            assert all(lambda_closed_form(traj, j) == 1.0 for j in range(traj.j_ab))


def test_invariants_on_interacting_run(heat40):
    n, r = 1, 37
    sb = heat40.s_bar(n)
    nu0 = tune_critical_nu(heat40, n, sb)
    traj = run_flow(heat40, n, sb, nu0, (r,))
    jab = traj.j_ab
    qa = traj.column("q_a")
    la = traj.column("lambda_a")
    assert np.all(qa[: jab + 1] == 0.0)
    assert np.all(la[jab - 1:] == la[jab - 1])
    w = float(np.sum(heat40.c_ab((r,))))
    assert qa[-1] == pytest.approx(la[jab] * traj.column("lambda_b")[jab] * w, rel=1e-14)
    assert lambda_closed_form(traj, 0) == 1.0
    with pytest.raises(DomainError):
        lambda_closed_form(traj, jab)
    assert np.all(traj.column("g") > 0)


def test_tuning_sign_and_first_order(heat40):
    assert tune_critical_nu(heat40, 1, 0.0) == 0.0
    tau = greens_diagonal_tau(1, 0.55)
    for n in (0, 1, 2):
        g0 = 1e-3
        nu0 = tune_critical_nu(heat40, n, g0)
        assert nu0 < 0
        assert nu0 == pytest.approx(-(n + 2) * tau * g0, rel=0.05)


def test_g_hat_plateau(heat40):
    for n in (0, 1, 2):
        sb = heat40.s_bar(n)
        traj = run_flow(heat40, n, sb, tune_critical_nu(heat40, n, sb))
        gh = traj.g_hat[10:20]
        assert gh.max() / gh.min() <= 1.5


def test_gaussian_gamma_is_one(heat40):
    res = nu_eigenvalue_and_gamma(heat40, 1, 0.0, nu0c=0.0)
    assert res.gamma_eff == pytest.approx(1.0, abs=1e-12)


def test_flow_params_validation(spec_eps01):
    with pytest.raises(DomainError):
        FlowParams(1, spec_eps01, 0.0, (0,), (0,), 0.1)
    with pytest.raises(DomainError):
        FlowParams(-1, spec_eps01, 0.0, (0,), (3,), 0.1)
    p = FlowParams(1, LatticeSpec(1, 2, 12, 0.55), 1.0, (0,), (100,), 0.01)
    with pytest.raises(DomainError):
        predict_two_point(p)     # j_ab >= j_m


def test_trajectory_rows(heat12):
    traj = run_flow(heat12, 1, 0.01, -0.01, (4,))
    rows = traj.rows()
    assert len(rows) == 13 and len(rows[0]) == 12
    assert rows[0][0] == 0 and rows[-1][0] == 12
