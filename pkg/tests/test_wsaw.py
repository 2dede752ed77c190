import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats
from scipy.linalg import expm

from lrlab import wsaw
from lrlab.errors import ConfigError, ConstructionError, DomainError
from lrlab.lattice import LatticeSpec, resolvent, torus_frac_laplacian

SPEC = LatticeSpec(1, 2, 5, 1.0)      # 32-site ring


def dense_generator(spec):
    """The circulant matrix K(x, y) = K(0, y - x) on a one-dimensional torus."""
    k = torus_frac_laplacian(spec).values
    M = spec.M
    idx = (np.arange(M)[None, :] - np.arange(M)[:, None]) % M
    return k[idx]


def test_alias_table_chi_square(rng):
    w = rng.uniform(0, 1, 50) ** 3
    tab = wsaw.AliasTable(w)
    draws = tab.sample(rng, 200_000)
    counts = np.bincount(draws, minlength=50)
    expected = w / w.sum() * draws.size
    keep = expected > 5
    obs = np.append(counts[keep], counts[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    assert stats.chisquare(obs, exp).pvalue > 1e-4


def test_alias_table_rejects_bad_weights():
    for bad in ([], [0.0, 0.0], [1.0, -0.1], [np.nan]):
        with pytest.raises(ConstructionError):
            wsaw.AliasTable(bad)


def test_jump_rates_match_kernel():
    jk = wsaw.jump_kernel(SPEC)
    K = torus_frac_laplacian(SPEC).values
    assert jk.rate == K[0]
    # zero row sum: the holding rate equals the total jump rate
    assert (-K[1:]).sum() == pytest.approx(jk.rate, rel=1e-12)
    assert jk.table.weights[0] == 0.0
    assert np.allclose(jk.table.weights[1:], -K[1:] / (-K[1:]).sum())


def test_self_intersection_cases():
    z = np.zeros((1, 1), dtype=np.int64)
    p = wsaw.WalkPath(np.array([]), z, 2.5, z)
    assert wsaw.self_intersection_time(p) == 6.25
    pos = np.array([[0], [1]])
    p = wsaw.WalkPath(np.array([1.0]), pos, 2.0, pos)
    assert wsaw.self_intersection_time(p) == 2.0
    pos = np.array([[0], [1], [0]])
    p = wsaw.WalkPath(np.array([0.5, 1.5]), pos, 2.0, pos)
    assert wsaw.self_intersection_time(p) == 1.0 + 1.0
    # wrapped positions count as the same site
    pos = np.array([[0], [32]])
    p = wsaw.WalkPath(np.array([1.0]), pos % 32, 3.0, pos)
    assert wsaw.self_intersection_time(p) == 9.0


def test_self_intersection_cauchy_schwarz(rng):
    cfg = wsaw.MCConfig(SPEC, 0.1, 1.0, 10)
    for _ in range(50):
        T = rng.exponential(2.0)
        path = wsaw.sample_walk(cfg, T, rng)
        sites = len({tuple(x) for x in path.positions})
        I = wsaw.self_intersection_time(path)
        assert T * T / sites * (1 - 1e-12) <= I <= T * T * (1 + 1e-12)


def test_endpoint_law_matches_semigroup(rng):
    t = 0.7
    P = expm(-t * dense_generator(SPEC))[0]
    cfg = wsaw.MCConfig(SPEC, 0.0, 1.0, 10)
    n = 40_000
    ends = np.array([wsaw.sample_walk(cfg, t, rng).end[0] for _ in range(n)])
    freq = np.bincount(ends, minlength=SPEC.M) / n
    for y in (0, 1, 2, 3, 31):
        se = np.sqrt(P[y] * (1 - P[y]) / n)
        assert abs(freq[y] - P[y]) <= 5 * se


def test_free_walk_reproduces_resolvent():
    nu = 0.5
    cfg = wsaw.MCConfig(SPEC, 0.0, nu, 60_000, seed=3)
    res = wsaw.two_point_profile(cfg, [0, 1, 2, 4, 8])
    R = resolvent(SPEC, nu)
    for r, est in zip([0, 1, 2, 4, 8], res.two_point):
        assert abs(est.mean - R[r]) <= 5 * est.stderr
    assert res.susceptibility.mean == pytest.approx(1 / nu, rel=1e-14)
    assert res.susceptibility.stderr == pytest.approx(0.0, abs=1e-14)


def test_determinism_and_thread_independence(monkeypatch):
    cfg = wsaw.MCConfig(SPEC, 0.05, 0.5, 10_000, seed=9)
    monkeypatch.setenv("LRLAB_THREADS", "1")
    a = wsaw.two_point_profile(cfg, [1, 3])
    monkeypatch.setenv("LRLAB_THREADS", "4")
    b = wsaw.two_point_profile(cfg, [1, 3])
    assert a == b
    c = wsaw.two_point_profile(wsaw.MCConfig(SPEC, 0.05, 0.5, 10_000, seed=10), [1, 3])
    assert c != a


def test_interaction_lowers_every_estimate():
    base = wsaw.MCConfig(SPEC, 0.0, 0.5, 8192, seed=1)
    inter = wsaw.MCConfig(SPEC, 0.2, 0.5, 8192, seed=1)
    a = wsaw.two_point_profile(base, [0, 1, 2])
    b = wsaw.two_point_profile(inter, [0, 1, 2])
    for x, y in zip(a.two_point, b.two_point):
        assert y.mean <= x.mean
    assert b.susceptibility.mean < a.susceptibility.mean


def test_path_sampler_agrees_with_batches(rng):
    g, nu, r = 0.1, 0.5, 2
    cfg = wsaw.MCConfig(SPEC, g, nu, 20_000, seed=4)
    batch = wsaw.two_point_estimate(cfg, b=(r,))
    vals = []
    for _ in range(20_000):
        T = rng.exponential(1 / nu)
        path = wsaw.sample_walk(cfg, T, rng)
        vals.append(np.exp(-g * wsaw.self_intersection_time(path)) / nu * (path.end == (r,)))
    vals = np.array(vals)
    se = np.hypot(batch.stderr, vals.std(ddof=1) / np.sqrt(vals.size))
    assert abs(vals.mean() - batch.mean) <= 5 * se


def test_translation_invariance():
    cfg = wsaw.MCConfig(SPEC, 0.05, 0.5, 4096, seed=2)
    assert wsaw.two_point_estimate(cfg, a=(5,), b=(8,)) == wsaw.two_point_estimate(cfg, b=(3,))


def test_config_validation():
    with pytest.raises(ConfigError):
        wsaw.MCConfig(SPEC, 0.1, 0.0, 100)
    with pytest.raises(ConfigError):
        wsaw.MCConfig(SPEC, -0.1, 1.0, 100)
    with pytest.raises(ConfigError):
        wsaw.MCConfig(SPEC, 0.1, 1.0, 1)
    with pytest.raises(ConfigError):
        wsaw.MCConfig(SPEC, 0.1, 1.0, 100, b=(1, 1))


def test_wrap_fraction_reported():
    small = LatticeSpec(1, 2, 2, 1.0)
    long = wsaw.two_point_profile(wsaw.MCConfig(small, 0.0, 0.05, 4096), [1])
    assert long.wrap_fraction > 0.5
    # short walks on the big ring still wrap now and then: single jumps are heavy tailed
    short = wsaw.two_point_profile(wsaw.MCConfig(SPEC, 0.0, 5.0, 4096), [1])
    assert short.wrap_fraction < 0.05


def test_proposal_rate_reweighting():
    # same target nu, different proposal: both unbiased for the resolvent at g = 0
    nu = 0.5
    R = resolvent(SPEC, nu)
    est = wsaw.two_point_profile(wsaw.MCConfig(SPEC, 0.0, nu, 60_000, seed=5, rate=0.8), [0, 2])
    for r, e in zip([0, 2], est.two_point):
        assert abs(e.mean - R[r]) <= 5 * e.stderr
    # nu = 0 is allowed once a proposal is given; g > 0 keeps it finite
    chi = wsaw.susceptibility_estimate(wsaw.MCConfig(SPEC, 0.3, 0.0, 8192, rate=0.2))
    assert np.isfinite(chi.mean) and chi.mean > 0
    with pytest.raises(ConfigError):
        wsaw.MCConfig(SPEC, 0.1, 0.0, 100)
    with pytest.raises(ConfigError):
        wsaw.MCConfig(SPEC, 0.1, 0.5, 100, rate=0.0)


def test_reweighted_sample_matches_direct_runs():
    cfg = wsaw.MCConfig(SPEC, 0.1, -0.02, 8192, seed=6, rate=0.3)
    direct = wsaw.two_point_profile(cfg, [0, 3])
    S = wsaw.draw_walks(cfg)
    rew = S.two_point(-0.02, [0, 3])
    for a, b in zip(direct.two_point, rew):
        assert b.mean == pytest.approx(a.mean, rel=1e-12)
        assert b.stderr == pytest.approx(a.stderr, rel=1e-9)
    assert S.susceptibility(-0.02).mean == pytest.approx(direct.susceptibility.mean, rel=1e-12)
    assert S.wrap_fraction == direct.wrap_fraction


def test_susceptibility_bracketing():
    S = wsaw.draw_walks(wsaw.MCConfig(SPEC, 0.0, 0.1, 40_000, seed=8, rate=0.1))
    nu = wsaw.tune_nu_by_susceptibility(S, 10.0)
    assert S.susceptibility(nu).mean == pytest.approx(10.0, rel=1e-9)
    assert nu == pytest.approx(0.1, rel=0.05)     # free walk: chi = 1/nu
    chis = [S.susceptibility(v).mean for v in (0.05, 0.1, 0.2)]
    assert chis[0] > chis[1] > chis[2]
    # interaction lowers chi, so criticality moves to negative nu
    Si = wsaw.draw_walks(wsaw.MCConfig(SPEC, 0.2, 0.1, 20_000, seed=8, rate=0.1))
    assert wsaw.tune_nu_by_susceptibility(Si, 10.0) < 0
    assert Si.effective_size(0.0) <= Si.n


# ---------------------------------------------------------------------------- jump chains, holding times integrated out

def test_visit_counts_by_hand():
    sites = np.array([[0, 1, 0, 0, 2, 1], [5, 5, 3, 5, 3, 0]])
    assert wsaw.visit_counts(sites).tolist() == [[1, 1, 2, 3, 1, 2], [1, 2, 1, 3, 2, 1]]


@given(st.lists(st.lists(st.integers(0, 6), min_size=5, max_size=5), min_size=1, max_size=4))
def test_visit_counts_brute_force(rows):
    sites = np.array(rows)
    expect = [[row[: k + 1].count(row[k]) for k in range(len(row))] for row in rows]
    assert wsaw.visit_counts(sites).tolist() == expect


def test_visit_factors():
    K, nu = 1.3, 0.4
    # g = 0: K^m (K + nu)^{-m}
    assert wsaw.visit_factors(K, 0.0, nu, 4) == pytest.approx([m * np.log(K / (K + nu)) for m in range(5)], abs=1e-15)
    # m = 1 closed form through erfcx; the quadrature must reproduce it
    g = 0.07
    a = K + nu
    exact = np.log(K * 0.5 * np.sqrt(np.pi / g) * special.erfcx(a / (2 * np.sqrt(g))))
    assert wsaw.visit_factors(K, g, nu, 1)[1] == pytest.approx(exact, rel=1e-12)
    with pytest.raises(DomainError):
        wsaw.visit_factors(K, g, -K, 2)


def test_free_chains_give_the_resolvent():
    nu = 0.5
    S = wsaw.draw_chains(SPEC, 0.0, 6000, 300, radii=[0, 1, 4], seed=1)
    # g = 0: every chain carries the same weights, so chi = 1/nu up to truncation
    assert S.susceptibility(nu).mean == pytest.approx(1 / nu, rel=1e-12)
    R = resolvent(SPEC, nu)
    for r, e in zip([0, 1, 4], S.two_point(nu, [0, 1, 4])):
        assert abs(e.mean - R[r]) <= 5 * e.stderr


@pytest.mark.parametrize("nu", [0.3, -0.02])
def test_chains_agree_with_timed_walks(nu):
    g = 0.1
    S = wsaw.draw_chains(SPEC, g, 20_000, 400, radii=[0, 3], seed=2)
    W = wsaw.draw_walks(wsaw.MCConfig(SPEC, g, 0.3, 100_000, seed=3))
    pairs = [(S.susceptibility(nu), W.susceptibility(nu))] + list(zip(S.two_point(nu, [0, 3]), W.two_point(nu, [0, 3])))
    for a, b in pairs:
        assert abs(a.mean - b.mean) <= 5 * np.hypot(a.stderr, b.stderr)
    assert S.truncation(nu) < 1e-6


def test_chain_determinism_and_threads(monkeypatch):
    monkeypatch.setenv("LRLAB_THREADS", "1")
    a = wsaw.draw_chains(SPEC, 0.1, 700, 50, radii=[2], seed=4, chunk=128)
    monkeypatch.setenv("LRLAB_THREADS", "3")
    b = wsaw.draw_chains(SPEC, 0.1, 700, 50, radii=[2], seed=4, chunk=128)
    assert a.susceptibility(0.2) == b.susceptibility(0.2)
    assert a.two_point(0.2, [2]) == b.two_point(0.2, [2])


def test_chain_tuning_respects_the_floor():
    S = wsaw.draw_chains(SPEC, 0.2, 4000, 600, seed=5)
    nu = wsaw.tune_nu_by_susceptibility(S, 15.0)
    assert -S.K < nu < 0
    assert S.susceptibility(nu).mean == pytest.approx(15.0, rel=1e-9)
    # far past the critical point the weights grow without bound; the log stays finite
    assert np.isfinite(S.log_susceptibility(-0.9 * S.K))
