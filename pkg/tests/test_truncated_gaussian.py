import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from conftest import within_mc
from postsel.exceptions import DegenerateMassError, InvalidInitError, InvalidRegionError
from postsel.truncated_gaussian import (GibbsChain, TmvnSpec, TruncRegion, feasible_point,
                                        gibbs_cycle, precompute_conditionals, sample_inside,
                                        sample_outside, sample_tmvn, trunc_cdf, trunc_moments)

INF = np.inf
MILLS0 = np.sqrt(2 / np.pi)


def mp_trunc_cdf(x, l, u):
    mpmath.mp.dps = 60
    if l > 0:
        # upper tail: work with survival functions
        Q = lambda t: mpmath.ncdf(-t)  # noqa: E731
        return float((Q(l) - Q(x)) / (Q(l) - Q(u)))
    F = mpmath.ncdf
    return float((F(x) - F(l)) / (F(u) - F(l)))


def quad_moments(mu, sigma2, pieces):
    sd = np.sqrt(sigma2)
    out = []
    for k in range(3):
        tot = 0.0
        for lo, hi in pieces:
            tot += integrate.quad(lambda t: t ** k * stats.norm.pdf(t, mu, sd), lo, hi,
                                  epsabs=0, epsrel=1e-11, limit=200)[0]
        out.append(tot)
    mean = out[1] / out[0]
    return mean, out[2] / out[0] - mean ** 2


# regions

def test_outside_whole_line_rejected():
    with pytest.raises(InvalidRegionError):
        TruncRegion.outside(-INF, INF)


@pytest.mark.parametrize("lo,hi", [(1.0, 1.0), (2.0, 1.0), (np.nan, 1.0)])
def test_inside_needs_ordered_bounds(lo, hi):
    with pytest.raises(InvalidRegionError):
        TruncRegion.inside(lo, hi)


def test_region_contains():
    r = TruncRegion.outside(-1.0, 2.0)
    assert r.contains(-1.0) and r.contains(2.0) and not r.contains(0.0)
    assert TruncRegion.inside().contains(1e300)


# trunc_cdf

@pytest.mark.parametrize("l,u", [(-1.0, 1.0), (0.0, INF), (-INF, 3.0), (-2.5, -0.5)])
def test_cdf_endpoints(l, u):
    if np.isfinite(l):
        assert trunc_cdf(l, 0.0, 1.0, l, u) == 0.0
    if np.isfinite(u):
        assert trunc_cdf(u, 0.0, 1.0, l, u) == 1.0


def test_cdf_symmetry():
    assert trunc_cdf(0.0, 0.0, 1.0, -1.0, 1.0) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("x,l,u", [
    (0.3, -1.0, 2.0), (30.5, 30.0, 31.0), (-35.2, -36.0, -35.0), (9.0, 8.0, INF),
    (-20.001, -INF, -20.0),
])
def test_cdf_matches_high_precision(x, l, u):
    got = trunc_cdf(x, 0.0, 1.0, l, u)
    assert np.isfinite(got)
    assert got == pytest.approx(mp_trunc_cdf(x, l, u), rel=1e-9, abs=1e-14)


def test_cdf_location_scale():
    assert trunc_cdf(3.0, 2.0, 4.0, 0.0, 5.0) == pytest.approx(mp_trunc_cdf(0.5, -1.0, 1.5), rel=1e-10)


def test_cdf_degenerate_and_invalid():
    with pytest.raises(DegenerateMassError):
        trunc_cdf(40.5, 0.0, 1.0, 40.0, 41.0)
    with pytest.raises(InvalidRegionError):
        trunc_cdf(0.0, 0.0, 1.0, 1.0, 1.0)


# sample_inside

def test_inside_median_untruncated():
    assert sample_inside(0.5, 0.0, 1.0, -INF, INF) == pytest.approx(0.0, abs=1e-15)


def test_inside_half_line_mean(rng):
    x = sample_inside(rng.random(100_000), 0.0, 1.0, 0.0, INF)
    assert np.all(x >= 0)
    ok, z = within_mc(x, MILLS0, k=3)
    assert ok, z


def test_inside_symmetric_mean(rng):
    x = sample_inside(rng.random(100_000), 0.0, 1.0, -1.3, 1.3)
    assert within_mc(x, 0.0, k=3)[0]


@pytest.mark.parametrize("l,u", [(-1.0, 1.0), (5.0, INF), (-INF, -12.0), (20.0, 20.5), (-3.0, 40.0)])
def test_inside_strictly_increasing(l, u):
    u01 = np.linspace(1e-6, 1 - 1e-6, 1000)
    x = sample_inside(u01, 0.0, 1.0, l, u)
    assert np.all(np.diff(x) > 0)
    assert np.all((x >= l) & (x <= u))


@pytest.mark.parametrize("l,u", [(8.0, INF), (-INF, -25.0), (30.0, 30.5)])
def test_inside_is_inverse_of_cdf(l, u):
    u01 = np.array([1e-13, 1e-6, 0.3, 0.9, 1 - 1e-9])
    x = sample_inside(u01, 0.0, 1.0, l, u)
    back = np.array([mp_trunc_cdf(v, l, u) for v in x])
    np.testing.assert_allclose(back, u01, rtol=1e-6, atol=1e-12)


# sample_outside

def test_outside_tail_choice_balanced(rng):
    x = sample_outside(rng, 0.0, 1.0, -1.96, 1.96, size=100_000)
    assert np.all((x <= -1.96) | (x >= 1.96))
    assert within_mc((x < 0).astype(float), 0.5, k=3)[0]


def test_outside_far_mean_right_tail(rng):
    x = sample_outside(rng, 5.0, 1.0, -1.0, 1.0, size=100_000)
    assert np.all(x >= 1.0)
    mean, _ = trunc_moments(5.0, 1.0, TruncRegion.outside(-1.0, 1.0))
    one_sided = 5.0 + stats.norm.pdf(-4.0) / stats.norm.sf(-4.0)
    mpmath.mp.dps = 40
    # both tails, the left one weighing about 1e-9
    wl, wr = mpmath.ncdf(-6), mpmath.ncdf(4)
    ml, mr = 5 - mpmath.npdf(-6) / wl, 5 + mpmath.npdf(-4) / wr
    assert mean == pytest.approx(float((wl * ml + wr * mr) / (wl + wr)), abs=1e-12)
    assert within_mc(x, one_sided, k=3)[0]


def test_outside_empty_left_tail(rng):
    x = sample_outside(rng, 0.0, 1.0, -INF, 0.0, size=10_000)
    assert np.all(x >= 0)


# trunc_moments

def test_moments_untruncated():
    assert trunc_moments(3.0, 4.0, TruncRegion.inside()) == (3.0, 4.0)


def test_moments_half_line():
    m, v = trunc_moments(0.0, 1.0, TruncRegion.inside(0.0, INF))
    assert m == pytest.approx(MILLS0, rel=1e-12)
    assert v == pytest.approx(1 - 2 / np.pi, rel=1e-12)
    assert (round(m, 4), round(v, 4)) == (0.7979, 0.3634)


def test_moments_outside_symmetric():
    assert trunc_moments(0.0, 1.0, TruncRegion.outside(-1.5, 1.5))[0] == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("mu,sigma2,region,pieces", [
    (0.3, 2.0, TruncRegion.inside(-1.0, 2.0), [(-1.0, 2.0)]),
    (1.0, 1.0, TruncRegion.outside(-1.65, 1.65), [(-30, -1.65), (1.65, 30)]),
    (-2.0, 0.5, TruncRegion.inside(0.5, INF), [(0.5, 20)]),
    (4.0, 1.0, TruncRegion.outside(-0.5, 0.2), [(-20, -0.5), (0.2, 20)]),
])
def test_moments_match_quadrature(mu, sigma2, region, pieces):
    m, v = trunc_moments(mu, sigma2, region)
    qm, qv = quad_moments(mu, sigma2, pieces)
    assert m == pytest.approx(qm, abs=1e-8)
    assert v == pytest.approx(qv, abs=1e-7)


def test_moments_far_tail_stable():
    m, v = trunc_moments(0.0, 1.0, TruncRegion.inside(-INF, -35.0))
    mpmath.mp.dps = 50
    r = mpmath.npdf(-35) / mpmath.ncdf(-35)
    assert m == pytest.approx(float(-r), rel=1e-12)
    assert v == pytest.approx(float(1 - r * (-35 + r)), rel=1e-6)


@pytest.mark.parametrize("region", [
    TruncRegion.outside(-1.96, 1.96), TruncRegion.inside(1.96, INF), TruncRegion.inside(-INF, 0.5),
    TruncRegion.outside(-0.3, 2.0),
])
def test_moment_mean_increasing_in_mu(region):
    means = [trunc_moments(mu, 1.0, region)[0] for mu in np.linspace(-8, 8, 161)]
    assert np.all(np.diff(means) > 0)


@pytest.mark.parametrize("region", [
    TruncRegion.inside(-0.5, 1.5), TruncRegion.outside(-1.0, 0.5), TruncRegion.inside(2.0, INF),
])
def test_draws_match_moments(rng, region):
    mu, sigma2 = 0.4, 1.7
    if region.kind == "inside":
        x = sample_inside(rng.random(100_000), mu, sigma2, region.lower, region.upper)
    else:
        x = sample_outside(rng, mu, sigma2, region.lower, region.upper, size=100_000)
    assert np.all(region.contains(x))
    m, v = trunc_moments(mu, sigma2, region)
    assert within_mc(x, m, k=4)[0]
    n = x.size
    v_se = np.sqrt(np.var((x - m) ** 2, ddof=1) / n)
    assert abs(np.var(x) - v) < 4 * v_se


# conditionals

def test_conditionals_identity():
    cc = precompute_conditionals(np.eye(4))
    assert np.all(cc.weights == 0)
    np.testing.assert_allclose(cc.cond_var, 1.0)


def test_conditionals_two_by_two():
    cc = precompute_conditionals([[1.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(cc.weights_offdiag(), [[0.5], [0.5]])
    np.testing.assert_allclose(cc.cond_var, 0.75)


def test_conditionals_precision_identity(rng):
    A = rng.standard_normal((5, 5))
    S = A @ A.T + 0.5 * np.eye(5)
    cc = precompute_conditionals(S)
    np.testing.assert_allclose(cc.cond_var, 1 / np.diag(np.linalg.inv(S)), rtol=1e-10)
    assert np.all(cc.cond_var <= np.diag(S))
    for j in range(5):
        rest = [k for k in range(5) if k != j]
        w = np.linalg.solve(S[np.ix_(rest, rest)], S[rest, j])
        np.testing.assert_allclose(cc.weights_offdiag()[j], w, rtol=1e-9, atol=1e-12)


def test_conditionals_singular():
    from postsel.exceptions import SingularCovarianceError
    with pytest.raises(SingularCovarianceError):
        precompute_conditionals([[1.0, 1.0], [1.0, 1.0 + 1e-15]])


# Gibbs sampler

def test_no_truncation_recovers_normal(rng):
    mu = np.array([1.0, -2.0, 0.5])
    S = np.array([[1.0, 0.6, 0.2], [0.6, 2.0, -0.3], [0.2, -0.3, 0.5]])
    spec = TmvnSpec(mu, S, [TruncRegion.inside()] * 3)
    x = sample_tmvn(spec, mu, 20_000, burn_in=1000, rng=rng)
    assert within_mc(x, mu, batch=True)[0]
    np.testing.assert_allclose(np.cov(x, rowvar=False), S, atol=0.08)


def test_identity_cov_moments(rng):
    spec = TmvnSpec(np.zeros(2), np.eye(2), [TruncRegion.inside()] * 2)
    x = sample_tmvn(spec, np.zeros(2), 10_000, rng=rng)
    assert within_mc(x, 0.0, k=3)[0]
    assert np.all(np.abs(x.var(axis=0) - 1) < 0.06)


def test_univariate_cycle_is_exact_draw(rng):
    region = TruncRegion.inside(0.5, 3.0)
    spec = TmvnSpec([0.0], [[2.0]], [region])
    x = sample_tmvn(spec, [1.0], 20_000, rng=rng)[:, 0]
    F = lambda t: trunc_cdf(t, 0.0, 2.0, 0.5, 3.0)  # noqa: E731
    assert stats.kstest(x, F).pvalue > 1e-3


def test_single_sample_equals_one_cycle():
    spec = TmvnSpec([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], [TruncRegion.outside(-1.65, 1.65)] * 2)
    init = np.array([2.0, -2.0])
    cc = precompute_conditionals(spec.sigma)
    a = gibbs_cycle(init, spec, cc, np.random.default_rng(7))
    b = sample_tmvn(spec, init, 1, rng=np.random.default_rng(7))
    np.testing.assert_array_equal(a, b[0])
    assert sample_tmvn(spec, init, 0).shape == (0, 2)


def test_invalid_init():
    spec = TmvnSpec([0.0], [[1.0]], [TruncRegion.outside(-1.0, 1.0)])
    with pytest.raises(InvalidInitError):
        sample_tmvn(spec, [0.0], 10)


def test_gibbs_degenerate_counted_not_raised():
    spec = TmvnSpec([0.0, 0.0], np.eye(2), [TruncRegion.inside(50.0, 51.0), TruncRegion.inside()])
    chain = GibbsChain(spec, [50.5, 0.0])
    chain.run(5, np.random.default_rng(0))
    assert chain.degenerate[0] == 5 and chain.state[0] == 50.5
    with pytest.raises(DegenerateMassError) as info:
        gibbs_cycle(np.array([50.5, 0.0]), spec, chain.coeffs, np.random.default_rng(0))
    assert info.value.coordinate == 0


def grid_conditional_mean(mu, S, regions, step=0.01, half=8.0):
    sd = np.sqrt(np.diag(S))
    axes = [np.arange(m - half * s, m + half * s + step / 2, step) for m, s in zip(mu, sd)]
    g1, g2 = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g1, g2], axis=-1)
    dens = stats.multivariate_normal(mu, S).pdf(pts)
    keep = regions[0].contains(g1) & regions[1].contains(g2)
    w = dens * keep
    return np.array([(w * g1).sum(), (w * g2).sum()]) / w.sum()


@pytest.mark.parametrize("mu,regions", [
    ((0.0, 0.0), [TruncRegion.outside(-1.65, 1.65)] * 2),
    ((1.45, 0.8), [TruncRegion.inside(-1.65, 1.65), TruncRegion.outside(-1.65, 1.65)]),
    ((-0.5, 1.0), [TruncRegion.inside(0.0, INF), TruncRegion.outside(-1.0, 2.0)]),
])
def test_two_dim_chain_matches_quadrature(mu, regions):
    mu = np.array(mu)
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    spec = TmvnSpec(mu, S, regions)
    x = sample_tmvn(spec, feasible_point(spec), 50_000, burn_in=1000,
                    rng=np.random.default_rng(3))
    assert np.all(spec.contains(x))
    ok, z = within_mc(x, grid_conditional_mean(mu, S, regions), batch=True)
    assert ok, z


def test_rows_satisfy_regions(rng):
    spec = TmvnSpec(np.zeros(2), [[1.0, 0.5], [0.5, 1.0]], [TruncRegion.outside(-1.65, 1.65)] * 2)
    x = sample_tmvn(spec, [2.0, 2.0], 5000, burn_in=10, thin=3, rng=rng)
    assert x.shape == (5000, 2) and np.all(spec.contains(x))


def test_feasible_point_in_support():
    spec = TmvnSpec([0.2, 5.0, -3.0], np.eye(3),
                    [TruncRegion.outside(-1.0, 2.0), TruncRegion.inside(-1.0, 1.0),
                     TruncRegion.outside(-1.0, 1.0)])
    x = feasible_point(spec)
    assert spec.contains(x)
    np.testing.assert_allclose(x, [-1.0, 1.0, -3.0])


def test_spec_validation():
    from postsel.exceptions import SingularCovarianceError
    with pytest.raises(SingularCovarianceError):
        TmvnSpec([0, 0], [[1.0, 0.2], [0.0, 1.0]], [TruncRegion.inside()] * 2)
    with pytest.raises(SingularCovarianceError):
        TmvnSpec([0, 0], [[1.0, 2.0], [2.0, 1.0]], [TruncRegion.inside()] * 2)
    with pytest.raises(ValueError):
        TmvnSpec([0, 0], np.eye(2), [TruncRegion.inside()])
