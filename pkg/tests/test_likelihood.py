import math
import warnings

import numpy as np
import pytest
from scipy import integrate, special, stats

from intervalgen.distributions import Gaussian, Uniform
from intervalgen.intervals import AggregationSpec, Interval
from intervalgen.likelihood import (
    DegenerateObservationWarning,
    DescriptiveModel,
    HierarchicalModel,
    IIDGenerativeModel,
    UniformMixtureModel,
    containment_cdf_iid,
    dataset_loglik,
    hier_uniform_minmax_integrand,
    loglik_array,
    loglik_descriptive,
    loglik_hier_general,
    loglik_hier_uniform_minmax,
    loglik_minmax_iid,
    loglik_order_iid,
)
from intervalgen.quadrature import gauss_laguerre_rule


def _iid(fam, l, u, m):
    return IIDGenerativeModel(fam, AggregationSpec(l, u, m))


# ---------------------------------------------------------------------------
# i.i.d. generative


def test_order_uniform_m2_constant():
    model = _iid(Uniform(0, 1), 1, 2, 2)
    assert loglik_order_iid(model, Interval(0.3, 0.8)) == pytest.approx(math.log(2))
    assert loglik_minmax_iid(model, (0.01, 0.97)) == pytest.approx(math.log(2))


def test_minmax_uniform_m3():
    model = _iid(Uniform(0, 1), 1, 3, 3)
    assert loglik_minmax_iid(model, (0.2, 0.7)) == pytest.approx(math.log(3.0), abs=1e-14)


def test_minmax_uniform_m3_monte_carlo_density():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(10**6, 3))
    lo, hi = x.min(1), x.max(1)
    h = 0.02
    frac = np.mean((abs(lo - 0.2) < h / 2) & (abs(hi - 0.7) < h / 2))
    assert frac / h**2 == pytest.approx(3.0, rel=0.1)


def test_reversed_and_degenerate_obs():
    model = _iid(Gaussian(0, 1), 2, 4, 5)
    assert loglik_order_iid(model, (1.0, 0.5)) == -math.inf
    with pytest.warns(DegenerateObservationWarning):
        assert loglik_order_iid(model, (0.5, 0.5)) == -math.inf
    with pytest.warns(DegenerateObservationWarning):
        assert loglik_descriptive(DescriptiveModel(), (0.5, 0.5)) == -math.inf
    assert loglik_descriptive(DescriptiveModel(), (2, 1)) == -math.inf


def test_outside_support_is_minus_inf():
    model = _iid(Uniform(0, 1), 1, 3, 3)
    assert loglik_minmax_iid(model, (-0.5, 0.5)) == -math.inf


def test_order_equals_minmax_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = int(rng.integers(2, 60))
        if rng.random() < 0.5:
            fam = Gaussian(rng.normal(), rng.uniform(0.1, 4))
            lo, hi = np.sort(rng.normal(fam.mean, fam.sd, 2))
        else:
            a = rng.normal()
            fam = Uniform(a, a + rng.uniform(0.1, 3))
            lo, hi = np.sort(rng.uniform(fam.a, fam.b, 2))
        model = _iid(fam, 1, m, m)
        assert loglik_order_iid(model, (lo, hi)) == pytest.approx(loglik_minmax_iid(model, (lo, hi)), abs=1e-12)


def test_order_density_closed_form():
    # l=2, u=4, m=5 against the direct multinomial expression
    fam = Gaussian(0.3, 1.7)
    lo, hi = -0.4, 1.1
    F = stats.norm(0.3, math.sqrt(1.7))
    expect = (
        120 / (1 * 1 * 1)
        * F.cdf(lo)
        * (F.cdf(hi) - F.cdf(lo))
        * F.sf(hi)
        * F.pdf(lo)
        * F.pdf(hi)
    )
    assert loglik_order_iid(_iid(fam, 2, 4, 5), (lo, hi)) == pytest.approx(math.log(expect), rel=1e-12)


def test_large_m_stays_finite():
    model = _iid(Gaussian(0, 1), 1, 2000, 2000)
    val = loglik_minmax_iid(model, (-3.5, 3.6))
    assert np.isfinite(val)


def test_per_observation_m_override():
    model = _iid(Uniform(0, 1), 1, 2, 2)
    assert loglik_minmax_iid(model, (0.2, 0.7), m=3) == pytest.approx(math.log(3.0))


# ---------------------------------------------------------------------------
# containment distribution function


def test_containment_examples():
    model = _iid(Uniform(0, 1), 1, 3, 3)
    assert containment_cdf_iid(model, (0.2, 0.7)) == pytest.approx(0.125)
    g = _iid(Gaussian(0, 1), 2, 4, 5)
    assert containment_cdf_iid(g, (-math.inf, math.inf)) == pytest.approx(1.0, abs=1e-15)
    assert containment_cdf_iid(g, (0.3, 0.3)) == 0.0
    assert containment_cdf_iid(g, (0.5, 0.3)) == 0.0


def test_containment_monte_carlo_inner_order():
    g = _iid(Gaussian(0, 1), 2, 4, 5)
    rng = np.random.default_rng(123)
    x = np.sort(rng.standard_normal((10**6, 5)), axis=1)
    hits = (x[:, 1] >= -1) & (x[:, 3] <= 1)
    p_hat = hits.mean()
    se = math.sqrt(p_hat * (1 - p_hat) / len(hits))
    assert abs(containment_cdf_iid(g, (-1, 1)) - p_hat) < 3 * se


@pytest.mark.parametrize(
    "fam,l,u,m",
    [
        (Uniform(-1, 2), 1, 4, 4),
        (Gaussian(0.5, 2.0), 1, 6, 6),
        (Gaussian(0, 1), 2, 4, 5),
        (Gaussian(-1, 0.5), 3, 7, 9),
    ],
)
def test_density_is_mixed_derivative_of_containment(fam, l, u, m):
    model = _iid(fam, l, u, m)
    rng = np.random.default_rng(l + 10 * m)
    qs = np.sort(rng.uniform(0.1, 0.9, size=(20, 2)), axis=1)
    qs = qs[(qs[:, 1] - qs[:, 0]) > 0.08]
    for p_lo, p_hi in qs:
        lo, hi = float(fam.quantile(p_lo)), float(fam.quantile(p_hi))
        h = 1e-3 * (hi - lo)
        F = lambda a, b: containment_cdf_iid(model, (a, b))  # noqa: E731
        mixed = (F(lo + h, hi + h) - F(lo + h, hi - h) - F(lo - h, hi + h) + F(lo - h, hi - h)) / (4 * h * h)
        dens = math.exp(loglik_order_iid(model, (lo, hi)))
        assert -mixed == pytest.approx(dens, rel=1e-4)


def test_endpoint_margins_match_containment():
    """Lower endpoint cdf is 1 - C(x, +inf); upper endpoint cdf is C(-inf, x)."""
    model = _iid(Gaussian(0, 1), 1, 5, 5)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((20000, 5))
    lo, hi = x.min(1), x.max(1)
    cdf_lo = np.vectorize(lambda v: 1 - containment_cdf_iid(model, (v, math.inf)))
    cdf_hi = np.vectorize(lambda v: containment_cdf_iid(model, (-math.inf, v)))
    assert stats.kstest(lo, cdf_lo).pvalue > 0.01
    assert stats.kstest(hi, cdf_hi).pvalue > 0.01


def test_endpoints_concentrate_with_m():
    rng = np.random.default_rng(4)
    spreads = []
    for m in (7, 39, 199):
        l, u = (m + 1) // 4, 3 * (m + 1) // 4
        x = np.sort(rng.standard_normal((4000, m)), axis=1)
        spreads.append(x[:, l - 1].var() + x[:, u - 1].var())
    assert spreads[0] > spreads[1] > spreads[2]


# ---------------------------------------------------------------------------
# descriptive model


def test_descriptive_reference_value():
    assert loglik_descriptive(DescriptiveModel(), Interval(-1, 1)) == pytest.approx(-math.log(4 * math.pi), abs=1e-12)
    assert loglik_descriptive(DescriptiveModel(), Interval(-1, 1)) == pytest.approx(-2.5310, abs=1e-4)


def test_descriptive_correlation_option():
    m0 = DescriptiveModel(0.1, -0.2, 1.5, 0.7)
    m1 = DescriptiveModel(0.1, -0.2, 1.5, 0.7, rho=0.4)
    c, t = 0.6, 0.3
    obs = (c - math.exp(t), c + math.exp(t))
    ref = stats.multivariate_normal([0.1, -0.2], [[1.5, 0.4 * math.sqrt(1.5 * 0.7)], [0.4 * math.sqrt(1.5 * 0.7), 0.7]])
    assert loglik_descriptive(m1, obs) == pytest.approx(ref.logpdf([c, t]) + math.log(0.5) - t, rel=1e-12)
    assert loglik_descriptive(m0, obs) != loglik_descriptive(m1, obs)
    with pytest.raises(ValueError):
        DescriptiveModel(rho=1.0)


def _normalization(logpdf, lo_range, w_max=np.inf):
    val, _ = integrate.dblquad(
        lambda w, lo: math.exp(logpdf(lo, lo + w)) if w > 0 else 0.0,
        *lo_range,
        0.0,
        w_max,
        epsabs=1e-7,
        epsrel=1e-7,
    )
    return val


def test_descriptive_normalises():
    model = DescriptiveModel(0.3, -0.5, 0.8, 0.4)
    assert _normalization(lambda a, b: loglik_descriptive(model, (a, b)), (-np.inf, np.inf)) == pytest.approx(1, abs=1e-3)


# ---------------------------------------------------------------------------
# uniform mixture (one-dimensional reduction)


def _mixture_oracle(lo, hi, m, mc, vc, mt, vt):
    """Direct 2-D integral over (tau, c) of the uniform min/max density times the normal prior."""
    d = hi - lo

    def inner(c, tau):
        log_local = math.log(m * (m - 1)) + (m - 2) * math.log(d) - m * (math.log(2) + tau)
        return math.exp(
            log_local + stats.norm.logpdf(c, mc, math.sqrt(vc)) + stats.norm.logpdf(tau, mt, math.sqrt(vt))
        )

    t0 = math.log(d / 2)
    val, _ = integrate.dblquad(
        inner, t0, mt + 14 * math.sqrt(vt), lambda t: hi - math.exp(t), lambda t: lo + math.exp(t), epsabs=1e-14, epsrel=1e-12
    )
    return val


@pytest.mark.parametrize("m", [2, 5, 10, 25, 50, 100])
def test_laguerre_reduction_matches_oracle(m):
    oracle = _mixture_oracle(-1.0, 1.0, m, 0.0, 1.0, 0.0, 1.0)
    val = math.exp(loglik_hier_uniform_minmax((0.0, 1.0, 0.0, 1.0), m, Interval(-1, 1)))
    assert val == pytest.approx(oracle, rel=1e-5)


@pytest.mark.parametrize("m,alpha,obs", [(3, (0.3, 1.5, 0.1, 0.7), (-0.2, 1.4)), (12, (-1.0, 0.5, -0.5, 0.3), (-2.0, -0.6))])
def test_laguerre_reduction_other_settings(m, alpha, obs):
    oracle = _mixture_oracle(*obs, m, *alpha)
    rule = gauss_laguerre_rule(100)
    assert math.exp(loglik_hier_uniform_minmax(alpha, m, obs, rule)) == pytest.approx(oracle, rel=1e-7)


def test_integrand_integrates_to_density():
    alpha = (0.0, 1.0, 0.0, 1.0)
    for m in (2, 10, 50):
        val, _ = integrate.quad(lambda z: hier_uniform_minmax_integrand(z, -1.0, 1.0, m, *alpha), 0, np.inf, epsabs=1e-13)
        assert math.log(val) == pytest.approx(loglik_hier_uniform_minmax(alpha, m, (-1, 1), gauss_laguerre_rule(150)), abs=1e-8)


def test_large_m_approaches_descriptive():
    alpha = (0.0, 1.0, 0.0, 1.0)
    val = loglik_hier_uniform_minmax(alpha, 10**4, (-1, 1))
    assert val == pytest.approx(loglik_descriptive(UniformMixtureModel(*alpha).limit(), (-1, 1)), abs=1e-3)


def test_mixture_reversed_and_m_checks():
    assert loglik_hier_uniform_minmax((0, 1, 0, 1), 5, (1, -1)) == -math.inf
    with pytest.raises(ValueError):
        loglik_hier_uniform_minmax((0, 1, 0, 1), 1, (-1, 1))
    with pytest.raises(ValueError):
        loglik_hier_uniform_minmax((0, 1, 0, 1), 5, (-1, 1), rule=gauss_laguerre_rule(3).__class__("hermite", np.zeros(1), np.ones(1)))


def test_uniform_mixture_normalises():
    alpha = (0.2, 0.6, -0.3, 0.4)
    val = _normalization(lambda a, b: loglik_hier_uniform_minmax(alpha, 6, (a, b)), (-np.inf, np.inf))
    assert val == pytest.approx(1.0, abs=1e-3)


# ---------------------------------------------------------------------------
# general hierarchical mixture


@pytest.mark.parametrize("m", [5, 30])
def test_general_adaptive_matches_reduction(m):
    alpha = (0.3, 1.5, 0.1, 0.7)
    model = HierarchicalModel("uniform", (alpha[0], alpha[2]), (alpha[1], alpha[3]))
    obs = (-0.5, 1.2)
    a = loglik_hier_general(model, obs, m, method="adaptive")
    b = loglik_hier_uniform_minmax(alpha, m, obs)
    assert a == pytest.approx(b, abs=1e-6)


def test_general_adaptive_matches_reduction_m2():
    # at m = 2 the reduction needs more Laguerre nodes to reach 1e-6
    alpha = (0.3, 1.5, 0.1, 0.7)
    model = HierarchicalModel("uniform", (alpha[0], alpha[2]), (alpha[1], alpha[3]))
    a = loglik_hier_general(model, (-0.5, 1.2), 2, method="adaptive")
    b = loglik_hier_uniform_minmax(alpha, 2, (-0.5, 1.2), gauss_laguerre_rule(150))
    assert a == pytest.approx(b, abs=1e-6)


@pytest.mark.parametrize("local,theta", [("gaussian", (0.4, math.log(1.7))), ("uniform", (0.2, math.log(1.3)))])
def test_point_mass_mixture_is_iid(local, theta):
    model = HierarchicalModel(local, theta, (1e-16, 1e-16), l=2, u=5)
    fam = Gaussian(theta[0], math.exp(theta[1])) if local == "gaussian" else Uniform.from_centre_logrange(*theta)
    iid = _iid(fam, 2, 5, 6)
    obs = (-0.3, 0.9)
    assert loglik_hier_general(model, obs, 6) == pytest.approx(loglik_order_iid(iid, obs), abs=1e-4)


def test_gaussian_local_monte_carlo_mixture():
    model = HierarchicalModel("gaussian", (0.2, -0.3), (0.5, 0.4), corr=0.3)
    obs, m = (-1.2, 1.5), 10
    rng = np.random.default_rng(77)
    theta = np.asarray(model.mean) + rng.standard_normal((10**6, 2)) @ model.cholesky().T
    fam = Gaussian(theta[:, 0], np.exp(theta[:, 1]))
    from intervalgen.likelihood import log_order_density

    dens = np.exp(log_order_density(fam, obs[0], obs[1], m, 1, m))
    mean, se = dens.mean(), dens.std() / 1000
    grid_val = math.exp(loglik_hier_general(model, obs, m, grid=model.default_grid(60)))
    adaptive = math.exp(loglik_hier_general(model, obs, m, method="adaptive"))
    assert abs(grid_val - mean) < 3 * se
    assert adaptive == pytest.approx(grid_val, rel=1e-6)


def test_gaussian_local_normalises():
    model = HierarchicalModel("gaussian", (0.0, -0.5), (0.3, 0.2), corr=0.4)
    grid = model.default_grid(30)
    val = _normalization(lambda a, b: loglik_hier_general(model, (a, b), 4, grid=grid), (-12, 12), 20)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_unknown_method():
    with pytest.raises(ValueError):
        loglik_hier_general(HierarchicalModel("gaussian"), (0, 1), 4, method="mc")


# ---------------------------------------------------------------------------
# dataset sums


def _sim_intervals(n, seed, m=5):
    rng = np.random.default_rng(seed)
    c, t = rng.normal(size=n), rng.normal(size=n)
    return [((ci - math.exp(ti), ci + math.exp(ti)), m) for ci, ti in zip(c, t)]


def test_dataset_single_and_duplicate():
    model = UniformMixtureModel(0.1, 1.2, -0.2, 0.8)
    obs = ((-0.4, 0.9), 7)
    single = dataset_loglik(model, [obs])
    assert single == loglik_hier_uniform_minmax(model.alpha, 7, obs[0])
    assert dataset_loglik(model, [obs, obs]) == 2 * single


def test_dataset_thread_count_invariant():
    data = _sim_intervals(1000, 2)
    for model in (DescriptiveModel(), UniformMixtureModel(), HierarchicalModel("gaussian", (0, 0), (1, 1))):
        base = dataset_loglik(model, data, workers=1)
        for w in (2, 3, 8):
            assert dataset_loglik(model, data, workers=w) == base


def test_dataset_errors_and_minus_inf():
    with pytest.raises(ValueError):
        dataset_loglik(DescriptiveModel(), [])
    data = _sim_intervals(10, 3) + [((1.0, 0.5), 5)]
    assert dataset_loglik(UniformMixtureModel(), data) == -math.inf
    assert dataset_loglik(DescriptiveModel(), data) == -math.inf


def test_loglik_array_matches_scalar_paths():
    data = _sim_intervals(20, 5, m=8)
    model = _iid(Gaussian(0.1, 2.0), 1, 8, 8)
    arr = loglik_array(model, data)
    np.testing.assert_array_equal(arr, [loglik_order_iid(model, o, m) for o, m in data])
    hm = HierarchicalModel("gaussian", (0, 0.3), (1, 0.5))
    arr = loglik_array(hm, data)
    np.testing.assert_allclose(arr, [loglik_hier_general(hm, o, m) for o, m in data], rtol=1e-13)
    with pytest.raises(TypeError):
        loglik_array(object(), data)


def test_degenerate_warning_in_dataset():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        val = dataset_loglik(DescriptiveModel(), [((0.5, 0.5), 3)])
    assert val == -math.inf
    assert any(issubclass(w.category, DegenerateObservationWarning) for w in rec)
