import math

import numpy as np
import pytest
from scipy import stats

from irreghist.densities import (
    _peak_criterion,
    catalog,
    get_density,
    mixture,
    peak_tolerance,
    sample,
    tolerances,
)
from irreghist.quadrature import integrate

EXTRA = ["mix:0.5*N(0,0.1)+0.5*N(5,1)", "step:0,0.5,1|1.5,0.5", "beta_1_7"]
ALL_IDS = [d.name for d in catalog()] + EXTRA


@pytest.mark.parametrize("name", ALL_IDS)
def test_quantile_inverts_cdf(name):
    d = get_density(name)
    q = np.linspace(0.001, 0.999, 101)
    x = np.asarray(d.quantile(q), dtype=float)
    np.testing.assert_allclose(d.cdf(x), q, atol=1e-9)


@pytest.mark.parametrize("name", ALL_IDS)
def test_sampler_matches_cdf(name):
    d = get_density(name)
    x = d.sample(10_000, 123)
    assert stats.kstest(x, d.cdf).statistic < 0.05


@pytest.mark.parametrize("name", ALL_IDS)
def test_pdf_is_cdf_derivative(name):
    d = get_density(name)
    lo, hi = d.finite_support
    xs = np.asarray(d.quantile(np.linspace(0.02, 0.98, 41)), dtype=float)
    h = 1e-6
    keep = np.ones(xs.size, bool)
    for b in list(d.breakpoints) + [m.location for m in d.modes if m.infinite]:
        keep &= np.abs(xs - b) > 1e-3
    xs = xs[keep]
    fd = (d.cdf(xs + h) - d.cdf(xs - h)) / (2 * h)
    np.testing.assert_allclose(fd, d.pdf(xs), atol=1e-5, rtol=1e-5)
    assert np.all(d.pdf(xs) >= 0)


@pytest.mark.parametrize("name", ALL_IDS)
def test_tolerance_regions_disjoint_and_inside(name):
    d = get_density(name)
    tols = tolerances(d)
    lo, hi = d.support
    ivs = sorted(t.interval for t in tols)
    for (a0, a1), (b0, b1) in zip(ivs, ivs[1:]):
        assert a1 <= b0
    for t in tols:
        a, b = t.interval
        if t.mode.infinite:
            assert a >= lo and b <= hi
        else:
            assert t.delta > 0 and lo <= t.mode.location <= hi


def test_boundary_peak_regions():
    arcsine = tolerances("beta_0.5_0.5")
    q = stats.beta(0.5, 0.5).ppf
    assert arcsine[0].region == pytest.approx((0.0, q(0.1)))
    assert arcsine[1].region == pytest.approx((q(0.9), 1.0))
    chi = tolerances("chisq1")
    assert len(chi) == 1 and chi[0].region == pytest.approx((0.0, stats.chi2(1).ppf(0.1)))


def test_named_modes():
    assert [m.location for m in get_density("normal").modes] == [0.0]
    assert get_density("gamma_3_3").modes[0].location == pytest.approx(2 / 3)
    assert get_density("uniform").modes == ()
    bimodal = get_density("mix_asym_bimodal")
    assert len(bimodal.modes) == 2
    assert len(get_density("mix_twoscale5").modes) == 5


def test_mixture_integrates_to_one():
    for spec in ["mix:0.5*N(0,0.1)+0.5*N(5,1)", "mix_twoscale5", "mix_asym_bimodal"]:
        d = get_density(spec)
        lo, hi = d.finite_support
        edges = np.unique(np.concatenate([[lo, hi], d.resolution_points]))
        total = integrate(d.pdf, edges) + d.cdf(lo) + (1 - d.cdf(hi))
        assert total == pytest.approx(1.0, abs=1e-10)


def test_dsl_errors():
    with pytest.raises(ValueError):
        get_density("mix:0.5*Q(0,1)")
    with pytest.raises(ValueError):
        get_density("step:0,1|1,2")
    with pytest.raises(KeyError):
        get_density("cauchy")


def test_step_density():
    d = get_density("step:0,0.5,1|1.5,0.5")
    assert d.pdf(0.25) == pytest.approx(1.5) and d.pdf(0.75) == pytest.approx(0.5)
    assert [m.location for m in d.modes] == [0.25]


def test_flat_density_has_no_peak_width():
    d = get_density("uniform")
    from irreghist.densities import Mode, TestDensity

    fake = TestDensity(d.name, d.pdf, d.cdf, d.quantile, d.sampler, d.support, d.breakpoints, (Mode(0.5),))
    with pytest.raises(ValueError):
        peak_tolerance(fake, 0)


@pytest.mark.parametrize("gamma", [0.05, 0.2, 2 / 7, 0.4])
def test_triangular_criterion_closed_form(gamma):
    # f = 4x on [0, 1/2]: on the window the mean is 2(1 - gamma), the absolute
    # deviation integrates to 2 gamma^2 and the mass is 4 gamma (1 - gamma)
    d = get_density("triangular")
    assert _peak_criterion(d, 0.5, gamma) == pytest.approx(gamma / (2 * (1 - gamma)), abs=1e-12)


def test_triangular_tolerance():
    # criterion gamma / (2 (1 - gamma)) crosses 0.2 at gamma = 2/7
    assert peak_tolerance(get_density("triangular"), 0) == pytest.approx(1 / 7, abs=1e-6)


def test_sharper_peak_has_smaller_tolerance():
    narrow = mixture([1.0], [0.0], [0.1])
    wide = mixture([1.0], [0.0], [1.0])
    assert peak_tolerance(narrow, 0) < peak_tolerance(wide, 0)
    assert peak_tolerance(wide, 0) == pytest.approx(10 * peak_tolerance(narrow, 0), rel=1e-5)


def test_sampling_contract():
    u = sample("uniform", 1000, 5)
    assert u.min() >= 0 and u.max() <= 1
    np.testing.assert_array_equal(sample("t3", 50, 9), sample("t3", 50, 9))
    x = sample("gamma_3_3", 100_000, 1)
    se = math.sqrt(3 / 9) / math.sqrt(x.size)
    assert abs(x.mean() - 1.0) < 3 * se
