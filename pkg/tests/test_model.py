import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irreghist import search
from irreghist.grid import SupportTransform, build_mesh
from irreghist.model import (
    HistogramEstimate,
    KPrior,
    ModelError,
    Partition,
    PriorConfig,
    enumerate_partitions,
    evaluate_density,
    log_posterior_unnorm,
    log_psi,
    model_average_density,
    partition_weights,
    phi0,
    posterior_mean_theta,
)
from irreghist.quadrature import integrate


def unit_mesh(z, k, kind="regular"):
    return build_mesh(np.asarray(z, dtype=float), kind, k)


def direct_log_posterior(mesh, a, log_pk, part):
    """Unnormalized log posterior written out term by term with math.lgamma."""
    k_n = mesh.size
    k = len(part) - 1
    out = log_pk[k - 1] + math.lgamma(a) - math.lgamma(a + mesh.n)
    out -= math.lgamma(k_n) - math.lgamma(k) - math.lgamma(k_n - k + 1)
    for i, j in zip(part, part[1:]):
        w = mesh.cuts[j] - mesh.cuts[i]
        lower = 0 if i == 0 else mesh.prefix_counts[i]
        cnt = int(mesh.prefix_counts[j] - lower)
        out += math.lgamma(a * w + cnt) - math.lgamma(a * w) - cnt * math.log(w)
    return out


def test_phi0_empty_interval_is_zero():
    mesh = unit_mesh([0.9, 0.95], 4)
    assert phi0(mesh, PriorConfig(5.0), 0, 2) == 0.0


def test_phi0_half_interval_value():
    z = [0.05 * i for i in range(1, 8)] + [0.7, 0.8, 0.9]
    mesh = unit_mesh(z, 2)
    assert mesh.count(0, 1) == 7
    # lgamma(9.5) - lgamma(2.5) - 7 log(0.5), evaluated independently
    assert phi0(mesh, PriorConfig(5.0), 0, 1) == pytest.approx(16.256680814243964, abs=1e-12)


def test_phi0_whole_interval():
    z = np.random.default_rng(1).uniform(size=37)
    mesh = unit_mesh(z, 5)
    val = phi0(mesh, PriorConfig(2.5), 0, mesh.size)
    assert val == pytest.approx(math.lgamma(2.5 + 37) - math.lgamma(2.5), abs=1e-10)


def test_phi0_rejects_zero_prior_mass():
    prior = PriorConfig(5.0, g0_cdf=lambda c: np.clip(2 * np.asarray(c), 0, 1))
    mesh = unit_mesh([0.1, 0.7], 2)
    with pytest.raises(ModelError):
        phi0(mesh, prior, 1, 2)


def test_log_psi_values():
    prior = PriorConfig(5.0)
    assert log_psi(prior, 3, 10, 5) == pytest.approx(-25.414364734052892, abs=1e-12)
    one = log_psi(prior, 1, 10, 5)
    assert one == pytest.approx(math.log(1 / 5) + math.lgamma(5) - math.lgamma(15), abs=1e-12)
    assert log_psi(prior, 5, 10, 5) == pytest.approx(one, abs=1e-12)
    with pytest.raises(ModelError):
        log_psi(prior, 6, 10, 5)


@pytest.mark.parametrize("spec", ["uniform", "power:1", "power(2)", "poisson:1"])
def test_k_prior_normalized(spec):
    lp = KPrior.parse(spec).log_pmf(17)
    assert math.fsum(np.exp(lp)) == pytest.approx(1.0, abs=1e-14)


def test_k_prior_shapes():
    assert np.all(np.diff(KPrior.parse("power:2").log_pmf(10)) < 0)
    lp = KPrior.parse("poisson:1").log_pmf(5)
    w = np.array([1 / math.factorial(k) for k in range(1, 6)])
    np.testing.assert_allclose(np.exp(lp), w / w.sum(), rtol=1e-13)
    with pytest.raises(ModelError):
        KPrior.parse("geometric:0.5")


def test_single_bin_score_is_log_prior_of_one_bin():
    z = np.random.default_rng(3).beta(2, 5, size=123)
    mesh = unit_mesh(z, 9, "quantile")
    for spec in ["uniform", "poisson:1"]:
        prior = PriorConfig(0.7, spec)
        score = log_posterior_unnorm(mesh, prior, Partition((0, mesh.size)))
        assert score == pytest.approx(prior.log_pk(1, mesh.size), abs=1e-10)


def test_score_ranking_matches_normalized_posterior():
    z = np.random.default_rng(5).uniform(size=20)
    mesh = unit_mesh(z, 6)
    prior = PriorConfig(5.0)
    parts, weights = partition_weights(mesh, prior)
    assert len(parts) == 32
    log_pk = prior.k_prior.log_pmf(6)
    direct = np.array([direct_log_posterior(mesh, 5.0, log_pk, p.cut_indices) for p in parts])
    direct_w = np.exp(direct - direct.max())
    direct_w /= direct_w.sum()
    np.testing.assert_allclose(weights, direct_w, rtol=1e-10)
    scores = np.array([log_posterior_unnorm(mesh, prior, p) for p in parts])
    np.testing.assert_allclose(scores, direct, rtol=0, atol=1e-9)
    gap = direct[:, None] - direct[None, :]
    clear = np.abs(gap) > 1e-9
    assert np.all(np.sign(scores[:, None] - scores[None, :])[clear] == np.sign(gap)[clear])


@pytest.mark.parametrize("k_n", [4, 6, 8])
def test_splitting_an_empty_region(k_n):
    # all data in the first cell; splitting the empty remainder keeps phi and
    # costs the change in the binomial coefficient under a uniform k-prior
    mesh = unit_mesh(np.full(10, 0.5 / k_n), k_n)
    prior = PriorConfig(5.0)
    for k in range(2, k_n):
        coarse = Partition(tuple(range(k)) + (k_n,))
        fine = Partition(tuple(range(k + 1)) + (k_n,))
        phi_c = sum(phi0(mesh, prior, i, j) for i, j in zip(coarse.cut_indices, coarse.cut_indices[1:]))
        phi_f = sum(phi0(mesh, prior, i, j) for i, j in zip(fine.cut_indices, fine.cut_indices[1:]))
        assert phi_f == pytest.approx(phi_c, abs=1e-12)
        binom_up = math.comb(k_n - 1, k) > math.comb(k_n - 1, k - 1)
        delta = log_psi(prior, k + 1, mesh.n, k_n) - log_psi(prior, k, mesh.n, k_n)
        assert (delta < 0) == binom_up


def test_posterior_mean_examples():
    z = [0.1] * 7 + [0.9] * 3
    mesh = unit_mesh(z, 2)
    theta = posterior_mean_theta(mesh, PriorConfig(5.0), Partition((0, 1, 2)))
    np.testing.assert_allclose(theta, [9.5 / 15, 5.5 / 15], rtol=1e-15)

    empty = build_mesh(np.array([]), "regular", 4)
    theta0 = posterior_mean_theta(empty, PriorConfig(5.0), Partition((0, 1, 4)))
    np.testing.assert_allclose(theta0, [0.25, 0.75])

    tiny = posterior_mean_theta(mesh, PriorConfig(1e-8), Partition((0, 1, 2)))
    np.testing.assert_allclose(tiny, [0.7, 0.3], atol=1e-8)


def test_evaluate_density_examples():
    t = SupportTransform(0.0, 1.0)
    flat = HistogramEstimate(np.array([0.0, 1.0]), np.array([1.0]), t)
    assert evaluate_density(flat, 0.3) == 1.0
    two = HistogramEstimate(np.array([0.0, 0.5, 1.0]), np.array([0.75, 0.25]), t)
    assert evaluate_density(two, 0.2) == pytest.approx(1.5)
    assert evaluate_density(two, 0.8) == pytest.approx(0.5)
    assert evaluate_density(two, -0.1) == 0.0 and evaluate_density(two, 1.5) == 0.0
    # the shared cut belongs to the left bin; both ends are inside
    np.testing.assert_allclose(two.pdf([0.0, 0.5, 1.0]), [1.5, 1.5, 0.5])


def test_density_rescales_with_support():
    t = SupportTransform(10.0, 14.0)
    est = HistogramEstimate(np.array([0.0, 0.5, 1.0]), np.array([0.75, 0.25]), t)
    np.testing.assert_allclose(est.breaks, [10.0, 12.0, 14.0])
    assert est.pdf(11.0) == pytest.approx(0.375)


def test_estimate_json_roundtrip():
    est = search.fit(np.random.default_rng(0).normal(size=300))
    back = HistogramEstimate.from_dict(est.to_dict())
    x = np.linspace(-4, 4, 97)
    np.testing.assert_allclose(back.pdf(x), est.pdf(x), rtol=1e-12)


def test_enumeration_order_and_size():
    parts = list(enumerate_partitions(4))
    assert len(parts) == 8
    assert parts[0].cut_indices == (0, 4)
    assert [p.k for p in parts] == sorted(p.k for p in parts)


def test_model_average_single_cell():
    z = np.random.default_rng(2).uniform(size=15)
    mesh = unit_mesh(z, 1)
    prior = PriorConfig(5.0)
    x = np.linspace(0, 1, 11)
    theta = posterior_mean_theta(mesh, prior, Partition((0, 1)))
    single = HistogramEstimate(mesh.cuts, theta, SupportTransform(0.0, 1.0))
    np.testing.assert_allclose(model_average_density(mesh, prior, x), single.pdf(x))


def test_model_average_integrates_to_one():
    z = np.random.default_rng(4).beta(2, 3, size=30)
    mesh = unit_mesh(z, 6, "quantile")
    prior = PriorConfig(5.0)
    _, w = partition_weights(mesh, prior)
    assert math.fsum(w) == pytest.approx(1.0, abs=1e-12)
    total = integrate(lambda x: model_average_density(mesh, prior, x), mesh.cuts)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_model_average_refuses_large_mesh():
    mesh = unit_mesh(np.linspace(0, 1, 50), 21)
    with pytest.raises(ModelError):
        model_average_density(mesh, PriorConfig(), 0.5)


def test_argmax_ignores_constant_shift(monkeypatch):
    z = np.random.default_rng(8).gamma(2.0, size=200)
    z = (z - z.min()) / (z.max() - z.min())
    mesh = unit_mesh(z, 30, "quantile")
    prior = PriorConfig(5.0)
    base = search.dp_map(mesh, prior)
    original = search.log_psi_vector
    monkeypatch.setattr(search, "log_psi_vector", lambda *a: original(*a) + 123.456)
    shifted = search.dp_map(mesh, prior)
    assert shifted.partition == base.partition


def test_uniform_g0_gives_width_proportional_concentration():
    z = np.random.default_rng(6).uniform(size=40)
    mesh = unit_mesh(z, 5, "quantile")
    explicit = PriorConfig(3.0, g0_cdf=lambda c: np.asarray(c, dtype=float))
    for i, j in itertools.combinations(range(mesh.size + 1), 2):
        assert phi0(mesh, explicit, i, j) == pytest.approx(phi0(mesh, PriorConfig(3.0), i, j), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=40),
    st.integers(1, 8),
    st.floats(1e-3, 50.0),
    st.data(),
)
def test_score_additivity_and_simplex(z, k_n, a, data):
    mesh = unit_mesh(z, k_n, "quantile")
    prior = PriorConfig(a)
    size = mesh.size
    chosen = data.draw(st.lists(st.integers(1, max(size - 1, 1)), unique=True, max_size=size - 1)) if size > 1 else []
    part = Partition(tuple(sorted({0, size, *chosen})))
    score = log_posterior_unnorm(mesh, prior, part)
    log_pk = prior.k_prior.log_pmf(size)
    assert score == pytest.approx(direct_log_posterior(mesh, a, log_pk, part.cut_indices), abs=1e-8)
    theta = posterior_mean_theta(mesh, prior, part)
    assert np.all(theta > 0)
    assert abs(math.fsum(theta) - 1.0) < 1e-12
