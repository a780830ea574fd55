import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import special

from slopeqmle.links import (
    LOGISTIC,
    PROBIT,
    LinkDomainError,
    LinkFamily,
    LinkValidationError,
    builtin_links,
    get_link,
    link_violations,
    register_link,
    score_minus,
    score_plus,
)

mpmath.mp.dps = 50


def _normal_ratio_oracle(z, upper):
    # phi(z) / Phi(z) or phi(z) / (1 - Phi(z)) by 50-digit quadrature of the
    # shifted tail integral int_0^inf exp(-+z t - t^2 / 2) dt
    z = mpmath.mpf(z)
    sign = -1 if upper else 1
    scale = 1 + abs(z)
    tail = mpmath.quad(lambda t: mpmath.exp(sign * z * t - t * t / 2), [0, 1 / scale, 10 / scale, 40, mpmath.inf])
    return float(1 / tail)


def test_logistic_scores_at_zero():
    assert score_plus(LOGISTIC, 0.0) == 0.5
    assert score_minus(LOGISTIC, 0.0) == 0.5


def test_logistic_score_plus_vanishes():
    assert score_plus(LOGISTIC, 40.0) < 1e-15


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_scores_meet_at_twice_density(link):
    assert_allclose(score_plus(link, 0.0), 2 * link.pdf(0.0), rtol=1e-15)
    assert_allclose(score_minus(link, 0.0), score_plus(link, 0.0), rtol=1e-15)


def test_probit_scores_against_high_precision():
    assert_allclose(score_plus(PROBIT, -2.0), _normal_ratio_oracle(-2.0, upper=False), rtol=1e-13)
    assert_allclose(score_minus(PROBIT, 2.0), _normal_ratio_oracle(2.0, upper=True), rtol=1e-13)


@pytest.mark.parametrize("z", [-37.5, -12.0, 9.0, 25.0])
def test_probit_scores_deep_tails(z):
    assert_allclose(score_minus(PROBIT, z), _normal_ratio_oracle(z, upper=True), rtol=1e-12)
    assert_allclose(score_plus(PROBIT, -z), _normal_ratio_oracle(-z, upper=False), rtol=1e-12)


def test_logistic_log_cdf_high_precision():
    z = np.array([-700.0, -30.0, -1.0, 0.5, 30.0, 700.0])
    expected = [float(-mpmath.log1p(mpmath.exp(-mpmath.mpf(v)))) for v in z]
    assert_allclose(LOGISTIC.log_cdf(z), expected, rtol=1e-14)


@pytest.mark.parametrize("bad", [np.inf, -np.inf, np.nan])
def test_scores_reject_non_finite(bad):
    with pytest.raises(LinkDomainError):
        score_plus(LOGISTIC, bad)
    with pytest.raises(LinkDomainError):
        score_minus(PROBIT, np.array([0.0, bad]))


@pytest.mark.parametrize("name", ["logistic", "probit"])
def test_builtin_cdf_symmetric(name):
    assert get_link(name).cdf(0.0) == 0.5
    assert {l.name for l in builtin_links()} >= {"logistic", "probit"}


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_builtins_pass_validation(link):
    assert link_violations(link) == []


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_log_concavity_grid(link):
    z = np.arange(-10, 10 + 1e-9, 0.01)
    for f in (link.log_cdf, link.log_sf):
        assert np.all(np.diff(f(z), 2) < 0)


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_probabilities_sum_to_one(link):
    z = np.linspace(-30, 30, 6001)
    assert_allclose(np.exp(link.log_cdf(z)) + np.exp(link.log_sf(z)), 1.0, atol=1e-12)


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_pdf_matches_finite_difference(link):
    z = np.linspace(-10, 10, 401)
    h = 1e-5
    # differences of the smaller tail probability keep relative accuracy
    fd = np.where(
        z <= 0,
        (link.cdf(z + h) - link.cdf(z - h)) / (2 * h),
        (np.exp(link.log_sf(z - h)) - np.exp(link.log_sf(z + h))) / (2 * h),
    )
    assert_allclose(fd, link.pdf(z), rtol=1e-6)


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_pdf_derivative_matches_finite_difference(link):
    z = np.linspace(-8, 8, 161)
    h = 1e-5
    fd = (link.pdf(z + h) - link.pdf(z - h)) / (2 * h)
    assert_allclose(link.pdf_derivative(z), fd, rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_scores_strictly_monotone(link):
    z = np.linspace(-30, 30, 12001)
    assert np.all(np.diff(score_plus(link, z)) < 0)
    assert np.all(np.diff(score_minus(link, z)) > 0)


@pytest.mark.parametrize("link", builtin_links(), ids=lambda l: l.name)
def test_tail_decay_and_bound(link):
    assert 50 * score_plus(link, 50.0) < 1e-10
    assert 50 * score_minus(link, -50.0) < 1e-10
    z = np.linspace(0, 60, 60001)
    assert np.max(z * score_plus(link, z)) < 10
    assert np.max(z * score_minus(link, -z)) < 10


@settings(max_examples=200, deadline=None)
@given(st.floats(-60, 60), st.floats(1e-3, 10))
def test_score_order_property(z, dz):
    for link in builtin_links():
        assert score_plus(link, z) >= score_plus(link, z + dz)
        assert score_minus(link, z) <= score_minus(link, z + dz)


@settings(max_examples=200, deadline=None)
@given(st.floats(-35, 35))
def test_scores_are_density_ratios(z):
    for link in builtin_links():
        lp = link._log_pdf(np.array(z))
        assert_allclose(score_plus(link, z), np.exp(lp - link.log_cdf(z)), rtol=1e-10)
        assert_allclose(score_minus(link, z), np.exp(lp - link.log_sf(z)), rtol=1e-10)


def _cauchy():
    return LinkFamily(
        name="cauchy",
        cdf=lambda z: 0.5 + np.arctan(z) / np.pi,
        log_cdf=lambda z: np.log(0.5 + np.arctan(z) / np.pi),
        log_sf=lambda z: np.log(0.5 - np.arctan(z) / np.pi),
        pdf=lambda z: 1 / (np.pi * (1 + np.asarray(z) ** 2)),
        pdf_derivative=lambda z: -2 * np.asarray(z) / (np.pi * (1 + np.asarray(z) ** 2) ** 2),
    )


def test_register_rejects_non_log_concave_link():
    with pytest.raises(LinkValidationError, match="concav"):
        register_link(_cauchy())


def test_register_rejects_wrong_density():
    bad = LinkFamily(
        name="bad-logistic",
        cdf=special.expit,
        log_cdf=LOGISTIC.log_cdf,
        log_sf=LOGISTIC.log_sf,
        pdf=lambda z: 2 * LOGISTIC.pdf(z),
        pdf_derivative=LOGISTIC.pdf_derivative,
    )
    with pytest.raises(LinkValidationError, match="derivative"):
        register_link(bad)


def test_register_accepts_valid_link():
    # logistic with scale 1/2 is log-concave with median zero
    half = LinkFamily(
        name="logistic-half",
        cdf=lambda z: special.expit(2 * np.asarray(z)),
        log_cdf=lambda z: LOGISTIC.log_cdf(2 * np.asarray(z)),
        log_sf=lambda z: LOGISTIC.log_sf(2 * np.asarray(z)),
        pdf=lambda z: 2 * LOGISTIC.pdf(2 * np.asarray(z)),
        pdf_derivative=lambda z: 4 * LOGISTIC.pdf_derivative(2 * np.asarray(z)),
    )
    assert register_link(half) is half
    assert get_link("logistic-half") is half
    assert_allclose(score_plus(half, 0.0), 1.0)


def test_unknown_link_name():
    with pytest.raises(KeyError):
        get_link("cloglog-typo")
