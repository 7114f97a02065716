"""Unit tests for the special-function wrappers."""

import math

import pytest

from surgical_lc.exceptions import DomainError
from surgical_lc.specialmath import (
    EULER_GAMMA,
    TRIGAMMA_2,
    digamma,
    gamma_fn,
    ln_gamma,
    std_normal_cdf,
    std_normal_quantile,
    trigamma,
)


class TestGammaFamily:
    """Gamma, log-gamma, digamma and trigamma."""

    def test_gamma_values(self):
        """Test reference values of the gamma function."""
        assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-12)
        assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-14)
        assert gamma_fn(1.5599) == pytest.approx(0.8893, abs=1e-4)

    def test_ln_gamma_values(self):
        """Test ln_gamma at integers."""
        assert ln_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
        assert ln_gamma(2.0) == pytest.approx(0.0, abs=1e-14)
        assert ln_gamma(10.0) == pytest.approx(math.log(362880.0), rel=1e-12)

    def test_ln_gamma_large_argument(self):
        """Test that ln_gamma stays finite where gamma overflows."""
        assert math.isfinite(ln_gamma(500.0))
        assert ln_gamma(500.0) == pytest.approx(math.lgamma(500.0), rel=1e-12)

    def test_digamma_values(self):
        """Test digamma identities."""
        assert digamma(1.0) == pytest.approx(-EULER_GAMMA, rel=1e-12)
        assert digamma(2.0) == pytest.approx(1.0 - EULER_GAMMA, rel=1e-12)
        assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2.0 * math.log(2.0), rel=1e-12)

    def test_trigamma_at_two(self):
        """Test psi'(2) = pi^2/6 - 1."""
        assert trigamma(2.0) == pytest.approx(TRIGAMMA_2, rel=1e-12)
        assert TRIGAMMA_2 == pytest.approx(0.6449340668, rel=1e-9)

    @pytest.mark.parametrize("fn", [gamma_fn, ln_gamma, digamma, trigamma])
    @pytest.mark.parametrize("z", [0.0, -1.0, float("inf"), float("nan")])
    def test_domain_errors(self, fn, z):
        """Test that non-positive or non-finite arguments raise."""
        with pytest.raises(DomainError):
            fn(z)


class TestNormal:
    """Standard normal CDF and quantile."""

    def test_cdf_values(self):
        """Test reference CDF values."""
        assert std_normal_cdf(0.0) == 0.5
        assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-7)
        assert 0.0 < std_normal_cdf(-8.0) < 1e-14

    def test_cdf_rejects_non_finite(self):
        """Test that infinite arguments raise."""
        with pytest.raises(DomainError):
            std_normal_cdf(float("inf"))
        with pytest.raises(DomainError):
            std_normal_cdf(float("nan"))

    def test_quantile_values(self):
        """Test reference quantiles."""
        assert std_normal_quantile(0.5) == pytest.approx(0.0, abs=1e-15)
        assert std_normal_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)
        assert std_normal_quantile(0.95) == pytest.approx(1.644854, abs=1e-6)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_domain(self, p):
        """Test that p outside (0, 1) raises."""
        with pytest.raises(DomainError):
            std_normal_quantile(p)

    @pytest.mark.parametrize("p", [1e-10, 0.01, 0.3, 0.5, 0.8, 0.999])
    def test_quantile_inverts_cdf(self, p):
        """Test that the quantile inverts the CDF."""
        assert std_normal_cdf(std_normal_quantile(p)) == pytest.approx(p, rel=1e-9)
