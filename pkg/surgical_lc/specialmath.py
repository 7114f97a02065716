"""Scalar special functions used by the Weibull model and the metrics.

Thin, validated wrappers around :mod:`scipy.special`. Arguments are checked
here so that callers receive a :class:`~surgical_lc.exceptions.DomainError`
instead of a silent ``nan``.
"""

import math

import numpy as np
from scipy import special

from surgical_lc.exceptions import DomainError

EULER_GAMMA: float = float(np.euler_gamma)

# psi'(2) = pi^2/6 - 1
TRIGAMMA_2: float = math.pi**2 / 6.0 - 1.0


def _check_positive(z: float, name: str = "z") -> float:
    z = float(z)
    if not math.isfinite(z) or z <= 0.0:
        raise DomainError(f"{name} must be positive and finite, got {z!r}")
    return z


def gamma_fn(z: float) -> float:
    """Complete gamma function for positive real arguments."""
    return float(special.gamma(_check_positive(z)))


def ln_gamma(z: float) -> float:
    """Natural logarithm of the gamma function for positive real arguments."""
    return float(special.gammaln(_check_positive(z)))


def digamma(z: float) -> float:
    """Digamma function, the derivative of :func:`ln_gamma`."""
    return float(special.digamma(_check_positive(z)))


def trigamma(z: float) -> float:
    """Trigamma function, the derivative of :func:`digamma`."""
    return float(special.polygamma(1, _check_positive(z)))


def std_normal_cdf(z: float) -> float:
    """Standard normal cumulative distribution function for finite arguments."""
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"std_normal_cdf argument must be finite, got {z!r}")
    return float(special.ndtr(z))


def std_normal_quantile(p: float) -> float:
    """Quantile function of the standard normal distribution on (0, 1)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in the open interval (0, 1), got {p!r}")
    return float(special.ndtri(p))
