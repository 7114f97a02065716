"""Risk-adjusted Weibull model for operative times.

The outcome Y given covariates x follows a Weibull distribution with shape
``eta`` and rate ``theta = gamma * exp(beta'x)``::

    f(y | x) = theta * eta * y**(eta - 1) * exp(-theta * y**eta)

so that larger ``beta'x`` means a larger rate and a shorter expected time.
No intercept column is added; ``gamma`` is the baseline rate.
"""

import math
from typing import List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import special

from surgical_lc.exceptions import DomainError

Covariates = Union[float, Sequence[float], np.ndarray]


class WeibullRegParams(BaseModel):
    """Parameters (gamma, eta, beta) of the risk-adjusted Weibull model."""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(gt=0, description="Baseline rate parameter.")
    eta: float = Field(gt=0, description="Shape parameter.")
    beta: Tuple[float, ...] = Field(
        default=(),
        description="Covariate coefficients; empty for a model without risk adjustment.",
    )

    @field_validator("gamma", "eta")
    @classmethod
    def check_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("gamma and eta must be finite")
        return value

    @field_validator("beta", mode="before")
    @classmethod
    def coerce_beta(cls, value):
        if isinstance(value, (int, float)):
            value = (value,)
        beta = tuple(float(b) for b in np.asarray(value, dtype=float).ravel())
        if not all(math.isfinite(b) for b in beta):
            raise ValueError("beta entries must be finite")
        return beta

    @property
    def d(self) -> int:
        """Number of covariates."""
        return len(self.beta)

    @property
    def n_params(self) -> int:
        return self.d + 2

    def to_vector(self) -> np.ndarray:
        """Stack as ``(gamma, eta, beta_1, ..., beta_d)``."""
        return np.array([self.gamma, self.eta, *self.beta], dtype=float)

    @classmethod
    def from_vector(cls, vector: Sequence[float]) -> "WeibullRegParams":
        vector = np.asarray(vector, dtype=float)
        return cls(gamma=float(vector[0]), eta=float(vector[1]), beta=tuple(vector[2:]))


class CaseRecord(BaseModel):
    """One surgery: case number, operative time in hours and risk factors."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=1, description="Case number, a proxy for experience.")
    y: float = Field(gt=0, description="Operative time in hours.")
    x: Tuple[float, ...] = Field(default=(), description="Risk factors, e.g. BMI.")

    @field_validator("y")
    @classmethod
    def check_y_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("y must be finite")
        return value

    @field_validator("x", mode="before")
    @classmethod
    def coerce_x(cls, value):
        if isinstance(value, (int, float)):
            value = (value,)
        x = tuple(float(v) for v in np.asarray(value, dtype=float).ravel())
        if not all(math.isfinite(v) for v in x):
            raise ValueError("x entries must be finite")
        return x


def as_covariates(params: WeibullRegParams, x: Covariates) -> np.ndarray:
    """Validate ``x`` against the model dimension and return it as an array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if params.d == 0 and arr.size == 0:
        return arr
    if arr.size != params.d:
        raise DomainError(f"covariate vector has length {arr.size}, model expects {params.d}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("covariates must be finite")
    return arr


def case_arrays(cases: Sequence[CaseRecord]) -> Tuple[np.ndarray, np.ndarray]:
    """Return outcomes ``y`` (t,) and design matrix ``X`` (t, d) for a case list."""
    if len(cases) == 0:
        return np.empty(0), np.empty((0, 0))
    d = len(cases[0].x)
    if any(len(case.x) != d for case in cases):
        raise DomainError("all cases must carry the same number of covariates")
    y = np.array([case.y for case in cases], dtype=float)
    X = np.array([case.x for case in cases], dtype=float).reshape(len(cases), d)
    return y, X


def check_indices(cases: Sequence[CaseRecord]) -> None:
    """Raise if case indices are not strictly increasing."""
    indices = [case.index for case in cases]
    if any(b <= a for a, b in zip(indices, indices[1:])):
        raise DomainError("case indices must be strictly increasing")


def rate(params: WeibullRegParams, x: Covariates) -> float:
    """Rate ``theta = gamma * exp(beta'x)``."""
    xv = as_covariates(params, x)
    return params.gamma * math.exp(float(np.dot(params.beta, xv)) if params.d else 0.0)


def log_rate(params: WeibullRegParams, x: Covariates) -> float:
    xv = as_covariates(params, x)
    return math.log(params.gamma) + (float(np.dot(params.beta, xv)) if params.d else 0.0)


def pdf(params: WeibullRegParams, y: float, x: Covariates) -> float:
    """Conditional density of the operative time given covariates."""
    if not y > 0:
        raise DomainError(f"y must be positive, got {y!r}")
    theta = rate(params, x)
    eta = params.eta
    return theta * eta * y ** (eta - 1.0) * math.exp(-theta * y**eta)


def cdf(params: WeibullRegParams, y: float, x: Covariates) -> float:
    """Conditional distribution function ``1 - exp(-theta * y**eta)``."""
    if y < 0:
        raise DomainError(f"y must be nonnegative, got {y!r}")
    theta = rate(params, x)
    return -math.expm1(-theta * y**params.eta)


def rmot(params: WeibullRegParams, x: Covariates) -> float:
    """Risk-adjusted mean operative time ``Gamma(1/eta + 1) * theta**(-1/eta)``."""
    eta = params.eta
    return math.exp(special.gammaln(1.0 / eta + 1.0) - log_rate(params, x) / eta)


def sd(params: WeibullRegParams, x: Covariates) -> float:
    """Conditional standard deviation of the operative time."""
    eta = params.eta
    ln_theta = log_rate(params, x)
    # Var = theta**(-2/eta) * (Gamma(1 + 2/eta) - Gamma(1 + 1/eta)**2)
    g2 = special.gamma(2.0 / eta + 1.0)
    g1 = special.gamma(1.0 / eta + 1.0)
    spread = g2 - g1 * g1
    if not spread > 0:
        raise DomainError(f"shape {eta!r} too large for a positive variance in double precision")
    return math.exp(-ln_theta / eta) * math.sqrt(spread)


def sample(params: WeibullRegParams, x: Covariates, u: float) -> float:
    """Inverse-CDF draw ``(-ln(u) / theta)**(1/eta)`` for a uniform variate ``u``."""
    if not 0.0 < u < 1.0:
        raise DomainError(f"u must lie in (0, 1), got {u!r}")
    theta = rate(params, x)
    return (-math.log(u) / theta) ** (1.0 / params.eta)


def sample_array(
    gamma: Union[float, np.ndarray],
    eta: float,
    beta: Sequence[float],
    X: np.ndarray,
    u: np.ndarray,
) -> np.ndarray:
    """Vectorised inverse-CDF draws; ``gamma`` may vary per case."""
    lin = X @ np.asarray(beta, dtype=float) if len(beta) else np.zeros(len(u))
    theta = np.asarray(gamma, dtype=float) * np.exp(lin)
    return (-np.log(u) / theta) ** (1.0 / eta)


def relative_risk(
    trainee: WeibullRegParams, standard: WeibullRegParams, x: Covariates
) -> float:
    """Ratio of trainee to standard risk-adjusted mean operative time."""
    if trainee.d != standard.d:
        raise DomainError(
            f"trainee has {trainee.d} covariates but the standard has {standard.d}"
        )
    return rmot(trainee, x) / rmot(standard, x)


def cases_from_arrays(y: Sequence[float], X: np.ndarray, start: int = 1) -> List[CaseRecord]:
    """Build case records numbered from ``start``."""
    X = np.asarray(X, dtype=float)
    X = np.zeros((len(y), 0)) if X.size == 0 else X.reshape(len(y), -1)
    return [
        CaseRecord(index=start + i, y=float(y[i]), x=tuple(X[i]))
        for i in range(len(y))
    ]


def covariate_means(cases: Sequence[CaseRecord]) -> Tuple[float, ...]:
    """Column means of the case covariates."""
    if not cases:
        raise DomainError("covariate means need at least one case")
    _, X = case_arrays(cases)
    return tuple(float(m) for m in X.mean(axis=0))


def shift_covariates(cases: Sequence[CaseRecord], offset: Sequence[float]) -> List[CaseRecord]:
    """Cases with ``offset`` subtracted from every covariate vector."""
    offset = np.asarray(offset, dtype=float)
    shifted = []
    for case in cases:
        if len(case.x) != offset.size:
            raise DomainError(
                f"offset has length {offset.size}, case {case.index} has {len(case.x)} covariates"
            )
        x = tuple(float(v) for v in np.asarray(case.x) - offset)
        shifted.append(case.model_copy(update={"x": x}))
    return shifted


def shift_params(params: WeibullRegParams, offset: Sequence[float]) -> WeibullRegParams:
    """The same model written for covariates ``x - offset``.

    Only the baseline rate changes: ``gamma * exp(beta'offset)``.
    """
    xv = as_covariates(params, offset)
    if params.d == 0:
        return params
    gamma = params.gamma * math.exp(float(np.dot(params.beta, xv)))
    return params.model_copy(update={"gamma": gamma})
