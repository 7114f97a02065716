"""Comparative probability metrics and delta-method interval estimates.

The CPM is the normal approximation of ``P(delta_L < R~(x) < delta_U)`` for
the relative risk estimator ``R~(x) = mu_N(x) / mu_S(x)``:

    CPM = Phi((delta_U - R) / sigma_R) - Phi((delta_L - R) / sigma_R)

PA (agreement) uses ``(1/(1+eps), 1+eps)`` and PN (noninferiority) uses
``(0, 1+eps)``.
"""

import logging
import math
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from surgical_lc.exceptions import DomainError, NumericalError
from surgical_lc.model import Covariates, WeibullRegParams, as_covariates, relative_risk, rmot
from surgical_lc.specialmath import digamma, std_normal_cdf, std_normal_quantile
from surgical_lc.wee import FitResult

logger = logging.getLogger(__name__)

CLAMP = 1e-12
MetricKind = Literal["PA", "PN", "custom"]
Standard = Union[WeibullRegParams, FitResult]


class CpmConfig(BaseModel):
    """Indifference region, clinical margin and decision settings."""

    model_config = ConfigDict(frozen=True)

    kind: MetricKind = "PN"
    epsilon: float = Field(default=0.2, gt=0, description="Clinical margin, e.g. 0.2 for 20%.")
    delta_l: Optional[float] = Field(default=None, ge=0)
    delta_u: Optional[float] = Field(default=None, gt=0)
    cutoff: float = Field(default=0.95, gt=0, lt=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)

    @model_validator(mode="before")
    @classmethod
    def fill_bounds(cls, values):
        if not isinstance(values, dict):
            return values
        values = dict(values)
        kind = values.get("kind", "PN")
        eps = float(values.get("epsilon", 0.2))
        if kind == "PA":
            values["delta_l"] = 1.0 / (1.0 + eps)
            values["delta_u"] = 1.0 + eps
        elif kind == "PN":
            values["delta_l"] = 0.0
            values["delta_u"] = 1.0 + eps
        elif values.get("delta_l") is None or values.get("delta_u") is None:
            raise ValueError("custom metrics require delta_l and delta_u")
        return values

    @model_validator(mode="after")
    def check_order(self):
        if not self.delta_l < self.delta_u:
            raise ValueError(f"delta_l ({self.delta_l}) must be below delta_u ({self.delta_u})")
        return self


class IntervalEstimate(BaseModel):
    """Point estimate with a two-sided confidence interval."""

    model_config = ConfigDict(frozen=True)

    point: float
    lower: float
    upper: float
    level: float = Field(gt=0, lt=1)
    clamped: bool = False

    @model_validator(mode="after")
    def check_order(self):
        slack = 1e-12 * max(1.0, abs(self.point))
        if self.lower > self.point + slack or self.point > self.upper + slack:
            raise ValueError(f"interval [{self.lower}, {self.upper}] excludes {self.point}")
        return self


def cpm_config(
    kind: MetricKind = "PN",
    epsilon: float = 0.2,
    cutoff: float = 0.95,
    alpha: float = 0.05,
    delta_l: Optional[float] = None,
    delta_u: Optional[float] = None,
) -> CpmConfig:
    try:
        return CpmConfig(
            kind=kind,
            epsilon=epsilon,
            cutoff=cutoff,
            alpha=alpha,
            delta_l=delta_l,
            delta_u=delta_u,
        )
    except ValueError as exc:
        raise DomainError(str(exc)) from exc


def _cpm_value(r_hat: float, sigma_r: float, cfg: CpmConfig) -> float:
    if sigma_r == 0.0:
        return float(cfg.delta_l < r_hat < cfg.delta_u)
    upper = 1.0 if math.isinf(cfg.delta_u) else std_normal_cdf((cfg.delta_u - r_hat) / sigma_r)
    lower = std_normal_cdf((cfg.delta_l - r_hat) / sigma_r)
    return min(1.0, max(0.0, upper - lower))


def cpm_point(r_hat: float, sigma_r: float, cfg: CpmConfig) -> float:
    """Normal-approximation CPM for an estimated relative risk."""
    if not sigma_r > 0 or not math.isfinite(sigma_r):
        raise DomainError(f"sigma_r must be positive and finite, got {sigma_r!r}")
    return _cpm_value(r_hat, sigma_r, cfg)


def log_rmot_gradient(params: WeibullRegParams, x: Covariates) -> np.ndarray:
    """Gradient of ``ln mu(x)`` with respect to ``(gamma, eta, beta)``."""
    xv = as_covariates(params, x)
    gamma, eta = params.gamma, params.eta
    log_theta = math.log(gamma) + (float(np.dot(params.beta, xv)) if params.d else 0.0)
    grad = np.empty(params.n_params)
    grad[0] = -1.0 / (eta * gamma)
    grad[1] = (log_theta - digamma(1.0 + 1.0 / eta)) / eta**2
    grad[2:] = -xv / eta
    return grad


def rmot_gradient(params: WeibullRegParams, x: Covariates) -> np.ndarray:
    return rmot(params, x) * log_rmot_gradient(params, x)


def relative_risk_gradient(
    trainee: WeibullRegParams, standard: WeibullRegParams, x: Covariates
) -> np.ndarray:
    """Gradient of ``R(x)`` over the stacked trainee and standard parameters."""
    r = relative_risk(trainee, standard, x)
    return np.concatenate(
        [r * log_rmot_gradient(trainee, x), -r * log_rmot_gradient(standard, x)]
    )


def _quadratic_sd(grad: np.ndarray, sigma: np.ndarray) -> float:
    value = float(grad @ sigma @ grad)
    if math.isnan(value):
        raise NumericalError("delta-method variance is nan")
    if value < -1e-10:
        raise NumericalError(f"delta-method variance is negative ({value:.3e})")
    return math.sqrt(max(value, 0.0))


def _require_converged(fit: FitResult) -> None:
    if not fit.converged:
        raise DomainError("delta-method uncertainty requires a converged fit")


def sigma_r(fit: FitResult, standard: WeibullRegParams, x: Covariates) -> float:
    """Delta-method standard error of the relative risk, standard held fixed."""
    _require_converged(fit)
    grad = relative_risk_gradient(fit.params, standard, x)[: fit.params.n_params]
    return _quadratic_sd(grad, fit.sigma)


def sigma_mu(fit: FitResult, x: Covariates) -> float:
    """Delta-method standard error of the risk-adjusted mean operative time."""
    _require_converged(fit)
    return _quadratic_sd(rmot_gradient(fit.params, x), fit.sigma)


def joint_sigma(fit_n: FitResult, fit_s: FitResult) -> np.ndarray:
    """Block-diagonal covariance of independent trainee and standard estimates."""
    k_n, k_s = fit_n.params.n_params, fit_s.params.n_params
    joint = np.zeros((k_n + k_s, k_n + k_s))
    joint[:k_n, :k_n] = fit_n.sigma
    joint[k_n:, k_n:] = fit_s.sigma
    return joint


def sigma_r_joint(fit_n: FitResult, fit_s: FitResult, x: Covariates) -> float:
    """Standard error of the relative risk when the standard is also estimated."""
    _require_converged(fit_n)
    _require_converged(fit_s)
    grad = relative_risk_gradient(fit_n.params, fit_s.params, x)
    return _quadratic_sd(grad, joint_sigma(fit_n, fit_s))


def aci_linear(point: float, sigma: float, alpha: float = 0.05) -> IntervalEstimate:
    """Symmetric asymptotic interval ``point +/- z_{1-alpha/2} * sigma``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not sigma >= 0:
        raise DomainError(f"sigma must be nonnegative, got {sigma!r}")
    half = std_normal_quantile(1.0 - alpha / 2.0) * sigma
    return IntervalEstimate(point=point, lower=point - half, upper=point + half, level=1.0 - alpha)


def _standard_parts(standard: Standard):
    if isinstance(standard, FitResult):
        _require_converged(standard)
        return standard.params, standard
    return standard, None


def relative_risk_sd(fit: FitResult, standard: Standard, x: Covariates) -> float:
    """``sigma_r`` or ``sigma_r_joint`` depending on how the standard is supplied."""
    params_s, fit_s = _standard_parts(standard)
    if fit_s is None:
        return sigma_r(fit, params_s, x)
    return sigma_r_joint(fit, fit_s, x)


def cpm_estimate(fit: FitResult, standard: Standard, x: Covariates, cfg: CpmConfig) -> float:
    """Plug-in CPM at the fitted parameters (no interval)."""
    params_s, _ = _standard_parts(standard)
    r_hat = relative_risk(fit.params, params_s, x)
    return _cpm_value(r_hat, relative_risk_sd(fit, standard, x), cfg)


def _fd_step(value: float, positive: bool) -> float:
    step = 1e-5 * max(1.0, abs(value))
    if positive:
        step = min(step, 0.5 * value)
    return step


def sigma_psi(
    fit: FitResult, standard: Standard, x: Covariates, cfg: CpmConfig
) -> float:
    """Standard error of ``Psi = ln(-ln CPM)`` with ``sigma_R`` held at its fitted value.

    The gradient of ``Psi`` is taken by central differences of the map
    parameters -> R -> CPM -> Psi.
    """
    params_s, fit_s = _standard_parts(standard)
    s_r = relative_risk_sd(fit, standard, x)
    k_n = fit.params.n_params

    if fit_s is None:
        base = fit.params.to_vector()
        sigma = fit.sigma
    else:
        base = np.concatenate([fit.params.to_vector(), fit_s.params.to_vector()])
        sigma = joint_sigma(fit, fit_s)

    def psi_at(vec: np.ndarray) -> float:
        trainee = WeibullRegParams.from_vector(vec[:k_n])
        ref = params_s if fit_s is None else WeibullRegParams.from_vector(vec[k_n:])
        value = _cpm_value(relative_risk(trainee, ref, x), s_r, cfg)
        value = min(max(value, CLAMP), 1.0 - CLAMP)
        return math.log(-math.log(value))

    positive = np.zeros(base.size, dtype=bool)
    positive[[0, 1]] = True
    if fit_s is not None:
        positive[[k_n, k_n + 1]] = True
    grad = np.empty(base.size)
    for j in range(base.size):
        h = _fd_step(base[j], positive[j])
        up, down = base.copy(), base.copy()
        up[j] += h
        down[j] -= h
        grad[j] = (psi_at(up) - psi_at(down)) / (2.0 * h)
    return _quadratic_sd(grad, sigma)


def cpm_aci(
    fit: FitResult, standard: Standard, x: Covariates, cfg: CpmConfig
) -> IntervalEstimate:
    """CPM point estimate with a log-log transformed interval inside (0, 1)."""
    cpm_hat = cpm_estimate(fit, standard, x, cfg)
    clamped = not CLAMP <= cpm_hat <= 1.0 - CLAMP
    if clamped:
        logger.debug("CPM estimate %.3g clamped for the log-log transform", cpm_hat)
        cpm_hat = min(max(cpm_hat, CLAMP), 1.0 - CLAMP)
    psi = math.log(-math.log(cpm_hat))
    half = std_normal_quantile(1.0 - cfg.alpha / 2.0) * sigma_psi(fit, standard, x, cfg)
    with np.errstate(over="ignore"):
        lower = float(np.exp(-np.exp(psi + half)))
        upper = float(np.exp(-np.exp(psi - half)))
    return IntervalEstimate(
        point=cpm_hat,
        lower=min(lower, cpm_hat),
        upper=max(upper, cpm_hat),
        level=1.0 - cfg.alpha,
        clamped=clamped,
    )
