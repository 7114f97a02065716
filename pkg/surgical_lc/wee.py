"""Weighted estimating equations for the risk-adjusted Weibull model.

Recent cases receive geometrically larger weights::

    w_i = t * lam * (1 - lam)**(t - i) / (1 - (1 - lam)**t),   i = 1..t

and the parameters solve the weighted score system ``Q(gamma, eta, beta) = 0``.
The covariance of the estimators has the sandwich form
``Sigma = Gamma^-1 Omega Gamma^-1`` with ``Gamma`` the expected Hessian of the
weighted score and ``Omega`` the expected outer product of the score.

Expectations use ``Z = Y**eta ~ Exponential(theta)``. Writing
``a = 1 - c - ln(theta)`` with ``c`` Euler's constant:

    E(Y**eta)          = 1 / theta
    E(Y**eta ln Y)     = a / (eta * theta)
    E(Y**eta ln**2 Y)  = (psi'(2) + a**2) / (eta**2 * theta)
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from surgical_lc.exceptions import DomainError, InsufficientDataError, NumericalError
from surgical_lc.model import CaseRecord, WeibullRegParams, as_covariates, case_arrays
from surgical_lc.specialmath import EULER_GAMMA, TRIGAMMA_2

logger = logging.getLogger(__name__)

PI2_OVER_6 = math.pi**2 / 6.0


class SolverOptions(BaseModel):
    """Newton solver settings for :func:`fit_wee`."""

    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-8, gt=0, description="Stop when max |score| <= tol.")
    max_iter: int = Field(default=200, ge=1)
    max_halvings: int = Field(default=50, ge=0)
    max_condition: float = Field(
        default=1e12, gt=1, description="Regularize Newton systems above this condition."
    )


class WeightVector(BaseModel):
    """Case weights; ``lambda_`` is ``None`` for unit weights."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    w: Tuple[float, ...]
    lambda_: Optional[float] = Field(default=None, alias="lambda")

    @property
    def t(self) -> int:
        return len(self.w)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.w, dtype=float)


class FitResult(BaseModel):
    """Point estimates, sandwich covariance and solver diagnostics."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, populate_by_name=True)

    params: WeibullRegParams
    sigma: np.ndarray
    score_norm: float = Field(ge=0)
    converged: bool
    iterations: int = Field(ge=0)
    n_cases: int = Field(ge=0)
    lambda_: Optional[float] = Field(default=None, alias="lambda")
    loglik: float = float("nan")

    @field_validator("sigma", mode="before")
    @classmethod
    def freeze_sigma(cls, value):
        sigma = np.array(value, dtype=float, copy=True)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError("sigma must be a square matrix")
        sigma.setflags(write=False)
        return sigma

    @model_validator(mode="after")
    def check_shape(self):
        if self.sigma.shape[0] != self.params.n_params:
            raise ValueError(
                f"sigma is {self.sigma.shape[0]}x{self.sigma.shape[0]}, "
                f"expected {self.params.n_params}x{self.params.n_params}"
            )
        return self

    def standard_errors(self) -> np.ndarray:
        return standard_errors(self)


class ExpectedMoments(BaseModel):
    """Conditional moments of one case used by the expected Hessian and information."""

    model_config = ConfigDict(frozen=True)

    e_yeta: float
    e_yeta_log: float
    e_yeta_log2: float
    e_qgamma_sq: float
    e_qeta_sq: float
    e_qgamma_qeta: float
    e_qgamma_qbeta: Tuple[float, ...]
    e_qeta_qbeta: Tuple[float, ...]
    e_qbeta_outer: Tuple[Tuple[float, ...], ...]


def weights(t: int, lambda_: float) -> WeightVector:
    """Exponentially decaying case weights that sum to ``t``."""
    return WeightVector(w=tuple(weights_array(t, lambda_)), lambda_=lambda_)


def weights_array(t: int, lambda_: float) -> np.ndarray:
    if not isinstance(t, (int, np.integer)) or t < 1:
        raise DomainError(f"t must be a positive integer, got {t!r}")
    if not 0.0 < lambda_ <= 1.0:
        raise DomainError(f"lambda must lie in (0, 1], got {lambda_!r}")
    if lambda_ == 1.0:
        w = np.zeros(t)
        w[-1] = float(t)
        return w
    log_keep = math.log1p(-lambda_)
    lags = np.arange(t - 1, -1, -1, dtype=float)
    return t * lambda_ * np.exp(lags * log_keep) / -math.expm1(t * log_keep)


def unit_weights(t: int) -> WeightVector:
    """All-ones weights for an unweighted fit."""
    if t < 1:
        raise DomainError(f"t must be a positive integer, got {t!r}")
    return WeightVector(w=(1.0,) * t, lambda_=None)


def _prepare(
    data: Sequence[CaseRecord], w: WeightVector, d: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(data) != w.t:
        raise DomainError(f"{len(data)} cases but {w.t} weights")
    y, X = case_arrays(data)
    if X.shape[1] != d:
        raise DomainError(f"cases carry {X.shape[1]} covariates, model expects {d}")
    return y, X, w.as_array()


class _Terms:
    """Per-case quantities shared by the likelihood, score and Hessian."""

    def __init__(self, vec: np.ndarray, y: np.ndarray, X: np.ndarray):
        self.gamma = vec[0]
        self.eta = vec[1]
        self.beta = vec[2:]
        self.logy = np.log(y)
        self.lin = X @ self.beta if self.beta.size else np.zeros(y.size)
        with np.errstate(over="ignore", invalid="ignore"):
            # y**eta * exp(beta'x)
            self.ye = np.exp(self.eta * self.logy + self.lin)
            self.u = self.gamma * self.ye


def _loglik(vec: np.ndarray, y: np.ndarray, X: np.ndarray, w: np.ndarray) -> float:
    if vec[0] <= 0 or vec[1] <= 0:
        return -math.inf
    terms = _Terms(vec, y, X)
    with np.errstate(over="ignore", invalid="ignore"):
        ell = (
            math.log(terms.gamma)
            + math.log(terms.eta)
            + (terms.eta - 1.0) * terms.logy
            + terms.lin
            - terms.u
        )
        return float(np.dot(w, ell))


def _score(vec: np.ndarray, y: np.ndarray, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    terms = _Terms(vec, y, X)
    resid = 1.0 - terms.u
    out = np.empty(vec.size)
    out[0] = np.dot(w, 1.0 / terms.gamma - terms.ye)
    out[1] = np.dot(w, 1.0 / terms.eta + terms.logy * resid)
    out[2:] = X.T @ (w * resid)
    return out


def _hessian(vec: np.ndarray, y: np.ndarray, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    terms = _Terms(vec, y, X)
    gamma, eta = terms.gamma, terms.eta
    wu = w * terms.u
    k = vec.size
    H = np.empty((k, k))
    H[0, 0] = -w.sum() / gamma**2
    H[0, 1] = -np.dot(w * terms.ye, terms.logy)
    H[1, 1] = -w.sum() / eta**2 - np.dot(wu, terms.logy**2)
    if k > 2:
        H[0, 2:] = -X.T @ (w * terms.ye)
        H[1, 2:] = -X.T @ (wu * terms.logy)
        H[2:, 2:] = -(X.T * wu) @ X
    H[1, 0] = H[0, 1]
    if k > 2:
        H[2:, 0] = H[0, 2:]
        H[2:, 1] = H[1, 2:]
    return H


def weighted_loglik(
    params: WeibullRegParams, data: Sequence[CaseRecord], w: WeightVector
) -> float:
    """Weighted log-likelihood ``sum_i w_i * ln f(y_i | x_i)``."""
    y, X, wa = _prepare(data, w, params.d)
    value = _loglik(params.to_vector(), y, X, wa)
    if not math.isfinite(value):
        raise NumericalError("weighted log-likelihood is not finite")
    return value


def score(params: WeibullRegParams, data: Sequence[CaseRecord], w: WeightVector) -> np.ndarray:
    """Weighted score vector ordered ``(gamma, eta, beta_1..beta_d)``."""
    y, X, wa = _prepare(data, w, params.d)
    value = _score(params.to_vector(), y, X, wa)
    if not np.all(np.isfinite(value)):
        raise NumericalError("score is not finite")
    return value


def observed_hessian(
    params: WeibullRegParams, data: Sequence[CaseRecord], w: WeightVector
) -> np.ndarray:
    """Analytic derivative of :func:`score` with respect to ``(gamma, eta, beta)``."""
    y, X, wa = _prepare(data, w, params.d)
    value = _hessian(params.to_vector(), y, X, wa)
    if not np.all(np.isfinite(value)):
        raise NumericalError("observed Hessian is not finite")
    return value


def _moment_arrays(params: WeibullRegParams, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-case ``theta_i`` and ``a_i = 1 - c - ln(theta_i)``."""
    lin = X @ np.asarray(params.beta) if params.d else np.zeros(X.shape[0])
    log_theta = math.log(params.gamma) + lin
    return np.exp(log_theta), 1.0 - EULER_GAMMA - log_theta


def expected_moments(params: WeibullRegParams, x) -> ExpectedMoments:
    """Closed-form conditional moments of one case with covariates ``x``."""
    xv = as_covariates(params, x)
    theta, a = _moment_arrays(params, xv.reshape(1, -1))
    theta, a = float(theta[0]), float(a[0])
    gamma, eta = params.gamma, params.eta
    return ExpectedMoments(
        e_yeta=1.0 / theta,
        e_yeta_log=a / (eta * theta),
        e_yeta_log2=(TRIGAMMA_2 + a * a) / (eta**2 * theta),
        e_qgamma_sq=1.0 / gamma**2,
        e_qeta_sq=(PI2_OVER_6 + a * a) / eta**2,
        e_qgamma_qeta=a / (gamma * eta),
        e_qgamma_qbeta=tuple(xv / gamma),
        e_qeta_qbeta=tuple(a * xv / eta),
        e_qbeta_outer=tuple(tuple(row) for row in np.outer(xv, xv)),
    )


def _fisher_blocks(
    params: WeibullRegParams, X: np.ndarray, w: np.ndarray
) -> np.ndarray:
    """``sum_i w_i * M_i`` where ``M_i`` is the per-case expected information."""
    _, a = _moment_arrays(params, X)
    gamma, eta = params.gamma, params.eta
    k = params.n_params
    M = np.empty((k, k))
    M[0, 0] = w.sum() / gamma**2
    M[0, 1] = M[1, 0] = np.dot(w, a) / (gamma * eta)
    M[1, 1] = np.dot(w, PI2_OVER_6 + a * a) / eta**2
    if k > 2:
        M[0, 2:] = M[2:, 0] = X.T @ w / gamma
        M[1, 2:] = M[2:, 1] = X.T @ (w * a) / eta
        M[2:, 2:] = (X.T * w) @ X
    return M


def _expected_hessian_arrays(params: WeibullRegParams, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    return -_fisher_blocks(params, X, w)


def _information_arrays(params: WeibullRegParams, X: np.ndarray, w: np.ndarray) -> np.ndarray:
    return _fisher_blocks(params, X, w * w)


def expected_hessian(
    params: WeibullRegParams, data: Sequence[CaseRecord], w: WeightVector
) -> np.ndarray:
    """Expected Hessian ``Gamma`` of the weighted score at ``params``."""
    _, X, wa = _prepare(data, w, params.d)
    value = _expected_hessian_arrays(params, X, wa)
    if not np.all(np.isfinite(value)):
        raise NumericalError("expected Hessian is not finite")
    return value


def information_matrix(
    params: WeibullRegParams, data: Sequence[CaseRecord], w: WeightVector
) -> np.ndarray:
    """Expected score outer product ``Omega``, built with squared weights."""
    _, X, wa = _prepare(data, w, params.d)
    value = _information_arrays(params, X, wa)
    if not np.all(np.isfinite(value)):
        raise NumericalError("information matrix is not finite")
    return value


def sandwich_cov(
    gamma_mat: np.ndarray, omega_mat: np.ndarray, max_condition: float = 1e12
) -> np.ndarray:
    """Sandwich covariance ``Gamma^-1 Omega Gamma^-1``, symmetrised."""
    gamma_mat = np.asarray(gamma_mat, dtype=float)
    omega_mat = np.asarray(omega_mat, dtype=float)
    if gamma_mat.shape != omega_mat.shape:
        raise DomainError("Gamma and Omega must have the same shape")
    condition = float(np.linalg.cond(gamma_mat))
    if not math.isfinite(condition) or condition > max_condition:
        raise NumericalError("expected Hessian is singular or ill-conditioned", condition)
    inv = np.linalg.inv(gamma_mat)
    sigma = inv @ omega_mat @ inv
    return 0.5 * (sigma + sigma.T)


def standard_errors(fit: FitResult) -> np.ndarray:
    """Asymptotic standard errors, the square roots of ``diag(Sigma)``."""
    return np.sqrt(np.clip(np.diag(fit.sigma), 0.0, None))


def _newton_direction(A: np.ndarray, g: np.ndarray, max_condition: float) -> np.ndarray:
    """Solve ``A d = g`` for positive definite ``A``, regularizing when needed."""
    scale = max(float(np.max(np.abs(np.diag(A)))), 1.0)
    tau = 0.0
    for attempt in range(16):
        system = A + tau * np.eye(A.shape[0]) if tau else A
        try:
            np.linalg.cholesky(system)
            condition = float(np.linalg.cond(system))
        except np.linalg.LinAlgError:
            condition = math.inf
        if math.isfinite(condition) and condition <= max_condition:
            if tau:
                logger.debug("Newton system regularized with tau=%.3e", tau)
            return np.linalg.solve(system, g)
        tau = scale * 1e-10 if tau == 0.0 else tau * 10.0
    raise NumericalError("Newton system stays singular after regularization", condition)


def fit_arrays(
    y: np.ndarray,
    X: np.ndarray,
    w: np.ndarray,
    lambda_: Optional[float] = None,
    init: Optional[WeibullRegParams] = None,
    opts: Optional[SolverOptions] = None,
) -> FitResult:
    """Array-level solver behind :func:`fit_wee` and :func:`fit_mle`."""
    opts = opts or SolverOptions()
    t, d = X.shape
    n_min = d + 3
    if t < n_min:
        raise InsufficientDataError(t, n_min)
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise DomainError("all operative times must be positive and finite")

    if init is None:
        init = WeibullRegParams(gamma=float(w.sum() / np.dot(w, y)), eta=1.0, beta=(0.0,) * d)
    elif init.d != d:
        raise DomainError(f"initial values have {init.d} covariates, data has {d}")

    vec = init.to_vector()
    ll = _loglik(vec, y, X, w)
    if not math.isfinite(ll):
        raise NumericalError("log-likelihood is not finite at the initial values")
    q = _score(vec, y, X, w)
    q_norm = float(np.max(np.abs(q)))
    converged = q_norm <= opts.tol
    iterations = 0

    while not converged and iterations < opts.max_iter:
        iterations += 1
        # Newton on (ln gamma, ln eta, beta) keeps gamma and eta positive.
        jac = np.ones(vec.size)
        jac[:2] = vec[:2]
        g_phi = jac * q
        H_phi = _hessian(vec, y, X, w) * np.outer(jac, jac)
        H_phi[0, 0] += g_phi[0]
        H_phi[1, 1] += g_phi[1]
        if not np.all(np.isfinite(H_phi)):
            raise NumericalError("observed Hessian is not finite during Newton iterations")
        step = _newton_direction(-H_phi, g_phi, opts.max_condition)

        phi = np.concatenate([np.log(vec[:2]), vec[2:]])
        accepted = False
        size = 1.0
        for _ in range(opts.max_halvings + 1):
            cand_phi = phi + size * step
            with np.errstate(over="ignore"):
                cand = np.concatenate([np.exp(cand_phi[:2]), cand_phi[2:]])
            if np.all(np.isfinite(cand)) and cand[0] > 0 and cand[1] > 0:
                cand_ll = _loglik(cand, y, X, w)
                if math.isfinite(cand_ll):
                    if cand_ll >= ll:
                        accepted = True
                    elif cand_ll >= ll - 1e-13 * (1.0 + abs(ll)):
                        # rounding-level tie: accept only if the score shrinks
                        cand_q = _score(cand, y, X, w)
                        accepted = float(np.max(np.abs(cand_q))) < q_norm
                    if accepted:
                        break
            size *= 0.5
        if not accepted:
            logger.debug("step halving exhausted at iteration %d, |Q|=%.3e", iterations, q_norm)
            break
        vec, ll = cand, cand_ll
        q = _score(vec, y, X, w)
        q_norm = float(np.max(np.abs(q)))
        converged = q_norm <= opts.tol
        logger.debug("iteration %d: loglik=%.10g |Q|=%.3e step=%.3g", iterations, ll, q_norm, size)

    params = WeibullRegParams.from_vector(vec)
    try:
        sigma = sandwich_cov(
            _expected_hessian_arrays(params, X, w),
            _information_arrays(params, X, w),
            opts.max_condition,
        )
    except NumericalError:
        if converged:
            raise
        sigma = np.full((params.n_params, params.n_params), np.nan)

    if not converged:
        logger.warning(
            "WEE fit on %d cases did not converge after %d iterations (|Q|=%.3e)",
            t,
            iterations,
            q_norm,
        )
    return FitResult(
        params=params,
        sigma=sigma,
        score_norm=q_norm,
        converged=converged,
        iterations=iterations,
        n_cases=t,
        lambda_=lambda_,
        loglik=ll,
    )


def fit_wee(
    data: Sequence[CaseRecord],
    lambda_: float,
    init: Optional[WeibullRegParams] = None,
    opts: Optional[SolverOptions] = None,
) -> FitResult:
    """Solve the weighted estimating equations for the cases in ``data``.

    Args:
        data: Cases ordered by index; the last case receives the largest weight.
        lambda_: Smoothing constant in (0, 1].
        init: Starting values; defaults to ``eta=1, beta=0`` and
            ``gamma = 1 / weighted-mean(y)``.
        opts: Solver settings.

    Returns:
        FitResult with the sandwich covariance. Non-convergence is flagged in
        ``converged`` rather than raised.

    Raises:
        InsufficientDataError: Fewer than ``d + 3`` cases.
        NumericalError: The Newton system or the expected Hessian is singular.
    """
    if not data:
        raise InsufficientDataError(0, 3)
    w = weights_array(len(data), lambda_)
    y, X = case_arrays(data)
    return fit_arrays(y, X, w, lambda_=lambda_, init=init, opts=opts)


def fit_mle(
    data: Sequence[CaseRecord],
    init: Optional[WeibullRegParams] = None,
    opts: Optional[SolverOptions] = None,
) -> FitResult:
    """Unweighted maximum likelihood fit, e.g. for a standard cohort."""
    if not data:
        raise InsufficientDataError(0, 3)
    y, X = case_arrays(data)
    return fit_arrays(y, X, np.ones(len(data)), lambda_=None, init=init, opts=opts)


def parameter_names(d: int) -> List[str]:
    return ["gamma", "eta"] + [f"beta{k + 1}" for k in range(d)]
