"""Sequential learning-curve assessment.

At every case ``i`` from the warm-up ``n0`` onward the trainee model is refit
with WEE on cases ``1..i`` and the RMOT, the relative risk and the CPM are
estimated with interval estimates at a fixed covariate profile. The
expertise time is the first case whose CPM point estimate reaches the cutoff.
"""

import logging
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from surgical_lc.cpm import (
    CpmConfig,
    IntervalEstimate,
    Standard,
    aci_linear,
    cpm_aci,
    relative_risk_sd,
    sigma_mu,
)
from surgical_lc.exceptions import DomainError, NumericalError
from surgical_lc.model import (
    CaseRecord,
    Covariates,
    WeibullRegParams,
    as_covariates,
    case_arrays,
    check_indices,
    relative_risk,
    rmot,
)
from surgical_lc.wee import FitResult, SolverOptions, fit_arrays, weights_array

logger = logging.getLogger(__name__)

DEFAULT_WARMUP = 10


class SlcaPoint(BaseModel):
    """Estimates after case ``index``; intervals are absent when the fit failed."""

    model_config = ConfigDict(frozen=True)

    index: int
    fit_ok: bool
    mu: Optional[IntervalEstimate] = None
    r: Optional[IntervalEstimate] = None
    cpm: Optional[IntervalEstimate] = None
    clamped: bool = False

    @model_validator(mode="after")
    def check_complete(self):
        if self.fit_ok and (self.mu is None or self.r is None or self.cpm is None):
            raise ValueError("an evaluated point needs mu, r and cpm intervals")
        return self


class SlcaSeries(BaseModel):
    """Per-case SLCA estimates at one covariate profile."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    x_eval: Tuple[float, ...]
    lambda_: float = Field(alias="lambda")
    cfg: CpmConfig
    points: List[SlcaPoint]
    expertise_time: Optional[int] = None
    persistence: int = 1
    final_fit_failed: bool = False

    @model_validator(mode="after")
    def check_points(self):
        indices = [p.index for p in self.points]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("point indices must be strictly increasing")
        return self

    def cpm_points(self) -> np.ndarray:
        """CPM point estimates, ``nan`` where the case was not evaluable."""
        return np.array([p.cpm.point if p.fit_ok else np.nan for p in self.points])


def expertise_time(
    points: Sequence[SlcaPoint], cutoff: float, persistence: int = 1
) -> Optional[int]:
    """First index whose CPM stays at or above ``cutoff`` for ``persistence`` evaluated points."""
    if persistence < 1:
        raise DomainError(f"persistence must be at least 1, got {persistence!r}")
    evaluated = [p for p in points if p.fit_ok]
    run = 0
    for k, point in enumerate(evaluated):
        run = run + 1 if point.cpm.point >= cutoff else 0
        if run == persistence:
            return evaluated[k - persistence + 1].index
    return None


def _standard_params(standard: Standard) -> WeibullRegParams:
    return standard.params if isinstance(standard, FitResult) else standard


def evaluate_fit(
    fit: FitResult, standard: Standard, x: Covariates, cfg: CpmConfig, index: int
) -> SlcaPoint:
    """RMOT, relative risk and CPM interval estimates for one fitted case."""
    params_s = _standard_params(standard)
    try:
        mu = aci_linear(rmot(fit.params, x), sigma_mu(fit, x), cfg.alpha)
        r = aci_linear(
            relative_risk(fit.params, params_s, x),
            relative_risk_sd(fit, standard, x),
            cfg.alpha,
        )
        cpm = cpm_aci(fit, standard, x, cfg)
    except NumericalError as exc:
        logger.warning("case %d: interval estimation failed: %s", index, exc)
        return SlcaPoint(index=index, fit_ok=False)
    return SlcaPoint(index=index, fit_ok=True, mu=mu, r=r, cpm=cpm, clamped=cpm.clamped)


def sequential_fits(
    cases: Sequence[CaseRecord],
    lambda_: float,
    n0: int = DEFAULT_WARMUP,
    opts: Optional[SolverOptions] = None,
) -> Iterator[Tuple[int, Optional[FitResult]]]:
    """Yield ``(index, fit)`` for every case; ``fit`` is ``None`` when unavailable.

    Each fit uses exactly the first ``i`` cases with ``weights(i, lambda_)`` and
    is warm-started from the last converged fit.
    """
    check_indices(cases)
    y, X = case_arrays(cases)
    d = X.shape[1]
    if n0 < d + 3:
        raise DomainError(f"warm-up n0={n0} is below the minimum d + 3 = {d + 3}")
    if not 0.0 < lambda_ <= 1.0:
        raise DomainError(f"lambda must lie in (0, 1], got {lambda_!r}")

    warm: Optional[WeibullRegParams] = None
    for i, case in enumerate(cases, start=1):
        if i < n0:
            yield case.index, None
            continue
        try:
            fit = fit_arrays(y[:i], X[:i], weights_array(i, lambda_), lambda_, init=warm, opts=opts)
        except NumericalError as exc:
            logger.warning("case %d: WEE fit failed: %s", case.index, exc)
            yield case.index, None
            continue
        if not fit.converged:
            yield case.index, None
            continue
        warm = fit.params
        yield case.index, fit


def _series(
    x_eval: Tuple[float, ...],
    lambda_: float,
    cfg: CpmConfig,
    points: List[SlcaPoint],
    persistence: int,
) -> SlcaSeries:
    final_failed = bool(points) and not points[-1].fit_ok
    if final_failed:
        logger.warning("the fit at the final case %d failed", points[-1].index)
    return SlcaSeries(
        x_eval=x_eval,
        lambda_=lambda_,
        cfg=cfg,
        points=points,
        expertise_time=expertise_time(points, cfg.cutoff, persistence),
        persistence=persistence,
        final_fit_failed=final_failed,
    )


def run_slca_grid(
    cases: Sequence[CaseRecord],
    standard: Standard,
    lambda_: float,
    cfg: CpmConfig,
    x_grid: Sequence[Covariates],
    n0: int = DEFAULT_WARMUP,
    persistence: int = 1,
    opts: Optional[SolverOptions] = None,
) -> List[SlcaSeries]:
    """One SLCA series per covariate profile, sharing the sequential fits."""
    params_s = _standard_params(standard)
    profiles = [tuple(as_covariates(params_s, x)) for x in x_grid]
    if persistence < 1:
        raise DomainError(f"persistence must be at least 1, got {persistence!r}")
    per_profile: List[List[SlcaPoint]] = [[] for _ in profiles]
    evaluated = 0
    for index, fit in sequential_fits(cases, lambda_, n0, opts):
        for k, x in enumerate(profiles):
            if fit is None:
                per_profile[k].append(SlcaPoint(index=index, fit_ok=False))
            else:
                per_profile[k].append(evaluate_fit(fit, standard, x, cfg, index))
        evaluated += fit is not None
    logger.info("SLCA: %d of %d cases evaluated", evaluated, len(cases))
    return [
        _series(x, lambda_, cfg, points, persistence)
        for x, points in zip(profiles, per_profile)
    ]


def run_slca(
    cases: Sequence[CaseRecord],
    standard: Standard,
    lambda_: float,
    cfg: CpmConfig,
    x_eval: Covariates,
    n0: int = DEFAULT_WARMUP,
    persistence: int = 1,
    opts: Optional[SolverOptions] = None,
) -> SlcaSeries:
    """Sequential learning-curve assessment at covariate profile ``x_eval``.

    Args:
        cases: Trainee cases ordered by index.
        standard: Known standard parameters, or a fitted standard cohort whose
            uncertainty then enters the relative risk and CPM intervals.
        lambda_: WEE smoothing constant in (0, 1].
        cfg: Metric definition, decision cutoff and interval level.
        x_eval: Covariate profile at which performance is assessed.
        n0: Warm-up; earlier cases are reported as not evaluable.
        persistence: Consecutive evaluated points required for expertise.
        opts: Solver settings.

    Returns:
        SlcaSeries with one point per case.
    """
    return run_slca_grid(cases, standard, lambda_, cfg, [x_eval], n0, persistence, opts)[0]


def assess_covariates(
    fit: FitResult,
    standard: Standard,
    x_grid: Sequence[Covariates],
    cfg: CpmConfig,
    index: Optional[int] = None,
) -> List[SlcaPoint]:
    """Evaluate one fitted performance across a range of covariate profiles."""
    index = fit.n_cases if index is None else index
    return [evaluate_fit(fit, standard, x, cfg, index) for x in x_grid]
