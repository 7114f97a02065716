"""Monte-Carlo operating characteristics of the SLCA and LC-CUSUM detectors.

Two trainee scenarios are simulated under the risk-adjusted Weibull model:

* ``inadequate`` -- the trainee rate stays at ``gamma_inadequate`` (relative
  risk 2 with the default settings), so any signal is a false alarm;
* ``learning`` -- the rate climbs linearly from 0.05 to the standard's 0.2,
  entering the noninferiority region after case ``change_index``.

Every replication produces the detector statistic path over ``t`` cases
(``|s_i|`` for the LC-CUSUM, the CPM point estimate for SLCA). False-alarm and
detection probabilities are functionals of those paths, so a single batch of
replications serves every candidate cutoff during calibration.
"""

import logging
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm.auto import tqdm

from surgical_lc.cpm import CpmConfig, MetricKind, cpm_estimate
from surgical_lc.exceptions import (
    CalibrationError,
    DomainError,
    NoQualifyingReplicationsError,
    NumericalError,
)
from surgical_lc.lccusum import cusum_path, reference_level
from surgical_lc.model import CaseRecord, WeibullRegParams, cases_from_arrays, sample_array
from surgical_lc.slca import DEFAULT_WARMUP, sequential_fits

logger = logging.getLogger(__name__)

Detector = Literal["SLCA", "LCCUSUM"]
Mode = Literal["inadequate", "learning"]
Seed = Union[int, np.random.SeedSequence]
PsdDenominator = Literal["qualifying", "all"]

DEFAULT_WINDOWS: Tuple[int, ...] = (20, 50, 70)
DEFAULT_REPS = 2000
MODE_STREAMS: Dict[str, int] = {"inadequate": 0, "learning": 1}
# batch of inadequate paths drawn to check a calibrated cutoff
VALIDATION_BATCH = 1


class LearningTrajectory(BaseModel):
    """Baseline rate that rises by ``step`` per case from ``start`` until ``plateau``."""

    model_config = ConfigDict(frozen=True)

    start: float = Field(default=0.05, gt=0)
    step: float = Field(default=0.003, gt=0)
    plateau: float = Field(default=0.2, gt=0)

    @model_validator(mode="after")
    def check_order(self):
        if not self.plateau > self.start:
            raise ValueError("plateau must exceed the starting rate")
        return self

    @property
    def plateau_index(self) -> int:
        """First case at which the plateau is reached."""
        return 1 + int(round((self.plateau - self.start) / self.step))

    def __call__(self, i: int) -> float:
        if i < 1:
            raise DomainError(f"case index must be at least 1, got {i!r}")
        if i >= self.plateau_index:
            return self.plateau
        return min(self.start + self.step * (i - 1), self.plateau)

    def rates(self, t: int) -> np.ndarray:
        return np.array([self(i) for i in range(1, t + 1)])


def gamma_learning(i: int) -> float:
    """Trainee baseline rate at case ``i`` in the learning scenario."""
    return LearningTrajectory()(i)


class CovariateSampler(BaseModel):
    """Distribution of simulated patient risk factors.

    ``uniform`` draws integers in ``[low, high]`` independently per covariate,
    ``fixed`` repeats the evaluation profile and ``empirical`` resamples rows of
    ``values`` with replacement.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform", "fixed", "empirical"] = "uniform"
    low: int = 13
    high: int = 56
    values: Tuple[Tuple[float, ...], ...] = ()

    @field_validator("values", mode="before")
    @classmethod
    def coerce_rows(cls, value):
        rows = []
        for row in value:
            rows.append((float(row),) if np.isscalar(row) else tuple(float(v) for v in row))
        return tuple(rows)

    @model_validator(mode="after")
    def check_support(self):
        if self.kind == "uniform" and self.high < self.low:
            raise ValueError(f"empty covariate range [{self.low}, {self.high}]")
        if self.kind == "empirical":
            if not self.values:
                raise ValueError("an empirical sampler needs at least one value")
            if len({len(row) for row in self.values}) != 1:
                raise ValueError("empirical covariate rows must share one length")
        return self

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CovariateSampler":
        """Empirical sampler over the ``x*`` columns (or all columns) of a CSV file."""
        frame = pd.read_csv(path)
        columns = [c for c in frame.columns if str(c).startswith("x")] or list(frame.columns)
        try:
            values = frame[columns].astype(float).to_numpy()
        except ValueError as exc:
            raise DomainError(f"{path}: covariate values must be numeric") from exc
        if not np.all(np.isfinite(values)):
            raise DomainError(f"{path}: covariate values must be finite")
        return cls(kind="empirical", values=[tuple(row) for row in values])

    def draw(self, rng: np.random.Generator, t: int, x_eval: Sequence[float]) -> np.ndarray:
        """Covariate matrix of shape ``(t, d)``."""
        d = len(x_eval)
        if self.kind == "fixed":
            return np.tile(np.asarray(x_eval, dtype=float), (t, 1))
        if self.kind == "uniform":
            return rng.integers(self.low, self.high + 1, size=(t, d)).astype(float)
        values = np.asarray(self.values, dtype=float)
        if values.shape[1] != d:
            raise DomainError(f"empirical covariates have {values.shape[1]} columns, model has {d}")
        return values[rng.integers(0, len(values), size=t)]


def _reference_standard() -> WeibullRegParams:
    return WeibullRegParams(gamma=0.2, eta=2.0, beta=(-0.05,))


class ScenarioSpec(BaseModel):
    """Simulation design; the defaults are the BMI reference design."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    t: int = Field(default=100, ge=1, description="Number of simulated cases.")
    standard: WeibullRegParams = Field(default_factory=_reference_standard)
    eta_n: float = Field(default=2.0, gt=0)
    beta_n: Tuple[float, ...] = (-0.05,)
    gamma_trajectory: LearningTrajectory = Field(default_factory=LearningTrajectory)
    gamma_inadequate: float = Field(default=0.05, gt=0)
    covariate_sampler: CovariateSampler = Field(default_factory=CovariateSampler)
    x_eval: Tuple[float, ...] = (27.0,)
    lambda_: float = Field(default=0.05, gt=0, le=1, alias="lambda")
    epsilon: float = Field(default=0.2, gt=0)
    kind: MetricKind = "PN"
    change_index: int = Field(default=30, ge=0)
    n0: int = Field(default=DEFAULT_WARMUP, ge=1)

    @field_validator("beta_n", "x_eval", mode="before")
    @classmethod
    def coerce_vector(cls, value):
        if isinstance(value, (int, float)):
            value = (value,)
        return tuple(float(v) for v in np.asarray(value, dtype=float).ravel())

    @model_validator(mode="after")
    def check_dimensions(self):
        d = self.standard.d
        if len(self.beta_n) != d or len(self.x_eval) != d:
            raise ValueError(f"beta_n and x_eval must have the standard's {d} covariates")
        if self.n0 < d + 3:
            raise ValueError(f"warm-up n0={self.n0} is below d + 3 = {d + 3}")
        if self.change_index >= self.t:
            raise ValueError("change_index must be smaller than t")
        return self

    def cpm_config(self) -> CpmConfig:
        return CpmConfig(kind=self.kind, epsilon=self.epsilon)

    def trainee_rates(self, mode: Mode) -> np.ndarray:
        """Baseline rate ``gamma_N(i)`` for ``i = 1..t``."""
        if mode == "inadequate":
            return np.full(self.t, self.gamma_inadequate)
        return self.gamma_trajectory.rates(self.t)

    def trainee_params(self, mode: Mode, i: int) -> WeibullRegParams:
        return WeibullRegParams(
            gamma=float(self.trainee_rates(mode)[i - 1]), eta=self.eta_n, beta=self.beta_n
        )


class Probability(BaseModel):
    """Monte-Carlo proportion with its binomial standard error."""

    model_config = ConfigDict(frozen=True)

    estimate: float = Field(ge=0, le=1)
    se: float = Field(ge=0)
    n: int = Field(ge=0, description="Replications in the denominator.")

    @classmethod
    def from_counts(cls, hits: int, n: int) -> "Probability":
        if n == 0:
            return cls(estimate=0.0, se=0.0, n=0)
        p = hits / n
        return cls(estimate=p, se=float(np.sqrt(p * (1.0 - p) / n)), n=n)


class OcResult(BaseModel):
    """False-alarm and detection probabilities of one detector at cutoff ``h``."""

    model_config = ConfigDict(frozen=True)

    detector: Detector
    h: float
    reps: int = Field(ge=1)
    seed: int
    pfa: Probability
    psd: Dict[int, Probability]
    excluded: int = Field(default=0, ge=0, description="Learning runs with an early signal.")
    psd_denominator: PsdDenominator = "qualifying"


class Calibration(BaseModel):
    """Outcome of a cutoff search together with its bisection trace."""

    model_config = ConfigDict(frozen=True)

    detector: Detector
    h: float
    pfa: Probability
    target: Tuple[float, float]
    reps: int
    seed: int
    trace: List[Tuple[float, float]]
    validation: Optional[Probability] = Field(
        default=None, description="PFA at h on a fresh batch of inadequate paths."
    )


def replication_seed(seed: int, mode: Mode, r: int, batch: int = 0) -> np.random.SeedSequence:
    """Stream for replication ``r`` of one scenario, unaffected by execution order.

    The two scenarios and every batch draw from disjoint streams, so
    inadequate and learning replications never share random numbers.
    """
    if mode not in MODE_STREAMS:
        raise DomainError(f"unknown scenario mode {mode!r}")
    return np.random.SeedSequence([seed, MODE_STREAMS[mode], batch, r])


def simulate_stream(spec: ScenarioSpec, mode: Mode, seed: Seed) -> List[CaseRecord]:
    """Draw ``spec.t`` trainee cases numbered ``1..t``.

    Covariates come from ``spec.covariate_sampler``; operative times are
    inverse-CDF draws with rate ``gamma_N(i) * exp(beta_N'x_i)`` and shape ``eta_N``.
    """
    if mode not in ("inadequate", "learning"):
        raise DomainError(f"unknown scenario mode {mode!r}")
    rng = np.random.default_rng(seed)
    X = spec.covariate_sampler.draw(rng, spec.t, spec.x_eval)
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=spec.t)
    y = sample_array(spec.trainee_rates(mode), spec.eta_n, spec.beta_n, X, u)
    return cases_from_arrays(y, X)


def detector_path(detector: Detector, spec: ScenarioSpec, cases: Sequence[CaseRecord]) -> np.ndarray:
    """Statistic compared against ``h`` at each case; ``nan`` where nothing can signal."""
    if detector == "LCCUSUM":
        center, scale = reference_level(spec.standard, spec.x_eval, spec.epsilon)
        v = (np.array([case.y for case in cases]) - center) / scale
        return np.abs(cusum_path(v)[1:])
    if detector != "SLCA":
        raise DomainError(f"unknown detector {detector!r}")

    cfg = spec.cpm_config()
    path = np.full(len(cases), np.nan)
    for position, (_, fit) in enumerate(sequential_fits(cases, spec.lambda_, spec.n0)):
        if fit is None:
            continue
        try:
            path[position] = cpm_estimate(fit, spec.standard, spec.x_eval, cfg)
        except NumericalError:
            pass
    return path


def _replicate(job: Tuple[Detector, ScenarioSpec, Mode, int, int, int]) -> np.ndarray:
    detector, spec, mode, seed, batch, r = job
    cases = simulate_stream(spec, mode, replication_seed(seed, mode, r, batch))
    return detector_path(detector, spec, cases)


def _check_reps(reps: int) -> None:
    if not isinstance(reps, (int, np.integer)) or reps < 1:
        raise DomainError(f"reps must be a positive integer, got {reps!r}")


def replicate_paths(
    detector: Detector,
    spec: ScenarioSpec,
    mode: Mode,
    reps: int,
    seed: int = 0,
    n_jobs: int = 1,
    progress: bool = False,
    batch: int = 0,
) -> np.ndarray:
    """Detector paths of ``reps`` independent replications, shape ``(reps, t)``.

    Results do not depend on ``n_jobs``: replication ``r`` always draws from
    ``replication_seed(seed, mode, r, batch)`` and rows keep replication order.
    """
    _check_reps(reps)
    jobs = [(detector, spec, mode, seed, batch, r) for r in range(reps)]
    desc = f"{detector} {mode}"
    if n_jobs > 1:
        with Pool(processes=n_jobs) as pool:
            chunksize = max(1, reps // (4 * n_jobs))
            rows = list(
                tqdm(pool.imap(_replicate, jobs, chunksize), total=reps, desc=desc, disable=not progress)
            )
    else:
        rows = [_replicate(job) for job in tqdm(jobs, desc=desc, disable=not progress)]
    paths = np.vstack(rows)
    logger.info("%s: simulated %d %s replications (seed=%d)", detector, reps, mode, seed)
    return paths


def signal_mask(detector: Detector, paths: np.ndarray, h: float) -> np.ndarray:
    """Boolean array marking cases where the detector signals at cutoff ``h``."""
    filled = np.nan_to_num(paths, nan=-np.inf)
    return filled >= h if detector == "SLCA" else filled > h


def pfa_from_paths(detector: Detector, paths: np.ndarray, h: float) -> Probability:
    """Fraction of inadequate-scenario paths with any signal."""
    signalled = signal_mask(detector, paths, h).any(axis=1)
    return Probability.from_counts(int(signalled.sum()), len(paths))


def _check_windows(spec: ScenarioSpec, windows: Sequence[int]) -> None:
    if any(w < 0 for w in windows):
        raise DomainError("detection windows must be nonnegative")
    if windows and spec.change_index + max(windows) > spec.t:
        raise DomainError(
            f"change_index + largest window ({spec.change_index + max(windows)}) exceeds t={spec.t}"
        )


def psd_from_paths(
    detector: Detector,
    paths: np.ndarray,
    h: float,
    change_index: int,
    windows: Sequence[int] = DEFAULT_WINDOWS,
    denominator: PsdDenominator = "qualifying",
) -> Tuple[Dict[int, Probability], int]:
    """Detection probabilities per window and the number of excluded paths.

    Paths that signal in ``[1, change_index]`` are false alarms. With the
    ``qualifying`` denominator they are dropped from every denominator; with
    ``all`` they stay in it and count as misses.
    """
    if denominator not in ("qualifying", "all"):
        raise DomainError(f"unknown PSD denominator {denominator!r}")
    mask = signal_mask(detector, paths, h)
    early = mask[:, :change_index].any(axis=1)
    excluded = int(early.sum())
    qualifying = mask[~early]
    if len(qualifying) == 0 and denominator == "qualifying":
        raise NoQualifyingReplicationsError(excluded)
    n = len(qualifying) if denominator == "qualifying" else len(mask)
    result = {}
    for w in windows:
        hits = qualifying[:, change_index : change_index + w].any(axis=1)
        result[int(w)] = Probability.from_counts(int(hits.sum()), n)
    return result, excluded


def estimate_pfa(
    detector: Detector,
    spec: ScenarioSpec,
    h: float,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    n_jobs: int = 1,
    progress: bool = False,
) -> Probability:
    """Probability that the detector signals by case ``t`` under inadequate performance."""
    paths = replicate_paths(detector, spec, "inadequate", reps, seed, n_jobs, progress)
    return pfa_from_paths(detector, paths, h)


def estimate_psd(
    detector: Detector,
    spec: ScenarioSpec,
    h: float,
    reps: int = DEFAULT_REPS,
    windows: Sequence[int] = DEFAULT_WINDOWS,
    seed: int = 0,
    n_jobs: int = 1,
    progress: bool = False,
    denominator: PsdDenominator = "qualifying",
) -> Dict[int, Probability]:
    """Probability of a signal within each window after ``change_index`` under learning.

    Raises:
        NoQualifyingReplicationsError: Every replication signalled early and
            the denominator is ``qualifying``.
    """
    _check_windows(spec, windows)
    paths = replicate_paths(detector, spec, "learning", reps, seed, n_jobs, progress)
    psd, excluded = psd_from_paths(detector, paths, h, spec.change_index, windows, denominator)
    logger.info("%s: %d of %d learning runs signalled early", detector, excluded, reps)
    return psd


def oc_from_paths(
    detector: Detector,
    inadequate: np.ndarray,
    learning: np.ndarray,
    h: float,
    change_index: int,
    windows: Sequence[int] = DEFAULT_WINDOWS,
    seed: int = 0,
    denominator: PsdDenominator = "qualifying",
) -> OcResult:
    """Assemble an :class:`OcResult` from already simulated path batches."""
    psd, excluded = psd_from_paths(detector, learning, h, change_index, windows, denominator)
    return OcResult(
        detector=detector,
        h=h,
        reps=len(inadequate),
        seed=seed,
        pfa=pfa_from_paths(detector, inadequate, h),
        psd=psd,
        excluded=excluded,
        psd_denominator=denominator,
    )


def operating_characteristics(
    detector: Detector,
    spec: ScenarioSpec,
    h: float,
    reps: int = DEFAULT_REPS,
    windows: Sequence[int] = DEFAULT_WINDOWS,
    seed: int = 0,
    n_jobs: int = 1,
    progress: bool = False,
    denominator: PsdDenominator = "qualifying",
) -> OcResult:
    """PFA and PSD of one detector at cutoff ``h`` from one simulation batch per scenario."""
    _check_windows(spec, windows)
    inadequate = replicate_paths(detector, spec, "inadequate", reps, seed, n_jobs, progress)
    learning = replicate_paths(detector, spec, "learning", reps, seed, n_jobs, progress)
    return oc_from_paths(
        detector, inadequate, learning, h, spec.change_index, windows, seed, denominator
    )


def _default_bounds(detector: Detector, paths: np.ndarray) -> Tuple[float, float]:
    if detector == "SLCA":
        return 0.0, 1.0
    top = float(np.nanmax(paths)) if np.any(np.isfinite(paths)) else 0.0
    return 0.0, top + 1.0


def calibrate_from_paths(
    detector: Detector,
    paths: np.ndarray,
    target: Tuple[float, float] = (0.03, 0.07),
    bounds: Optional[Tuple[float, float]] = None,
    max_iter: int = 60,
    seed: int = 0,
) -> Calibration:
    """Bisection on ``h`` over a fixed batch of inadequate-scenario paths."""
    low_target, high_target = target
    if not 0.0 < low_target <= high_target < 1.0:
        raise DomainError(f"target PFA range {target!r} must be nonempty inside (0, 1)")
    lo, hi = bounds if bounds is not None else _default_bounds(detector, paths)
    if not lo < hi:
        raise DomainError(f"search bounds {lo!r}, {hi!r} are not increasing")

    trace: List[Tuple[float, float]] = []

    def evaluate(h: float) -> Probability:
        pfa = pfa_from_paths(detector, paths, h)
        trace.append((h, pfa.estimate))
        logger.debug("calibrate %s: h=%.6g pfa=%.4f", detector, h, pfa.estimate)
        return pfa

    def done(h: float, pfa: Probability) -> Calibration:
        logger.info(
            "%s calibrated: h=%.4g pfa=%.4f (%d evaluations)", detector, h, pfa.estimate, len(trace)
        )
        return Calibration(
            detector=detector,
            h=h,
            pfa=pfa,
            target=target,
            reps=len(paths),
            seed=seed,
            trace=trace,
        )

    pfa_lo, pfa_hi = evaluate(lo), evaluate(hi)
    for h, pfa in ((lo, pfa_lo), (hi, pfa_hi)):
        if low_target <= pfa.estimate <= high_target:
            return done(h, pfa)
    if pfa_lo.estimate < low_target or pfa_hi.estimate > high_target:
        raise CalibrationError("target PFA range is not bracketed by the search bounds", trace)

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        pfa = evaluate(mid)
        if low_target <= pfa.estimate <= high_target:
            return done(mid, pfa)
        if pfa.estimate > high_target:
            lo = mid
        else:
            hi = mid
    raise CalibrationError("bisection did not reach the target PFA range", trace)


def validate_cutoff(
    calibration: Calibration,
    spec: ScenarioSpec,
    n_jobs: int = 1,
    progress: bool = False,
) -> Tuple[Calibration, np.ndarray]:
    """Re-estimate the PFA of a calibrated cutoff on a fresh batch of inadequate paths.

    Returns the calibration with ``validation`` filled in and the fresh paths.
    """
    paths = replicate_paths(
        calibration.detector,
        spec,
        "inadequate",
        calibration.reps,
        calibration.seed,
        n_jobs,
        progress,
        batch=VALIDATION_BATCH,
    )
    validation = pfa_from_paths(calibration.detector, paths, calibration.h)
    low_target, high_target = calibration.target
    if not low_target <= validation.estimate <= high_target:
        logger.warning(
            "%s: PFA %.4f at h=%.4g on the validation batch is outside [%g, %g]",
            calibration.detector,
            validation.estimate,
            calibration.h,
            low_target,
            high_target,
        )
    return calibration.model_copy(update={"validation": validation}), paths


def calibrate_h(
    detector: Detector,
    spec: ScenarioSpec,
    target: Tuple[float, float] = (0.03, 0.07),
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    bounds: Optional[Tuple[float, float]] = None,
    max_iter: int = 60,
    n_jobs: int = 1,
    progress: bool = False,
) -> Calibration:
    """Cutoff whose false-alarm probability lies in ``target``.

    PFA decreases in ``h`` for both detectors, so a bisection over one batch of
    inadequate-scenario replications finds it. The reported ``validation`` PFA
    comes from a second, independent batch.

    Raises:
        CalibrationError: The target range is not reached within ``bounds``.
    """
    low_target, high_target = target
    if not 0.0 < low_target <= high_target < 1.0:
        raise DomainError(f"target PFA range {target!r} must be nonempty inside (0, 1)")
    paths = replicate_paths(detector, spec, "inadequate", reps, seed, n_jobs, progress)
    calibration = calibrate_from_paths(detector, paths, target, bounds, max_iter, seed)
    return validate_cutoff(calibration, spec, n_jobs, progress)[0]
