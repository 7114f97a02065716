"""Risk-adjusted LC-CUSUM for Weibull operative times.

Each case contributes a standardized residual against the midpoint of the
adequate and inadequate hypotheses::

    v_i = (y_i - mu_S(x) * (1 + eps / 2)) / SD_S(x)

and the statistic ``s_i = min(0, s_{i-1} + v_i)`` signals adequate performance
once ``|s_i| > h``. Short operative times drive ``s`` downward.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from surgical_lc.exceptions import DomainError
from surgical_lc.model import CaseRecord, Covariates, WeibullRegParams, as_covariates, rmot, sd

logger = logging.getLogger(__name__)


class CusumTrace(BaseModel):
    """LC-CUSUM statistic path with ``s_0 = 0`` prepended."""

    model_config = ConfigDict(frozen=True)

    s: Tuple[float, ...]
    v: Tuple[float, ...] = ()
    indices: Tuple[int, ...] = Field(default=(), description="Case index of each v.")
    signal_index: Optional[int] = None
    h: float = Field(gt=0)
    epsilon: float = Field(gt=0)
    x_eval: Tuple[float, ...] = ()

    @field_validator("s")
    @classmethod
    def check_nonpositive(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if not value or value[0] != 0.0:
            raise ValueError("the statistic path must start at s_0 = 0")
        if any(s > 0.0 for s in value):
            raise ValueError("the LC-CUSUM statistic never exceeds zero")
        return value

    @property
    def signaled(self) -> bool:
        return self.signal_index is not None


def reference_level(standard: WeibullRegParams, x: Covariates, epsilon: float) -> Tuple[float, float]:
    """Hypothesis midpoint ``mu_S(x) * (1 + eps/2)`` and the standard deviation ``SD_S(x)``."""
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")
    return rmot(standard, x) * (1.0 + epsilon / 2.0), sd(standard, x)


def residual(y: float, standard: WeibullRegParams, x: Covariates, epsilon: float) -> float:
    """Standardized residual ``v`` of one operative time against the standard."""
    if not y > 0:
        raise DomainError(f"y must be positive, got {y!r}")
    center, scale = reference_level(standard, x, epsilon)
    return (y - center) / scale


def cusum_path(v: np.ndarray) -> np.ndarray:
    """Run ``s_i = min(0, s_{i-1} + v_i)`` from ``s_0 = 0``; returns ``len(v) + 1`` values."""
    s = np.zeros(len(v) + 1)
    for i, vi in enumerate(v, start=1):
        s[i] = min(0.0, s[i - 1] + vi)
    return s


def first_signal(s: np.ndarray, h: float) -> Optional[int]:
    """Position ``i >= 1`` of the first ``|s_i| > h``, or ``None``."""
    hits = np.flatnonzero(np.abs(s[1:]) > h)
    return int(hits[0]) + 1 if hits.size else None


def run_lc_cusum(
    cases: Sequence[CaseRecord],
    standard: WeibullRegParams,
    epsilon: float,
    h: float,
    x_eval: Covariates,
) -> CusumTrace:
    """Run the LC-CUSUM over ``cases`` with all residuals evaluated at ``x_eval``.

    The trace keeps running past the first signal; stopping is left to the caller.
    ``signal_index`` is the case index of the first signal.
    """
    if not h > 0:
        raise DomainError(f"h must be positive, got {h!r}")
    xv = as_covariates(standard, x_eval)
    center, scale = reference_level(standard, xv, epsilon)
    y = np.array([case.y for case in cases], dtype=float)
    v = (y - center) / scale
    s = cusum_path(v)
    position = first_signal(s, h)
    signal_index = cases[position - 1].index if position is not None else None
    if signal_index is None:
        logger.info("LC-CUSUM: no signal over %d cases (h=%g)", len(cases), h)
    else:
        logger.info("LC-CUSUM: signal at case %d (h=%g)", signal_index, h)
    return CusumTrace(
        s=tuple(float(value) for value in s),
        indices=tuple(case.index for case in cases),
        v=tuple(float(value) for value in v),
        signal_index=signal_index,
        h=h,
        epsilon=epsilon,
        x_eval=tuple(float(value) for value in xv),
    )

