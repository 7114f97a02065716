"""Seeded synthetic case data for unit testing."""

from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from surgical_lc.model import CaseRecord, WeibullRegParams, cases_from_arrays, sample_array

# Reference standard: gamma_S=0.2, eta_S=2, beta_S=-0.05 on BMI.
STUDY_STANDARD = WeibullRegParams(gamma=0.2, eta=2.0, beta=(-0.05,))

# Standard cohort reported for the colorectal data.
COLORECTAL_STANDARD = WeibullRegParams(gamma=0.1099, eta=1.9220, beta=(-0.0201,))

# Trainee fit reported for the colorectal data.
COLORECTAL_TRAINEE = WeibullRegParams(gamma=0.0722, eta=1.7859, beta=(-0.0152,))


def simulate_cases(
    params: WeibullRegParams,
    t: int,
    seed: int,
    gamma: Optional[Sequence[float]] = None,
    low: int = 13,
    high: int = 56,
) -> List[CaseRecord]:
    """Cases with uniform integer covariates in ``[low, high]``.

    ``gamma`` overrides the rate per case, e.g. for a learning trajectory.
    """
    rng = np.random.default_rng(seed)
    X = rng.integers(low, high + 1, size=(t, params.d)).astype(float)
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=t)
    rates = np.full(t, params.gamma) if gamma is None else np.asarray(gamma, dtype=float)
    y = sample_array(rates, params.eta, params.beta, X, u)
    return cases_from_arrays(y, X)


def write_csv(path: Union[str, Path], text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def write_cases(path: Union[str, Path], cases: Sequence[CaseRecord]) -> Path:
    """Write cases in the ``case,y,x1..xd`` schema without going through the CLI."""
    d = len(cases[0].x)
    header = ",".join(["case", "y", *[f"x{k}" for k in range(1, d + 1)]])
    rows = [",".join([str(c.index), repr(c.y), *[repr(v) for v in c.x]]) for c in cases]
    return write_csv(path, "\n".join([header, *rows]) + "\n")


def random_params(rng: np.random.Generator) -> WeibullRegParams:
    """One-covariate parameters in the range seen for operative times."""
    return WeibullRegParams(
        gamma=float(rng.uniform(0.05, 0.5)),
        eta=float(rng.uniform(1.0, 3.0)),
        beta=(float(rng.uniform(-0.08, 0.0)),),
    )


def central_difference(fn: Callable[[np.ndarray], Union[float, np.ndarray]], vec: np.ndarray) -> np.ndarray:
    """Five-point derivative of ``fn`` at ``vec``, one column per coordinate.

    Steps are ``1e-5 * max(1, |v_j|)``.
    """
    vec = np.asarray(vec, dtype=float)
    columns = []
    for j in range(vec.size):
        h = 1e-5 * max(1.0, abs(vec[j]))
        values = []
        for k in (2, 1, -1, -2):
            shifted = vec.copy()
            shifted[j] += k * h
            values.append(np.asarray(fn(shifted), dtype=float))
        columns.append((-values[0] + 8 * values[1] - 8 * values[2] + values[3]) / (12 * h))
    return np.stack(columns, axis=-1)
