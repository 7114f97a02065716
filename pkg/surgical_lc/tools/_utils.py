"""Shared utilities for the learning-curve tools."""

from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from surgical_lc.cli import ingest_cases
from surgical_lc.model import CaseRecord, WeibullRegParams


def load_cases_path(cases_path: str) -> List[CaseRecord]:
    """Load a local case CSV with columns ``case,y,x1,...,xd``.

    Args:
        cases_path: Absolute or relative path to the CSV file.

    Returns:
        Case records sorted by case index.

    Raises:
        FileNotFoundError: If the path does not exist.
        ValueError: If the path is not a file or a row is invalid.
    """
    path = Path(cases_path).resolve()
    if not path.exists():
        raise FileNotFoundError(f"Case file not found: {path}")
    if not path.is_file():
        raise ValueError(f"Path is not a file: {path}")
    return ingest_cases(path)


def default_profile(cases: Sequence[CaseRecord], x_eval: Optional[Sequence[float]]) -> List[float]:
    """``x_eval`` when given, otherwise the median covariates of ``cases``."""
    if x_eval:
        return [float(v) for v in x_eval]
    if not cases or not cases[0].x:
        return []
    return [float(v) for v in np.median(np.array([case.x for case in cases]), axis=0)]


def standard_params(gamma: float, eta: float, beta: Sequence[float]) -> WeibullRegParams:
    return WeibullRegParams(gamma=gamma, eta=eta, beta=tuple(beta))
