"""Shared builders for the documents written by the CLI and returned by the tools."""

import math
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from surgical_lc.cpm import aci_linear
from surgical_lc.exceptions import DomainError
from surgical_lc.lccusum import CusumTrace
from surgical_lc.slca import SlcaSeries
from surgical_lc.wee import FitResult, parameter_names

SERIES_COLUMNS = ["i", "mu", "mu_lo", "mu_hi", "r", "r_lo", "r_hi", "cpm", "cpm_lo", "cpm_hi", "fit_ok"]
CUSUM_COLUMNS = ["i", "v", "s", "signaled"]


def finite_or_none(value: float) -> Optional[float]:
    """JSON-safe float: ``None`` for nan or infinity."""
    value = float(value)
    return value if math.isfinite(value) else None


def parse_profile(text: str) -> List[float]:
    """Parse a covariate profile written as ``"27"`` or ``"27,1.5"``."""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise DomainError(f"covariate profile {text!r} must be comma-separated numbers") from exc


def fit_document(fit: FitResult, alpha: float = 0.05) -> Dict[str, Any]:
    """Estimates with ``Estimate [ASE]`` display strings and linear ACIs."""
    names = parameter_names(fit.params.d)
    ases = fit.standard_errors()
    rows = []
    for name, estimate, ase in zip(names, fit.params.to_vector(), ases):
        row: Dict[str, Any] = {"name": name, "estimate": float(estimate)}
        if math.isfinite(ase):
            aci = aci_linear(float(estimate), float(ase), alpha)
            row.update(
                ase=float(ase),
                aci_lower=aci.lower,
                aci_upper=aci.upper,
                display=f"{estimate:.4f} [{ase:.4f}]",
            )
        else:
            row.update(ase=None, aci_lower=None, aci_upper=None, display=f"{estimate:.4f} [-]")
        rows.append(row)
    return {
        "n_cases": fit.n_cases,
        "lambda": fit.lambda_,
        "level": 1.0 - alpha,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "score_norm": finite_or_none(fit.score_norm),
        "loglik": finite_or_none(fit.loglik),
        "parameters": rows,
    }


def series_frame(series: SlcaSeries) -> pd.DataFrame:
    """One row per case; interval columns are empty where the fit failed."""
    records = []
    for p in series.points:
        row: Dict[str, Any] = {"i": p.index, "fit_ok": int(p.fit_ok)}
        for name in ("mu", "r", "cpm"):
            est = getattr(p, name)
            row[name] = est.point if est else np.nan
            row[f"{name}_lo"] = est.lower if est else np.nan
            row[f"{name}_hi"] = est.upper if est else np.nan
        records.append(row)
    return pd.DataFrame.from_records(records, columns=SERIES_COLUMNS)


def series_document(series: SlcaSeries) -> Dict[str, Any]:
    frame = series_frame(series)
    rows = [
        {key: (finite_or_none(value) if isinstance(value, float) else value) for key, value in row.items()}
        for row in frame.to_dict(orient="records")
    ]
    return {
        "x_eval": list(series.x_eval),
        "lambda": series.lambda_,
        "kind": series.cfg.kind,
        "cutoff": series.cfg.cutoff,
        "expertise_time": series.expertise_time,
        "final_fit_failed": series.final_fit_failed,
        "points": rows,
    }


def cusum_frame(trace: CusumTrace) -> pd.DataFrame:
    s = np.asarray(trace.s[1:])
    indices: Sequence[int] = trace.indices or range(1, len(s) + 1)
    return pd.DataFrame(
        {
            "i": list(indices),
            "v": list(trace.v),
            "s": s,
            "signaled": (np.abs(s) > trace.h).astype(int),
        },
        columns=CUSUM_COLUMNS,
    )


def cusum_document(trace: CusumTrace) -> Dict[str, Any]:
    return {
        "h": trace.h,
        "epsilon": trace.epsilon,
        "x_eval": list(trace.x_eval),
        "signal_index": trace.signal_index,
        "s": list(trace.s),
    }
