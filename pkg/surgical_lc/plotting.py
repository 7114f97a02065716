"""Static SVG plots of SLCA series and LC-CUSUM traces."""

import logging
from pathlib import Path
from typing import Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from surgical_lc.lccusum import CusumTrace
from surgical_lc.model import WeibullRegParams, rmot
from surgical_lc.slca import SlcaSeries

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Stable element ids so the same series always yields the same file.
matplotlib.rcParams["svg.hashsalt"] = "surgical-lc"


def _save(fig: Figure, out_path: PathLike) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", bbox_inches="tight", metadata={"Date": None})
    logger.info("wrote %s", out_path)
    return out_path


def _column(series: SlcaSeries, name: str, field: str) -> np.ndarray:
    return np.array(
        [getattr(getattr(p, name), field) if p.fit_ok else np.nan for p in series.points]
    )


def plot_series(series: SlcaSeries, standard: WeibullRegParams, out_path: PathLike) -> Path:
    """Three stacked panels against case number: RMOT, relative risk and CPM.

    Each panel shows the point estimates with their interval band. Reference
    lines mark ``mu_S(x)``, the indifference bounds and the decision cutoff.
    """
    idx = np.array([p.index for p in series.points])
    cfg = series.cfg
    fig = Figure(figsize=(7.0, 9.0))
    axes = fig.subplots(3, 1, sharex=True)
    panels = (
        ("mu", "RMOT (hours)"),
        ("r", "Relative risk"),
        ("cpm", f"{cfg.kind} probability"),
    )
    for ax, (name, label) in zip(axes, panels):
        ax.fill_between(
            idx, _column(series, name, "lower"), _column(series, name, "upper"), alpha=0.25, lw=0
        )
        ax.plot(idx, _column(series, name, "point"), lw=1.2)
        ax.set_ylabel(label)

    axes[0].axhline(rmot(standard, series.x_eval), color="k", ls="--", lw=0.8, gid="standard-rmot")
    axes[1].axhline(cfg.delta_u, color="k", ls="--", lw=0.8, gid="delta-upper")
    if cfg.delta_l > 0:
        axes[1].axhline(cfg.delta_l, color="k", ls="--", lw=0.8, gid="delta-lower")
    axes[2].axhline(cfg.cutoff, color="r", ls=":", lw=0.8, gid="cutoff-line")
    axes[2].set_ylim(-0.02, 1.02)
    if series.expertise_time is not None:
        axes[2].axvline(series.expertise_time, color="g", lw=0.8, gid="expertise-time")
    axes[-1].set_xlabel("Case")
    axes[0].set_title(f"x = {', '.join(f'{v:g}' for v in series.x_eval)}")
    return _save(fig, out_path)


def plot_cusum(trace: CusumTrace, out_path: PathLike) -> Path:
    """LC-CUSUM statistic ``s_i`` with the ``-h`` signal boundary."""
    fig = Figure(figsize=(7.0, 3.5))
    ax = fig.subplots()
    ax.step(np.arange(len(trace.s)), trace.s, where="post", lw=1.2)
    ax.axhline(-trace.h, color="r", ls=":", lw=0.8, gid="signal-boundary")
    if trace.signal_index is not None:
        ax.axvline(trace.signal_index, color="g", lw=0.8, gid="signal-index")
    ax.set_xlabel("Case")
    ax.set_ylabel("s")
    return _save(fig, out_path)
