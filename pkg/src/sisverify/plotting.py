"""Figure output for analysis and simulation reports."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stochastic import LOW_DEMAND_BANDS  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "svg.hashsalt": "sisverify",
}


def _size(scale: float = 1.0) -> tuple[float, float]:
    width = 6.0 * scale
    return width, width * (np.sqrt(5.0) - 1.0) / 2.0


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamps or version strings, so reruns give identical files
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def bounded_reach_figure(curve: Sequence[float], path: Path, unbounded: Optional[float] = None,
                         sil_bands: bool = True) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        k = np.arange(len(curve))
        ax.step(k, curve, where="post", label="P(exposure within k ticks)")
        if unbounded is not None:
            ax.axhline(unbounded, linestyle="--", color="0.3", label=f"unbounded = {unbounded:.4g}")
        if sil_bands:
            for lower in LOW_DEMAND_BANDS:
                ax.axhline(lower * 10, color="0.85", linewidth=0.6, zorder=0)
        ax.set_xlabel("horizon k [ticks]")
        ax.set_ylabel("exposure probability")
        ax.set_xlim(0, max(1, len(curve) - 1))
        ax.set_ylim(0, max(1e-3, 1.05 * max(max(curve), unbounded or 0.0)))
        ax.legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def monte_carlo_figure(chunk_runs: Sequence[int], chunk_hits: Sequence[int], path: Path,
                       exact: Optional[float] = None) -> Path:
    runs = np.cumsum(chunk_runs)
    hits = np.cumsum(chunk_hits)
    est = hits / runs
    err = np.sqrt(est * (1.0 - est) / runs)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=_size())
        ax.plot(runs, est, marker="o", markersize=3, label="running estimate")
        ax.fill_between(runs, est - 3 * err, est + 3 * err, alpha=0.25, label="±3 stderr")
        if exact is not None:
            ax.axhline(exact, linestyle="--", color="0.3", label=f"exact = {exact:.4g}")
        ax.set_xlabel("simulated runs")
        ax.set_ylabel("exposure probability")
        ax.legend(loc="best")
        fig.tight_layout()
        return _save(fig, path)
