"""Figures for ADAPT traces and classical-method scans (written to files)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .adapt import AdaptTrace  # noqa: E402

FLOOR = 1e-16


def _positive(values: np.ndarray) -> np.ndarray:
    return np.clip(np.abs(values), FLOOR, None)


def plot_traces(traces: Mapping[str, AdaptTrace], path, gap: float | None = None, title: str = "") -> Path:
    """Energy error, gradient norm and infidelity versus parameter count.

    Adds a fourth panel with ``<S^2>`` when any trace tracked it.
    """
    with_s2 = any(np.isfinite(t.column("s_squared")).any() for t in traces.values())
    ncols = 4 if with_s2 else 3
    fig, axes = plt.subplots(1, ncols, figsize=(4.2 * ncols, 3.6), constrained_layout=True)
    units = next(iter(traces.values())).units if traces else ""
    for name, tr in traces.items():
        n = tr.column("n_params")
        axes[0].semilogy(n, _positive(tr.column("energy_error")), marker=".", label=name)
        axes[1].semilogy(n, _positive(tr.column("grad_l2")), marker=".", label=name)
        axes[2].plot(n, tr.column("infidelity"), marker=".", label=name)
        if with_s2:
            axes[3].plot(n, tr.column("s_squared"), marker=".", label=name)
    if gap is not None:
        axes[0].axhline(gap, color="k", ls="--", lw=0.8, label="E1 - E0")
        axes[0].axhline(gap / 2, color="gray", ls=":", lw=0.8, label="(E1 - E0)/2")
    axes[0].set_ylabel(f"|E - E_FCI| ({units})")
    axes[1].set_ylabel("pool gradient l2 norm")
    axes[2].set_ylabel("infidelity")
    axes[2].set_ylim(-0.02, 1.02)
    if with_s2:
        axes[3].set_ylabel("<S^2>")
    for ax in axes:
        ax.set_xlabel("parameters")
    axes[0].legend(fontsize=7)
    if title:
        fig.suptitle(title)
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_scan(grid: Sequence[float], series: Mapping[str, Sequence[float]], path, xlabel: str,
              ylabel: str = "absolute error", logx: bool = False, title: str = "") -> Path:
    """Several error curves over a parameter grid on a log scale."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0), constrained_layout=True)
    x = np.asarray(grid, dtype=float)
    order = np.argsort(x)
    for name, ys in series.items():
        y = np.array([np.nan if v is None else v for v in ys], dtype=float)
        ax.plot(x[order], _positive(y[order]), marker="o", label=name)
    ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
