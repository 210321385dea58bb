"""PNG figures written next to the CSV reports (no display needed)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.figure import Figure


def plot_decay(rows: list, path) -> Path:
    """Mean error and estimators (log scale) and mean effectivities against ``L``."""
    L = [r["L"] for r in rows]
    fig = Figure(figsize=(9, 3.6))
    ax1, ax2 = fig.subplots(1, 2)
    ax1.semilogy(L, [r["mean_eps_abs"] for r in rows], "o-", label="true error")
    ax1.semilogy(L, [r["mean_eta_star_abs"] for r in rows], "s--", label="eta_star")
    ax1.semilogy(L, [r["mean_eta_c_abs"] for r in rows], "^:", label="eta_c")
    ax1.set_xlabel("L")
    ax1.set_ylabel("mean absolute value")
    ax1.legend()
    ax2.semilogy(L, [r["mean_eff_star"] for r in rows], "s--", label="eta_star")
    ax2.semilogy(L, [r["mean_eff_c"] for r in rows], "^:", label="eta_c")
    ax2.set_xlabel("L")
    ax2.set_ylabel("mean effectivity")
    ax2.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    return path


def plot_validation(report, path) -> Path:
    """True error against both estimators for every validation parameter."""
    eps = report.column("eps_abs")
    order = np.argsort(eps)
    x = np.arange(len(eps))
    fig = Figure(figsize=(6, 3.6))
    ax = fig.subplots()
    ax.semilogy(x, eps[order], "o", label="true error")
    ax.semilogy(x, report.column("eta_star_abs")[order], "s", mfc="none", label="eta_star")
    ax.semilogy(x, report.column("eta_c_abs")[order], "^", mfc="none", label="eta_c")
    ax.set_xlabel("validation parameter (sorted by error)")
    ax.set_title(f"L = {report.L}")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    return path
