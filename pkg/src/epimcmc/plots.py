"""Report figures rendered next to the delimited output files.

Every CLI command that writes CSVs can also render the matching figure:
epidemic curves with the syndromic series, log-likelihood/gradient scans,
chain traces, autocorrelation plots and marginal histograms.  All functions
take plain arrays plus an output path and write a PNG.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "epidemic_figure",
    "grid_figure",
    "trace_figure",
    "acf_figure",
    "marginal_figure",
]

_DPI = 150


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def epidemic_figure(kind, trajectory, series, path) -> None:
    """Compartment fractions over time plus the simulated observations."""
    trajectory = np.asarray(trajectory)
    days = np.arange(len(trajectory))
    labels = ("s", "i", "r") if kind == "sir" else ("s", "e", "i", "r")
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.2))
    for j, label in enumerate(labels):
        ax0.plot(days, 100.0 * trajectory[:, j], label=label)
    ax0.set_xlabel("day")
    ax0.set_ylabel("% of population")
    ax0.legend(frameon=False)
    ax0.set_title("epidemic curves")
    ax1.plot(series.days, series.values, ".", ms=3, color="k")
    ax1.set_xlabel("day")
    ax1.set_ylabel("observation")
    ax1.set_title("syndromic series")
    fig.tight_layout()
    _save(fig, path)


def grid_figure(param, values, logliks, grads, path, true_value=None) -> None:
    """Two panels: log-likelihood and its gradient over the scanned values."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax0.plot(values, logliks, lw=1)
    ax0.set_xlabel(param)
    ax0.set_ylabel("log-likelihood")
    ax1.plot(values, grads, lw=1)
    ax1.axhline(0.0, color="k", lw=0.8)
    ax1.set_xlabel(param)
    ax1.set_ylabel("gradient")
    if true_value is not None:
        for ax in (ax0, ax1):
            ax.axvline(true_value, color="k", ls="--", lw=0.8)
    fig.tight_layout()
    _save(fig, path)


def trace_figure(param_names, chains, path, truth=None, labels=None) -> None:
    """One panel per parameter; one line per chain."""
    k = len(param_names)
    fig, axes = plt.subplots(k, 1, figsize=(7, 2.2 * k), squeeze=False)
    for j, name in enumerate(param_names):
        ax = axes[j, 0]
        for c, chain in enumerate(chains):
            label = labels[c] if labels else None
            ax.plot(chain[:, j], lw=0.8, alpha=0.8, label=label)
        if truth is not None:
            ax.axhline(truth[j], color="k", ls="--", lw=0.8)
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("iteration")
    if labels:
        axes[0, 0].legend(frameon=False, fontsize=7, ncol=2)
    fig.tight_layout()
    _save(fig, path)


def acf_figure(lags, columns: dict, path) -> None:
    """Stem-style autocorrelation plot per parameter."""
    k = len(columns)
    fig, axes = plt.subplots(1, k, figsize=(3.2 * k, 2.8), squeeze=False)
    for ax, (name, rho) in zip(axes[0], columns.items()):
        ax.bar(lags, rho, width=1.0, color="tab:blue")
        ax.axhline(0.0, color="k", lw=0.8)
        ax.set_xlabel("lag")
        ax.set_title(name)
    axes[0][0].set_ylabel("autocorrelation")
    fig.tight_layout()
    _save(fig, path)


def marginal_figure(series: dict, bins, path, truth: dict | None = None) -> None:
    """Histogram per entry of ``series`` (e.g. parameters plus beta/gamma)."""
    k = len(series)
    fig, axes = plt.subplots(1, k, figsize=(3.2 * k, 2.8), squeeze=False)
    for ax, (name, x) in zip(axes[0], series.items()):
        ax.hist(x, bins=bins, color="tab:blue", alpha=0.8)
        if truth and name in truth and truth[name] is not None:
            ax.axvline(truth[name], color="k", ls="--", lw=0.8)
        ax.set_xlabel(name)
    axes[0][0].set_ylabel("count")
    fig.tight_layout()
    _save(fig, path)
