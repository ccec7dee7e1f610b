"""Convergence and accuracy statistics for MCMC chains.

Autocorrelations use the biased (divide-by-M) estimator; the integrated
autocorrelation time truncates the lag sum with Geyer's initial positive
sequence, so it needs no tuning parameter.  All statistics exclude burn-in.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "acf",
    "iact",
    "ess",
    "mse",
    "histogram",
    "ChainSummary",
    "summarize",
    "write_summary_csv",
    "write_acf_csv",
    "write_histogram_csv",
]

# numerical floor for the truncated IACT sum, which can go non-positive on
# strongly antithetic series
_IACT_FLOOR = 1e-6


def _autocorrelation(series: np.ndarray) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be 1-D")
    n = len(x)
    if n < 2:
        raise ValueError("series too short")
    x = x - x.mean()
    if float(x @ x) == 0.0:
        raise ValueError("series is constant (zero variance)")
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    cov = np.fft.irfft(f * np.conjugate(f), size)[:n].real
    return cov / cov[0]


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag`` (``rho_0 = 1``)."""
    x = np.asarray(series, dtype=float)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if len(x) <= max_lag:
        raise ValueError("series must be longer than max_lag")
    return _autocorrelation(x)[: max_lag + 1]


def iact(series) -> float:
    """Integrated autocorrelation time ``1 + 2 sum(rho_k)``.

    The sum runs over Geyer pair sums ``rho_{2m} + rho_{2m+1}`` and stops
    before the first non-positive pair.
    """
    rho = _autocorrelation(series)
    n_pairs = len(rho) // 2
    total = 0.0
    for m in range(n_pairs):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        total += pair
    return max(2.0 * total - 1.0, _IACT_FLOOR)


def ess(series, elapsed_seconds: float):
    """Effective sample size and its rate: ``(M / IACT, ESS / elapsed)``."""
    if elapsed_seconds <= 0.0:
        raise ValueError("elapsed seconds must be > 0")
    tau = iact(series)
    n_eff = len(series) / tau
    return n_eff, n_eff / elapsed_seconds


def mse(samples, truth) -> np.ndarray:
    """Mean squared error of each column of ``samples`` against ``truth``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if samples.shape[0] == 0:
        raise ValueError("no samples")
    if truth.shape != (samples.shape[1],):
        raise ValueError("need one truth entry per parameter")
    return np.mean((samples - truth) ** 2, axis=0)


def histogram(series, bins: int):
    """Equal-width histogram spanning ``[min, max]``; counts sum to ``len``."""
    x = np.asarray(series, dtype=float)
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if len(x) == 0:
        raise ValueError("empty series")
    counts, edges = np.histogram(x, bins=bins)
    return edges, counts


@dataclass(frozen=True)
class ChainSummary:
    """Per-parameter posterior summaries plus chain-level efficiency."""

    param_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    q025: np.ndarray
    q500: np.ndarray
    q975: np.ndarray
    iact: np.ndarray
    ess: np.ndarray
    ess_per_second: np.ndarray
    acceptance_rate: float
    n_samples: int
    elapsed_seconds: float
    mse: np.ndarray | None = None


def summarize(chain, truth=None) -> ChainSummary:
    """Summary statistics of a chain with burn-in excluded.

    ``truth``, when given, is an array aligned with the chain's parameters
    and enables the MSE column.  The ESS rate uses the chain's total wall
    time, matching how run time is reported.
    """
    samples = chain.post_burn()
    if len(samples) == 0:
        raise ValueError("chain has no post-burn-in samples")
    k = samples.shape[1]
    elapsed = float(chain.cum_seconds[-1])
    taus = np.array([iact(samples[:, j]) for j in range(k)])
    n_eff = len(samples) / taus
    quantiles = np.percentile(samples, [2.5, 50.0, 97.5], axis=0)
    errors = None
    if truth is not None:
        errors = mse(samples, truth)
    return ChainSummary(
        param_names=tuple(chain.param_names),
        mean=samples.mean(axis=0),
        std=samples.std(axis=0, ddof=1),
        q025=quantiles[0],
        q500=quantiles[1],
        q975=quantiles[2],
        iact=taus,
        ess=n_eff,
        ess_per_second=n_eff / elapsed if elapsed > 0 else np.full(k, np.nan),
        acceptance_rate=float(np.mean(chain.accepted[chain.burn_in :])),
        n_samples=len(samples),
        elapsed_seconds=elapsed,
        mse=errors,
    )


# --- CSV output --------------------------------------------------------------


def write_summary_csv(path, summaries, labels=None) -> None:
    """One row per (chain, parameter); chain-level fields are repeated."""
    path = Path(path)
    if labels is None:
        labels = [str(i) for i in range(len(summaries))]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["chain", "param", "mean", "std", "q2.5", "q50", "q97.5", "iact",
             "ess", "ess_per_sec", "mse", "acc_rate", "n_samples", "elapsed_seconds"]
        )
        for label, s in zip(labels, summaries):
            for j, name in enumerate(s.param_names):
                writer.writerow(
                    [label, name, repr(float(s.mean[j])), repr(float(s.std[j])),
                     repr(float(s.q025[j])), repr(float(s.q500[j])), repr(float(s.q975[j])),
                     repr(float(s.iact[j])), repr(float(s.ess[j])),
                     repr(float(s.ess_per_second[j])),
                     "" if s.mse is None else repr(float(s.mse[j])),
                     repr(s.acceptance_rate), s.n_samples, repr(s.elapsed_seconds)]
                )


def write_acf_csv(path, lags, columns: dict) -> None:
    """``lag`` column plus one autocorrelation column per series."""
    path = Path(path)
    names = list(columns)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lag"] + names)
        for i, lag in enumerate(lags):
            writer.writerow([int(lag)] + [repr(float(columns[n][i])) for n in names])


def write_histogram_csv(path, edges, counts) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])
