"""Posterior summarisation and convergence diagnostics.

Turns draw archives into density surfaces (pointwise quantiles over a
time x value grid), mean-functional bands, and the usual chain health
numbers (potential scale reduction factor, effective sample size).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .gibbs import PosteriorDraws
from .measure import sticks_to_weights_matrix
from .mixture import gaussian_logpdf

MODE_BINS = 512
MODE_MASS = 0.10


@dataclass(frozen=True)
class DensitySurface:
    """Pointwise posterior summary of the time-varying density.

    Density arrays have shape (n_times, n_grid); mean-functional arrays
    have shape (n_times,). Quantiles are the empirical 2.5 / 50 / 97.5
    percent order statistics across draws.
    """

    times: np.ndarray
    y_grid: np.ndarray
    dens_q025: np.ndarray
    dens_q50: np.ndarray
    dens_q975: np.ndarray
    dens_mean: np.ndarray
    mean_mode: np.ndarray
    mean_mean: np.ndarray
    mean_median: np.ndarray
    mean_lo: np.ndarray
    mean_hi: np.ndarray

    def to_density_csv(self, path) -> None:
        """Long-format rows t, y, q025, q50, q975, mean."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "y", "q025", "q50", "q975", "mean"])
            for i, t in enumerate(self.times):
                for g, y in enumerate(self.y_grid):
                    writer.writerow([
                        repr(float(t)), repr(float(y)),
                        repr(float(self.dens_q025[i, g])),
                        repr(float(self.dens_q50[i, g])),
                        repr(float(self.dens_q975[i, g])),
                        repr(float(self.dens_mean[i, g])),
                    ])

    def to_mean_csv(self, path) -> None:
        """Mean-functional rows t, mode, mean, lo, hi."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mode", "mean", "lo", "hi"])
            for i, t in enumerate(self.times):
                writer.writerow([
                    repr(float(t)), repr(float(self.mean_mode[i])),
                    repr(float(self.mean_mean[i])),
                    repr(float(self.mean_lo[i])),
                    repr(float(self.mean_hi[i])),
                ])

    def to_json(self, path) -> None:
        payload = {
            "times": self.times.tolist(),
            "y_grid": self.y_grid.tolist(),
            "density": {
                "q025": self.dens_q025.tolist(),
                "q50": self.dens_q50.tolist(),
                "q975": self.dens_q975.tolist(),
                "mean": self.dens_mean.tolist(),
            },
            "mean_functional": {
                "mode": self.mean_mode.tolist(),
                "mean": self.mean_mean.tolist(),
                "median": self.mean_median.tolist(),
                "lo": self.mean_lo.tolist(),
                "hi": self.mean_hi.tolist(),
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)


def histogram_mode(samples: np.ndarray, bins: int = MODE_BINS,
                   mass: float = MODE_MASS) -> float:
    """Midpoint of the shortest bin window holding at least `mass`.

    A deterministic highest-density summary: histogram the draws into
    equal-width bins, slide the shortest contiguous window whose mass
    reaches the target, and report its midpoint. Ties pick the heavier,
    then the leftmost, window.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if x.max() == x.min():
        return float(x[0])
    counts, edges = np.histogram(x, bins=bins)
    need = mass * x.size
    best = None  # (width, -mass, start)
    csum = np.concatenate([[0], np.cumsum(counts)])
    j = 0
    for i in range(bins):
        if j < i + 1:
            j = i + 1
        while j <= bins and csum[j] - csum[i] < need:
            j += 1
        if j > bins:
            break
        window = (j - i, -(csum[j] - csum[i]), i)
        if best is None or window < best:
            best = window
    if best is None:  # mass target above 1: fall back to the full range
        return float(0.5 * (edges[0] + edges[-1]))
    width, _, start = best
    return float(0.5 * (edges[start] + edges[start + width]))


def summarize(draws: PosteriorDraws, y_grid,
              data=None) -> DensitySurface:
    """Evaluate every draw on the grid and reduce to pointwise summaries.

    Densities are renormalised by the retained weight mass of each draw
    so each curve integrates to one. The data argument is accepted for
    interface symmetry and not needed by the computation.
    """
    del data
    if draws.n_draws == 0:
        raise ValueError("empty draws")
    y_grid = np.asarray(y_grid, dtype=float)
    n = len(draws.times)
    grid_n = len(y_grid)
    d = draws.n_draws
    dens = np.empty((d, n, grid_n))
    mean_fn = np.empty((d, n))
    for i in range(d):
        mi = int(draws.m[i])
        sticks = draws.sticks[i, :mi, :]
        means = draws.atom_mean[i, :mi]
        precs = draws.atom_prec[i, :mi]
        w = sticks_to_weights_matrix(sticks)
        kept = 1.0 - np.prod(1.0 - sticks, axis=0)
        kernel = np.exp(gaussian_logpdf(y_grid[None, :], means[:, None],
                                        precs[:, None]))
        dens[i] = (w.T @ kernel) / kept[:, None]
        mean_fn[i] = (w.T @ means) / kept
    q = np.quantile(dens, [0.025, 0.5, 0.975], axis=0)
    lo, med, hi = np.quantile(mean_fn, [0.025, 0.5, 0.975], axis=0)
    mode = np.array([histogram_mode(mean_fn[:, i]) for i in range(n)])
    return DensitySurface(
        times=np.asarray(draws.times, dtype=float), y_grid=y_grid,
        dens_q025=q[0], dens_q50=q[1], dens_q975=q[2],
        dens_mean=dens.mean(axis=0),
        mean_mode=mode, mean_mean=mean_fn.mean(axis=0), mean_median=med,
        mean_lo=lo, mean_hi=hi)


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor across chains of one scalar.

    Needs at least two chains of equal length >= 10 with positive
    within-chain variance.
    """
    traces = [np.asarray(c, dtype=float) for c in chains]
    if len(traces) < 2:
        raise ValueError("need at least two chains")
    length = len(traces[0])
    if length < 10 or any(len(t) != length for t in traces):
        raise ValueError("chains must share one length of at least 10")
    arr = np.stack(traces)
    within = arr.var(axis=1, ddof=1).mean()
    if within <= 0:
        raise ValueError("degenerate (zero-variance) traces")
    means = arr.mean(axis=1)
    between = length * means.var(ddof=1)
    pooled = (length - 1) / length * within + between / length
    return float(np.sqrt(pooled / within))


def effective_sample_size(trace) -> float:
    """ESS via the initial-positive-sequence autocorrelation estimator.

    Pairwise autocorrelation sums are accumulated until the first
    negative pair; the result is clipped to the trace length.
    """
    x = np.asarray(trace, dtype=float)
    n = len(x)
    if n < 10:
        raise ValueError("trace too short")
    xc = x - x.mean()
    var = xc @ xc / n
    if var <= 0:
        raise ValueError("degenerate (zero-variance) trace")
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    rho = acov / var
    # tau = 1 + 2 sum_{k>=1} rho_k = -1 + 2 * sum of positive pair sums
    tau = -rho[0]
    t = 0
    while 2 * t + 1 < n:
        pair = rho[2 * t] + rho[2 * t + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        t += 1
    tau = max(tau, 1.0 / n)
    return float(min(n / tau, float(n)))


@dataclass(frozen=True)
class CoverageReport:
    """Fractions of the truth captured by the posterior bands."""

    mean_coverage: float
    density_coverage: float


def coverage_report(surface: DensitySurface, truth_mean,
                    truth_density) -> CoverageReport:
    """Check band coverage against a known truth.

    truth_mean(t) gives the true mean at a grid time; truth_density(t, y)
    the true density on the surface's y grid (vectorised over y).
    """
    times = surface.times
    mean_hits = 0
    cell_hits = 0
    cells = 0
    for i, t in enumerate(times):
        mu = float(truth_mean(t))
        if surface.mean_lo[i] <= mu <= surface.mean_hi[i]:
            mean_hits += 1
        dens = np.asarray(truth_density(t, surface.y_grid), dtype=float)
        if dens.shape != surface.y_grid.shape:
            raise ValueError("truth_density must match the y grid")
        inside = (surface.dens_q025[i] <= dens) & (dens <= surface.dens_q975[i])
        cell_hits += int(inside.sum())
        cells += len(dens)
    return CoverageReport(mean_coverage=mean_hits / len(times),
                          density_coverage=cell_hits / cells)
