"""Gaussian mixture layer on top of the random measure.

Atoms are (mean, precision) pairs and the observation density at time t
is f_t(y) = sum_j w_j(t) N(y | mean_j, 1 / precision_j). Atom priors use
the conjugate normal-gamma family: precision ~ Gamma(shape, rate) and
mean | precision ~ Normal(mean0, 1 / (precision_scale * precision)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .data import TimeGridDataset
from .measure import MeasureState

LOG_2PI = math.log(2.0 * math.pi)

# Toy data generator: N(cos(2t) + t/2, 1/10) sampled on an even grid.
TOY_VARIANCE = 0.1


@dataclass(frozen=True)
class KernelParam:
    """Gaussian kernel location and precision (variance = 1 / precision)."""

    mean: float
    precision: float

    def __post_init__(self):
        if not self.precision > 0:
            raise ValueError("precision must be positive")


@dataclass(frozen=True)
class CenteringMeasure:
    """Normal-gamma law for atom parameters.

    precision ~ Gamma(shape, rate);
    mean | precision ~ Normal(mean0, 1 / (precision_scale * precision)).
    """

    mean0: float = 0.0
    precision_scale: float = 1e-3
    shape: float = 10.0
    rate: float = 1.0

    def __post_init__(self):
        if not (self.precision_scale > 0 and self.shape > 0 and self.rate > 0):
            raise ValueError("precision_scale, shape and rate must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw atoms as a (size, 2) array of (mean, precision) rows."""
        prec = rng.gamma(self.shape, 1.0 / self.rate, size=size)
        mean = rng.normal(self.mean0,
                          1.0 / np.sqrt(self.precision_scale * prec))
        return np.column_stack([mean, prec])

    def logpdf(self, mean, precision):
        """Joint log density at (mean, precision)."""
        mean = np.asarray(mean, dtype=float)
        prec = np.asarray(precision, dtype=float)
        lam = self.precision_scale * prec
        log_norm = 0.5 * (np.log(lam) - LOG_2PI) \
            - 0.5 * lam * (mean - self.mean0) ** 2
        log_gamma = self.shape * np.log(self.rate) - gammaln(self.shape) \
            + (self.shape - 1.0) * np.log(prec) - self.rate * prec
        out = log_norm + log_gamma
        return float(out) if out.ndim == 0 else out

    def posterior(self, ys: np.ndarray) -> "CenteringMeasure":
        """Conjugate update given observations assigned to one atom.

        With no observations the prior is returned unchanged.
        """
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        n = len(ys)
        total = ys.sum()
        total_sq = (ys ** 2).sum()
        scale_n = self.precision_scale + n
        mean_n = (self.precision_scale * self.mean0 + total) / scale_n
        rate_n = self.rate + 0.5 * (
            total_sq + self.precision_scale * self.mean0 ** 2
            - scale_n * mean_n ** 2
        )
        return CenteringMeasure(mean0=mean_n, precision_scale=scale_n,
                                shape=self.shape + 0.5 * n,
                                rate=max(rate_n, np.finfo(float).tiny))


def gaussian_logpdf(y, means, precisions):
    """log N(y | mean, 1 / precision), broadcasting over all arguments."""
    y = np.asarray(y, dtype=float)
    means = np.asarray(means, dtype=float)
    precisions = np.asarray(precisions, dtype=float)
    return 0.5 * (np.log(precisions) - LOG_2PI) \
        - 0.5 * precisions * (y - means) ** 2


def kernel_eval(y, x: KernelParam):
    """Gaussian kernel density N(y | x.mean, 1 / x.precision)."""
    out = np.exp(gaussian_logpdf(y, x.mean, x.precision))
    return float(out) if out.ndim == 0 else out


def density_eval(state: MeasureState, time_index: int, y,
                 renormalized: bool = True):
    """Mixture density sum_j w_j(t_i) N(y | atom_j) at one time.

    With renormalized=True the weights are divided by 1 - deficit so the
    reported curve integrates to one; the raw truncated sum is what the
    sampler itself works with.
    """
    w = state.weights(time_index)
    means = state.atoms[:, 0]
    precs = state.atoms[:, 1]
    y = np.asarray(y, dtype=float)
    grid = np.atleast_1d(y)
    dens = np.exp(gaussian_logpdf(grid[None, :], means[:, None],
                                  precs[:, None]))
    out = w @ dens
    if renormalized:
        out = out / (1.0 - state.deficit(time_index))
    return float(out[0]) if y.ndim == 0 else out


def mean_functional(state: MeasureState, time_index: int) -> float:
    """First moment of the renormalized mixture, sum_j w_j mean_j / (1 - deficit)."""
    w = state.weights(time_index)
    return float(w @ state.atoms[:, 0] / (1.0 - state.deficit(time_index)))


def toy_mean(t):
    """Mean cos(2t) + t/2 of the toy generator."""
    t = np.asarray(t, dtype=float)
    out = np.cos(2.0 * t) + 0.5 * t
    return float(out) if out.ndim == 0 else out


def toy_density(t, y):
    """Density of the toy generator at (t, y)."""
    y = np.asarray(y, dtype=float)
    out = np.exp(gaussian_logpdf(y, toy_mean(t), 1.0 / TOY_VARIANCE))
    return float(out) if out.ndim == 0 else out


def simulate_toy(n_times: int, per_time: int, t_max: float,
                 rng: np.random.Generator) -> TimeGridDataset:
    """Sample the toy dataset: per_time draws from N(cos(2t) + t/2, 1/10)
    at n_times equally spaced times on [0, t_max]."""
    if n_times < 1 or per_time < 1:
        raise ValueError("n_times and per_time must be at least 1")
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    times = np.linspace(0.0, t_max, n_times)
    sd = math.sqrt(TOY_VARIANCE)
    values = tuple(rng.normal(toy_mean(t), sd, size=per_time) for t in times)
    return TimeGridDataset(times=times, values=values)
