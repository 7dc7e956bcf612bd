"""Counting-window statistics and mutual-information estimates.

The joint distribution of (consumer bin, grid bin) is estimated by relative
frequencies over a window of ``N`` intervals: the recent past, whose counts
are fixed, plus the prediction horizon, whose grid bins are decision
variables. Every estimate is additively smoothed by ``eps``.

Horizon assignments ``z`` are accepted in two forms: a sequence of grid-bin
indices (one per horizon step, paired with the window's known consumer
bins) or an ``m x n`` matrix of horizon counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SafeguardError, SmoothingError
from .model import QuantGrid, quantize_many

NU = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class CountWindow:
    """Joint counts for the past part of a window plus the known horizon bins.

    ``past_counts[i, j]`` counts intervals in ``{t-M+1, ..., t-1}`` whose
    quantized pair was ``(i, j)``. ``horizon_bins`` holds the consumer bin
    of every horizon step ``t .. t+T``. ``N = M + T`` is the nominal length.
    A window with an empty horizon (``T = -1``) describes a purely
    retrospective evaluation over ``N`` realized pairs.
    """

    past_counts: np.ndarray
    horizon_bins: tuple[int, ...]
    N: int

    @property
    def T(self) -> int:
        return len(self.horizon_bins) - 1

    @property
    def M(self) -> int:
        return self.N - self.T

    @property
    def shape(self) -> tuple[int, int]:
        return self.past_counts.shape


@dataclass(frozen=True)
class ProbEstimates:
    a: np.ndarray  # joint constants, shape (m, n)
    b: np.ndarray  # grid-marginal constants, shape (n,)
    c: np.ndarray  # consumer marginal over the whole window, shape (m,)
    eps: float
    n_eps: float
    horizon_bins: tuple[int, ...]

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]


def count_window(history, x_grid: QuantGrid, y_grid: QuantGrid, M: int, T: int, t: int,
                 forecast) -> CountWindow:
    """Tally the window used by the controller at time ``t``.

    ``history`` yields realized ``(x, y)`` pairs for intervals ``0, 1, ...``;
    only intervals ``t-M+1 .. t-1`` are counted, so early windows hold fewer
    than ``M - 1`` samples. ``forecast`` holds the consumer load for
    ``t .. t+T``.
    """
    forecast = np.asarray(forecast, dtype=float)
    if len(forecast) != T + 1:
        raise ValueError(f"forecast must cover T+1={T + 1} steps, got {len(forecast)}")
    counts = np.zeros((x_grid.count, y_grid.count), dtype=np.int64)
    lo = max(0, t - M + 1)
    past = list(history)[lo:t]
    if past:
        xs, ys = np.asarray(past, dtype=float).T
        np.add.at(counts, (quantize_many(xs, x_grid), quantize_many(ys, y_grid)), 1)
    horizon = tuple(int(i) for i in quantize_many(forecast, x_grid))
    return CountWindow(counts, horizon, M + T)


def static_window(xs, ys, x_grid: QuantGrid, y_grid: QuantGrid) -> CountWindow:
    """Window over realized pairs only, with ``N`` equal to their number."""
    counts = np.zeros((x_grid.count, y_grid.count), dtype=np.int64)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs):
        np.add.at(counts, (quantize_many(xs, x_grid), quantize_many(ys, y_grid)), 1)
    return CountWindow(counts, (), len(xs))


def estimate_probs(window: CountWindow, eps: float) -> ProbEstimates:
    if not eps > 0:
        raise SmoothingError(f"smoothing constant must be positive, got {eps}")
    m, n = window.shape
    counts = window.past_counts.astype(float)
    n_eps = window.N + m * n * eps
    a = (counts + eps) / n_eps
    b = (counts.sum(axis=0) + m * eps) / n_eps
    x_counts = counts.sum(axis=1) + np.bincount(window.horizon_bins, minlength=m)[:m]
    c = (x_counts + n * eps) / n_eps
    return ProbEstimates(a, b, c, float(eps), float(n_eps), window.horizon_bins)


def horizon_counts(probs: ProbEstimates, z) -> np.ndarray:
    """Normalize ``z`` to an ``(m, n)`` matrix of horizon counts."""
    z = np.asarray(z)
    if z.ndim == 2:
        if z.shape != probs.a.shape:
            raise ValueError(f"count matrix has shape {z.shape}, expected {probs.a.shape}")
        return z.astype(float)
    if len(z) != len(probs.horizon_bins):
        raise ValueError(f"need one grid bin per horizon step ({len(probs.horizon_bins)}), got {len(z)}")
    out = np.zeros(probs.a.shape)
    if len(z):
        np.add.at(out, (np.asarray(probs.horizon_bins), z.astype(int)), 1.0)
    return out


def mutual_info_exact(probs: ProbEstimates, z=()) -> float:
    """Smoothed plug-in estimate of I(X; Y) in bits with horizon bins ``z``."""
    Z = horizon_counts(probs, z)
    joint = probs.a + Z / probs.n_eps
    py = probs.b + Z.sum(axis=0) / probs.n_eps
    terms = joint * (np.log2(joint) - np.log2(py)[None, :] - np.log2(probs.c)[:, None])
    return float(terms.sum())


def mutual_info_linearized(probs: ProbEstimates, z=()) -> float:
    """Estimate with both logarithms expanded to first order around the past counts.

    Quadratic in the horizon indicators; this is the privacy term the
    controller optimizes.
    """
    Z = horizon_counts(probs, z)
    a, b, c, ne = probs.a, probs.b, probs.c, probs.n_eps
    joint = a + Z / ne
    base = np.log2(a / (b[None, :] * c[:, None]))
    slope = NU * Z / (a * ne) - (NU * Z.sum(axis=0) / (b * ne))[None, :]
    return float((joint * (base + slope)).sum())


def max_log_derivative(probs: ProbEstimates) -> float:
    """Largest derivative of log2 at any expansion point a[i, j] or b[j]."""
    return max(NU / float(probs.a.min()), NU / float(probs.b.min()))


def epsilon_from_rho(N: int, m: int, n: int, rho: float) -> float:
    """Smallest smoothing constant that keeps every log-derivative at most ``rho``."""
    denom = rho / NU - m * n
    if not denom > 0:
        raise SafeguardError(f"rho={rho} too small: need rho/nu > m*n = {m * n}")
    eps = N / denom
    # the bound is tight, so step past any rounding that lands a hair above rho
    while NU / (eps / (N + m * n * eps)) > rho or NU * (N + m * n * eps) / eps > rho:
        eps = math.nextafter(eps, math.inf)
    return eps
