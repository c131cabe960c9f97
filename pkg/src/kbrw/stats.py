"""Small statistical helpers for the Monte Carlo harness."""

from __future__ import annotations

import math

import numpy as np

Z95 = 1.959963984540054  # two-sided 95% normal quantile


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Preferred over the Wald interval here because the survival
    probabilities of interest sit close to zero, where Wald collapses.
    """
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))
    # rounding can push a bound past the point estimate by an ulp; the
    # interval must contain it
    return min(max(0.0, center - half), p), max(min(1.0, center + half), p)


def proportion_stderr(p_hat: float, trials: int) -> float:
    if trials <= 0:
        return math.inf
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / trials)


def mean_and_stderr(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n == 0:
        return math.nan, math.inf
    mean = float(values.mean())
    if n == 1:
        return mean, math.inf
    return mean, float(values.std(ddof=1) / math.sqrt(n))


def regression_slope(x, y) -> float:
    """Least-squares slope of y on x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


__all__ = ["Z95", "wilson_interval", "proportion_stderr", "mean_and_stderr", "regression_slope"]
