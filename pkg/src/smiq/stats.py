"""Distances and test statistics used to compare samplers.

Small, self-contained: empirical 1-Wasserstein distance, total variation
between discrete pmfs, a one-sample Kolmogorov-Smirnov statistic, and
moment z-scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import wasserstein_distance

__all__ = [
    "EmpiricalCloud",
    "empirical_w1",
    "pmf_tv",
    "pmf_from_samples",
    "ks_stat",
    "moment_z",
]


@dataclass(eq=False)
class EmpiricalCloud:
    """Sample values with optional nonnegative weights."""

    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("values must be a nonempty 1-D array")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != self.values.shape:
                raise ValueError("weights must match values in length")
            if np.any(self.weights < 0) or self.weights.sum() <= 0:
                raise ValueError("weights must be nonnegative with positive total")


def _as_cloud(x) -> EmpiricalCloud:
    if isinstance(x, EmpiricalCloud):
        return x
    return EmpiricalCloud(values=np.asarray(x, dtype=np.float64))


def empirical_w1(a, b) -> float:
    """1-Wasserstein distance between two empirical clouds.

    Equal-size unweighted clouds reduce to the mean absolute difference of
    the sorted samples (the optimal coupling is rank to rank); everything
    else integrates the absolute difference of the two CDFs.
    """
    ca, cb = _as_cloud(a), _as_cloud(b)
    if ca.weights is None and cb.weights is None and ca.values.size == cb.values.size:
        return float(np.mean(np.abs(np.sort(ca.values) - np.sort(cb.values))))
    return float(
        wasserstein_distance(ca.values, cb.values, ca.weights, cb.weights)
    )


def pmf_from_samples(samples) -> dict[int, float]:
    """Empirical pmf of integer samples."""
    arr = np.asarray(samples)
    if arr.size == 0:
        raise ValueError("need at least one sample")
    values, counts = np.unique(arr, return_counts=True)
    return {int(v): float(c) / arr.size for v, c in zip(values, counts)}


def pmf_tv(p: dict, q: dict) -> float:
    """Total variation distance between two pmfs on a shared support."""
    support = set(p) | set(q)
    if not support:
        raise ValueError("both pmfs are empty")
    return 0.5 * sum(abs(p.get(x, 0.0) - q.get(x, 0.0)) for x in support)


def ks_stat(samples, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov statistic against a CDF callable."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise ValueError("need at least one sample")
    n = x.size
    f = np.asarray(cdf(x), dtype=np.float64)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def moment_z(samples, predicted: float, order: int = 1) -> float:
    """Standardized discrepancy of a sample moment from a predicted value.

    z = (mean(x^order) - predicted) / se where se is the sample standard
    error of x^order.  A zero se with an exact match gives z = 0.
    """
    if order < 1:
        raise ValueError(f"order must be a positive integer, got {order}")
    x = np.asarray(samples, dtype=np.float64) ** order
    if x.size < 2:
        raise ValueError("need at least two samples")
    se = x.std(ddof=1) / math.sqrt(x.size)
    diff = float(x.mean() - predicted)
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se
