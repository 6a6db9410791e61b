"""Small statistical helpers shared by the process checks and experiments."""

from __future__ import annotations

import math
from collections import Counter
from typing import Mapping

import numpy as np
from scipy import stats


def clopper_pearson(k: int, n: int, level: float = 0.99) -> tuple[float, float]:
    """Exact two-sided binomial confidence interval."""
    if n <= 0:
        raise ValueError("need at least one trial")
    if not 0 <= k <= n:
        raise ValueError("count must lie in [0, n]")
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def frequencies(codes) -> dict[int, float]:
    codes = np.asarray(codes)
    vals, counts = np.unique(codes, return_counts=True)
    return {int(v): int(c) / len(codes) for v, c in zip(vals, counts)}


def tv_distance(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return float(0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def tv_radius(num_states: int, n1: int, n2: int | None = None) -> float:
    """Conservative Monte Carlo radius for a plug-in TV estimate.

    ``sqrt(#states / (2 n))`` per empirical law (a bound on the expected L1
    error halved), summed over the laws that are estimated.
    """
    r = math.sqrt(num_states / (2.0 * n1))
    if n2:
        r += math.sqrt(num_states / (2.0 * n2))
    return r


def binomial_radius(p: float, n: int, z: float = 1.0) -> float:
    return z * math.sqrt(max(p * (1 - p), 0.25 / n) / n)


def bootstrap_ci(values, statistic=np.var, reps: int = 1000, level: float = 0.95,
                 seed: int = 0) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    values = np.asarray(values, dtype=np.float64)
    idx = rng.integers(0, len(values), size=(reps, len(values)))
    boot = np.array([statistic(values[row]) for row in idx])
    a = (1 - level) / 2
    return float(np.quantile(boot, a)), float(np.quantile(boot, 1 - a))


def counts_table(codes) -> Counter:
    return Counter(int(c) for c in np.asarray(codes).tolist())
