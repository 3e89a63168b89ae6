"""Small statistical helpers shared by the simulators and the test-suite."""

import math

import numpy as np
from scipy import stats


def wilson_interval(successes, trials, z=1.959963984540054):
    """Wilson score interval for a binomial proportion (95% by default)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def ks_distance(a, b, assume_sorted=False):
    """Two-sample Kolmogorov distance sup_x |F_a(x) - F_b(x)|."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not assume_sorted:
        a = np.sort(a)
        b = np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_test(a, b):
    """(statistic, p-value) of the two-sided two-sample KS test."""
    res = stats.ks_2samp(a, b)
    return float(res.statistic), float(res.pvalue)


def mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), math.inf
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def chi2_independence_pvalue(a, b, bins=10):
    """p-value of a chi-square independence test on binned pairs of uniforms."""
    ia = np.minimum((np.asarray(a) * bins).astype(int), bins - 1)
    ib = np.minimum((np.asarray(b) * bins).astype(int), bins - 1)
    table = np.zeros((bins, bins))
    np.add.at(table, (ia, ib), 1)
    return float(stats.chi2_contingency(table)[1])
