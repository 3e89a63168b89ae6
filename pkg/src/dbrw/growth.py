"""Flat / Growing verdicts for per-depth maxima trajectories.

The slope is the least-squares slope of log(median over replicas) against
depth over the last half of the depths; its confidence interval comes from
resampling replicas.  Thresholds are in natural-log units per depth.
"""

from dataclasses import dataclass
import math

import numpy as np

from .rng import numpy_rng

FLAT_THRESHOLD = 0.02
GROW_THRESHOLD = 0.05
N_BOOT = 200
LOG_FLOOR = 1e-300

FLAT, GROWING, AMBIGUOUS = "Flat", "Growing", "Ambiguous"


@dataclass(frozen=True)
class GrowthVerdict:
    slope: float
    ci_lo: float
    ci_hi: float
    verdict: str
    first_depth: int
    last_depth: int

    @property
    def slope_ci(self):
        return self.ci_lo, self.ci_hi

    def to_dict(self):
        return dict(slope=self.slope, ci_lo=self.ci_lo, ci_hi=self.ci_hi, verdict=self.verdict,
                    depths=[self.first_depth, self.last_depth])


def ambiguous(first=0, last=0):
    return GrowthVerdict(math.nan, math.nan, math.nan, AMBIGUOUS, first, last)


def fit_window(n_depths):
    """Depth indices [ceil(N/2), N] for trajectories indexed 0..N."""
    N = n_depths - 1
    return np.arange(math.ceil(N / 2), N + 1)


def _slope(depths, med):
    y = np.log(np.maximum(med, LOG_FLOOR))
    return float(np.polyfit(depths, y, 1)[0])


def classify_growth(maxima, depths=None, flat_threshold=FLAT_THRESHOLD,
                    grow_threshold=GROW_THRESHOLD, n_boot=N_BOOT, seed=0, level=0.95):
    """Verdict from a (replicas, depths) array of running maxima.

    ``depths`` gives the depth label of each column (default 0..N); the fit
    uses the last half of the columns.
    """
    a = np.asarray(maxima, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 3:
        raise ValueError("need a (replicas, depths) array with at least 3 depths")
    if not flat_threshold <= grow_threshold:
        raise ValueError("flat_threshold must not exceed grow_threshold")
    d = np.arange(a.shape[1]) if depths is None else np.asarray(depths, dtype=float)
    cols = fit_window(a.shape[1])
    x = d[cols]
    sub = a[:, cols]
    slope = _slope(x, np.median(sub, axis=0))
    rng = numpy_rng(seed, "growth_bootstrap")
    boots = np.empty(n_boot)
    r = a.shape[0]
    for b in range(n_boot):
        idx = rng.integers(0, r, size=r)
        boots[b] = _slope(x, np.median(sub[idx], axis=0))
    alpha = (1 - level) / 2
    lo, hi = (float(v) for v in np.quantile(boots, [alpha, 1 - alpha]))
    if hi < flat_threshold:
        verdict = FLAT
    elif lo > grow_threshold:
        verdict = GROWING
    else:
        verdict = AMBIGUOUS
    return GrowthVerdict(slope, lo, hi, verdict, int(x[0]), int(x[-1]))


def hard_disagreement(verdict, classifier):
    """Flat against Unbounded or Growing against Bounded."""
    v = verdict.verdict if isinstance(verdict, GrowthVerdict) else verdict
    c = getattr(classifier, "value", classifier)
    return (v == FLAT and c == "Unbounded") or (v == GROWING and c == "Bounded")
