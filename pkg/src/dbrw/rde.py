"""Population dynamics for the max-type recursive distributional equation

    X =d Y + max_{i <= Z} c X_i,

whose minimal nonnegative solution is the law of eta_root + sup_t X_t when
c = m^(-H) and Y >= 0: the walk itself gives the root no increment, so its
supremum is c max_{i <= Z} X_i and the extra root term closes the recursion.  Its distribution function G
solves G(x) = E[1{Y <= x} f(G((x - Y)/c))] with f the offspring pgf.

The pool is kept sorted.  A draw of max_{i<=Z} X_i from the pool is the
entry of rank ceil(n V^(1/Z)) - 1 with V uniform, which is exact for the
maximum of Z uniform picks and makes every step monotone in the pool under
common random numbers.

A pool of n samples only resolves quantiles down to level 1/n, while the
median of the k-th iterate depends on the level-2^(-k) quantiles of the
increment.  When the pool neither converges nor trips the divergence rule,
the iteration is repeated on G itself over a log-spaced grid, which
tracks those extreme levels (:func:`grid_iterate`).
"""

from collections import deque
from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .errors import ConstructionError
from .laws import sample_increment
from .rng import numpy_rng
from .stats import ks_distance
from .tree_sim import dfs_supremum, run_replicas

DIVERGENCE_MEDIAN = 1e9
DIVERGENCE_RUN = 50
KS_LAG = 10
KS_PASSES = 3


@dataclass(frozen=True)
class EmpiricalCdf:
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("an empirical cdf needs a nonempty 1-d sample")
        if np.any(s[1:] < s[:-1]):
            s = np.sort(s)
        object.__setattr__(self, "samples", s)

    def __call__(self, x):
        return np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right") / self.samples.size

    def median(self):
        return float(np.median(self.samples))

    def quantile(self, q):
        return np.quantile(self.samples, q)

    def scaled(self, lam):
        return EmpiricalCdf(lam * self.samples)


@dataclass
class FixedPointReport:
    status: str
    pool_size: int
    c: float
    iterations: int
    cdf: EmpiricalCdf = None
    ks_gap: float = math.nan
    median_trajectory: np.ndarray = field(default=None, repr=False)
    ks_trajectory: np.ndarray = field(default=None, repr=False)
    H: float = None
    evidence: str = None
    grid: "GridReport" = field(default=None, repr=False)

    @property
    def converged(self):
        return self.status == "Converged"

    def rows(self):
        """(iter, ks_gap, median) rows; ks_gap is empty before the lag is reached."""
        out = []
        for i, med in enumerate(self.median_trajectory):
            ks = self.ks_trajectory[i]
            out.append({"iter": i + 1, "ks_gap": "" if np.isnan(ks) else float(ks), "median": float(med)})
        return out

    def to_dict(self):
        d = {"status": self.status, "pool_size": self.pool_size, "c": self.c,
             "iterations": self.iterations, "H": self.H, "evidence": self.evidence}
        if self.grid is not None:
            d["grid"] = self.grid.to_dict()
        if self.converged:
            d.update(ks_gap=self.ks_gap, median=self.cdf.median())
        else:
            d["final_median"] = float(self.median_trajectory[-1]) if len(self.median_trajectory) else None
        return d


def _check(offspring, c):
    if not 0 < c < 1:
        raise ConstructionError(f"c must lie in (0, 1), got {c}")
    if offspring.p_zero > 0:
        raise ConstructionError("offspring law with P(Z=0) > 0: the max over no children is undefined")


def max_rank(n, z, v):
    """Rank of the maximum of z uniform picks from n sorted entries, driven by uniforms v in (0,1]."""
    r = np.ceil(n * np.exp(np.log(v) / z)).astype(np.int64) - 1
    return np.clip(r, 0, n - 1)


def population_step(pool, lawY, offspring, c, rng):
    """One step X' = Y + c max_{i<=Z} X_i on a sorted pool; returns the new sorted pool."""
    _check(offspring, c)
    pool = np.asarray(pool, dtype=float)
    if np.any(pool[1:] < pool[:-1]):
        pool = np.sort(pool)
    n = pool.size
    if n == 0:
        raise ValueError("pool must be nonempty")
    sy, sz = (int(x) for x in rng.integers(0, 2 ** 63, size=2))
    y = lawY.sample_array(n, sy)
    z = offspring.sample_array(n, sz)
    v = 1.0 - rng.random(n)
    new = y + c * pool[max_rank(n, z, v)]
    new.sort()
    return new


def iterate_to_fixpoint(lawY, offspring, c, pool_size=100_000, max_iters=500, ks_tol=2e-2,
                        seed=0, init=0.0, escalate=True):
    """Iterate the pool from ``init`` until the lag-10 KS gap passes ``ks_tol`` three times running.

    Diverged when the pool median exceeds 1e9 or increases on 50 consecutive
    iterations.  Otherwise, after ``max_iters``, a nonnegative law is handed
    to :func:`grid_iterate` (if ``escalate``), whose median crossing 1e9 also
    counts as divergence; failing that the run is Inconclusive.
    """
    _check(offspring, c)
    rng = numpy_rng(seed, "rde")
    pool = np.sort(np.broadcast_to(np.asarray(init, dtype=float), (pool_size,)).copy())
    history = deque([pool], maxlen=KS_LAG + 1)
    medians, gaps = [], []
    passes, rising = 0, 0
    prev_med = float(np.median(pool))
    H = -math.log(c) / math.log(offspring.mean)
    for it in range(1, max_iters + 1):
        pool = population_step(pool, lawY, offspring, c, rng)
        history.append(pool)
        med = float(pool[pool_size // 2]) if pool_size % 2 else float(np.median(pool))
        medians.append(med)
        gap = math.nan
        if len(history) == KS_LAG + 1:
            gap = ks_distance(history[0], pool, assume_sorted=True)
            passes = passes + 1 if gap <= ks_tol else 0
        gaps.append(gap)
        if passes >= KS_PASSES:
            return FixedPointReport("Converged", pool_size, c, it, EmpiricalCdf(pool), gap,
                                    np.array(medians), np.array(gaps), H)
        rising = rising + 1 if med > prev_med else 0
        prev_med = med
        if med > DIVERGENCE_MEDIAN or rising >= DIVERGENCE_RUN:
            why = "pool_median" if med > DIVERGENCE_MEDIAN else "pool_rising"
            return FixedPointReport("Diverged", pool_size, c, it, None, gap,
                                    np.array(medians), np.array(gaps), H, why)
    grid = None
    if escalate and lawY.nonnegative:
        grid = grid_iterate(lawY, offspring, c, max_iters=max_iters)
        if grid.status == "Diverged":
            return FixedPointReport("Diverged", pool_size, c, max_iters, None, gaps[-1],
                                    np.array(medians), np.array(gaps), H, "grid_median", grid)
    return FixedPointReport("Inconclusive", pool_size, c, max_iters, None, gaps[-1],
                            np.array(medians), np.array(gaps), H, None, grid)


@dataclass
class GridReport:
    status: str
    iterations: int
    x: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    median_trajectory: np.ndarray = field(repr=False)

    def median(self):
        return _grid_median(self.x, self.G)

    def to_dict(self):
        return {"status": self.status, "iterations": self.iterations,
                "final_median": float(self.median_trajectory[-1])}


def _grid_median(x, G):
    j = int(np.searchsorted(G, 0.5, side="left"))
    if j >= x.size:
        return math.inf
    if j == 0:
        return float(x[0])
    g0, g1 = G[j - 1], G[j]
    t = 0.0 if g1 == g0 else (0.5 - g0) / (g1 - g0)
    return float(np.exp(np.log(x[j - 1]) + t * (np.log(x[j]) - np.log(x[j - 1]))))


def grid_iterate(lawY, offspring, c, grid_size=2000, x_max=1e12, max_iters=500,
                 median_cap=DIVERGENCE_MEDIAN, tol=1e-10):
    """Iterate G_{k+1}(x) = E[1{Y<=x} f(G_k((x-Y)/c))] from G_0 = 1{x >= 0} on a log grid.

    Y >= 0 only.  The Y-integral uses the exact cell masses of F on the grid
    with each cell represented by its geometric midpoint; G is interpolated
    linearly in log x.  Diverged when the median passes ``median_cap``,
    Converged when sup|G_{k+1} - G_k| < ``tol``.
    """
    _check(offspring, c)
    if not lawY.nonnegative:
        raise ValueError("grid iteration needs Y >= 0")
    x_min = 1e-6 * max(lawY.scale(), 1e-300)
    x = np.geomspace(x_min, x_max, grid_size)
    lx = np.log(x)
    # cell 0 is [0, x_0] (any atom at 0 included), represented by y = 0;
    # cell i is (x_(i-1), x_i], represented by its geometric midpoint
    Fx = 1.0 - np.asarray(lawY.tail(x), dtype=float)
    w = np.concatenate([[Fx[0]], np.diff(Fx)])
    y = np.concatenate([[0.0], np.exp(0.5 * (lx[:-1] + lx[1:]))])
    # interpolation nodes for G((x_j - y_i)/c), fixed across iterations
    jj, ii = np.nonzero(y[None, :] <= x[:, None])
    z = (x[jj] - y[ii]) / c
    lz = np.log(np.clip(z, x[0], x[-1]))
    pos = np.clip(np.searchsorted(lx, lz, side="right") - 1, 0, grid_size - 2)
    frac = (lz - lx[pos]) / (lx[pos + 1] - lx[pos])
    wi = w[ii]
    # beyond the grid 1 - G is continued with the shape of the increment tail;
    # clamping instead lets the top deficit grow by a factor m per iteration
    beyond = z > x[-1]
    t_top = float(lawY.tail(x[-1]))
    shape = np.asarray(lawY.tail(z[beyond]), dtype=float) / t_top if t_top > 0 else np.zeros(beyond.sum())
    G = np.ones(grid_size)
    medians = []
    status = "Inconclusive"
    it = 0
    for it in range(1, max_iters + 1):
        Gz = G[pos] * (1.0 - frac) + G[pos + 1] * frac
        Gz[beyond] = 1.0 - (1.0 - G[-1]) * shape
        Gn = np.bincount(jj, weights=wi * offspring.pgf(Gz), minlength=grid_size)
        Gn = np.minimum(np.maximum.accumulate(Gn), 1.0)
        delta = float(np.max(np.abs(Gn - G)))
        G = Gn
        med = _grid_median(x, G)
        medians.append(med)
        if med > median_cap:
            status = "Diverged"
            break
        if delta < tol:
            status = "Converged"
            break
    return GridReport(status, it, x, G, np.array(medians))


def fie_residual(G, lawY, offspring, c, x_grid, mc_samples=1_000_000, seed=0, chunk=250_000):
    """Max over ``x_grid`` of |G(x) - E[1{Y<=x} f(G((x-Y)/c))]| by Monte Carlo, with per-point SE.

    Returns (max_residual, residuals, standard_errors).
    """
    if not lawY.nonnegative:
        raise ValueError("the integral equation is checked for Y >= 0 only")
    if isinstance(G, FixedPointReport):
        if not G.converged:
            raise ValueError("fie_residual needs a converged report")
        G = G.cdf
    xs = np.asarray(x_grid, dtype=float)
    total = np.zeros(xs.size)
    total2 = np.zeros(xs.size)
    rng = numpy_rng(seed, "fie")
    done = 0
    while done < mc_samples:
        k = min(chunk, mc_samples - done)
        y = lawY.sample_array(k, int(rng.integers(0, 2 ** 63)))
        for i, x in enumerate(xs):
            val = np.where(y <= x, offspring.pgf(G(np.maximum(x - y, 0.0) / c)), 0.0)
            total[i] += val.sum()
            total2[i] += np.dot(val, val)
        done += k
    mean = total / mc_samples
    var = np.maximum(total2 / mc_samples - mean ** 2, 0.0)
    resid = np.abs(G(xs) - mean)
    return float(resid.max()), resid, np.sqrt(var / mc_samples)


def _root_plus_max(cfg):
    return sample_increment(cfg.increment, cfg.seed) + dfs_supremum(cfg).max_signed[-1]


def simulate_leaf_max(cfg, replicas, threads=None, experiment_id="rde_compare"):
    """eta_root + max_signed[N] of ``replicas`` independent trees (seeds split from cfg.seed).

    The root increment is the tree's own keyed draw at the root vertex, which
    the walk never uses.
    """
    return np.array(run_replicas(cfg, replicas, _root_plus_max, experiment_id, threads))


def compare_to_simulation(report, cfg, replicas, threads=None):
    """KS distance between the converged pool and root-augmented depth-N maxima of simulated trees."""
    if not report.converged:
        raise ValueError("compare_to_simulation needs a converged report")
    if not cfg.increment.nonnegative:
        raise ValueError("comparison needs Y >= 0 so depth-N maxima increase to the supremum")
    c_cfg = cfg.m ** (-cfg.H)
    if not math.isclose(report.c, c_cfg, rel_tol=1e-9):
        raise ConstructionError(f"report has c={report.c} but the tree has m^(-H)={c_cfg}")
    sims = simulate_leaf_max(cfg, replicas, threads)
    return ks_distance(report.cdf.samples, sims)


def write_pool_csv(cdf, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample"])
        for x in cdf.samples:
            w.writerow([repr(float(x))])
