"""Streaming simulation of the discounted branching random walk.

The ray value is X_t = sum_i m^(-iH) eta_{t_i}.  Trees are never stored: a
depth-first walk regenerates every vertex from its keyed random stream, so
memory stays O(N) and two walks of the same config see the same tree.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import os

import numpy as np

from . import _kernels as K
from .errors import BudgetExceeded, ConstructionError
from .laws import Deterministic, IncrementLaw, OffspringLaw
from .rng import MASK64, split_seed
from .stats import wilson_interval

DEFAULT_NODE_BUDGET = 200_000_000
UNDERFLOW_FLOOR = 1e-300


@dataclass(frozen=True)
class SimConfig:
    increment: IncrementLaw
    offspring: OffspringLaw
    H: float
    depth: int
    seed: int = 0
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        if not isinstance(self.increment, IncrementLaw):
            raise ConstructionError("increment must be an IncrementLaw")
        if not isinstance(self.offspring, OffspringLaw):
            raise ConstructionError("offspring must be an OffspringLaw")
        if not (self.H > 0 and math.isfinite(self.H)):
            raise ConstructionError(f"H must be positive, got {self.H}")
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConstructionError(f"depth N must be an integer >= 1, got {self.depth}")
        if not self.node_budget > 0:
            raise ConstructionError("node_budget must be positive")
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    @property
    def m(self):
        return self.offspring.mean

    def discounts(self):
        """(m^(-iH) for i=0..N with underflowing levels zeroed, underflow flag)."""
        i = np.arange(self.depth + 1, dtype=float)
        # the extinct law (m = 0) never draws an increment, so any finite discount works
        lm = math.log(self.m) if self.m > 0 else 0.0
        disc = np.exp(-i * self.H * lm)
        guard = disc * 1e3 * max(self.increment.scale(), 0.0) < UNDERFLOW_FLOOR
        guard[0] = False
        flagged = bool(np.any(guard & (self.increment.scale() > 0)))
        disc[guard] = 0.0
        return disc, flagged

    def with_seed(self, seed):
        return SimConfig(self.increment, self.offspring, self.H, self.depth, seed, self.node_budget)

    def replace(self, **kw):
        d = dict(increment=self.increment, offspring=self.offspring, H=self.H,
                 depth=self.depth, seed=self.seed, node_budget=self.node_budget)
        d.update(kw)
        return SimConfig(**d)


@dataclass
class SupTrajectory:
    """Per-depth maxima; arrays are indexed by depth 0..N with entry 0 the root (value 0)."""

    max_signed: np.ndarray
    max_abs: np.ndarray
    survived: bool
    nodes_visited: int
    truncated: bool = False
    underflow: bool = False

    @property
    def depth(self):
        return self.max_signed.size - 1


@dataclass
class ExceedanceStats:
    u: float
    total_count: int
    max_per_ray: int
    counts_by_depth: np.ndarray = field(repr=False)
    truncated: bool = False

    @property
    def witness_depths(self):
        return np.repeat(np.arange(self.counts_by_depth.size), self.counts_by_depth)


@dataclass
class TreeWalk:
    """Everything one DFS pass records."""

    config: SimConfig
    max_signed_level: np.ndarray
    max_abs_level: np.ndarray
    generation_sizes: np.ndarray
    thresholds: np.ndarray
    exceed_by_depth: np.ndarray
    max_per_ray: np.ndarray
    nodes_visited: int
    truncated: bool
    underflow: bool

    @property
    def survived(self):
        return bool(self.generation_sizes[-1] > 0)

    def trajectory(self):
        n = self.config.depth
        if not self.survived and not self.truncated:
            z = np.zeros(n + 1)
            return SupTrajectory(z, z.copy(), False, self.nodes_visited, False, self.underflow)
        ms = self.max_signed_level.copy()
        ms[~np.isfinite(ms)] = 0.0
        return SupTrajectory(ms, np.maximum.accumulate(self.max_abs_level), self.survived,
                             self.nodes_visited, self.truncated, self.underflow)

    def exceedances(self, j=0):
        return ExceedanceStats(float(self.thresholds[j]), int(self.exceed_by_depth[j].sum()),
                               int(self.max_per_ray[j]), self.exceed_by_depth[j].copy(),
                               self.truncated)

    def W(self):
        k = np.arange(self.generation_sizes.size)
        return self.generation_sizes / self.config.m ** k


def walk(cfg, thresholds=()):
    """One streaming DFS over the tree of ``cfg``; never raises on budget, sets ``truncated``."""
    disc, underflow = cfg.discounts()
    us = np.asarray(thresholds, dtype=float).reshape(-1)
    inc, off = cfg.increment, cfg.offspring
    out = K.dfs_kernel(np.uint64(cfg.seed), inc.code, inc.params, off.code, float(off.param),
                       off.cdf, disc, int(cfg.depth), us, int(cfg.node_budget))
    ms, ma, gen, exc, mpr, visited, truncated = out
    return TreeWalk(cfg, ms, ma, gen, us, exc, mpr, int(visited), bool(truncated), underflow)


def _checked(w, what):
    if w.truncated:
        raise BudgetExceeded(
            f"{what}: node budget {w.config.node_budget} exhausted after {w.nodes_visited} vertices",
            partial=w)
    return w


def dfs_supremum(cfg):
    """Per-depth maxima of ray partial sums of the tree truncated at depth N.

    Raises BudgetExceeded (with the truncated trajectory in ``.partial``) when
    the node budget runs out.
    """
    w = walk(cfg)
    if w.truncated:
        raise BudgetExceeded(f"dfs_supremum: node budget {cfg.node_budget} exhausted",
                             partial=w.trajectory())
    return w.trajectory()


def track_W(cfg):
    """Kesten-Stigum normalized generation sizes W_k = #V_k / m^k, k = 0..N."""
    return _checked(walk(cfg), "track_W").W()


def count_exceedances(cfg, u):
    if not u > 0:
        raise ValueError(f"threshold u must be positive, got {u}")
    return _checked(walk(cfg, [u]), "count_exceedances").exceedances(0)


def run_replicas(cfg, replicas, fn=walk, experiment_id="replicas", threads=None, **kwargs):
    """Apply ``fn(cfg_r, **kwargs)`` to ``replicas`` configs with split seeds.

    Replica r uses seed split_seed(cfg.seed, experiment_id, r); results come
    back in replica order whatever the thread count.
    """
    cfgs = [cfg.with_seed(split_seed(cfg.seed, experiment_id, r)) for r in range(replicas)]
    threads = threads or os.cpu_count() or 1
    if threads == 1 or replicas == 1:
        return [fn(c, **kwargs) for c in cfgs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda c: fn(c, **kwargs), cfgs))


def exceedance_tail_bound(r, alpha_p):
    """exp(-r log(r/(alpha P)) + r - alpha P), capped at 1."""
    if alpha_p <= 0:
        return 0.0 if r > 0 else 1.0
    return min(1.0, math.exp(-r * math.log(r / alpha_p) + r - alpha_p))


def max_ray_exceedance_tail(cfg, u, r_values, replicas, P=None, alpha=1.0,
                            experiment_id="max_ray_exceedance", threads=None, z=1.959963984540054):
    """Empirical P(max_per_ray >= r) with Wilson intervals beside the analytic bound.

    With deterministic offspring #V_k = m^k, so the bound holds with alpha = 1.
    ``P`` defaults to the series value for (law, m, H).
    """
    if replicas < 1:
        raise ValueError("replicas must be positive")
    if P is None:
        from .series import compute_P
        res = compute_P(cfg.increment, cfg.m, cfg.H)
        P = res.value if res.finite else math.inf
    walks = run_replicas(cfg, replicas, walk, experiment_id, threads, thresholds=[u])
    if any(w.truncated for w in walks):
        raise BudgetExceeded("max_ray_exceedance_tail: a replica exhausted its node budget")
    mpr = np.array([w.max_per_ray[0] for w in walks])
    rows = []
    for r in r_values:
        hits = int(np.sum(mpr >= r))
        lo, hi = wilson_interval(hits, replicas, z)
        bound = exceedance_tail_bound(r, alpha * P) if math.isfinite(P) else 1.0
        rows.append({"r": r, "hits": hits, "replicas": replicas, "p_hat": hits / replicas,
                     "ci_lo": lo, "ci_hi": hi, "bound": bound,
                     "deterministic_offspring": isinstance(cfg.offspring, Deterministic)})
    return rows
