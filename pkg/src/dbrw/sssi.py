"""The p-adic skeleton X_n = sum_{k=1}^K c^k (Y^k_{n mod p^k} - Y^k_0), n in [0, p^K).

Level k holds p^k i.i.d. copies of Y, extended p^k-periodically.  Read
through the last k base-p digits of n, level k is the set of depth-k
vertices of a deterministic p-ary tree, so X_n is a discounted walk with
H = -log c / log p re-centered at the all-zeros ray.
"""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .errors import BudgetExceeded, ConstructionError
from .growth import classify_growth
from .laws import Deterministic, IncrementLaw
from .rng import MASK64, split_seed
from .stats import ks_test

MEMORY_BUDGET = 100_000_000


def is_prime(p):
    if p < 2:
        return False
    return all(p % d for d in range(2, int(math.isqrt(p)) + 1))


@dataclass(frozen=True)
class SkeletonConfig:
    p: int
    c: float
    law: IncrementLaw
    K: int
    seed: int = 0

    def __post_init__(self):
        if int(self.p) != self.p or not is_prime(int(self.p)):
            raise ConstructionError(f"p must be a prime, got {self.p}")
        if not 0 < self.c < 1:
            raise ConstructionError(f"c must lie in (0, 1), got {self.c}")
        if int(self.K) != self.K or self.K < 1:
            raise ConstructionError(f"K must be an integer >= 1, got {self.K}")
        if not isinstance(self.law, IncrementLaw):
            raise ConstructionError("law must be an IncrementLaw")
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    @property
    def H(self):
        return -math.log(self.c) / math.log(self.p)

    @property
    def size(self):
        return self.p ** self.K

    def with_seed(self, seed):
        return SkeletonConfig(self.p, self.c, self.law, self.K, seed)

    def with_K(self, K):
        return SkeletonConfig(self.p, self.c, self.law, K, self.seed)


def level_seed(seed, k):
    return split_seed(seed, "sssi_level", k)


@dataclass
class Skeleton:
    p: int
    c: float
    levels: list = field(repr=False)

    @property
    def K(self):
        return len(self.levels)

    def contribution(self, k, n):
        """c^k (Y^k_{n mod p^k} - Y^k_0) for integer array n."""
        y = self.levels[k - 1]
        return self.c ** k * (y[np.asarray(n) % self.p ** k] - y[0])

    def values(self):
        """X_n for n in [0, p^K), levels added in order k = 1..K."""
        x = np.zeros(1)
        for k in range(1, self.K + 1):
            x = np.tile(x, self.p) + self.c ** k * (self.levels[k - 1] - self.levels[k - 1][0])
        return x

    def running_max_abs(self):
        """max_{n < p^k} |X^(k)_n| for k = 1..K, X^(k) the skeleton truncated at level k."""
        out = np.empty(self.K)
        x = np.zeros(1)
        for k in range(1, self.K + 1):
            x = np.tile(x, self.p) + self.c ** k * (self.levels[k - 1] - self.levels[k - 1][0])
            out[k - 1] = np.abs(x).max()
        return out

    def extended(self, level):
        """The same skeleton with one more level array appended."""
        level = np.asarray(level, dtype=float)
        if level.size != self.p ** (self.K + 1):
            raise ValueError("level K+1 needs p^(K+1) entries")
        return Skeleton(self.p, self.c, self.levels + [level])

    def tail_majorant(self, scale):
        """2 * scale * c^(K+1) / (1 - c): size of the dropped levels when |Y| <= scale."""
        return 2.0 * scale * self.c ** (self.K + 1) / (1.0 - self.c)


def build_skeleton(cfg, budget=MEMORY_BUDGET):
    """Draw the level arrays of ``cfg``; level k is seeded independently of K."""
    if cfg.p ** cfg.K * cfg.K > budget:
        raise BudgetExceeded(f"p^K * K = {cfg.p ** cfg.K * cfg.K} exceeds {budget}")
    levels = [cfg.law.sample_array(cfg.p ** k, level_seed(cfg.seed, k)) for k in range(1, cfg.K + 1)]
    return Skeleton(cfg.p, cfg.c, levels)


def skeleton_values(cfg):
    return build_skeleton(cfg).values()


def replica_configs(cfg, replicas, experiment_id):
    return [cfg.with_seed(split_seed(cfg.seed, experiment_id, r)) for r in range(replicas)]


def boundedness_scan(cfg, K_range, replicas=32, experiment_id="sssi_scan", **growth_kw):
    """max_n |X_n| per K for every replica and the growth verdict over ``K_range``.

    Returns (maxima (replicas, len(K_range)), GrowthVerdict).
    """
    K_range = np.asarray(list(K_range), dtype=int)
    top = cfg.with_K(int(K_range.max()))
    rows = []
    for c in replica_configs(top, replicas, experiment_id):
        run = build_skeleton(c).running_max_abs()
        rows.append(run[K_range - 1])
    maxima = np.array(rows)
    return maxima, classify_growth(maxima, depths=K_range, **growth_kw)


def tree_side_max(cfg):
    """max over depth-K rays of (X_t - X_t0) on the p-ary tree with H = -log c / log p."""
    from .chaining import materialize
    from .tree_sim import SimConfig

    sim = SimConfig(cfg.law, Deterministic(cfg.p), cfg.H, cfg.K, cfg.seed)
    leaves = materialize(sim).psum[-1]
    # children are stored parent by parent in index order, so leaf 0 is the all-zeros ray
    return float(np.max(leaves - leaves[0]))


def equivalence_test(cfg, replicas=200, experiment_id="sssi_equivalence"):
    """Two-sample KS (statistic, p-value) of max_n X_n against the re-centered tree maximum."""
    if cfg.p > 3 or cfg.K > 10:
        raise ValueError("equivalence_test is meant for p <= 3 and K <= 10")
    sk = np.array([build_skeleton(c).values().max()
                   for c in replica_configs(cfg, replicas, experiment_id + "/skeleton")])
    tr = np.array([tree_side_max(c)
                   for c in replica_configs(cfg, replicas, experiment_id + "/tree")])
    if np.ptp(np.concatenate([sk, tr])) == 0:
        return 0.0, 1.0
    return ks_test(sk, tr)


def write_scan_csv(maxima, K_range, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["K", "replica", "max_abs"])
        for j, K in enumerate(K_range):
            for r in range(maxima.shape[0]):
                w.writerow([int(K), r, repr(float(maxima[r, j]))])
