"""Slow reference implementations used as test oracles."""

import numpy as np

from dbrw import _kernels as K
from dbrw.laws import sample_increment
from dbrw.rng import MASK64, VertexKey


def offspring_count(off, seed, key):
    return int(K.vertex_offspring(off.code, float(off.param), off.cdf, np.uint64(seed & MASK64),
                                  np.uint64(key.lo), np.uint64(key.hi)))


def naive_tree(cfg):
    """Whole tree as a dict path -> (depth, discounted increment, partial sum), by recursion."""
    disc, _ = cfg.discounts()
    nodes = {(): (0, 0.0, 0.0)}

    def grow(path, key, psum):
        d = len(path)
        if d == cfg.depth:
            return
        for i in range(offspring_count(cfg.offspring, cfg.seed, key)):
            ck = key.child(i)
            x = disc[d + 1] * sample_increment(cfg.increment, cfg.seed, ck)
            p = path + (i,)
            nodes[p] = (d + 1, x, psum + x)
            grow(p, ck, psum + x)

    grow((), VertexKey.root(cfg.seed), 0.0)
    return nodes


def naive_walk(cfg, thresholds=()):
    """Per-depth maxima, generation sizes and exceedance counts by enumerating all rays."""
    nodes = naive_tree(cfg)
    n = cfg.depth
    gen = np.zeros(n + 1, dtype=np.int64)
    ms = np.full(n + 1, -np.inf)
    ma = np.zeros(n + 1)
    for path, (d, x, s) in nodes.items():
        gen[d] += 1
        ms[d] = max(ms[d], s)
        ma[d] = max(ma[d], abs(s))
    survived = gen[n] > 0
    if survived:
        ms[0] = 0.0
        max_signed, max_abs = ms, np.maximum.accumulate(ma)
    else:
        max_signed, max_abs = np.zeros(n + 1), np.zeros(n + 1)
    exc = []
    for u in thresholds:
        total = sum(1 for p, (d, x, s) in nodes.items() if d > 0 and abs(x) > u)
        per_ray = 0
        for p, (d, x, s) in nodes.items():
            if d == n:
                cnt = sum(1 for j in range(1, n + 1) if abs(nodes[p[:j]][1]) > u)
                per_ray = max(per_ray, cnt)
        exc.append((total, per_ray))
    return {"max_signed": max_signed, "max_abs": max_abs, "gen": gen, "survived": survived,
            "exceedances": exc, "nodes": len(nodes) - 1}


def brute_bernoulli(coords):
    """E sup_t sum_i eps_i coords[t, i] by listing all sign vectors."""
    n = coords.shape[1]
    total = 0.0
    for bits in range(2 ** n):
        eps = np.array([1.0 if bits >> i & 1 else -1.0 for i in range(n)])
        total += float(np.max(coords @ eps))
    return total / 2 ** n
