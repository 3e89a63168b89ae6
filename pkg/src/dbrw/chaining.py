"""Chaining on realized finite-depth trees.

A tree truncated at depth N is materialized level by level (replaying the
same keyed streams as the DFS engine), its surviving rays are identified
with points s(t) = (m^(-iH) eta_{t_i})_{i=1..N} of R^N, and the admissible
partition sequence A_n = A_n^(1) x A_n^(2) is built on them:

* A_n^(1): rays grouped by their ancestor at depth h(n), the largest h with
  m^h <= 2^(2^(n-2)); trivial while n <= max(N1, N2).
* A_n^(2): rays grouped by the exceedance vertices (|m^(-H l(v)) eta_v| > u_{n-1})
  they pass through; trivial while n <= N3.

Two grouping rules are offered for A^(2).  ``"deepest"`` keys each ray by
the deepest exceedance on it, which is what guarantees that rays of one
class differ only in coordinates inside [-u_{n-1}, u_{n-1}].  ``"maximal"``
keys rays by the maximal exceedance they pass through (exceedances without
an exceedance strictly below them) and lumps the rest into one residual
class; it can break that guarantee when a ray passes a non-maximal
exceedance.  Both reproduce the worked binary example in
:func:`marked_binary_instance`.
"""

from dataclasses import dataclass, field
import csv
import math

import numba as nb
import numpy as np
from scipy.spatial.distance import pdist

from . import _kernels as K
from .errors import BudgetExceeded, ConstructionError, DepthTooShallowForLevel
from .rng import numpy_rng, root_digest
from .series import compute_P, n4, u_threshold

DEFAULT_COORD_BUDGET = 10_000_000
DEFAULT_N_MAX = 5
RULES = ("deepest", "maximal")
Q_DEFAULT = 8.0


# -- materialization ---------------------------------------------------------

@dataclass
class MaterializedTree:
    """Levels 0..N of a finite tree; level k holds parent index, child index and value.

    ``values[k][v]`` is the discounted increment m^(-kH) eta_v of vertex v at
    depth k and ``psum[k][v]`` its partial sum along the ray.  Level 0 is the
    root with value 0.
    """

    m: float
    H: float
    parents: list
    child_index: list
    values: list
    psum: list = None

    def __post_init__(self):
        if self.psum is None:
            ps = [np.zeros(1)]
            for k in range(1, len(self.values)):
                ps.append(ps[k - 1][self.parents[k]] + self.values[k])
            self.psum = ps

    @property
    def depth(self):
        return len(self.values) - 1

    def level_sizes(self):
        return np.array([v.size for v in self.values], dtype=np.int64)

    @property
    def n_vertices(self):
        return int(self.level_sizes().sum())

    def offsets(self):
        """Global id of vertex (k, v) is offsets[k] + v."""
        return np.concatenate([[0], np.cumsum(self.level_sizes())[:-1]])

    @classmethod
    def from_levels(cls, m, H, parents, values, child_index=None):
        """Hand-built tree; ``parents[k]`` indexes level k-1 (``parents[0]`` is ignored)."""
        parents = [np.zeros(1, dtype=np.int64)] + [np.asarray(p, dtype=np.int64) for p in parents[1:]]
        values = [np.zeros(1)] + [np.asarray(v, dtype=float) for v in values[1:]]
        if child_index is None:
            child_index = [np.zeros(1, dtype=np.int64)]
            for k in range(1, len(parents)):
                p = parents[k]
                ci = np.zeros(p.size, dtype=np.int64)
                seen = {}
                for i, pi in enumerate(p):
                    ci[i] = seen.get(pi, 0)
                    seen[pi] = ci[i] + 1
                child_index.append(ci)
        for k in range(1, len(parents)):
            if parents[k].size != values[k].size:
                raise ConstructionError(f"level {k}: parents and values differ in length")
            if parents[k].size and parents[k].max() >= values[k - 1].size:
                raise ConstructionError(f"level {k}: parent index out of range")
        return cls(float(m), float(H), parents, child_index, values)


def materialize(cfg, budget=DEFAULT_COORD_BUDGET):
    """Materialize the tree of ``cfg`` to depth N with the DFS engine's exact values."""
    disc, _ = cfg.discounts()
    inc, off = cfg.increment, cfg.offspring
    seed = np.uint64(cfg.seed)
    rlo, rhi = root_digest(seed)
    lo = np.array([rlo], dtype=np.uint64)
    hi = np.array([rhi], dtype=np.uint64)
    parents = [np.zeros(1, dtype=np.int64)]
    cidx = [np.zeros(1, dtype=np.int64)]
    values = [np.zeros(1)]
    psum = [np.zeros(1)]
    total_vertices = 1
    for k in range(cfg.depth):
        nchild = K.expand_level(seed, lo, hi, off.code, float(off.param), off.cdf)
        total = int(nchild.sum())
        total_vertices += total
        if total_vertices > budget or total * cfg.depth > budget:
            raise BudgetExceeded(
                f"materializing depth {k + 1} needs more than {budget} entries", partial=k)
        lo, hi, par, ci, val, ps = K.fill_children(seed, lo, hi, psum[-1], nchild, total,
                                                   inc.code, inc.params, float(disc[k + 1]))
        parents.append(par)
        cidx.append(ci)
        values.append(val)
        psum.append(ps)
    return MaterializedTree(cfg.m, cfg.H, parents, cidx, values, psum)


# -- ray points ----------------------------------------------------------------

@dataclass
class RayPoints:
    """Surviving rays of a materialized tree as points of R^N.

    ``coords[r, k-1]`` is the depth-k coordinate of ray r, ``paths[r]`` its
    child-index path and ``ancestors[k, r]`` the index of its depth-k vertex.
    """

    tree: MaterializedTree
    coords: np.ndarray
    paths: np.ndarray
    ancestors: np.ndarray

    def __len__(self):
        return self.coords.shape[0]

    @property
    def depth(self):
        return self.coords.shape[1]

    def ray_ids(self):
        return [".".join(map(str, p)) for p in self.paths]

    def subset(self, mask):
        mask = np.asarray(mask)
        return RayPoints(self.tree, self.coords[mask], self.paths[mask], self.ancestors[:, mask])


def raypoints_of(tree):
    n = tree.depth
    nleaves = tree.values[n].size
    anc = np.empty((n + 1, nleaves), dtype=np.int64)
    anc[n] = np.arange(nleaves)
    for k in range(n, 0, -1):
        anc[k - 1] = tree.parents[k][anc[k]]
    coords = np.empty((nleaves, n))
    paths = np.empty((nleaves, n), dtype=np.int64)
    for k in range(1, n + 1):
        coords[:, k - 1] = tree.values[k][anc[k]]
        paths[:, k - 1] = tree.child_index[k][anc[k]]
    return RayPoints(tree, coords, paths, anc)


def extract_raypoints(cfg, budget=DEFAULT_COORD_BUDGET):
    """Rays of the tree of ``cfg`` surviving to depth N, coordinates replayed exactly."""
    return raypoints_of(materialize(cfg, budget))


@dataclass
class Decomposition:
    s1: np.ndarray
    s2: np.ndarray
    sup_l1_s2: float


def decompose(points):
    """Split coordinates at |x| = 1: s1 keeps |x| <= 1, s2 keeps the rest."""
    c = points.coords if isinstance(points, RayPoints) else np.asarray(points, dtype=float)
    big = np.abs(c) > 1.0
    s1 = np.where(big, 0.0, c)
    s2 = np.where(big, c, 0.0)
    sup = float(np.abs(s2).sum(axis=1).max()) if s2.size else 0.0
    return Decomposition(s1, s2, sup)


# -- bookkeeping integers ----------------------------------------------------------

def h_of(n, m):
    """Largest integer h >= 0 with m^h <= 2^(2^(n-2))."""
    if not m > 1:
        raise ValueError("m must exceed 1")
    lm, cap = math.log2(m), 2.0 ** (n - 2) * (1 + 1e-12)
    h = math.floor(2.0 ** (n - 2) / lm)
    # guard the floor against rounding in either direction
    while (h + 1) * lm <= cap:
        h += 1
    while h > 0 and h * lm > cap:
        h -= 1
    return max(h, 0)


def n1_of(tree, n_cap=64):
    """Smallest n with #V_k <= k^2 m^k for every observed depth k >= h(n).

    Only depths up to N are seen, so the value is certified to depth N only.
    """
    sizes = tree.level_sizes()
    k = np.arange(sizes.size)
    bad = k[sizes > k.astype(float) ** 2 * tree.m ** k]
    if bad.size == 0:
        return 0
    last = int(bad.max())
    for n in range(n_cap):
        if h_of(n, tree.m) > last:
            return n
    return n_cap


def n2_of(m, n_cap=64):
    """Smallest n with h(n')^2 m^h(n') <= 2^(2^(n'-1)) for all n' >= n (checked to n_cap)."""
    ok = []
    for n in range(n_cap + 1):
        h = h_of(n, m)
        lhs = -math.inf if h == 0 else 2 * math.log2(h) + h * math.log2(m)
        ok.append(lhs <= 2.0 ** (n - 1))
    n0 = 0
    for n, good in enumerate(ok):
        if not good:
            n0 = n + 1
    return n0


def exceedance_count(tree, u):
    return int(sum(np.count_nonzero(np.abs(tree.values[k]) > u) for k in range(1, tree.depth + 1)))


def n3_of(tree, H):
    """Smallest n with #{v : |value_v| > u_n'} <= 2^(2^n') - 1 for all n' >= n.

    n' runs until 2^(2^n') exceeds the vertex count, past which the
    inequality holds trivially on the truncated tree.
    """
    nv = tree.n_vertices
    n_top = 0
    while 2.0 ** (2 ** n_top) <= nv + 1:
        n_top += 1
    n0 = 0
    for n in range(n_top + 1):
        if exceedance_count(tree, u_threshold(H, n)) > 2.0 ** (2 ** n) - 1:
            n0 = n + 1
    return n0


# -- partitions --------------------------------------------------------------------

def _deepest_exceedance(tree, u):
    """Per level, global id of the deepest vertex at or above each vertex with |value| > u (-1: none)."""
    off = tree.offsets()
    deep = [np.full(1, -1, dtype=np.int64)]
    for k in range(1, tree.depth + 1):
        own = off[k] + np.arange(tree.values[k].size)
        inherited = deep[k - 1][tree.parents[k]]
        deep.append(np.where(np.abs(tree.values[k]) > u, own, inherited))
    return deep


def _maximal_exceedance(tree, u):
    """Per level, the maximal exceedance (no exceedance strictly below) on the path, or -1."""
    n = tree.depth
    off = tree.offsets()
    exc = [np.abs(v) > u for v in tree.values]
    exc[0] = np.zeros(1, dtype=bool)
    below = [None] * (n + 1)
    below[n] = np.zeros(tree.values[n].size, dtype=bool)
    for k in range(n, 0, -1):
        flag = np.zeros(tree.values[k - 1].size, dtype=bool)
        hit = exc[k] | below[k]
        np.logical_or.at(flag, tree.parents[k], hit)
        below[k - 1] = flag
    maximal = [e & ~b for e, b in zip(exc, below)]
    mark = [np.full(1, -1, dtype=np.int64)]
    for k in range(1, n + 1):
        own = off[k] + np.arange(tree.values[k].size)
        mark.append(np.where(maximal[k], own, mark[k - 1][tree.parents[k]]))
    return mark, int(sum(int(x.sum()) for x in maximal))


def _relabel(*keys):
    """Class ids 0..c-1 for the distinct tuples of integer keys (first-seen order by sort)."""
    stacked = np.stack(keys, axis=1)
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    return inv.reshape(-1).astype(np.int64)


def partition_classes(points, h=None, u=None, rule="deepest"):
    """Class ids of the product partition: (ancestor at depth h) x (exceedance key above u).

    ``h=None`` or ``u=None`` makes the corresponding factor trivial.
    Returns (ids, ids_factor1, ids_factor2).
    """
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    r = len(points)
    a1 = np.zeros(r, dtype=np.int64) if h is None else points.ancestors[h].copy()
    if u is None:
        a2 = np.zeros(r, dtype=np.int64)
    else:
        tree = points.tree
        n = tree.depth
        key = _deepest_exceedance(tree, u) if rule == "deepest" else _maximal_exceedance(tree, u)[0]
        a2 = key[n][points.ancestors[n]]
    return _relabel(a1, a2), _relabel(a1), _relabel(a2)


@dataclass
class PartitionLevel:
    n: int
    h: int
    u_prev: float
    trivial1: bool
    trivial2: bool
    class_ids: np.ndarray = field(repr=False)
    ids1: np.ndarray = field(repr=False)
    ids2: np.ndarray = field(repr=False)

    @property
    def cardinality(self):
        return int(self.class_ids.max()) + 1 if self.class_ids.size else 0


@dataclass
class AdmissibleSequence:
    points: RayPoints
    levels: list
    N1: int
    N2: int
    N3: int
    N4: int
    rule: str = "deepest"
    certified_to_depth: int = 0

    @property
    def n_max(self):
        return len(self.levels) - 1

    @property
    def n_star(self):
        """Levels n > n_star carry the structural guarantees."""
        return max(self.N1, self.N2, self.N3)

    def cardinalities(self):
        return [lv.cardinality for lv in self.levels]

    def restrict(self, mask):
        """Same partitions restricted to a subset of rays (ids relabeled)."""
        pts = self.points.subset(mask)
        levels = []
        for lv in self.levels:
            levels.append(PartitionLevel(lv.n, lv.h, lv.u_prev, lv.trivial1, lv.trivial2,
                                         _relabel(lv.class_ids[mask]), _relabel(lv.ids1[mask]),
                                         _relabel(lv.ids2[mask])))
        return AdmissibleSequence(pts, levels, self.N1, self.N2, self.N3, self.N4, self.rule,
                                  self.certified_to_depth)

    def admissibility_violations(self):
        """Messages for every failed check of #A_0 = 1, #A_n <= 2^(2^n), nesting, product form."""
        out = []
        if self.levels and self.levels[0].cardinality != 1:
            out.append(f"#A_0 = {self.levels[0].cardinality} != 1")
        for lv in self.levels:
            if math.log2(max(lv.cardinality, 1)) > 2.0 ** lv.n:
                out.append(f"#A_{lv.n} = {lv.cardinality} > 2^(2^{lv.n})")
            if _relabel(lv.ids1, lv.ids2).max(initial=-1) != lv.class_ids.max(initial=-1) or \
                    not np.array_equal(_relabel(lv.ids1, lv.ids2), _relabel(lv.class_ids)):
                out.append(f"A_{lv.n} is not the product of its two factors")
        for a, b in zip(self.levels[:-1], self.levels[1:]):
            # every class of A_{n+1} inside one class of A_n
            if _relabel(b.class_ids, a.class_ids).max(initial=-1) != b.class_ids.max(initial=-1):
                out.append(f"A_{b.n} does not refine A_{a.n}")
        return out

    def structural_violations(self):
        """Checks (a) common depth-h(n) ancestor and (b) differing coordinates within u_{n-1}.

        Only levels n > max(N1, N2, N3) are checked.  For a class whose rays
        first part at depth D, every pair differs exactly from its own split
        depth on, and the union of those ranges over partners is k >= D for
        every ray, so (b) reads: all coordinates at depths >= D lie in [-u, u].
        """
        out = []
        pts = self.points
        absc = np.abs(pts.coords)
        n = pts.depth
        # suffix[r, k] = max_{j >= k} |coord at depth j|, depths 1..N, suffix[:, N+1] = 0
        suffix = np.zeros((len(pts), n + 2))
        suffix[:, 1:n + 1] = np.maximum.accumulate(absc[:, ::-1], axis=1)[:, ::-1]
        for lv in self.levels:
            if lv.n <= self.n_star:
                continue
            split = _split_depths(pts.ancestors, lv.class_ids)
            sizes = np.bincount(lv.class_ids)
            multi = sizes[lv.class_ids] > 1
            D = split[lv.class_ids]
            bad_a = multi & (D - 1 < lv.h)
            for r in np.flatnonzero(bad_a)[:5]:
                out.append(f"level {lv.n}: ray {r} class lacks a common ancestor at depth {lv.h}")
            worst = suffix[np.arange(len(pts)), np.minimum(D, n + 1)]
            bad_b = multi & (worst > lv.u_prev)
            for r in np.flatnonzero(bad_b)[:5]:
                out.append(f"level {lv.n}: ray {r} has a differing coordinate {worst[r]:.6g} "
                           f"outside [-u, u] with u = {lv.u_prev:.6g}")
            if bad_a.sum() > 5 or bad_b.sum() > 5:
                out.append(f"level {lv.n}: {int(bad_a.sum())} (a) and {int(bad_b.sum())} (b) ray violations")
        return out


def _split_depths(ancestors, class_ids):
    """Per class, the first depth D at which its rays have different ancestors (N+1 if never)."""
    n = ancestors.shape[0] - 1
    nc = int(class_ids.max()) + 1
    D = np.full(nc, n + 1, dtype=np.int64)
    for k in range(n, -1, -1):
        lo = np.full(nc, np.iinfo(np.int64).max)
        hi = np.full(nc, -1)
        np.minimum.at(lo, class_ids, ancestors[k])
        np.maximum.at(hi, class_ids, ancestors[k])
        D[lo != hi] = k
    return D


def build_partitions(source, n_max=DEFAULT_N_MAX, rule="deepest", budget=DEFAULT_COORD_BUDGET):
    """Admissible sequence A_0..A_{n_max} on the surviving rays.

    ``source`` is a SimConfig (materialized here) or RayPoints.
    """
    if not 0 <= n_max <= 6:
        raise ValueError("n_max must lie in 0..6 so that 2^(2^n) fits 64-bit counting")
    if rule not in RULES:
        raise ValueError(f"rule must be one of {RULES}")
    points = source if isinstance(source, RayPoints) else extract_raypoints(source, budget)
    tree = points.tree
    m, H, N = tree.m, tree.H, tree.depth
    if h_of(n_max, m) > N:
        raise DepthTooShallowForLevel(
            f"level n={n_max} needs h(n)={h_of(n_max, m)} but the tree has depth {N}")
    N1, N2, N3, N4 = n1_of(tree), n2_of(m), n3_of(tree, H), n4(H)
    levels = []
    for n in range(n_max + 1):
        h = h_of(n, m)
        t1 = n <= max(N1, N2)
        t2 = n <= N3
        u_prev = u_threshold(H, n - 1) if n >= 1 else math.inf
        ids, i1, i2 = partition_classes(points, None if t1 else h, None if t2 else u_prev, rule)
        levels.append(PartitionLevel(n, h, u_prev, t1, t2, ids, i1, i2))
    return AdmissibleSequence(points, levels, N1, N2, N3, N4, rule, certified_to_depth=N)


def dump_partitions_csv(seq, path):
    """Rows (ray_id, level, class_id) for every ray and level."""
    ids = seq.points.ray_ids()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ray_id", "level", "class_id"])
        for lv in seq.levels:
            for rid, c in zip(ids, lv.class_ids):
                w.writerow([rid, lv.n, int(c)])


def marked_binary_instance(u=0.5, H=1.0):
    """The binary depth-4 example with marked exceedances and its eight expected classes.

    Paths use 0 for a left child and 1 for a right child.  Marked vertices:
    L, LL, LRL, LRR, RRL, LRRR and RLRR; with h = 2 the classes are
    A1 = LL**, A2 = {LRLL, LRLR}, A3 = {LRRL}, A4 = {LRRR}, A5 = {RLLL, RLLR, RLRL},
    A6 = {RLRR}, A7 = {RRLL, RRLR}, A8 = {RRRL, RRRR}.
    Returns (points, h, u, expected) with ``expected`` a list of sets of path strings.
    """
    marked = {"0", "00", "010", "011", "110", "0111", "1011"}
    parents, values = [None], [None]
    labels = [[""]]
    for k in range(1, 5):
        lab, par, val = [], [], []
        for i, p in enumerate(labels[k - 1]):
            for c in "01":
                s = p + c
                lab.append(s)
                par.append(i)
                val.append(2.0 * u if s in marked else 0.5 * u)
        labels.append(lab)
        parents.append(par)
        values.append(val)
    tree = MaterializedTree.from_levels(2.0, H, parents, values)
    pts = raypoints_of(tree)

    def paths(*names):
        return {".".join(n.translate(str.maketrans("LR", "01"))) for n in names}

    expected = [
        paths("LLLL", "LLLR", "LLRL", "LLRR"),
        paths("LRLL", "LRLR"),
        paths("LRRL"),
        paths("LRRR"),
        paths("RLLL", "RLLR", "RLRL"),
        paths("RLRR"),
        paths("RRLL", "RRLR"),
        paths("RRRL", "RRRR"),
    ]
    return pts, 2, u, expected


def classes_as_sets(points, ids):
    rid = points.ray_ids()
    out = {}
    for r, c in zip(rid, ids):
        out.setdefault(int(c), set()).add(r)
    return list(out.values())


# -- diameters ------------------------------------------------------------------------

@nb.njit(cache=True)
def _pairwise_class_diam2(coords, order, starts):
    nc = starts.shape[0] - 1
    out = np.zeros(nc)
    d = coords.shape[1]
    for c in range(nc):
        a, b = starts[c], starts[c + 1]
        best = 0.0
        for i in range(a, b):
            ri = order[i]
            for j in range(i + 1, b):
                rj = order[j]
                s = 0.0
                for k in range(d):
                    t = coords[ri, k] - coords[rj, k]
                    s += t * t
                if s > best:
                    best = s
        out[c] = best
    return out


def _grouping(class_ids):
    order = np.argsort(class_ids, kind="stable")
    counts = np.bincount(class_ids)
    starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return order, starts


def class_diameters(coords, class_ids, method="exact"):
    """l2 diameter of every class.

    ``exact``: compiled pairwise maximum.  ``pdist``: scipy pairwise distances
    (independent implementation, same value).  ``bbox``: norm of the
    per-coordinate ranges, an upper bound that equals the diameter for
    classes of at most two points.
    """
    coords = np.ascontiguousarray(coords, dtype=float)
    class_ids = np.asarray(class_ids, dtype=np.int64)
    if class_ids.size == 0:
        return np.zeros(0)
    order, starts = _grouping(class_ids)
    nc = starts.size - 1
    if method == "exact":
        return np.sqrt(_pairwise_class_diam2(coords, order, starts))
    out = np.zeros(nc)
    for c in range(nc):
        pts = coords[order[starts[c]:starts[c + 1]]]
        if pts.shape[0] < 2:
            continue
        if method == "pdist":
            out[c] = float(pdist(pts).max())
        elif method == "bbox":
            out[c] = float(np.sqrt(np.sum((pts.max(axis=0) - pts.min(axis=0)) ** 2)))
        else:
            raise ValueError(f"unknown diameter method {method!r}")
    return out


# -- gamma_2 upper bound ----------------------------------------------------------------

def q_choice(H, q=Q_DEFAULT):
    """(q, q') with q' the midpoint of (1/q, H); q is raised when H <= 1/q."""
    if H <= 1.0 / q:
        q = 2.0 / H
    qp = 0.5 * (1.0 / q + H)
    if not q * qp > 1:
        raise ConstructionError("need q * q' > 1")
    return q, qp


def decay_form(n, H, qp):
    """2^((q'-H) 2^(n-1)) 2^(H(n-1)), the level-n diameter decay shape."""
    return 2.0 ** ((qp - H) * 2.0 ** (n - 1) + H * (n - 1))


@dataclass
class ChainingReport:
    gamma2_upper: float
    gamma2_sup_ray: float
    diameters: list
    cardinalities: list
    gamma2_cumulative: list
    sup_l1_s2: float
    N1: int
    N2: int
    N3: int
    N4: int
    q: float
    q_prime: float
    fitted_constant: float = None
    tail_estimate: float = None
    bernoulli_estimate: float = None
    bernoulli_se: float = None
    E_K: dict = None
    admissibility_violations: list = field(default_factory=list)
    structural_violations: list = field(default_factory=list)
    certified_to_depth: int = 0
    n_rays: int = 0

    def to_dict(self):
        d = dict(self.__dict__)
        d["E_K"] = None if self.E_K is None else {str(k): v for k, v in self.E_K.items()}
        return d

    def rows(self):
        return [{"level": n, "cardinality": c, "diameter": dm, "gamma2_cum": g}
                for n, (c, dm, g) in enumerate(zip(self.cardinalities, self.diameters,
                                                   self.gamma2_cumulative))]


def gamma2_upper(seq, coords=None, method="exact"):
    """(sum_n 2^(n/2) Delta_n, sup_t sum_n 2^(n/2) Delta(A_n(t)), per-level Delta_n, cumulative sums).

    ``coords`` defaults to the s1 part of the sequence's points.
    """
    if coords is None:
        coords = decompose(seq.points).s1
    deltas, per_ray = [], np.zeros(coords.shape[0])
    for lv in seq.levels:
        diam = class_diameters(coords, lv.class_ids, method)
        deltas.append(float(diam.max()) if diam.size else 0.0)
        per_ray += 2.0 ** (lv.n / 2) * diam[lv.class_ids]
    weights = 2.0 ** (np.arange(len(deltas)) / 2)
    cum = np.cumsum(weights * np.array(deltas))
    sup_ray = float(per_ray.max()) if per_ray.size else 0.0
    return float(cum[-1]) if cum.size else 0.0, sup_ray, deltas, [float(c) for c in cum]


def tail_majorant(deltas, seq, H, q=Q_DEFAULT, extra_levels=40):
    """Fit C in Delta_n <= C * decay_form(n) on levels n > max(N_j) and sum the form beyond n_max.

    Reported, never asserted.  Returns (C, tail) or (None, None) without usable levels.
    """
    _, qp = q_choice(H, q)
    start = max(seq.n_star, seq.N4) + 1
    ratios = [d / decay_form(n, H, qp) for n, d in enumerate(deltas) if n >= start]
    if not ratios:
        return None, None
    C = max(ratios)
    n_max = len(deltas) - 1
    tail = sum(2.0 ** (n / 2) * C * decay_form(n, H, qp)
               for n in range(n_max + 1, n_max + 1 + extra_levels))
    return C, tail


def e_k_report(seq, P, K_values=(2, 4, 8, 16), q=Q_DEFAULT):
    """Whether the realized instance meets the exceedance-count event E_K, per K.

    For n >= max(N1, N2, N3), n <= j <= n_max and each class root v (the
    deepest common ancestor of the class), the largest number of vertices
    strictly below v on a ray through v with |value| > u_j must be at most
    2 + (2^j - j - 2^(n-2)) log_m 2 + 3 K P 2^(q' 2^j).
    """
    pts = seq.points
    tree = pts.tree
    _, qp = q_choice(tree.H, q)
    N = pts.depth
    absc = np.abs(pts.coords)
    out = {}
    start = seq.n_star
    for K_ in K_values:
        ok = True
        for lv in seq.levels:
            if lv.n < start:
                continue
            split = _split_depths(pts.ancestors, lv.class_ids)
            root_depth = np.minimum(split - 1, N)
            for j in range(lv.n, seq.n_max + 1):
                uj = u_threshold(tree.H, j)
                cum = np.concatenate([np.zeros((len(pts), 1), dtype=np.int64),
                                      np.cumsum(absc > uj, axis=1)], axis=1)
                rhs = 2 + (2.0 ** j - j - 2.0 ** (lv.n - 2)) * math.log(2) / math.log(tree.m) \
                    + 3 * K_ * P * 2.0 ** (qp * 2.0 ** j)
                for c in range(lv.cardinality):
                    d = int(root_depth[c])
                    v = pts.ancestors[d, lv.class_ids == c][0]
                    through = pts.ancestors[d] == v
                    worst = int((cum[through, N] - cum[through, d]).max())
                    if worst > rhs:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        out[K_] = ok
    return out


# -- Bernoulli supremum -----------------------------------------------------------------

EXHAUSTIVE_MAX_DEPTH = 20


def _sign_block(start, count, n):
    idx = np.arange(start, start + count, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(n, dtype=np.int64)[None, :]) & 1
    return 1.0 - 2.0 * bits


def bernoulli_sup(points, mode="exhaustive", replicas=100_000, seed=0, chunk=4096):
    """E[sup_t sum_i eps_i coords_i(t)] with one Rademacher sign per depth, shared by all rays.

    ``exhaustive`` averages over all 2^N sign vectors (N <= 20) and returns
    (value, 0.0); ``montecarlo`` returns (mean, standard error) over
    ``replicas`` sign vectors.
    """
    c = points.coords if isinstance(points, RayPoints) else np.asarray(points, dtype=float)
    if c.ndim != 2 or c.shape[0] == 0:
        raise ValueError("need a nonempty (rays, depth) coordinate array")
    n = c.shape[1]
    ct = np.ascontiguousarray(c.T)
    if mode == "exhaustive":
        if n > EXHAUSTIVE_MAX_DEPTH:
            raise ValueError(f"exhaustive mode needs N <= {EXHAUSTIVE_MAX_DEPTH}, got {n}")
        total = 1 << n
        acc = 0.0
        for s in range(0, total, chunk):
            signs = _sign_block(s, min(chunk, total - s), n)
            acc += float((signs @ ct).max(axis=1).sum())
        return acc / total, 0.0
    if mode == "montecarlo":
        rng = numpy_rng(seed, "bernoulli_sup")
        vals = np.empty(replicas)
        for s in range(0, replicas, chunk):
            k = min(chunk, replicas - s)
            signs = 1.0 - 2.0 * rng.integers(0, 2, size=(k, n))
            vals[s:s + k] = (signs @ ct).max(axis=1)
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas))
    raise ValueError(f"unknown mode {mode!r}")


# -- assembly ---------------------------------------------------------------------------

def chain_report(cfg, n_max=DEFAULT_N_MAX, rule="deepest", bernoulli="auto",
                 mc_replicas=100_000, diameter_method="exact", K_values=(2, 4, 8, 16),
                 budget=DEFAULT_COORD_BUDGET):
    """Full chaining report for one realized tree: partitions, gamma_2 bound, b(S), E_K."""
    points = extract_raypoints(cfg, budget)
    if len(points) == 0:
        raise ValueError("the tree died out before depth N; no rays to chain")
    seq = build_partitions(points, n_max, rule)
    dec = decompose(points)
    g2, g2_ray, deltas, cum = gamma2_upper(seq, dec.s1, diameter_method)
    q, qp = q_choice(cfg.H)
    C, tail = tail_majorant(deltas, seq, cfg.H)
    P = compute_P(cfg.increment, cfg.m, cfg.H)
    mode = bernoulli
    if mode == "auto":
        mode = "exhaustive" if points.depth <= 14 else "montecarlo"
    b, se = (None, None) if mode == "none" else bernoulli_sup(points, mode, mc_replicas, cfg.seed)
    ek = e_k_report(seq, P.value, K_values) if P.finite else None
    return ChainingReport(
        gamma2_upper=g2, gamma2_sup_ray=g2_ray, diameters=deltas,
        cardinalities=seq.cardinalities(), gamma2_cumulative=cum, sup_l1_s2=dec.sup_l1_s2,
        N1=seq.N1, N2=seq.N2, N3=seq.N3, N4=seq.N4, q=q, q_prime=qp,
        fitted_constant=C, tail_estimate=tail, bernoulli_estimate=b, bernoulli_se=se, E_K=ek,
        admissibility_violations=seq.admissibility_violations(),
        structural_violations=seq.structural_violations(),
        certified_to_depth=seq.certified_to_depth, n_rays=len(points))
