"""Compiled inner loops: samplers, the streaming DFS and level-wise materialization."""

import math

import numba as nb
import numpy as np

from .rng import child_digest, root_digest, stream_uniform

# increment law codes
INC_CONSTANT = 0
INC_UNIFORM = 1
INC_GAUSSIAN = 2
INC_PARETO = 3
INC_SYM_PARETO = 4
INC_LOG_PARETO = 5
INC_TWO_POINT = 6

# offspring law codes
OFF_DETERMINISTIC = 0
OFF_POISSON_SHIFTED = 1
OFF_GEOMETRIC_SHIFTED = 2
OFF_CUSTOM = 3

_TWO_PI = 2.0 * math.pi


@nb.njit(cache=True)
def log_pareto_inverse(e, h0, beta, log_xmin):
    """Solve (y - L)/h0 + beta*log(y/L) = e for y >= L; returns exp(y).

    Newton from a one-step fixed-point guess.  The iteration stops once a step
    is below 1e-9 relative; by quadratic convergence the remaining error is
    then far below double precision.
    """
    L = log_xmin
    y = L + h0 * e
    y = max(L + h0 * (e - beta * math.log(y / L)), L)
    for _ in range(100):
        g = (y - L) / h0 + beta * math.log(y / L) - e
        step = g / (1.0 / h0 + beta / y)
        y_new = y - step
        if y_new < L:
            y_new = 0.5 * (y + L)
        y = y_new
        if abs(step) <= 1e-9 * y:
            break
    return math.exp(y)


@nb.njit(cache=True, inline="always")
def increment_from_uniforms(code, par, u1, u2):
    if code == INC_CONSTANT:
        return par[0]
    if code == INC_UNIFORM:
        return par[0] + (par[1] - par[0]) * u1
    if code == INC_GAUSSIAN:
        return par[0] * math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
    if code == INC_PARETO or code == INC_SYM_PARETO:
        theta = par[0]
        if theta == 1.0:
            x = par[1] / u1
        else:
            x = par[1] * math.exp(-theta * math.log(u1))
        if code == INC_SYM_PARETO and u2 <= 0.5:
            return -x
        return x
    if code == INC_LOG_PARETO:
        h0 = par[0]
        beta = par[1]
        L = par[3]
        if beta > 0.0:
            # survival of log(Y) - L factors as exp(-z/h0) * (1 + z/L)^-beta,
            # i.e. the min of an exponential and an independent Lomax variable
            z_exp = -h0 * math.log(u1)
            z_lomax = L * math.expm1(-math.log(u2) / beta)
            return math.exp(L + min(z_exp, z_lomax))
        if beta == 0.0:
            return par[2] * math.exp(-h0 * math.log(u1))
        return log_pareto_inverse(-math.log(u1), h0, beta, L)
    if code == INC_TWO_POINT:
        if u1 <= 0.5:
            return -par[0]
        return par[0]
    return math.nan


@nb.njit(cache=True, inline="always")
def vertex_increment(code, par, seed, lo, hi):
    u1 = stream_uniform(seed, lo, hi, 1)
    u2 = 0.5
    if code == INC_GAUSSIAN or code == INC_SYM_PARETO or code == INC_LOG_PARETO:
        u2 = stream_uniform(seed, lo, hi, 2)
    return increment_from_uniforms(code, par, u1, u2)


@nb.njit(cache=True, inline="always")
def offspring_from_uniform(code, par, cdf, u):
    if code == OFF_POISSON_SHIFTED:
        lam = par
        k = 0
        p = math.exp(-lam)
        f = p
        while u > f and p > 1e-300:
            k += 1
            p *= lam / k
            f += p
        return 1 + k
    if code == OFF_GEOMETRIC_SHIFTED:
        return 1 + int(math.floor(math.log(u) / math.log1p(-par)))
    if code == OFF_CUSTOM:
        k = 0
        n = cdf.shape[0]
        while k < n - 1 and u > cdf[k]:
            k += 1
        return k
    return int(par)


@nb.njit(cache=True, inline="always")
def vertex_offspring(code, par, cdf, seed, lo, hi):
    if code == OFF_DETERMINISTIC:
        return int(par)
    return offspring_from_uniform(code, par, cdf, stream_uniform(seed, lo, hi, 0))


@nb.njit(cache=True)
def sample_increments_bulk(code, par, seed, n):
    """n draws keyed by the children 0..n-1 of the root of ``seed``."""
    out = np.empty(n)
    rlo, rhi = root_digest(seed)
    for i in range(n):
        lo, hi = child_digest(rlo, rhi, i)
        out[i] = vertex_increment(code, par, seed, lo, hi)
    return out


@nb.njit(cache=True)
def sample_offspring_bulk(code, par, cdf, seed, n):
    out = np.empty(n, dtype=np.int64)
    rlo, rhi = root_digest(seed)
    for i in range(n):
        lo, hi = child_digest(rlo, rhi, i)
        out[i] = offspring_from_uniform(code, par, cdf, stream_uniform(seed, lo, hi, 0)) \
            if code != OFF_DETERMINISTIC else int(par)
    return out


@nb.njit(cache=True, nogil=True)
def dfs_kernel(seed, inc_code, inc_par, off_code, off_par, off_cdf, disc, depth_n, us, budget):
    """Depth-first walk of the keyed Galton-Watson tree truncated at ``depth_n``.

    Memory is O(depth_n * len(us)).  Per depth k it records the max signed and
    max absolute partial sum over depth-k vertices, the generation size, and
    for each threshold in ``us`` the number of vertices with discounted
    increment above it; ``max_per_ray`` is the largest count along a
    root-to-depth-N path.
    """
    n = depth_n
    nu = us.shape[0]
    max_signed = np.full(n + 1, -np.inf)
    max_abs = np.zeros(n + 1)
    gen = np.zeros(n + 1, dtype=np.int64)
    exc = np.zeros((nu, n + 1), dtype=np.int64)
    max_per_ray = np.zeros(nu, dtype=np.int64)

    st_lo = np.zeros(n + 1, dtype=np.uint64)
    st_hi = np.zeros(n + 1, dtype=np.uint64)
    st_nchild = np.zeros(n + 1, dtype=np.int64)
    st_next = np.zeros(n + 1, dtype=np.int64)
    st_sum = np.zeros(n + 1)
    st_cnt = np.zeros((nu, n + 1), dtype=np.int64)

    lo, hi = root_digest(seed)
    st_lo[0] = lo
    st_hi[0] = hi
    gen[0] = 1
    max_signed[0] = 0.0
    if n > 0:
        st_nchild[0] = vertex_offspring(off_code, off_par, off_cdf, seed, lo, hi)

    visited = 0
    truncated = False
    depth = 0
    while depth >= 0:
        if depth < n and st_next[depth] < st_nchild[depth]:
            idx = st_next[depth]
            st_next[depth] = idx + 1
            if visited >= budget:
                truncated = True
                break
            visited += 1
            d = depth + 1
            lo, hi = child_digest(st_lo[depth], st_hi[depth], idx)
            x = disc[d] * vertex_increment(inc_code, inc_par, seed, lo, hi)
            s = st_sum[depth] + x
            ax = abs(x)
            for j in range(nu):
                hit = 1 if ax > us[j] else 0
                st_cnt[j, d] = st_cnt[j, depth] + hit
                exc[j, d] += hit
                if d == n and st_cnt[j, d] > max_per_ray[j]:
                    max_per_ray[j] = st_cnt[j, d]
            gen[d] += 1
            if s > max_signed[d]:
                max_signed[d] = s
            a = abs(s)
            if a > max_abs[d]:
                max_abs[d] = a
            st_lo[d] = lo
            st_hi[d] = hi
            st_sum[d] = s
            st_next[d] = 0
            if d < n:
                st_nchild[d] = vertex_offspring(off_code, off_par, off_cdf, seed, lo, hi)
            else:
                st_nchild[d] = 0
            depth = d
        else:
            depth -= 1
    return max_signed, max_abs, gen, exc, max_per_ray, visited, truncated


@nb.njit(cache=True)
def expand_level(seed, lo, hi, off_code, off_par, off_cdf):
    nchild = np.empty(lo.shape[0], dtype=np.int64)
    for i in range(lo.shape[0]):
        nchild[i] = vertex_offspring(off_code, off_par, off_cdf, seed, lo[i], hi[i])
    return nchild


@nb.njit(cache=True)
def fill_children(seed, lo, hi, psum, nchild, total, inc_code, inc_par, scale):
    """Children of one level, parents in order and children 0..Z-1 within each parent."""
    clo = np.empty(total, dtype=np.uint64)
    chi = np.empty(total, dtype=np.uint64)
    parent = np.empty(total, dtype=np.int64)
    cidx = np.empty(total, dtype=np.int64)
    val = np.empty(total)
    csum = np.empty(total)
    j = 0
    for i in range(lo.shape[0]):
        for c in range(nchild[i]):
            a, b = child_digest(lo[i], hi[i], c)
            clo[j] = a
            chi[j] = b
            parent[j] = i
            cidx[j] = c
            x = scale * vertex_increment(inc_code, inc_par, seed, a, b)
            val[j] = x
            csum[j] = psum[i] + x
            j += 1
    return clo, chi, parent, cidx, val, csum
