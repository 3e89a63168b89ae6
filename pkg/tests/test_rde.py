import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbrw.errors import ConstructionError
from dbrw.laws import Constant, CustomPmf, Deterministic, ParetoPositive, PoissonShifted
from dbrw.rde import (EmpiricalCdf, compare_to_simulation, fie_residual, grid_iterate,
                      iterate_to_fixpoint, max_rank, population_step, simulate_leaf_max,
                      write_pool_csv)
from dbrw.rng import numpy_rng
from dbrw.tree_sim import SimConfig


def test_deterministic_fixed_point_is_stationary():
    a, c = 1.0, 0.25
    pool = np.full(1000, a / (1 - c))
    new = population_step(pool, Constant(a), Deterministic(2), c, numpy_rng(0))
    assert np.allclose(new, a / (1 - c), rtol=0, atol=1e-15)


def test_zero_solution_stays_zero():
    new = population_step(np.zeros(500), Constant(0.0), Deterministic(3), 0.5, numpy_rng(1))
    assert np.all(new == 0.0)


def test_two_value_pool_probabilities():
    pool = np.array([0.0] * 5000 + [1.0] * 5000)
    new = population_step(pool, Constant(0.0), Deterministic(2), 0.5, numpy_rng(2))
    assert set(np.unique(new)) <= {0.0, 0.5}
    p0 = np.mean(new == 0.0)
    assert abs(p0 - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / new.size)


def test_max_rank_exact_distribution():
    # max of 2 picks from 4 sorted entries: P(rank <= r) = ((r+1)/4)^2
    v = 1.0 - numpy_rng(3).random(400_000)
    r = max_rank(4, np.full(v.size, 2), v)
    for k in range(4):
        assert np.mean(r <= k) == pytest.approx(((k + 1) / 4) ** 2, abs=4e-3)


def test_rejects_extinction_and_bad_c():
    with pytest.raises(ConstructionError):
        population_step(np.zeros(3), Constant(1.0), CustomPmf((0.2, 0.0, 0.8)), 0.5, numpy_rng(0))
    with pytest.raises(ConstructionError):
        iterate_to_fixpoint(Constant(1.0), Deterministic(2), 1.0)


def test_constant_fixed_point():
    rep = iterate_to_fixpoint(Constant(1.0), Deterministic(2), 0.25, pool_size=10_000, max_iters=200)
    assert rep.converged
    assert abs(rep.cdf.median() - 4 / 3) <= 1e-6
    assert np.all(np.abs(rep.cdf.samples - 4 / 3) <= 1e-6)


def test_pareto_convergent_case():
    rep = iterate_to_fixpoint(ParetoPositive(1.0), Deterministic(2), 0.25, pool_size=20_000)
    assert rep.converged and rep.ks_gap <= 2e-2
    assert rep.H == pytest.approx(2.0)


def test_monotone_iteration_under_common_random_numbers():
    # chain A applies maps T_1..T_k to 0, chain B applies T_2..T_k to 0; A >= B pointwise
    law, off, c = ParetoPositive(1.0), PoissonShifted(1.0), 0.3
    seeds = list(range(100, 112))
    a = np.zeros(5000)
    for s in seeds:
        a = population_step(a, law, off, c, numpy_rng(s))
    b = np.zeros(5000)
    for s in seeds[1:]:
        b = population_step(b, law, off, c, numpy_rng(s))
    assert np.all(a >= b)


def test_scale_equivariance():
    lam = 3.5
    a = iterate_to_fixpoint(ParetoPositive(1.0, 1.0), Deterministic(2), 0.25, pool_size=5000, seed=9)
    b = iterate_to_fixpoint(ParetoPositive(1.0, lam), Deterministic(2), 0.25, pool_size=5000, seed=9)
    assert a.converged and b.converged and a.iterations == b.iterations
    assert np.allclose(b.cdf.samples, lam * a.cdf.samples, rtol=1e-9, atol=0)


def test_fie_residual_deterministic_zero():
    a, c = 1.0, 0.25
    G = EmpiricalCdf(np.full(100, a / (1 - c)))
    # the jump point 4/3 itself is skipped: (4/3 - 1)/c rounds just below 4/3
    x = np.array([0.5, 1.0, 1.2, 1.3, 1.34, 1.5, 3.0])
    res, per_point, _ = fie_residual(G, Constant(a), Deterministic(2), c, x, mc_samples=1000)
    assert res == 0.0


def test_grid_iteration_agrees_with_pool_loosely():
    g = grid_iterate(ParetoPositive(1.0), Deterministic(2), 0.25)
    assert g.status == "Converged"
    rep = iterate_to_fixpoint(ParetoPositive(1.0), Deterministic(2), 0.25, pool_size=50_000)
    assert rep.cdf.median() == pytest.approx(g.median_trajectory[-1], rel=0.05)


def test_grid_iteration_diverges_in_unbounded_regime():
    g = grid_iterate(ParetoPositive(1.0), Deterministic(2), 2 ** -0.5)
    assert g.status == "Diverged"


def test_compare_guards_c_mismatch():
    rep = iterate_to_fixpoint(Constant(1.0), Deterministic(2), 0.25, pool_size=2000)
    with pytest.raises(ConstructionError):
        compare_to_simulation(rep, SimConfig(Constant(1.0), Deterministic(2), 1.0, 8), 10)


def test_compare_constant_case():
    rep = iterate_to_fixpoint(Constant(1.0), Deterministic(2), 0.25, pool_size=2000)
    cfg = SimConfig(Constant(1.0), Deterministic(2), 2.0, 12)
    sims = simulate_leaf_max(cfg, 20)
    assert np.allclose(sims, 4 / 3 - 4.0 ** -12 / 3, rtol=0, atol=1e-12)
    # two point masses 4^-12/3 apart: the exact KS distance is 1
    assert compare_to_simulation(rep, cfg, 20) == 1.0


def test_empirical_cdf():
    cdf = EmpiricalCdf(np.array([3.0, 1.0, 2.0]))
    assert np.array_equal(cdf.samples, [1.0, 2.0, 3.0])
    assert cdf(2.0) == pytest.approx(2 / 3)
    assert cdf.median() == 2.0


def test_pool_csv(tmp_path):
    p = tmp_path / "pool.csv"
    write_pool_csv(EmpiricalCdf(np.array([0.5, 0.25])), p)
    assert p.read_text().splitlines() == ["sample", "0.25", "0.5"]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32), st.floats(0.05, 0.9))
def test_step_preserves_size_and_sorts(seed, c):
    pool = numpy_rng(seed).random(257)
    new = population_step(pool, ParetoPositive(1.0), PoissonShifted(0.5), c, numpy_rng(seed, 1))
    assert new.size == 257
    assert np.all(np.diff(new) >= 0)
