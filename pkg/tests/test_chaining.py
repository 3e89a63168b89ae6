import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbrw.chaining import (MaterializedTree, bernoulli_sup, build_partitions, chain_report,
                           class_diameters, classes_as_sets, decompose, dump_partitions_csv,
                           e_k_report, extract_raypoints, marked_binary_instance, gamma2_upper, h_of,
                           materialize, n2_of, partition_classes, q_choice, raypoints_of)
from dbrw.errors import BudgetExceeded, DepthTooShallowForLevel
from dbrw.laws import Constant, Deterministic, Gaussian, PoissonShifted, SymmetricPareto
from dbrw.rng import numpy_rng, split_seed
from dbrw.tree_sim import SimConfig, dfs_supremum

from oracles import brute_bernoulli


def sym_cfg(N, seed=0, H=2.0, off=Deterministic(2)):
    return SimConfig(SymmetricPareto(1.0), off, H, N, seed)


# -- materialization ------------------------------------------------------------

def test_constant_rays():
    pts = extract_raypoints(SimConfig(Constant(1.0), Deterministic(2), 1.0, 3))
    assert len(pts) == 8
    assert np.allclose(pts.coords, [0.5, 0.25, 0.125], rtol=1e-15, atol=0)


def test_depth_one_coords():
    cfg = SimConfig(Gaussian(1.0), Deterministic(3), 0.5, 1, 4)
    pts = extract_raypoints(cfg)
    assert pts.coords.shape == (3, 1)
    from dbrw.laws import sample_increment
    from dbrw.rng import VertexKey
    root = VertexKey.root(4)
    expect = [3 ** -0.5 * sample_increment(cfg.increment, 4, root.child(i)) for i in range(3)]
    assert np.allclose(pts.coords[:, 0], expect, rtol=0, atol=0)


def test_replay_matches_dfs():
    for s in range(50):
        cfg = sym_cfg(8, s, H=1.0, off=PoissonShifted(1.0))
        tree = materialize(cfg)
        traj = dfs_supremum(cfg)
        for k in range(1, 9):
            assert tree.psum[k].max() == traj.max_signed[k]
        pts = raypoints_of(tree)
        # coordinates are differences of consecutive partial sums along each ray
        ps = np.stack([tree.psum[k][pts.ancestors[k]] for k in range(9)], axis=1)
        assert np.allclose(np.diff(ps, axis=1), pts.coords, rtol=0, atol=1e-12)


def test_materialize_budget():
    with pytest.raises(BudgetExceeded):
        materialize(sym_cfg(18), budget=10_000)


# -- decomposition -------------------------------------------------------------------

def test_decompose_small_coords():
    d = decompose(np.array([[0.5, -1.0], [0.2, 0.9]]))
    assert np.all(d.s2 == 0) and d.sup_l1_s2 == 0.0


def test_decompose_single_big():
    d = decompose(np.array([[0.5, 3.5], [0.2, 0.9]]))
    assert d.sup_l1_s2 == 3.5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32))
def test_decompose_invariants(seed):
    c = numpy_rng(seed).standard_cauchy((20, 6))
    d = decompose(c)
    assert np.array_equal(d.s1 + d.s2, c)
    assert np.all(np.abs(d.s1) <= 1)
    assert np.all((d.s2 == 0) | (np.abs(d.s2) > 1))


def test_sup_l1_s2_stable_in_depth():
    means = []
    for N in (10, 13, 16):
        vals = [decompose(extract_raypoints(sym_cfg(N, split_seed(0, "s2", r)))).sup_l1_s2
                for r in range(40)]
        means.append(np.mean(vals))
    assert all(np.isfinite(means))
    assert abs(means[2] - means[0]) < 0.05 * means[2]


# -- bookkeeping -----------------------------------------------------------------------

def test_h_of():
    assert h_of(4, 2) == 4
    assert h_of(5, 2) == 8
    assert h_of(3, 3) == 1
    for n in range(8):
        for m in (2, 3, 5):
            h = h_of(n, m)
            assert m ** h <= 2 ** (2 ** (n - 2)) < m ** (h + 1) or (h == 0 and n < 2)


def test_n2_small_m():
    assert n2_of(2) == 0
    assert n2_of(3) == 0


def test_depth_too_shallow():
    with pytest.raises(DepthTooShallowForLevel):
        build_partitions(sym_cfg(3), n_max=5)


# -- partitions -------------------------------------------------------------------------

@pytest.mark.parametrize("rule", ["deepest", "maximal"])
def test_marked_instance_classes(rule):
    pts, h, u, expected = marked_binary_instance()
    ids = partition_classes(pts, h, u, rule)[0]
    got = {frozenset(c) for c in classes_as_sets(pts, ids)}
    assert got == {frozenset(c) for c in expected}


def test_no_exceedances_single_class():
    pts = extract_raypoints(SimConfig(Constant(1.0), Deterministic(2), 1.0, 5))
    ids = partition_classes(pts, None, 10.0)[0]
    assert ids.max() == 0


@pytest.mark.parametrize("seed", range(10))
def test_partitions_admissible_and_structural(seed):
    cfg = sym_cfg(12, seed, H=1.5, off=PoissonShifted(0.6))
    seq = build_partitions(cfg, n_max=4)
    assert seq.cardinalities()[0] == 1
    assert seq.admissibility_violations() == []
    assert seq.structural_violations() == []


def test_partition_dump(tmp_path):
    pts, h, u, _ = marked_binary_instance()
    seq = build_partitions(pts, n_max=3)
    path = tmp_path / "p.csv"
    dump_partitions_csv(seq, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "ray_id,level,class_id"
    assert len(lines) == 1 + 16 * 4


# -- diameters and gamma_2 -----------------------------------------------------------------

def test_single_ray_gamma2_zero():
    tree = MaterializedTree.from_levels(2, 1.0, [None, [0], [0]], [None, [0.3], [-0.2]])
    seq = build_partitions(raypoints_of(tree), n_max=0)
    assert gamma2_upper(seq)[0] == 0.0


def test_two_rays_gamma2():
    delta = 0.37
    tree = MaterializedTree.from_levels(2, 1.0, [None, [0, 0]], [None, [0.1, 0.1 + delta]])
    seq = build_partitions(raypoints_of(tree), n_max=0)
    assert gamma2_upper(seq)[0] == pytest.approx(delta, abs=1e-15)


def test_diameter_methods_agree():
    rng = numpy_rng(0, "diam")
    for _ in range(100):
        k = int(rng.integers(1, 200))
        coords = rng.standard_normal((k, 7))
        ids = rng.integers(0, 3, size=k)
        ids = np.unique(ids, return_inverse=True)[1]
        a = class_diameters(coords, ids, "exact")
        b = class_diameters(coords, ids, "pdist")
        c = class_diameters(coords, ids, "bbox")
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        assert np.all(c >= a - 1e-12)


def test_bbox_exact_for_pairs():
    coords = numpy_rng(1).standard_normal((2, 5))
    ids = np.zeros(2, dtype=np.int64)
    assert class_diameters(coords, ids, "bbox")[0] == pytest.approx(class_diameters(coords, ids)[0])


def test_gamma2_monotone_under_adding_rays():
    for s in range(10):
        seq = build_partitions(sym_cfg(10, s, H=1.5), n_max=3)
        mask = numpy_rng(s, "mask").random(len(seq.points)) < 0.5
        if mask.sum() < 2:
            continue
        assert gamma2_upper(seq.restrict(mask))[0] <= gamma2_upper(seq)[0] + 1e-12


def test_q_choice():
    q, qp = q_choice(2.0)
    assert q == 8.0 and 1 / q < qp < 2.0
    q, qp = q_choice(0.1)
    assert q * qp > 1 and 1 / q < qp < 0.1


# -- Bernoulli ----------------------------------------------------------------------------

def test_bernoulli_single_ray_zero():
    assert bernoulli_sup(np.array([[0.3, -1.2, 0.5]]))[0] == pytest.approx(0.0, abs=1e-15)


def test_bernoulli_mirror_rays():
    assert bernoulli_sup(np.array([[0.7], [-0.7]]))[0] == pytest.approx(0.7)


def test_bernoulli_exhaustive_matches_brute():
    c = numpy_rng(3).standard_normal((5, 8))
    assert bernoulli_sup(c)[0] == pytest.approx(brute_bernoulli(c), rel=1e-12)


def test_bernoulli_mc_within_3se():
    pts = extract_raypoints(sym_cfg(10, 1, H=1.0))
    ex, _ = bernoulli_sup(pts)
    mc, se = bernoulli_sup(pts, "montecarlo", 20_000, seed=1)
    assert abs(mc - ex) <= 3 * se


def test_bernoulli_rejects_deep_exhaustive():
    with pytest.raises(ValueError):
        bernoulli_sup(np.zeros((2, 21)))


# -- report ----------------------------------------------------------------------------------

def test_chain_report_smoke():
    rep = chain_report(sym_cfg(12, 3), n_max=4)
    assert rep.admissibility_violations == [] and rep.structural_violations == []
    assert rep.gamma2_upper == pytest.approx(sum(2 ** (n / 2) * d for n, d in enumerate(rep.diameters)))
    assert rep.gamma2_cumulative[-1] == pytest.approx(rep.gamma2_upper)
    assert rep.bernoulli_estimate is not None
    assert set(rep.E_K) == {2, 4, 8, 16}
    assert len(rep.rows()) == 5
