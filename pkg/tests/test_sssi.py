import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbrw.errors import BudgetExceeded, ConstructionError
from dbrw.growth import FLAT, GROWING
from dbrw.laws import Constant, Gaussian, SymmetricPareto, TwoPoint, Uniform, moment_1overH
from dbrw.rng import numpy_rng
from dbrw.sssi import (SkeletonConfig, Skeleton, boundedness_scan, build_skeleton, equivalence_test,
                       is_prime, tree_side_max, write_scan_csv)


def cfg(K=8, c=0.5, law=SymmetricPareto(1.0), p=2, seed=0):
    return SkeletonConfig(p, c, law, K, seed)


def test_origin_is_zero():
    for s in range(20):
        assert build_skeleton(cfg(seed=s, p=3, K=6)).values()[0] == 0.0


def test_values_are_ordered_sum_of_contributions():
    sk = build_skeleton(cfg(K=10, seed=4))
    x = sk.values()
    n = numpy_rng(0, "pairs").integers(0, 2 ** 10, size=1000)
    total = np.zeros(n.size)
    for k in range(1, 11):
        total = total + sk.contribution(k, n)
    assert np.array_equal(x[n], total)


def test_level_contribution_is_periodic():
    sk = build_skeleton(cfg(K=9, p=3, seed=2))
    rng = numpy_rng(1, "period")
    for _ in range(1000):
        k = int(rng.integers(1, 10))
        n = int(rng.integers(0, 3 ** 9))
        j = int(rng.integers(1, 50))
        assert sk.contribution(k, n + j * 3 ** k) == sk.contribution(k, n)


def test_constant_law_gives_zero_path():
    assert np.all(build_skeleton(cfg(law=Constant(1.0))).values() == 0.0)


def test_appending_zero_level_changes_nothing():
    sk = build_skeleton(cfg(K=7, seed=5))
    ext = sk.extended(np.zeros(2 ** 8))
    x, y = sk.values(), ext.values()
    assert np.array_equal(np.tile(x, 2), y)


def test_levels_independent_of_K():
    a = build_skeleton(cfg(K=6, seed=8))
    b = build_skeleton(cfg(K=9, seed=8))
    for k in range(6):
        assert np.array_equal(a.levels[k], b.levels[k])


def test_running_max_matches_truncations():
    sk = build_skeleton(cfg(K=8, seed=1, law=Gaussian(1.0)))
    run = sk.running_max_abs()
    for k in range(1, 9):
        assert run[k - 1] == np.abs(Skeleton(2, 0.5, sk.levels[:k]).values()).max()


def test_bounded_law_tail_majorant():
    # with |Y| <= 1 the levels beyond K move the path by at most the majorant
    law = Uniform(-1.0, 1.0)
    full = build_skeleton(cfg(K=14, c=0.6, law=law, seed=3))
    short = Skeleton(2, 0.6, full.levels[:8])
    diff = full.values() - np.tile(short.values(), 2 ** 6)
    assert np.abs(diff).max() <= short.tail_majorant(1.0)


def test_config_validation():
    assert [q for q in range(20) if is_prime(q)] == [2, 3, 5, 7, 11, 13, 17, 19]
    with pytest.raises(ConstructionError):
        cfg(p=4)
    with pytest.raises(ConstructionError):
        cfg(c=1.0)
    with pytest.raises(ConstructionError):
        cfg(K=0)
    assert cfg(p=5).p == 5
    assert cfg(c=0.25).H == pytest.approx(2.0)


def test_budget():
    with pytest.raises(BudgetExceeded):
        build_skeleton(cfg(K=20), budget=1e6)


def test_depth_one_two_point_law_exact():
    # K=1, p=2: max(0, c(Y_1 - Y_0)) is 2c w.p. 1/4 and 0 otherwise, on both sides
    c = 0.5
    n = 4000
    sk = np.array([build_skeleton(cfg(K=1, c=c, law=TwoPoint(1.0), seed=s)).values().max()
                   for s in range(n)])
    tr = np.array([tree_side_max(cfg(K=1, c=c, law=TwoPoint(1.0), seed=s)) for s in range(n)])
    for v in (sk, tr):
        assert set(np.unique(v)) <= {0.0, 2 * c}
        p = np.mean(v == 2 * c)
        assert abs(p - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / n)


def test_equivalence_degenerate_law():
    assert equivalence_test(cfg(K=6, law=Constant(2.0)), replicas=20) == (0.0, 1.0)


def test_equivalence_gaussian():
    assert equivalence_test(cfg(K=7, law=Gaussian(1.0)), replicas=200)[1] > 0.01


def test_equivalence_guard():
    with pytest.raises(ValueError):
        equivalence_test(cfg(K=11))


@pytest.mark.parametrize("c,expect", [(2 ** -0.5, GROWING), (0.25, FLAT)])
def test_scan_anchors(c, expect):
    conf = cfg(c=c, seed=1)
    maxima, verdict = boundedness_scan(conf, range(8, 15))
    assert maxima.shape == (32, 7)
    assert verdict.verdict == expect
    assert moment_1overH(conf.law, conf.H).finite == (expect == FLAT)


def test_scan_csv(tmp_path):
    maxima, _ = boundedness_scan(cfg(K=5), range(3, 6), replicas=2)
    p = tmp_path / "s.csv"
    write_scan_csv(maxima, [3, 4, 5], p)
    lines = p.read_text().splitlines()
    assert lines[0] == "K,replica,max_abs" and len(lines) == 7


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 63), st.sampled_from([2, 3, 5]), st.floats(0.05, 0.95), st.integers(1, 6))
def test_skeleton_invariants(seed, p, c, K):
    sk = build_skeleton(SkeletonConfig(p, c, Gaussian(1.0), K, seed))
    x = sk.values()
    assert x.size == p ** K and x[0] == 0.0
    assert sk.running_max_abs()[-1] == np.abs(x).max()
