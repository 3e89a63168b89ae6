import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from dbrw.errors import ConstructionError
from dbrw.laws import (Constant, CustomPmf, Deterministic, Gaussian, GeometricShifted, LogPareto,
                       ParetoPositive, PoissonShifted, SymmetricPareto, TwoPoint, Uniform,
                       increment_from_dict, moment_1overH, offspring_from_dict, pgf, sample_increment,
                       tail)
from dbrw.rng import VertexKey
from dbrw.stats import ks_test

LAWS = [Constant(1.0), Uniform(-1.0, 2.0), Gaussian(1.5), ParetoPositive(1.0), SymmetricPareto(0.5, 2.0),
        LogPareto(1.0, 2.0), LogPareto(0.5, -1.0, 10.0), TwoPoint(2.0)]
OFFSPRING = [Deterministic(2), Deterministic(3), PoissonShifted(1.0), GeometricShifted(0.3),
             CustomPmf((0.1, 0.2, 0.3, 0.4))]


def test_constant_sample_is_a():
    for s in range(5):
        assert sample_increment(Constant(1.0), s) == 1.0


def test_pareto_tail_closed_form():
    assert tail(ParetoPositive(1.0), 4.0) == pytest.approx(0.25, abs=1e-15)
    assert tail(SymmetricPareto(2.0, 3.0), 12.0) == pytest.approx((12 / 3) ** -0.5)


def test_tail_at_zero_is_one_with_positive_xmin():
    for law in (ParetoPositive(1.0), SymmetricPareto(1.0, 2.0), LogPareto(1.0, 2.0), TwoPoint(1.0)):
        assert tail(law, 0.0) == 1.0


def test_constant_tail_point_mass():
    assert tail(Constant(1.0), 1.0) == 0.0
    assert tail(Constant(1.0), 0.999) == 1.0


def test_log_pareto_tail_closed_form():
    law = LogPareto(1.0, 2.0, 3.0)
    x = 50.0
    assert tail(law, x) == pytest.approx((x / 3) ** -1 * (math.log(x) / math.log(3)) ** -2)


def test_two_point_support():
    vals = TwoPoint(2.0).sample_array(10_000, 3)
    assert set(np.unique(vals)) == {-2.0, 2.0}


def test_symmetric_pareto_exceedance_frequency():
    y = SymmetricPareto(1.0, 1.0).sample_array(1_000_000, 11)
    p = np.mean(np.abs(y) > 10)
    se = math.sqrt(0.1 * 0.9 / y.size)
    assert abs(p - 0.1) <= 3 * se


@pytest.mark.parametrize("law", LAWS, ids=repr)
def test_monte_carlo_tail_matches_closed_form(law):
    y = np.abs(law.sample_array(1_000_000, 5))
    for x in np.quantile(y, [0.1, 0.3, 0.5, 0.9, 0.99]):
        p_hat = np.mean(y > x)
        p = float(tail(law, x))
        se = math.sqrt(max(p * (1 - p), 1e-12) / y.size)
        assert abs(p_hat - p) <= 4 * se + 1e-12


@pytest.mark.parametrize("law", LAWS, ids=repr)
def test_tail_monotone_and_in_unit_interval(law):
    x = np.concatenate([[0.0], np.geomspace(1e-3, 1e8, 400)])
    t = np.asarray(tail(law, x))
    assert np.all((t >= 0) & (t <= 1))
    assert np.all(np.diff(t) <= 1e-15)


@pytest.mark.parametrize("law", [Gaussian(1.0), SymmetricPareto(1.0), TwoPoint(1.0)], ids=repr)
def test_symmetric_laws_are_symmetric(law):
    y = law.sample_array(20_000, 1)
    z = law.sample_array(20_000, 2)
    assert ks_test(y, -z)[1] > 1e-3


def test_moment_examples():
    r = moment_1overH(ParetoPositive(1.0), 2.0)
    assert r.finite and r.value == pytest.approx(2.0)
    assert not moment_1overH(ParetoPositive(1.0), 1.0).finite
    assert moment_1overH(LogPareto(1.0, 2.0, 3.0), 1.0).finite
    assert not moment_1overH(LogPareto(1.0, 1.0), 1.0).finite
    assert not moment_1overH(LogPareto(1.0, 0.5), 1.0).finite
    assert moment_1overH(Constant(2.0), 0.01).finite


def _quad_moment(law, H):
    # E|Y|^(1/H) = int_0^inf P(|Y| > x^H) dx, split at the kinks of the tail
    f = lambda x: float(tail(law, x ** H))
    pts = [0.0]
    xmin = getattr(law, "xmin", None)
    if xmin is not None:
        pts.append(xmin ** (1 / H))
    pts.append(max(pts[-1], 1.0) * 10)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        total += integrate.quad(f, a, b, limit=200, epsrel=1e-12)[0]
    # beyond the last kink substitute x = e^t so slowly varying tails decay algebraically in t
    g = lambda t: math.exp(t + float(law.log_tail(H * t)))
    total += integrate.quad(g, math.log(pts[-1]), np.inf, limit=500, epsrel=1e-12)[0]
    return total


@pytest.mark.parametrize("law,H", [(ParetoPositive(1.0), 2.0), (SymmetricPareto(0.5, 2.0), 1.0),
                                   (LogPareto(1.0, 2.0), 1.0), (LogPareto(1.0, 3.0, 5.0), 1.0),
                                   (Gaussian(2.0), 0.5), (Uniform(-1.0, 2.0), 0.25),
                                   (TwoPoint(3.0), 2.0), (LogPareto(1.0, 0.5), 1.5)], ids=str)
def test_moment_matches_quadrature(law, H):
    r = moment_1overH(law, H)
    assert r.finite
    assert r.value == pytest.approx(_quad_moment(law, H), rel=1e-3)


@pytest.mark.parametrize("off", OFFSPRING, ids=repr)
def test_pgf_properties(off):
    assert pgf(off, 1.0) == pytest.approx(1.0, abs=1e-14)
    s = np.linspace(0, 1, 101)
    f = pgf(off, s)
    assert np.all(np.diff(f) >= -1e-15)
    assert np.all(np.diff(f, 2) >= -1e-12)
    h = 1e-7
    slope = (pgf(off, 1.0) - pgf(off, 1.0 - h)) / h
    assert slope == pytest.approx(off.mean, abs=max(1e-6, 1e-6 * off.mean) + off.mean ** 2 * h)


def test_pgf_examples():
    assert pgf(Deterministic(2), 0.5) == 0.25
    assert pgf(PoissonShifted(1.0), 0.0) == 0.0
    assert pgf(PoissonShifted(2.0), 0.3) == pytest.approx(0.3 * math.exp(2.0 * (0.3 - 1)))


def test_offspring_mean_must_exceed_one():
    with pytest.raises(ConstructionError):
        Deterministic(1)
    with pytest.raises(ConstructionError):
        CustomPmf((0.5, 0.5))


def test_shifted_laws_never_zero():
    for off in (PoissonShifted(0.5), GeometricShifted(0.7)):
        assert off.p_zero == 0.0
        assert off.sample_array(10_000, 1).min() >= 1


def test_offspring_sample_mean():
    z = PoissonShifted(1.0).sample_array(200_000, 4)
    assert z.mean() == pytest.approx(2.0, abs=4 * math.sqrt(1.0 / z.size))


def test_log_pareto_rejects_small_xmin():
    with pytest.raises(ConstructionError):
        LogPareto(1.0, 2.0, 2.0)


def test_dict_round_trip():
    for law in LAWS:
        assert increment_from_dict(law.to_dict()) == law
    for off in OFFSPRING:
        assert offspring_from_dict(off.to_dict()) == off
    with pytest.raises(ConstructionError):
        increment_from_dict({"kind": "sym_pareto", "theta": 1.0, "bogus": 2})
    with pytest.raises(ConstructionError):
        increment_from_dict({"kind": "cauchy"})


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.lists(st.integers(0, 5), max_size=6))
def test_keyed_samples_are_pure(seed, path):
    key = VertexKey.from_path(seed, path)
    law = SymmetricPareto(1.0)
    assert sample_increment(law, seed, key) == sample_increment(law, seed, key)
