import numpy as np
import pytest
from fractions import Fraction

from twistpo.curves import FourierCurve, RotationNumber
from twistpo.dd import DoubleDouble
from twistpo.maps import Point2, StandardMap
from twistpo.parameterization import iterate_to_tolerance
from twistpo.tracking import (
    avg_error_profile,
    conjugated_residue_profile,
    locate_seeds,
    pick_adjacent_extrema,
    point_error,
    profile,
)


def dd(v):
    return DoubleDouble.from_str(v) if isinstance(v, str) else DoubleDouble(v)


@pytest.fixture(scope="module")
def converged_58():
    m = StandardMap(0.4)
    res = iterate_to_tolerance(FourierCurve.integrable(RotationNumber(5, 8)), m,
                               eps_tilde=1e-14, max_iter=12)
    return res.curve, m


def test_exact_point_has_zero_error():
    # integrable closure: y = p/q advances x by exactly p over q steps
    m = StandardMap(0.0)
    k = FourierCurve.integrable(RotationNumber(5, 8))
    e = point_error(k, m, 5, 8, theta=dd(0.3))
    assert float(e) < 1e-29


def test_avg_error_cyclic_in_orbit_steps(converged_58):
    k, m = converged_58
    t = dd(0.0123)
    a = avg_error_profile(k, m, t)
    b = avg_error_profile(k, m, t + RotationNumber(5, 8).as_dd())
    assert a == pytest.approx(b, rel=1e-9, abs=1e-25)


def test_profile_periodic_in_fundamental_interval(converged_58):
    k, m = converged_58
    t = dd(0.007)
    shift = DoubleDouble.from_fraction(Fraction(1, 8))
    a_e = avg_error_profile(k, m, t)
    b_e = avg_error_profile(k, m, t + shift)
    a_r = conjugated_residue_profile(k, m, t)
    b_r = conjugated_residue_profile(k, m, t + shift)
    prof = profile(k, m, samples=32)
    rng_e = prof.e_tilde.max() - prof.e_tilde.min()
    rng_r = prof.r_tilde.max() - prof.r_tilde.min()
    assert abs(a_e - b_e) < 1e-3 * max(rng_e, 1e-290)
    assert abs(a_r - b_r) < 1e-3 * max(rng_r, 1e-290)


def test_integrable_residue_profile_vanishes():
    m = StandardMap(0.0)
    k = FourierCurve.integrable(RotationNumber(5, 8))
    for t in (0.0, 0.01, 0.09):
        assert conjugated_residue_profile(k, m, dd(t)) == 0.0


def test_point_error_linearizes_with_monodromy():
    # hyperbolic fixed point of the standard map at x = 1/2: the closure
    # error of a displaced point is |(M - I) u| delta to first order
    kappa = 1.2
    m = StandardMap(kappa)
    z = Point2(dd(0.5), dd(0.0))
    assert float(point_error(z, m, 0, 1)) < 1e-30
    jac = m.jacobian(z)  # monodromy for q = 1
    delta = 1e-10
    u = (1.0, 0.0)
    vx = float(jac.a11) - 1.0
    vy = float(jac.a21)
    expected = np.hypot(vx, vy) * delta
    got = float(point_error(Point2(dd(0.5) + dd(delta), dd(0.0)), m, 0, 1))
    assert got == pytest.approx(expected, rel=1e-4)


def test_point_error_vs_cycle_average(converged_58):
    k, m = converged_58
    seeds = locate_seeds(k, m, samples=64)
    t = seeds.hyperbolic_theta
    e_point = float(point_error(k, m, 5, 8, theta=t))
    e_avg = avg_error_profile(k, m, t)
    # same smallness scale at a converged phase (within an order)
    assert e_point < 10 * 8 * e_avg + 1e-12


def test_synthetic_profile_extrema():
    q = 8
    samples = 64
    thetas = np.arange(samples) / (samples * q)
    r_vals = 1e-3 * np.sin(2 * np.pi * q * thetas)
    e_vals = np.ones(samples)
    pair = pick_adjacent_extrema(thetas, r_vals, e_vals)
    assert pair is not None
    i_max, i_min = pair
    assert r_vals[i_max] > 0 and r_vals[i_min] < 0
    assert abs(thetas[i_max] - 1 / (4 * q)) < 1 / (samples * q)
    assert abs(thetas[i_min] - 3 / (4 * q)) < 1 / (samples * q)


def test_flat_profile_returns_none():
    thetas = np.linspace(0, 1, 16, endpoint=False)
    r_vals = np.ones(16) * 0.5  # no sign change
    assert pick_adjacent_extrema(thetas, r_vals) is None


def test_locate_seeds_on_converged_curve(converged_58):
    k, m = converged_58
    seeds = locate_seeds(k, m, samples=64)
    assert seeds.elliptic_r > 0 > seeds.hyperbolic_r
    assert 0 <= float(seeds.elliptic_theta) < 1 / 8
    assert 0 <= float(seeds.hyperbolic_theta) < 1 / 8
    # candidate points carry small one-step defects
    e_h = avg_error_profile(k, m, seeds.hyperbolic_theta)
    assert e_h < 1e-3


def test_residue_profile_stays_bounded_near_critical():
    m = StandardMap(0.96)
    res = iterate_to_tolerance(FourierCurve.integrable(RotationNumber(5, 8)), m,
                               eps_tilde=1e-12, max_iter=12)
    prof = profile(res.curve, m, samples=64)
    assert np.max(np.abs(prof.r_tilde)) < 1e3
    assert np.all(np.isfinite(prof.r_tilde))
