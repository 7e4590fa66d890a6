import mpmath
import numpy as np
import pytest

from twistpo.dd import _COS_COEF, _SECTOR, _SIN_COEF, DoubleDouble
from twistpo.errors import UnsupportedMapError
from twistpo.maps import (
    Jacobian2,
    Point2,
    RationalHarmonicMap,
    StandardMap,
    jac_grid,
    make_map,
)

mpmath.mp.prec = 240


def dd(s):
    return DoubleDouble.from_str(s) if isinstance(s, str) else DoubleDouble(s)


def P(x, y):
    return Point2(dd(x), dd(y))


def test_integrable_shear():
    m = StandardMap(0.0)
    out = m(P(0.3, 0.625))
    assert abs(float(out.x - dd(0.3) - dd(0.625))) < 1e-31
    assert float(out.y) == 0.625


def test_zero_angle_is_fixed_direction():
    for kappa in (0.0, 0.5, 0.96, 2.2):
        m = StandardMap(kappa)
        out = m(P(0.0, 0.7))
        assert float(out.x) == 0.7 and float(out.y) == 0.7


def test_jacobian_at_origin():
    m = StandardMap(0.96)
    j = m.jacobian(P(0.0, 0.0))
    assert abs(float(j.a11 - (1 - dd(0.96)))) < 1e-31
    assert float(j.a12) == 1.0
    assert abs(float(j.a21 + dd(0.96))) < 1e-31
    assert float(j.a22) == 1.0


def test_jacobian_integrable_everywhere():
    m = StandardMap(0.0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        j = m.jacobian(P(rng.uniform(0, 1), rng.uniform(-2, 2)))
        assert (float(j.a11), float(j.a12), float(j.a21), float(j.a22)) == (1, 1, 0, 1)


def test_lift_equivariance_exact():
    m = StandardMap(0.96)
    z = P("0.31415926535897932384626433832795", 0.625)
    a = m(z)
    b = m(Point2(z.x + DoubleDouble(1.0), z.y))
    assert b.x == a.x + DoubleDouble(1.0)
    assert b.y == a.y


def _mp_map(kappa, alpha, beta, x, y, rational):
    two_pi = 2 * mpmath.pi
    if rational:
        f = mpmath.sin(two_pi * x + alpha) / (1 - beta * mpmath.cos(two_pi * x))
        root = mpmath.sqrt(1 - beta ** 2)
        mean = mpmath.sin(alpha) * (1 - root) / (beta * root) if beta != 0 else 0
        vp = kappa / two_pi * (f - mean)
    else:
        vp = kappa / two_pi * mpmath.sin(two_pi * x)
    ny = y - vp
    return x + ny, ny


def test_standard_eval_against_reference():
    m = StandardMap("0.96")
    rng = np.random.default_rng(42)
    for _ in range(25):
        x, y = rng.uniform(0, 1), rng.uniform(-1, 2)
        out = m(P(x, y))
        rx, ry = _mp_map(mpmath.mpf("0.96"), 0, 0, mpmath.mpf(x), mpmath.mpf(y), False)
        assert abs(float(mpmath.mpf(out.x.hi) + mpmath.mpf(out.x.lo) - rx)) < 1e-30
        assert abs(float(mpmath.mpf(out.y.hi) + mpmath.mpf(out.y.lo) - ry)) < 1e-30


def test_rhm_eval_against_reference():
    m = RationalHarmonicMap("1.7150", "3.0", "0.4")
    rng = np.random.default_rng(43)
    for _ in range(25):
        x, y = rng.uniform(0, 1), rng.uniform(-1, 2)
        out = m(P(x, y))
        rx, ry = _mp_map(mpmath.mpf("1.7150"), mpmath.mpf(3), mpmath.mpf("0.4"),
                         mpmath.mpf(x), mpmath.mpf(y), True)
        assert abs(float(mpmath.mpf(out.x.hi) + mpmath.mpf(out.x.lo) - rx)) < 1e-29
        assert abs(float(mpmath.mpf(out.y.hi) + mpmath.mpf(out.y.lo) - ry)) < 1e-29


def test_rhm_jacobian_against_finite_differences():
    m = RationalHarmonicMap(1.32, 2.5, 0.37)
    h = DoubleDouble(1e-10)
    rng = np.random.default_rng(44)
    for _ in range(10):
        x, y = dd(rng.uniform(0, 1)), dd(rng.uniform(-1, 1))
        j = m.jacobian(Point2(x, y))
        for col, (dx, dy) in enumerate([(h, DoubleDouble(0.0)), (DoubleDouble(0.0), h)]):
            zp = m(Point2(x + dx, y + dy))
            zm = m(Point2(x - dx, y - dy))
            fd_x = (zp.x - zm.x) / (h * 2)
            fd_y = (zp.y - zm.y) / (h * 2)
            a_x = j.a11 if col == 0 else j.a12
            a_y = j.a21 if col == 0 else j.a22
            assert abs(float(fd_x - a_x)) < 1e-18
            assert abs(float(fd_y - a_y)) < 1e-18


def test_chain_rule_against_second_iterate_differences():
    m = StandardMap(0.9)
    x, y = dd(0.21), dd(0.55)
    z = Point2(x, y)
    j1 = m.jacobian(z)
    j2 = m.jacobian(m(z))
    # product j2 @ j1
    prod = Jacobian2(
        j2.a11 * j1.a11 + j2.a12 * j1.a21,
        j2.a11 * j1.a12 + j2.a12 * j1.a22,
        j2.a21 * j1.a11 + j2.a22 * j1.a21,
        j2.a21 * j1.a12 + j2.a22 * j1.a22,
    )
    # 6th-order central stencil: truncation ~(2 pi)^7 h^6 and rounding
    # ~eps_dd/h balance a little under 1e-26 at h = 3e-6
    h = DoubleDouble(3e-6)
    weights = [(-3, -1), (-2, 9), (-1, -45), (1, 45), (2, -9), (3, 1)]
    for col in range(2):
        acc_x, acc_y = DoubleDouble(0.0), DoubleDouble(0.0)
        for step, w in weights:
            dx = h * step if col == 0 else DoubleDouble(0.0)
            dy = DoubleDouble(0.0) if col == 0 else h * step
            img = m(m(Point2(x + dx, y + dy)))
            acc_x = acc_x + img.x * w
            acc_y = acc_y + img.y * w
        fd_x = acc_x / (h * 60)
        fd_y = acc_y / (h * 60)
        a_x = prod.a11 if col == 0 else prod.a12
        a_y = prod.a21 if col == 0 else prod.a22
        assert abs(float(fd_x - a_x)) < 1e-26
        assert abs(float(fd_y - a_y)) < 1e-26


def test_symplecticity_random_points_both_maps():
    rng = np.random.default_rng(7)
    n = 10_000
    for make in (lambda k, a, b: StandardMap(k), RationalHarmonicMap):
        kappa = rng.uniform(0.0, 2.5)
        alpha = rng.uniform(0.0, 2 * np.pi)
        beta = rng.uniform(0.0, 0.9)
        m = make(kappa, alpha, beta)
        x = np.zeros((n, 2))
        x[:, 0] = rng.uniform(0, 1, n)
        out = np.zeros((n, 4, 2))
        jac_grid(m.map_id, m.params, x, out, _SECTOR, _SIN_COEF, _COS_COEF)
        for i in range(0, n, 997):
            a11 = DoubleDouble(out[i, 0, 0], out[i, 0, 1])
            a12 = DoubleDouble(out[i, 1, 0], out[i, 1, 1])
            a21 = DoubleDouble(out[i, 2, 0], out[i, 2, 1])
            a22 = DoubleDouble(out[i, 3, 0], out[i, 3, 1])
            det = a11 * a22 - a12 * a21
            assert abs(float(det - DoubleDouble(1.0))) < 1e-28
        # dense check in double precision over all points
        det_d = (out[:, 0, 0] + out[:, 0, 1]) * (out[:, 3, 0] + out[:, 3, 1]) - (
            out[:, 1, 0] + out[:, 1, 1]) * (out[:, 2, 0] + out[:, 2, 1])
        assert np.max(np.abs(det_d - 1.0)) < 1e-15


def test_rhm_reduces_to_standard():
    std = StandardMap(0.83)
    rhm = RationalHarmonicMap(0.83, 0.0, 0.0)
    rng = np.random.default_rng(11)
    for _ in range(20):
        z = P(rng.uniform(0, 1), rng.uniform(-1, 1))
        a, b = std(z), rhm(z)
        assert abs(float(a.x - b.x)) < 1e-30
        assert abs(float(a.y - b.y)) < 1e-30


def test_mean_potential_beta_zero():
    m = RationalHarmonicMap(1.0, 1.3, 0.0)
    assert float(m.mean_f) == 0.0
    # V'(x) reduces to the shifted harmonic
    x = dd(0.37)
    vp = m.potential_derivative(x)
    ref = mpmath.mpf(1) / (2 * mpmath.pi) * mpmath.sin(2 * mpmath.pi * mpmath.mpf(0.37) + mpmath.mpf(1.3))
    assert abs(float(mpmath.mpf(vp.hi) + mpmath.mpf(vp.lo) - ref)) < 1e-30


def test_mean_potential_alpha_zero_any_beta():
    m = RationalHarmonicMap(1.0, 0.0, 0.77)
    assert float(m.mean_f) == 0.0


def test_mean_potential_matches_quadrature():
    # periodic trapezoid converges spectrally; evaluate at extended precision
    alpha, beta = mpmath.mpf(3), mpmath.mpf("0.4")
    n = 4096
    total = mpmath.mpf(0)
    for j in range(n):
        x = mpmath.mpf(j) / n
        total += mpmath.sin(2 * mpmath.pi * x + alpha) / (1 - beta * mpmath.cos(2 * mpmath.pi * x))
    ref = total / n
    # decimal parameter strings: the reference uses decimal 0.4, not float 0.4
    m = RationalHarmonicMap("1.0", "3.0", "0.4")
    got = mpmath.mpf(m.mean_f.hi) + mpmath.mpf(m.mean_f.lo)
    assert abs(float(got - ref)) < 1e-25


def test_involution_composition_and_identity():
    m = StandardMap(0.96)
    i1, i2 = m.involutions()
    z = P(0.3, 0.7)
    z11 = i1(i1(z))
    assert abs(float(z11.x - z.x)) < 1e-30 and abs(float(z11.y - z.y)) < 1e-30
    rng = np.random.default_rng(3)
    for _ in range(10):
        w = P(rng.uniform(0, 1), rng.uniform(-1, 1))
        via_inv = i2(i1(w))
        direct = m(w)
        assert abs(float(via_inv.x - direct.x)) < 1e-30
        assert abs(float(via_inv.y - direct.y)) < 1e-30


def test_symmetry_lines_fixed_sets():
    m = StandardMap(0.96)
    i1, _ = m.involutions()
    for x0 in (0.0, 0.5):
        for y in (-0.3, 0.1, 0.9):
            z = P(x0, y)
            w = i1(z)
            # fixed modulo the angle identification x ~ -x
            assert abs(float((w.x + z.x).mod1())) < 1e-30 or abs(float((w.x + z.x).mod1()) - 1.0) < 1e-30
            assert abs(float(w.y - z.y)) < 1e-30


def test_rhm_has_no_involutions():
    m = RationalHarmonicMap(1.0, 3.0, 0.4)
    with pytest.raises(UnsupportedMapError):
        m.involutions()


def test_beta_out_of_range_rejected():
    with pytest.raises(ValueError):
        RationalHarmonicMap(1.0, 3.0, 1.0)
    with pytest.raises(ValueError):
        RationalHarmonicMap(1.0, 3.0, -1.2)


def test_make_map_dispatch():
    assert isinstance(make_map("standard", 0.5), StandardMap)
    assert isinstance(make_map("rhm", 0.5, 3.0, 0.4), RationalHarmonicMap)
    with pytest.raises(ValueError):
        make_map("nontwist", 0.5)
