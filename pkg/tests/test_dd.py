import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from twistpo.dd import (
    DD_PI,
    DD_TWO_PI,
    DoubleDouble,
    sin_cos,
    sin_cos_turns,
    sincos_turns,
)

mpmath.mp.prec = 240


def mp_of(x: DoubleDouble) -> mpmath.mpf:
    return mpmath.mpf(x.hi) + mpmath.mpf(x.lo)


def rel_err(x: DoubleDouble, ref) -> float:
    ref = mpmath.mpf(ref)
    if ref == 0:
        return abs(float(mp_of(x)))
    return abs(float((mp_of(x) - ref) / ref))


def test_additive_inverse_is_exact():
    assert DoubleDouble(1.0) + DoubleDouble(-1.0) == DoubleDouble(0.0)


def test_division_round_trip():
    third = DoubleDouble(1.0) / DoubleDouble(3.0)
    back = third * DoubleDouble(3.0)
    assert rel_err(back, 1) < 1e-30


def test_sqrt_algebraic_identity():
    r = DoubleDouble(2.0).sqrt()
    resid = r * r - DoubleDouble(2.0)
    assert abs(float(resid)) < 1e-30


def test_pi_constants_match_reference():
    assert rel_err(DD_PI, mpmath.pi) < 1e-32
    assert rel_err(DD_TWO_PI, 2 * mpmath.pi) < 1e-32


@pytest.mark.parametrize("op", ["add", "sub", "mul", "div"])
def test_ops_against_reference(op):
    rng = np.random.default_rng(12345)
    for _ in range(300):
        scale_a = 10.0 ** rng.uniform(-10, 10)
        scale_b = 10.0 ** rng.uniform(-10, 10)
        a = DoubleDouble(rng.standard_normal() * scale_a,
                         rng.standard_normal() * scale_a * 1e-17)
        b = DoubleDouble(rng.standard_normal() * scale_b,
                         rng.standard_normal() * scale_b * 1e-17)
        if op == "add":
            got, ref = a + b, mp_of(a) + mp_of(b)
        elif op == "sub":
            got, ref = a - b, mp_of(a) - mp_of(b)
        elif op == "mul":
            got, ref = a * b, mp_of(a) * mp_of(b)
        else:
            got, ref = a / b, mp_of(a) / mp_of(b)
        if ref == 0:
            assert float(got) == 0.0
        else:
            assert rel_err(got, ref) < 4 * 2.0 ** -106


def test_add_then_subtract_recovers_operand():
    # (a + b) - b = a to within 2^-104 relative, across 20 orders of magnitude
    rng = np.random.default_rng(7)
    for _ in range(400):
        a = DoubleDouble(rng.standard_normal() * 10.0 ** rng.uniform(-10, 10))
        b = DoubleDouble(rng.standard_normal() * 10.0 ** rng.uniform(-10, 10))
        back = (a + b) - b
        err = abs(float(((back - a) / a)))
        assert err < 2.0 ** -104


def test_sqrt_against_reference():
    rng = np.random.default_rng(99)
    for _ in range(200):
        a = DoubleDouble(abs(rng.standard_normal()) * 10.0 ** rng.uniform(-8, 8))
        assert rel_err(a.sqrt(), mpmath.sqrt(mp_of(a))) < 4 * 2.0 ** -106


def test_sincos_trivial_points():
    s, c = sin_cos(DoubleDouble(0.0))
    assert float(s) == 0.0 and float(c) == 1.0
    half_pi = DD_PI * DoubleDouble(0.5)
    s, c = sin_cos(half_pi)
    assert abs(float(s) - 1.0) < 1e-30
    assert abs(float(c)) < 1e-30


def test_sincos_pythagorean():
    s, c = sin_cos(DoubleDouble(0.7))
    assert abs(float(s * s + c * c - DoubleDouble(1.0))) < 1e-29


def test_sincos_against_reference():
    rng = np.random.default_rng(2024)
    for _ in range(250):
        t = DoubleDouble(rng.uniform(-3, 3), rng.standard_normal() * 1e-18)
        s, c = sin_cos_turns(t)
        ref_s = mpmath.sin(2 * mpmath.pi * mp_of(t))
        ref_c = mpmath.cos(2 * mpmath.pi * mp_of(t))
        assert abs(float(mp_of(s) - ref_s)) < 1e-31
        assert abs(float(mp_of(c) - ref_c)) < 1e-31
        if abs(ref_s) > 0.1:
            assert rel_err(s, ref_s) < 1e-30
        if abs(ref_c) > 0.1:
            assert rel_err(c, ref_c) < 1e-30


def test_sincos_kernel_wrapper():
    sh, sl, ch, cl = sincos_turns(0.125)
    ref = mpmath.sqrt(mpmath.mpf(2)) / 2
    assert abs(float((mpmath.mpf(sh) + mpmath.mpf(sl)) - ref)) < 5e-32
    assert abs(float((mpmath.mpf(ch) + mpmath.mpf(cl)) - ref)) < 5e-32


def test_decimal_string_round_trip():
    s = "1.04262381263415710544e-01"
    x = DoubleDouble.from_str(s)
    ref = mpmath.mpf(s)
    assert abs(float(mp_of(x) - ref)) < 1e-34
    # 34 significant digits round-trip the pair exactly
    y = DoubleDouble.from_str(x.to_decimal_str())
    assert x == y


def test_from_fraction_exact():
    f = Fraction(355, 113)
    x = DoubleDouble.from_fraction(f)
    assert abs(float(mp_of(x) - mpmath.mpf(355) / 113)) < 1e-32


def test_mod1_and_floor():
    x = DoubleDouble.from_str("12345.678901234567890123456789")
    r = x.mod1()
    ref = mpmath.mpf("0.678901234567890123456789")
    assert abs(float(mp_of(r) - ref)) < 1e-27
    assert float(x.floor()) == 12345.0
    y = DoubleDouble(3.0, -1e-20)  # just below an integer
    assert float(y.floor()) == 2.0


def test_comparisons_and_ordering():
    a = DoubleDouble(1.0, 1e-20)
    b = DoubleDouble(1.0, 2e-20)
    assert a < b and b > a and a != b
    assert DoubleDouble(2.0) >= DoubleDouble(2.0)


def test_zero_division_raises():
    with pytest.raises(ZeroDivisionError):
        DoubleDouble(1.0) / DoubleDouble(0.0)


def test_sqrt_negative_raises():
    with pytest.raises(ValueError):
        DoubleDouble(-1.0).sqrt()
