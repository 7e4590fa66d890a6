"""Double-double ("dd") arithmetic: ~31-32 decimal digits from pairs of floats.

A value is carried as an unevaluated sum ``hi + lo`` with ``|lo| <= ulp(hi)/2``.
All primitives are built from error-free transformations (two_sum / two_prod
with Dekker splitting, since ``math.fma`` is unavailable on this interpreter)
and renormalise their result, so the relative error of +, -, *, /, sqrt stays
below a few units of 2**-106.

Two layers live here:

* numba-jitted scalar kernels (``dd_add`` .. ``dd_sincos_turns``) operating on
  raw ``(hi, lo)`` float pairs; these are what the grid/orbit kernels inline.
* the :class:`DoubleDouble` wrapper for driver-level code and I/O, with exact
  decimal parsing via :class:`fractions.Fraction` and exact decimal printing
  via :class:`decimal.Decimal`.

Trigonometry works in turns (``sincos_turns(t)`` returns sin/cos of ``2*pi*t``)
because the maps only ever need angles as fractions of a full cell; a radian
front end reduces by the two-word ``2*pi`` first.
"""

from __future__ import annotations

import math
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
from numba import njit

_SPLITTER = 134217729.0  # 2**27 + 1, Dekker split constant

# Two-float expansions of pi constants (third-order terms ~1e-33 are dropped;
# verified against a 240-bit reference in the test suite).
PI_HI, PI_LO = 3.141592653589793, 1.2246467991473532e-16
TWO_PI_HI, TWO_PI_LO = 6.283185307179586, 2.4492935982947064e-16
INV_TWO_PI_HI, INV_TWO_PI_LO = 0.15915494309189535, -9.839338337591243e-18

EPS_DD = 2.0 ** -104  # conservative one-op relative error bound


@njit(cache=True, nogil=True, inline="always")
def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True, nogil=True, inline="always")
def quick_two_sum(a, b):
    # requires |a| >= |b| or a == 0
    s = a + b
    return s, b - (s - a)


@njit(cache=True, nogil=True, inline="always")
def two_prod(a, b):
    p = a * b
    ca = _SPLITTER * a
    ahi = ca - (ca - a)
    alo = a - ahi
    cb = _SPLITTER * b
    bhi = cb - (cb - b)
    blo = b - bhi
    return p, ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo


@njit(cache=True, nogil=True, inline="always")
def dd_add(ah, al, bh, bl):
    sh, sl = two_sum(ah, bh)
    th, tl = two_sum(al, bl)
    sl += th
    sh, sl = quick_two_sum(sh, sl)
    sl += tl
    return quick_two_sum(sh, sl)


@njit(cache=True, nogil=True, inline="always")
def dd_sub(ah, al, bh, bl):
    return dd_add(ah, al, -bh, -bl)


@njit(cache=True, nogil=True, inline="always")
def dd_add_d(ah, al, b):
    sh, sl = two_sum(ah, b)
    sl += al
    return quick_two_sum(sh, sl)


@njit(cache=True, nogil=True, inline="always")
def dd_mul(ah, al, bh, bl):
    ph, pl = two_prod(ah, bh)
    pl += ah * bl + al * bh
    return quick_two_sum(ph, pl)


@njit(cache=True, nogil=True, inline="always")
def dd_mul_d(ah, al, b):
    ph, pl = two_prod(ah, b)
    pl += al * b
    return quick_two_sum(ph, pl)


@njit(cache=True, nogil=True, inline="always")
def dd_sqr(ah, al):
    ph, pl = two_prod(ah, ah)
    pl += 2.0 * ah * al
    return quick_two_sum(ph, pl)


@njit(cache=True, nogil=True, inline="always")
def dd_div(ah, al, bh, bl):
    q1 = ah / bh
    th, tl = dd_mul_d(bh, bl, q1)
    rh, rl = dd_sub(ah, al, th, tl)
    q2 = rh / bh
    th, tl = dd_mul_d(bh, bl, q2)
    rh, rl = dd_sub(rh, rl, th, tl)
    q3 = rh / bh
    qh, ql = quick_two_sum(q1, q2)
    return dd_add_d(qh, ql, q3)


@njit(cache=True, nogil=True, inline="always")
def dd_sqrt(ah, al):
    # Karp's trick: one double-precision rsqrt seed, one dd correction.
    if ah == 0.0 and al == 0.0:
        return 0.0, 0.0
    x = 1.0 / math.sqrt(ah)
    y = ah * x
    th, tl = dd_sqr(y, 0.0)
    rh, rl = dd_sub(ah, al, th, tl)
    return dd_add_d(y, 0.0, rh * (x * 0.5))


@njit(cache=True, nogil=True, inline="always")
def dd_neg(ah, al):
    return -ah, -al


@njit(cache=True, nogil=True, inline="always")
def dd_abs(ah, al):
    if ah < 0.0 or (ah == 0.0 and al < 0.0):
        return -ah, -al
    return ah, al


@njit(cache=True, nogil=True, inline="always")
def dd_lt(ah, al, bh, bl):
    return ah < bh or (ah == bh and al < bl)


@njit(cache=True, nogil=True, inline="always")
def dd_floor(ah, al):
    f = math.floor(ah)
    if f == ah:
        g = math.floor(al)
        return f + g, 0.0
    return f, 0.0


@njit(cache=True, nogil=True, inline="always")
def dd_mod1(ah, al):
    """Reduce onto [0, 1). Exact apart from the final renormalisation."""
    fh, _ = dd_floor(ah, al)
    rh, rl = dd_add_d(ah, al, -fh)
    if rh < 0.0:
        rh, rl = dd_add_d(rh, rl, 1.0)
    elif rh >= 1.0:
        rh, rl = dd_add_d(rh, rl, -1.0)
    return rh, rl


@njit(cache=True, nogil=True, inline="always")
def dd_hypot(ah, al, bh, bl):
    sh, sl = dd_sqr(ah, al)
    th, tl = dd_sqr(bh, bl)
    return dd_sqrt(*dd_add(sh, sl, th, tl))


# --- trigonometry ----------------------------------------------------------
#
# sincos of 2*pi*t: reduce t mod 1, split into one of 16 sectors of width
# 1/16 turn, Taylor-expand on the residual |a| <= pi/16, then rotate by the
# tabulated sector values.  Sector centres land exactly on the zeros of sin
# and cos, so no catastrophic cancellation occurs anywhere.

_N_SIN_TERMS = 11
_N_COS_TERMS = 12


def _taylor_tables():
    sin_c = np.empty((_N_SIN_TERMS, 2))
    cos_c = np.empty((_N_COS_TERMS, 2))
    for k in range(_N_SIN_TERMS):
        f = Fraction((-1) ** k, math.factorial(2 * k + 1))
        hi = float(f)
        sin_c[k] = (hi, float(f - Fraction(hi)))
    for k in range(_N_COS_TERMS):
        f = Fraction((-1) ** k, math.factorial(2 * k))
        hi = float(f)
        cos_c[k] = (hi, float(f - Fraction(hi)))
    return sin_c, cos_c


_SIN_COEF, _COS_COEF = _taylor_tables()


@njit(cache=True, nogil=True)
def _taylor_sincos(ah, al, sin_c, cos_c):
    # |a| <= pi/16 required
    x2h, x2l = dd_sqr(ah, al)
    sh, sl = sin_c[_N_SIN_TERMS - 1, 0], sin_c[_N_SIN_TERMS - 1, 1]
    for k in range(_N_SIN_TERMS - 2, -1, -1):
        sh, sl = dd_mul(sh, sl, x2h, x2l)
        sh, sl = dd_add(sh, sl, sin_c[k, 0], sin_c[k, 1])
    sh, sl = dd_mul(sh, sl, ah, al)
    ch, cl = cos_c[_N_COS_TERMS - 1, 0], cos_c[_N_COS_TERMS - 1, 1]
    for k in range(_N_COS_TERMS - 2, -1, -1):
        ch, cl = dd_mul(ch, cl, x2h, x2l)
        ch, cl = dd_add(ch, cl, cos_c[k, 0], cos_c[k, 1])
    return sh, sl, ch, cl


def _sector_table():
    """sin/cos of 2*pi*j/16 for j = 0..15, built from sqrt identities."""
    tab = np.zeros((16, 4))
    c4h, c4l = dd_sqrt(0.5, 0.0)  # cos(pi/4) = sqrt(1/2)
    # half-angle: cos(pi/8) = sqrt((1+c4)/2), sin(pi/8) = sqrt((1-c4)/2)
    oph, opl = dd_add(1.0, 0.0, c4h, c4l)
    c8h, c8l = dd_sqrt(oph * 0.5, opl * 0.5)
    omh, oml = dd_add(1.0, 0.0, -c4h, -c4l)
    s8h, s8l = dd_sqrt(omh * 0.5, oml * 0.5)
    quarter = [
        (0.0, 0.0, 1.0, 0.0),          # j=0:  sin 0,      cos 0
        (s8h, s8l, c8h, c8l),          # j=1:  pi/8
        (c4h, c4l, c4h, c4l),          # j=2:  pi/4
        (c8h, c8l, s8h, s8l),          # j=3:  3pi/8
        (1.0, 0.0, 0.0, 0.0),          # j=4:  pi/2
    ]
    for j in range(16):
        jq, r = divmod(j, 4)
        s, sl_, c, cl_ = quarter[r]
        if jq == 0:
            tab[j] = (s, sl_, c, cl_)
        elif jq == 1:  # angle = pi/2 + base -> sin = cos_b, cos = -sin_b
            base = quarter[r]
            tab[j] = (base[2], base[3], -base[0], -base[1])
        elif jq == 2:  # angle = pi + base
            base = quarter[r]
            tab[j] = (-base[0], -base[1], -base[2], -base[3])
        else:          # angle = 3pi/2 + base
            base = quarter[r]
            tab[j] = (-base[2], -base[3], base[0], base[1])
    return tab


_SECTOR = _sector_table()


@njit(cache=True, nogil=True)
def dd_sincos_turns(th, tl, sector, sin_c, cos_c):
    """sin and cos of 2*pi*(th+tl)."""
    rh, rl = dd_mod1(th, tl)
    j = int(math.floor(16.0 * rh + 0.5))
    ph, pl = dd_add_d(rh, rl, -j / 16.0)
    j &= 15
    ah, al = dd_mul(ph, pl, TWO_PI_HI, TWO_PI_LO)
    sh, sl, ch, cl = _taylor_sincos(ah, al, sin_c, cos_c)
    sjh, sjl, cjh, cjl = sector[j, 0], sector[j, 1], sector[j, 2], sector[j, 3]
    # sin(a + s) = sin a cos s + cos a sin s ; cos(a + s) = cos a cos s - sin a sin s
    t1h, t1l = dd_mul(sh, sl, cjh, cjl)
    t2h, t2l = dd_mul(ch, cl, sjh, sjl)
    outsh, outsl = dd_add(t1h, t1l, t2h, t2l)
    t3h, t3l = dd_mul(ch, cl, cjh, cjl)
    t4h, t4l = dd_mul(sh, sl, sjh, sjl)
    outch, outcl = dd_sub(t3h, t3l, t4h, t4l)
    return outsh, outsl, outch, outcl


@njit(cache=True, nogil=True)
def dd_sincos_radians(xh, xl, sector, sin_c, cos_c):
    th, tl = dd_mul(xh, xl, INV_TWO_PI_HI, INV_TWO_PI_LO)
    return dd_sincos_turns(th, tl, sector, sin_c, cos_c)


def sincos_turns(th: float, tl: float = 0.0):
    """Module-level convenience wrapper around the jitted kernel."""
    return dd_sincos_turns(th, tl, _SECTOR, _SIN_COEF, _COS_COEF)


# --- Python-facing scalar type ---------------------------------------------


class DoubleDouble:
    """Immutable extended-precision scalar (pair of floats, hi + lo).

    Mixed operations with int/float promote the other operand exactly.
    """

    __slots__ = ("hi", "lo")

    def __init__(self, hi: float = 0.0, lo: float = 0.0):
        h, l = quick_two_sum(float(hi), float(lo))
        object.__setattr__(self, "hi", h)
        object.__setattr__(self, "lo", l)

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("DoubleDouble is immutable")

    # construction -----------------------------------------------------------
    @classmethod
    def from_str(cls, s: str) -> "DoubleDouble":
        """Parse a decimal string exactly (round-to-nearest into the pair)."""
        frac = Fraction(Decimal(s))
        hi = float(frac)
        lo = float(frac - Fraction(hi))
        return cls(hi, lo)

    @classmethod
    def from_fraction(cls, frac: Fraction) -> "DoubleDouble":
        hi = float(frac)
        return cls(hi, float(frac - Fraction(hi)))

    def as_fraction(self) -> Fraction:
        return Fraction(self.hi) + Fraction(self.lo)

    # formatting --------------------------------------------------------------
    def to_decimal_str(self, digits: int = 34) -> str:
        """Exact binary-to-decimal conversion, rounded to ``digits`` places."""
        with localcontext() as ctx:
            ctx.prec = digits + 10
            d = Decimal(self.hi) + Decimal(self.lo)
            if d == 0:
                return "0.0E+0"
            return format(d, f".{digits - 1}E")

    def __repr__(self):
        return f"DoubleDouble({self.hi!r}, {self.lo!r})"

    def __str__(self):
        return self.to_decimal_str()

    def __float__(self):
        return self.hi + self.lo

    # arithmetic --------------------------------------------------------------
    @staticmethod
    def _coerce(other):
        if isinstance(other, DoubleDouble):
            return other.hi, other.lo
        if isinstance(other, (int, float)):
            f = float(other)
            if isinstance(other, int) and other != int(f):
                return DoubleDouble.from_fraction(Fraction(other))._pair()
            return f, 0.0
        return NotImplemented

    def _pair(self):
        return self.hi, self.lo

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return DoubleDouble(*dd_add(self.hi, self.lo, *o))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return DoubleDouble(*dd_sub(self.hi, self.lo, *o))

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return DoubleDouble(*dd_sub(*o, self.hi, self.lo))

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return DoubleDouble(*dd_mul(self.hi, self.lo, *o))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o[0] == 0.0 and o[1] == 0.0:
            raise ZeroDivisionError("DoubleDouble division by zero")
        return DoubleDouble(*dd_div(self.hi, self.lo, *o))

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if self.hi == 0.0 and self.lo == 0.0:
            raise ZeroDivisionError("DoubleDouble division by zero")
        return DoubleDouble(*dd_div(*o, self.hi, self.lo))

    def __neg__(self):
        return DoubleDouble(-self.hi, -self.lo)

    def __abs__(self):
        return DoubleDouble(*dd_abs(self.hi, self.lo))

    def sqrt(self) -> "DoubleDouble":
        if self.hi < 0.0:
            raise ValueError("sqrt of negative DoubleDouble")
        return DoubleDouble(*dd_sqrt(self.hi, self.lo))

    def floor(self) -> "DoubleDouble":
        return DoubleDouble(*dd_floor(self.hi, self.lo))

    def mod1(self) -> "DoubleDouble":
        return DoubleDouble(*dd_mod1(self.hi, self.lo))

    # comparisons -------------------------------------------------------------
    def __eq__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self.hi == o[0] and self.lo == o[1]

    def __lt__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return dd_lt(self.hi, self.lo, *o)

    def __le__(self, other):
        return self == other or self < other

    def __gt__(self, other):
        return not self <= other

    def __ge__(self, other):
        return not self < other

    def __hash__(self):
        return hash((self.hi, self.lo))

    def is_finite(self) -> bool:
        return math.isfinite(self.hi) and math.isfinite(self.lo)


DD_ZERO = DoubleDouble(0.0)
DD_ONE = DoubleDouble(1.0)
DD_PI = DoubleDouble(PI_HI, PI_LO)
DD_TWO_PI = DoubleDouble(TWO_PI_HI, TWO_PI_LO)


def sin_cos(x: DoubleDouble) -> tuple[DoubleDouble, DoubleDouble]:
    """sin(x), cos(x) for x in radians, full-width argument reduction."""
    if not x.is_finite():
        raise ValueError("sin_cos requires a finite argument")
    sh, sl, ch, cl = dd_sincos_radians(x.hi, x.lo, _SECTOR, _SIN_COEF, _COS_COEF)
    return DoubleDouble(sh, sl), DoubleDouble(ch, cl)


def sin_cos_turns(t: DoubleDouble) -> tuple[DoubleDouble, DoubleDouble]:
    """sin(2*pi*t), cos(2*pi*t); the natural form for cylinder angles."""
    sh, sl, ch, cl = dd_sincos_turns(t.hi, t.lo, _SECTOR, _SIN_COEF, _COS_COEF)
    return DoubleDouble(sh, sl), DoubleDouble(ch, cl)


# --- dd vectors as (n, 2) float arrays --------------------------------------
#
# Grid-sized dd data is carried as float64 arrays of shape (..., 2) with
# [..., 0] = hi and [..., 1] = lo; kernels index the last axis directly.


def dd_array(n: int) -> np.ndarray:
    return np.zeros((n, 2))


def dd_array_from(values) -> np.ndarray:
    """Build an (n, 2) dd array from DoubleDouble/float entries."""
    out = np.zeros((len(values), 2))
    for i, v in enumerate(values):
        if isinstance(v, DoubleDouble):
            out[i, 0], out[i, 1] = v.hi, v.lo
        else:
            out[i, 0] = float(v)
    return out


def dd_max_abs(arr: np.ndarray) -> float:
    """max |hi+lo| of an (n, 2) dd array, evaluated in double precision."""
    return float(np.max(np.abs(arr[..., 0] + arr[..., 1]))) if arr.size else 0.0


# vectorised error-free transforms (ufunc chains on hi/lo column arrays);
# plain ndarray '+' on the hi columns silently drops the rounding term and
# caps everything downstream at ~|value|*2^-53

def np_two_sum(a: np.ndarray, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def np_quick_two_sum(a: np.ndarray, b: np.ndarray):
    s = a + b
    return s, b - (s - a)


def np_add_dd(ah, al, bh, bl):
    """Elementwise dd addition on arrays; returns (hi, lo)."""
    sh, sl = np_two_sum(ah, bh)
    th, tl = np_two_sum(al, bl)
    sl = sl + th
    sh, sl = np_quick_two_sum(sh, sl)
    sl = sl + tl
    return np_quick_two_sum(sh, sl)


def add_pairwise_columns(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """dd addition of arrays laid out as (..., 2k) hi/lo column pairs."""
    out = np.empty_like(a)
    for c in range(0, a.shape[-1], 2):
        out[..., c], out[..., c + 1] = np_add_dd(
            a[..., c], a[..., c + 1], b[..., c], b[..., c + 1])
    return out
