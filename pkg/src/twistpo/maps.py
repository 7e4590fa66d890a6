"""Area-preserving twist maps on the cylinder, in lift coordinates.

Both shipped maps have the kick form

    x' = x + y - V'(x),      y' = y - V'(x),

with x measured in turns (one cell = one full turn) so the angle enters only
through sin/cos of 2*pi*x and the lift equivariance x -> x+1 is exact.

* standard map: V'(x) = kappa/(2 pi) * sin(2 pi x)
* rational harmonic map (RHM):
      V'(x) = kappa/(2 pi) * (f(x) - mean f),
      f(x)  = sin(2 pi x + alpha) / (1 - beta cos(2 pi x)),   |beta| < 1,
  where the mean over one period has the closed form
      mean f = sin(alpha) (1 - sqrt(1-beta^2)) / (beta sqrt(1-beta^2))
  (zero for beta = 0); the quadrature cross-check lives in the test suite.

The Jacobian of either map is [[1 - V'', 1], [-V'', 1]] with determinant
exactly one, which is the symplecticity check used everywhere downstream.

The standard map additionally carries the classic reflection/shear involution
pair used by the symmetry-line cross-validation solver; the RHM deliberately
exposes none.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from twistpo.dd import (
    _COS_COEF,
    _SECTOR,
    _SIN_COEF,
    DoubleDouble,
    dd_add,
    dd_div,
    dd_mod1,
    dd_mul,
    dd_mul_d,
    dd_sincos_turns,
    dd_sincos_radians,
    dd_sqr,
    dd_sqrt,
    dd_sub,
    INV_TWO_PI_HI,
    INV_TWO_PI_LO,
)
from twistpo.errors import UnsupportedMapError

STANDARD = 0
RHM = 1

# packed parameter vector layout (dd pairs):
#   [0:2] kappa   [2:4] kappa/(2 pi)   [4:6] beta
#   [6:8] sin(alpha)   [8:10] cos(alpha)   [10:12] mean f
_PAR_LEN = 12


@dataclass(frozen=True)
class Point2:
    """Phase-space point on the lift: x unwrapped (turns), y momentum."""

    x: DoubleDouble
    y: DoubleDouble

    def wrapped(self) -> "Point2":
        return Point2(self.x.mod1(), self.y)


@dataclass(frozen=True)
class Jacobian2:
    a11: DoubleDouble
    a12: DoubleDouble
    a21: DoubleDouble
    a22: DoubleDouble

    def det(self) -> DoubleDouble:
        return self.a11 * self.a22 - self.a12 * self.a21

    def trace(self) -> DoubleDouble:
        return self.a11 + self.a22


@njit(cache=True, nogil=True, inline="always")
def _vprime_vsecond(map_id, par, xh, xl, sector, sin_c, cos_c, want_second):
    """V'(x) and V''(x) for the packed map; x in turns."""
    sh, sl, ch, cl = dd_sincos_turns(xh, xl, sector, sin_c, cos_c)
    k2ph, k2pl = par[2], par[3]
    kh, kl = par[0], par[1]
    if map_id == STANDARD:
        vph, vpl = dd_mul(k2ph, k2pl, sh, sl)
        if want_second:
            vsh, vsl = dd_mul(kh, kl, ch, cl)
        else:
            vsh, vsl = 0.0, 0.0
        return vph, vpl, vsh, vsl
    # RHM
    bh, bl = par[4], par[5]
    sah, sal = par[6], par[7]
    cah, cal = par[8], par[9]
    mh, ml = par[10], par[11]
    # sin/cos of (2 pi x + alpha) via addition formulas
    t1h, t1l = dd_mul(sh, sl, cah, cal)
    t2h, t2l = dd_mul(ch, cl, sah, sal)
    sa2h, sa2l = dd_add(t1h, t1l, t2h, t2l)
    t3h, t3l = dd_mul(ch, cl, cah, cal)
    t4h, t4l = dd_mul(sh, sl, sah, sal)
    ca2h, ca2l = dd_sub(t3h, t3l, t4h, t4l)
    # denominator 1 - beta cos(2 pi x)
    bch, bcl = dd_mul(bh, bl, ch, cl)
    dh, dl = dd_add(1.0, 0.0, -bch, -bcl)
    fh, fl = dd_div(sa2h, sa2l, dh, dl)
    gh, gl = dd_sub(fh, fl, mh, ml)
    vph, vpl = dd_mul(k2ph, k2pl, gh, gl)
    if want_second:
        # f' * (2 pi)^-1 ... assembled directly:
        # V'' = kappa (cos(2pix+alpha) d - sin(2pix+alpha) beta sin(2pix)) / d^2
        u1h, u1l = dd_mul(ca2h, ca2l, dh, dl)
        u2h, u2l = dd_mul(sa2h, sa2l, bh, bl)
        u2h, u2l = dd_mul(u2h, u2l, sh, sl)
        numh, numl = dd_sub(u1h, u1l, u2h, u2l)
        d2h, d2l = dd_sqr(dh, dl)
        rh, rl = dd_div(numh, numl, d2h, d2l)
        vsh, vsl = dd_mul(kh, kl, rh, rl)
    else:
        vsh, vsl = 0.0, 0.0
    return vph, vpl, vsh, vsl


@njit(cache=True, nogil=True, inline="always")
def map_eval(map_id, par, xh, xl, yh, yl, sector, sin_c, cos_c):
    """One application of the lift; returns (x', y') dd pairs."""
    vph, vpl, _, _ = _vprime_vsecond(map_id, par, xh, xl, sector, sin_c, cos_c, False)
    nyh, nyl = dd_sub(yh, yl, vph, vpl)
    nxh, nxl = dd_add(xh, xl, nyh, nyl)
    return nxh, nxl, nyh, nyl


@njit(cache=True, nogil=True, inline="always")
def map_eval_wrapped(map_id, par, xh, xl, yh, yl, sector, sin_c, cos_c):
    """Map step with x kept in [0,1); returns the shed integer winding too."""
    nxh, nxl, nyh, nyl = map_eval(map_id, par, xh, xl, yh, yl, sector, sin_c, cos_c)
    w = np.floor(nxh)
    rh, rl = dd_add(nxh, nxl, -w, 0.0)
    if rh < 0.0:
        rh, rl = dd_add(rh, rl, 1.0, 0.0)
        w -= 1.0
    elif rh >= 1.0:
        rh, rl = dd_add(rh, rl, -1.0, 0.0)
        w += 1.0
    return rh, rl, nyh, nyl, int(w)


@njit(cache=True, nogil=True, inline="always")
def map_jacobian(map_id, par, xh, xl, sector, sin_c, cos_c):
    """DT at x (y does not enter): returns (a11, a12, a21, a22) dd pairs."""
    _, _, vsh, vsl = _vprime_vsecond(map_id, par, xh, xl, sector, sin_c, cos_c, True)
    a11h, a11l = dd_add(1.0, 0.0, -vsh, -vsl)
    return (a11h, a11l, 1.0, 0.0, -vsh, -vsl, 1.0, 0.0)


@njit(cache=True, nogil=True)
def eval_grid(map_id, par, x, y, out_x, out_y, sector, sin_c, cos_c):
    """Vectorised lift evaluation; x, y, out_* are (n, 2) dd arrays."""
    for i in range(x.shape[0]):
        nxh, nxl, nyh, nyl = map_eval(
            map_id, par, x[i, 0], x[i, 1], y[i, 0], y[i, 1], sector, sin_c, cos_c
        )
        out_x[i, 0], out_x[i, 1] = nxh, nxl
        out_y[i, 0], out_y[i, 1] = nyh, nyl


@njit(cache=True, nogil=True)
def jac_grid(map_id, par, x, out, sector, sin_c, cos_c):
    """Vectorised Jacobians; out has shape (n, 4, 2) as [[a11,a12,a21,a22]]."""
    for i in range(x.shape[0]):
        a11h, a11l, a12h, a12l, a21h, a21l, a22h, a22l = map_jacobian(
            map_id, par, x[i, 0], x[i, 1], sector, sin_c, cos_c
        )
        out[i, 0, 0], out[i, 0, 1] = a11h, a11l
        out[i, 1, 0], out[i, 1, 1] = a12h, a12l
        out[i, 2, 0], out[i, 2, 1] = a21h, a21l
        out[i, 3, 0], out[i, 3, 1] = a22h, a22l


@njit(cache=True, nogil=True)
def iterate_wrapped(map_id, par, xh, xl, yh, yl, steps, sector, sin_c, cos_c):
    """q-fold iteration with wrapped x; returns final point + total winding."""
    w_total = 0
    for _ in range(steps):
        xh, xl, yh, yl, w = map_eval_wrapped(
            map_id, par, xh, xl, yh, yl, sector, sin_c, cos_c
        )
        w_total += w
    return xh, xl, yh, yl, w_total


def _mean_f_closed_form(alpha: DoubleDouble, beta: DoubleDouble) -> DoubleDouble:
    if float(beta) == 0.0:
        return DoubleDouble(0.0)
    sa, _ = _sincos_dd_radians(alpha)
    one = DoubleDouble(1.0)
    root = (one - beta * beta).sqrt()
    return sa * (one - root) / (beta * root)


def _sincos_dd_radians(x: DoubleDouble) -> tuple[DoubleDouble, DoubleDouble]:
    sh, sl, ch, cl = dd_sincos_radians(x.hi, x.lo, _SECTOR, _SIN_COEF, _COS_COEF)
    return DoubleDouble(sh, sl), DoubleDouble(ch, cl)


class TwistMap:
    """Immutable twist-map descriptor; concrete maps fill in the packed vector."""

    map_id: int
    name: str

    def __init__(self, kappa, alpha=0.0, beta=0.0):
        self.kappa = _as_dd(kappa)
        self.alpha = _as_dd(alpha)
        self.beta = _as_dd(beta)
        self._validate()
        sa, ca = _sincos_dd_radians(self.alpha)
        k2p = DoubleDouble(
            *dd_mul(self.kappa.hi, self.kappa.lo, INV_TWO_PI_HI, INV_TWO_PI_LO)
        )
        mean_f = self._mean_f()
        par = np.empty(_PAR_LEN)
        for i, v in enumerate([self.kappa, k2p, self.beta, sa, ca, mean_f]):
            par[2 * i], par[2 * i + 1] = v.hi, v.lo
        self.params = par
        self.params.setflags(write=False)

    def _validate(self):
        pass

    def _mean_f(self) -> DoubleDouble:
        return DoubleDouble(0.0)

    # point-wise API ----------------------------------------------------------
    def __call__(self, z: Point2) -> Point2:
        if not (z.x.is_finite() and z.y.is_finite()):
            raise ValueError("map evaluation requires finite coordinates")
        xh, xl, yh, yl = map_eval(
            self.map_id, self.params, z.x.hi, z.x.lo, z.y.hi, z.y.lo,
            _SECTOR, _SIN_COEF, _COS_COEF,
        )
        return Point2(DoubleDouble(xh, xl), DoubleDouble(yh, yl))

    def jacobian(self, z: Point2) -> Jacobian2:
        vals = map_jacobian(
            self.map_id, self.params, z.x.hi, z.x.lo, _SECTOR, _SIN_COEF, _COS_COEF
        )
        return Jacobian2(
            DoubleDouble(vals[0], vals[1]),
            DoubleDouble(vals[2], vals[3]),
            DoubleDouble(vals[4], vals[5]),
            DoubleDouble(vals[6], vals[7]),
        )

    def potential_derivative(self, x: DoubleDouble) -> DoubleDouble:
        vph, vpl, _, _ = _vprime_vsecond(
            self.map_id, self.params, x.hi, x.lo, _SECTOR, _SIN_COEF, _COS_COEF, False
        )
        return DoubleDouble(vph, vpl)

    def with_kappa(self, kappa) -> "TwistMap":
        """Same family, new perturbation strength (continuation steps)."""
        return type(self)(kappa, self.alpha, self.beta)

    def involutions(self):
        raise UnsupportedMapError(f"{self.name} has no usable involution pair")

    def __repr__(self):
        return (f"{type(self).__name__}(kappa={float(self.kappa)!r}, "
                f"alpha={float(self.alpha)!r}, beta={float(self.beta)!r})")


class StandardMap(TwistMap):
    map_id = STANDARD
    name = "standard"

    def __init__(self, kappa, alpha=0.0, beta=0.0):
        super().__init__(kappa, 0.0, 0.0)

    def involutions(self):
        """The reflection/shear pair whose composition is the map."""
        k2p = DoubleDouble(self.params[2], self.params[3])

        def i1(z: Point2) -> Point2:
            sh, sl, _, _ = dd_sincos_turns(
                z.x.hi, z.x.lo, _SECTOR, _SIN_COEF, _COS_COEF
            )
            return Point2(-z.x, z.y - k2p * DoubleDouble(sh, sl))

        def i2(z: Point2) -> Point2:
            return Point2(z.y - z.x, z.y)

        return i1, i2


class RationalHarmonicMap(TwistMap):
    map_id = RHM
    name = "rhm"

    def _validate(self):
        if abs(float(self.beta)) >= 1.0:
            raise ValueError("rational harmonic map requires |beta| < 1")

    def _mean_f(self) -> DoubleDouble:
        return _mean_f_closed_form(self.alpha, self.beta)

    @property
    def mean_f(self) -> DoubleDouble:
        return DoubleDouble(self.params[10], self.params[11])


def _as_dd(v) -> DoubleDouble:
    if isinstance(v, DoubleDouble):
        return v
    if isinstance(v, str):
        return DoubleDouble.from_str(v)
    return DoubleDouble(float(v))


def make_map(name: str, kappa, alpha=0.0, beta=0.0) -> TwistMap:
    if name == "standard":
        return StandardMap(kappa)
    if name == "rhm":
        return RationalHarmonicMap(kappa, alpha, beta)
    raise ValueError(f"unknown map {name!r} (expected 'standard' or 'rhm')")
