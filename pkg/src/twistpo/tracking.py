"""Locating periodic points on a converged curve.

Two continuous indicators over the phase theta:

* the cycle-averaged defect
      Etilde(theta) = (1/q) sum_n |T(K(theta + n p/q)) - K(theta + (n+1) p/q)|
  (well behaved everywhere, used for diagnostics and tie-breaking), and
* the conjugated residue
      Rtilde(theta) = 1/4 [2 - Tr( DT(K(theta+(q-1)p/q)) ... DT(K(theta)) )]
  whose extrema flag the elliptic (positive) and hyperbolic (negative)
  periodic points.  The product is accumulated pointwise along the curve, so
  it stays bounded where the literal q-fold iteration of the tangent map
  would overflow.

Both are (1/q)-periodic up to the curve's truncation error, so the search
lives on the fundamental interval [0, 1/q).  ``locate_seeds`` picks one
adjacent max/min pair of Rtilde, polishes each extremum, and hands the curve
points there to the shooting refiner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from twistpo.curves import FourierCurve
from twistpo.dd import (
    _COS_COEF,
    _SECTOR,
    _SIN_COEF,
    DoubleDouble,
    dd_add,
    dd_mul,
    dd_sub,
)
from twistpo.errors import FlatProfileError
from twistpo.fft import _frac_err
from twistpo.maps import Point2, TwistMap, iterate_wrapped, map_jacobian
from twistpo.parameterization import orbit_defect

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def avg_error_profile(curve: FourierCurve, tmap: TwistMap, theta: DoubleDouble) -> float:
    """Cycle-averaged defect at one phase."""
    mags, _, _ = orbit_defect(curve, tmap, theta)
    return float(mags.mean())


def point_error(curve_or_point, tmap: TwistMap, p: int, q: int,
                theta: DoubleDouble | None = None) -> DoubleDouble:
    """Closure error of the literal q-fold iteration from one point.

    Accepts either a curve (with ``theta``) or a phase-space point.  Returns
    +inf when the iteration overflows (strong hyperbolicity), which is the
    reason the cycle-averaged profile exists.
    """
    if isinstance(curve_or_point, FourierCurve):
        z = curve_or_point.evaluate(theta)
    else:
        z = curve_or_point
    x0 = z.x.mod1()
    lift0 = z.x - x0
    xh, xl, yh, yl, w = iterate_wrapped(
        tmap.map_id, tmap.params, x0.hi, x0.lo, z.y.hi, z.y.lo, q,
        _SECTOR, _SIN_COEF, _COS_COEF,
    )
    if not (np.isfinite(xh) and np.isfinite(yh)):
        return DoubleDouble(float("inf"))
    dx = DoubleDouble(xh, xl) + DoubleDouble(float(w - p)) - x0
    dy = DoubleDouble(yh, yl) - z.y
    return (dx * dx + dy * dy).sqrt()


@njit(cache=True, nogil=True)
def _residue_kernel(map_id, par, xs, q, out, sector, sin_c, cos_c):
    """1/4 [2 - trace of the ordered Jacobian product along given angles]."""
    m11h, m11l = 1.0, 0.0
    m12h, m12l = 0.0, 0.0
    m21h, m21l = 0.0, 0.0
    m22h, m22l = 1.0, 0.0
    for n in range(q):
        a11h, a11l, a12h, a12l, a21h, a21l, a22h, a22l = map_jacobian(
            map_id, par, xs[n, 0], xs[n, 1], sector, sin_c, cos_c)
        # M <- DT_n @ M
        t1h, t1l = dd_mul(a11h, a11l, m11h, m11l)
        t2h, t2l = dd_mul(a12h, a12l, m21h, m21l)
        n11h, n11l = dd_add(t1h, t1l, t2h, t2l)
        t1h, t1l = dd_mul(a11h, a11l, m12h, m12l)
        t2h, t2l = dd_mul(a12h, a12l, m22h, m22l)
        n12h, n12l = dd_add(t1h, t1l, t2h, t2l)
        t1h, t1l = dd_mul(a21h, a21l, m11h, m11l)
        t2h, t2l = dd_mul(a22h, a22l, m21h, m21l)
        n21h, n21l = dd_add(t1h, t1l, t2h, t2l)
        t1h, t1l = dd_mul(a21h, a21l, m12h, m12l)
        t2h, t2l = dd_mul(a22h, a22l, m22h, m22l)
        n22h, n22l = dd_add(t1h, t1l, t2h, t2l)
        m11h, m11l, m12h, m12l = n11h, n11l, n12h, n12l
        m21h, m21l, m22h, m22l = n21h, n21l, n22h, n22l
    trh, trl = dd_add(m11h, m11l, m22h, m22l)
    rh, rl = dd_sub(2.0, 0.0, trh, trl)
    out[0], out[1] = 0.25 * rh, 0.25 * rl
    # determinant diagnostic
    d1h, d1l = dd_mul(m11h, m11l, m22h, m22l)
    d2h, d2l = dd_mul(m12h, m12l, m21h, m21l)
    out[2], out[3] = dd_sub(d1h, d1l, d2h, d2l)


def conjugated_residue_profile(curve: FourierCurve, tmap: TwistMap,
                               theta: DoubleDouble) -> float:
    """Residue of the orbit-ordered Jacobian product along the curve."""
    rot = curve.rotation
    q = rot.q
    vx, _ = curve.orbit_parts(theta)
    # angles in orbit order: x_n = frac((n p) mod q / q + theta) + periodic part
    xs = np.empty((q, 2))
    m = 0
    for n in range(q):
        fh = m / q
        fl = _frac_err(m, q)
        xh, xl = dd_add(fh, fl, theta.hi, theta.lo)
        xh, xl = dd_add(xh, xl, vx[m, 0], vx[m, 1])
        xs[n, 0], xs[n, 1] = xh, xl
        m += rot.p
        if m >= q:
            m -= q
    out = np.empty(4)
    _residue_kernel(tmap.map_id, tmap.params, xs, q, out,
                    _SECTOR, _SIN_COEF, _COS_COEF)
    return float(out[0] + out[1])


@dataclass
class TrackingProfile:
    """Sampled indicators on the fundamental interval [0, 1/q)."""

    q: int
    thetas: np.ndarray          # float phases
    e_tilde: np.ndarray
    r_tilde: np.ndarray
    extrema: list = field(default_factory=list)  # (theta, kind, r_value)


def profile(curve: FourierCurve, tmap: TwistMap, samples: int = 64) -> TrackingProfile:
    from fractions import Fraction

    q = curve.rotation.q
    thetas = np.empty(samples)
    e_vals = np.empty(samples)
    r_vals = np.empty(samples)
    for i in range(samples):
        t = DoubleDouble.from_fraction(Fraction(i, samples * q))
        thetas[i] = float(t)
        e_vals[i] = avg_error_profile(curve, tmap, t)
        r_vals[i] = conjugated_residue_profile(curve, tmap, t)
    return TrackingProfile(q=q, thetas=thetas, e_tilde=e_vals, r_tilde=r_vals)


def pick_adjacent_extrema(thetas: np.ndarray, r_vals: np.ndarray,
                          e_vals: np.ndarray | None = None):
    """One adjacent (max, min) index pair of a cyclically sampled profile.

    Candidates need a genuine sign change (max above zero, min below); among
    several adjacent pairs the one with the smallest combined average error
    wins.  Returns (i_max, i_min) or None.
    """
    n = len(r_vals)
    maxima = [i for i in range(n)
              if r_vals[i] > 0
              and r_vals[i] >= r_vals[(i - 1) % n] and r_vals[i] >= r_vals[(i + 1) % n]]
    minima = [i for i in range(n)
              if r_vals[i] < 0
              and r_vals[i] <= r_vals[(i - 1) % n] and r_vals[i] <= r_vals[(i + 1) % n]]
    if not maxima or not minima:
        return None
    extrema = sorted([(i, +1) for i in maxima] + [(i, -1) for i in minima])
    pairs = []
    for a in range(len(extrema)):
        i, kind_i = extrema[a]
        j, kind_j = extrema[(a + 1) % len(extrema)]
        if kind_i != kind_j:
            pairs.append((i, j) if kind_i > 0 else (j, i))
    if not pairs:
        return None
    if e_vals is None:
        return pairs[0]
    return min(pairs, key=lambda ij: e_vals[ij[0]] + e_vals[ij[1]])


def _refine_extremum(fun, a, b, c, maximize: bool, tol: float, max_iter: int = 60):
    """Golden-section polish of a bracketed extremum until f stagnates."""
    sign = -1.0 if maximize else 1.0
    lo, hi = a, c
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = sign * fun(x1), sign * fun(x2)
    best = min(f1, f2)
    for _ in range(max_iter):
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = sign * fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = sign * fun(x2)
        new_best = min(f1, f2)
        if abs(best - new_best) <= tol * max(abs(best), abs(new_best), 1e-300) \
                and (hi - lo) < 0.01 * (c - a):
            best = new_best
            break
        best = new_best
    x = x1 if f1 < f2 else x2
    return x, sign * (f1 if f1 < f2 else f2)


@dataclass
class SeedPair:
    """Candidate periodic points from the residue-profile extrema."""

    elliptic_theta: DoubleDouble
    hyperbolic_theta: DoubleDouble
    elliptic_point: Point2
    hyperbolic_point: Point2
    elliptic_r: float
    hyperbolic_r: float
    profile: TrackingProfile


def locate_error_minima(curve: FourierCurve, tmap: TwistMap,
                        samples: int = 64, max_pairs: int = 2):
    """Polished local minima of the cycle-error profile, deepest first.

    Near the integrable regime the error minima track the periodic points
    better than the residue extrema do; the shooting stage picks whichever
    seed survives refinement best.
    """
    prof = profile(curve, tmap, samples)
    n = len(prof.thetas)
    q = curve.rotation.q
    span = 1.0 / (n * q)
    minima = [i for i in range(n)
              if prof.e_tilde[i] <= prof.e_tilde[(i - 1) % n]
              and prof.e_tilde[i] <= prof.e_tilde[(i + 1) % n]]
    minima.sort(key=lambda i: prof.e_tilde[i])

    def e_of(t: float) -> float:
        return avg_error_profile(curve, tmap, DoubleDouble(t % (1.0 / q)))

    out = []
    for i in minima[:max_pairs]:
        t0 = prof.thetas[i]
        t_ref, _ = _refine_extremum(e_of, t0 - span, t0, t0 + span,
                                    maximize=False, tol=1e-14)
        t_ref = t_ref % (1.0 / q)
        out.append((DoubleDouble(t_ref), curve.evaluate(DoubleDouble(t_ref))))
    return out


def locate_seeds(curve: FourierCurve, tmap: TwistMap, samples: int = 64,
                 stagnation_tol: float = 1e-12) -> SeedPair:
    """Adjacent residue-profile extrema, polished, as shooting seeds."""
    prof = profile(curve, tmap, samples)
    pair = pick_adjacent_extrema(prof.thetas, prof.r_tilde, prof.e_tilde)
    if pair is None:
        prof = profile(curve, tmap, 2 * samples)
        pair = pick_adjacent_extrema(prof.thetas, prof.r_tilde, prof.e_tilde)
        if pair is None:
            raise FlatProfileError(
                "no sign-changing residue extrema on the fundamental interval")
    q = curve.rotation.q
    span = 1.0 / (len(prof.thetas) * q)

    def r_of(t: float) -> float:
        return conjugated_residue_profile(curve, tmap, DoubleDouble(t))

    results = []
    for idx, maximize in ((pair[0], True), (pair[1], False)):
        t0 = prof.thetas[idx]
        t_ref, r_ref = _refine_extremum(r_of, t0 - span, t0, t0 + span,
                                        maximize, stagnation_tol)
        t_ref = t_ref % (1.0 / q)
        results.append((DoubleDouble(t_ref), r_ref))
        prof.extrema.append((t_ref, "max" if maximize else "min", r_ref))
    (t_ell, r_ell), (t_hyp, r_hyp) = results
    return SeedPair(
        elliptic_theta=t_ell,
        hyperbolic_theta=t_hyp,
        elliptic_point=curve.evaluate(t_ell),
        hyperbolic_point=curve.evaluate(t_hyp),
        elliptic_r=r_ell,
        hyperbolic_r=r_hyp,
        profile=prof,
    )
