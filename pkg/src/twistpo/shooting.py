"""Multiple-shooting Newton refinement of period-q orbits.

All q points are unknowns at once.  Points are stored with the angle wrapped
to [0,1) plus an integer winding per map step (summing to p), so every dd
coordinate stays O(1); the closure condition against P = (p, 0) is exact
integer bookkeeping.

The Newton system couples consecutive points through a block structure of
-I diagonal blocks, DT subdiagonal blocks, and one DT block in the upper
right corner.  A column sweep of scalar Gauss elimination with partial
pivoting (pivoting across the two block rows active in each column) keeps
the fill confined to the next diagonal block and the rightmost column.  The
factorisation overwrites the DT blocks and two fill arrays, using exactly
12q + 4 dd matrix slots (4q consumed DT / upper-triangular pivots, 4q next
-diagonal fill, 4q corner fill, 4 trailing block) plus 4q dd vector slots
(transformed right-hand side and solution), and runs in O(q).

Back substitution starts from the trailing 2x2 block, whose determinant is
4R up to sign; a nearly singular trailing block is how a (near-)parabolic
orbit announces itself.

The deliberately naive alternative -- accumulating DT^q and Newton-stepping
the single closure equation -- is included as ``plain_newton_2d`` for the
stability comparison; it is not used by any production path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from twistpo.dd import (
    _COS_COEF,
    _SECTOR,
    _SIN_COEF,
    DoubleDouble,
    dd_add,
    dd_add_d,
    dd_div,
    dd_mul,
    dd_sub,
)
from twistpo.errors import DivergenceError, SingularSystemError
from twistpo.maps import Point2, TwistMap, iterate_wrapped, map_eval, map_jacobian
from twistpo.tracking import _residue_kernel


class Stability(Enum):
    ELLIPTIC = "elliptic"
    HYPERBOLIC = "hyperbolic"
    PARABOLIC = "parabolic"


PARABOLIC_TOL = 1e-12


def classify(residue: float) -> Stability:
    if abs(residue) < PARABOLIC_TOL or abs(residue - 1.0) < PARABOLIC_TOL:
        return Stability.PARABOLIC
    if 0.0 < residue < 1.0:
        return Stability.ELLIPTIC
    return Stability.HYPERBOLIC


@dataclass
class ShootingState:
    """q orbit points, wrapped angles plus per-step integer windings."""

    p: int
    q: int
    x: np.ndarray      # (q, 2) dd, in [0, 1)
    y: np.ndarray      # (q, 2) dd
    wind: np.ndarray   # (q,) int64, sum == p

    def point(self, i: int = 0) -> Point2:
        return Point2(DoubleDouble(self.x[i, 0], self.x[i, 1]),
                      DoubleDouble(self.y[i, 0], self.y[i, 1]))

    def copy(self) -> "ShootingState":
        return ShootingState(self.p, self.q, self.x.copy(), self.y.copy(),
                             self.wind.copy())


@dataclass
class OrbitSolution:
    """Converged (or best-effort) periodic orbit."""

    state: ShootingState
    error: float
    residue: DoubleDouble
    monodromy_det: DoubleDouble
    stability: Stability
    iterations: int
    converged: bool
    failure: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def anchor_x(self) -> DoubleDouble:
        """Orbit angle closest to x = 0 (mod 1), reported as stored.

        Symmetric orbits have a reflected pair at equal distance; ties go to
        the smaller angle (the conventional representative).
        """
        xm = self.state.x[:, 0] + self.state.x[:, 1]
        dist = np.minimum(xm, 1.0 - xm)
        best = dist.min()
        candidates = np.where(dist <= best + 1e-20)[0]
        i = int(candidates[np.argmin(xm[candidates])])
        return DoubleDouble(self.state.x[i, 0], self.state.x[i, 1])

    def anchor_point(self) -> Point2:
        xm = self.state.x[:, 0] + self.state.x[:, 1]
        dist = np.minimum(xm, 1.0 - xm)
        best = dist.min()
        candidates = np.where(dist <= best + 1e-20)[0]
        i = int(candidates[np.argmin(xm[candidates])])
        return self.state.point(i)

    def points(self):
        for i in range(self.state.q):
            yield self.state.point(i)


def seed_orbit(z0: Point2, tmap: TwistMap, p: int, q: int) -> ShootingState:
    """Populate the state by iterating the map from a seed point."""
    x = np.empty((q, 2))
    y = np.empty((q, 2))
    wind = np.zeros(q, dtype=np.int64)
    xm = z0.x.mod1()
    xh, xl, yh, yl = xm.hi, xm.lo, z0.y.hi, z0.y.lo
    for i in range(q):
        x[i, 0], x[i, 1] = xh, xl
        y[i, 0], y[i, 1] = yh, yl
        nxh, nxl, nyh, nyl = map_eval(tmap.map_id, tmap.params, xh, xl, yh, yl,
                                      _SECTOR, _SIN_COEF, _COS_COEF)
        w = int(np.floor(nxh))
        xh, xl = dd_add_d(nxh, nxl, -float(w))
        if xh < 0.0:
            xh, xl = dd_add_d(xh, xl, 1.0)
            w -= 1
        elif xh >= 1.0:
            xh, xl = dd_add_d(xh, xl, -1.0)
            w += 1
        wind[i] = w
        yh, yl = nyh, nyl
    # force the rotation class: the closing step absorbs the residual winding
    wind[q - 1] = p - int(wind[:q - 1].sum())
    return ShootingState(p=p, q=q, x=x, y=y, wind=wind)


@njit(cache=True, nogil=True)
def _mismatches(map_id, par, x, y, wind, e, dt, sector, sin_c, cos_c):
    """e_{i+1} = T(z_i) - z_{i+1} - (w_i, 0) and DT(z_i), cyclically."""
    q = x.shape[0]
    for i in range(q):
        j = i + 1 if i + 1 < q else 0
        txh, txl, tyh, tyl = map_eval(map_id, par, x[i, 0], x[i, 1],
                                      y[i, 0], y[i, 1], sector, sin_c, cos_c)
        exh, exl = dd_sub(txh, txl, x[j, 0], x[j, 1])
        exh, exl = dd_add_d(exh, exl, -float(wind[i]))
        eyh, eyl = dd_sub(tyh, tyl, y[j, 0], y[j, 1])
        e[2 * j, 0], e[2 * j, 1] = exh, exl
        e[2 * j + 1, 0], e[2 * j + 1, 1] = eyh, eyl
        a11h, a11l, a12h, a12l, a21h, a21l, a22h, a22l = map_jacobian(
            map_id, par, x[i, 0], x[i, 1], sector, sin_c, cos_c)
        dt[i, 0, 0], dt[i, 0, 1] = a11h, a11l
        dt[i, 1, 0], dt[i, 1, 1] = a12h, a12l
        dt[i, 2, 0], dt[i, 2, 1] = a21h, a21l
        dt[i, 3, 0], dt[i, 3, 1] = a22h, a22l


@njit(cache=True, nogil=True, inline="always")
def _row_axpy(tile, src, dst, fh, fl):
    for c in range(7):
        if tile[src, c, 0] == 0.0 and tile[src, c, 1] == 0.0:
            continue
        th, tl = dd_mul(tile[src, c, 0], tile[src, c, 1], fh, fl)
        tile[dst, c, 0], tile[dst, c, 1] = dd_sub(
            tile[dst, c, 0], tile[dst, c, 1], th, tl)


@njit(cache=True, nogil=True, inline="always")
def _solve_trailing(trail, delta, offset, sing_tol):
    """2x2 solve with partial pivoting; returns |det|/row-norm product,
    negated when below the singularity threshold."""
    a00h, a00l = trail[0, 0], trail[0, 1]
    a01h, a01l = trail[1, 0], trail[1, 1]
    a10h, a10l = trail[2, 0], trail[2, 1]
    a11h, a11l = trail[3, 0], trail[3, 1]
    r0h, r0l = trail[4, 0], trail[4, 1]
    r1h, r1l = trail[5, 0], trail[5, 1]
    d1h, d1l = dd_mul(a00h, a00l, a11h, a11l)
    d2h, d2l = dd_mul(a01h, a01l, a10h, a10l)
    deth, detl = dd_sub(d1h, d1l, d2h, d2l)
    norm0 = max(abs(a00h), abs(a01h))
    norm1 = max(abs(a10h), abs(a11h))
    scale = norm0 * norm1
    if scale == 0.0:
        return -1.0
    rel = abs(deth + detl) / scale
    if rel < sing_tol:
        return -rel if rel > 0.0 else -1e-300
    if abs(a00h) >= abs(a10h):
        fh, fl = dd_div(a10h, a10l, a00h, a00l)
        b11h, b11l = dd_mul(fh, fl, a01h, a01l)
        b11h, b11l = dd_sub(a11h, a11l, b11h, b11l)
        s1h, s1l = dd_mul(fh, fl, r0h, r0l)
        s1h, s1l = dd_sub(r1h, r1l, s1h, s1l)
        y1h, y1l = dd_div(s1h, s1l, b11h, b11l)
        t1h, t1l = dd_mul(a01h, a01l, y1h, y1l)
        t1h, t1l = dd_sub(r0h, r0l, t1h, t1l)
        y0h, y0l = dd_div(t1h, t1l, a00h, a00l)
    else:
        fh, fl = dd_div(a00h, a00l, a10h, a10l)
        b01h, b01l = dd_mul(fh, fl, a11h, a11l)
        b01h, b01l = dd_sub(a01h, a01l, b01h, b01l)
        s0h, s0l = dd_mul(fh, fl, r1h, r1l)
        s0h, s0l = dd_sub(r0h, r0l, s0h, s0l)
        y1h, y1l = dd_div(s0h, s0l, b01h, b01l)
        t1h, t1l = dd_mul(a11h, a11l, y1h, y1l)
        t1h, t1l = dd_sub(r1h, r1l, t1h, t1l)
        y0h, y0l = dd_div(t1h, t1l, a10h, a10l)
    delta[offset, 0], delta[offset, 1] = y0h, y0l
    delta[offset + 1, 0], delta[offset + 1, 1] = y1h, y1l
    return rel


@njit(cache=True, nogil=True)
def _structured_solve_kernel(dt, e, delta, fill_b, fill_c, trail, sing_tol):
    """Column sweep + back substitution.  dt is overwritten with the pivot
    rows' upper-triangular part; e is overwritten with the transformed rhs.

    Returns the trailing relative determinant (negative on singularity).
    """
    q = dt.shape[0]
    if q == 1:
        trail[0, 0], trail[0, 1] = dd_add_d(dt[0, 0, 0], dt[0, 0, 1], -1.0)
        trail[1, 0], trail[1, 1] = dt[0, 1, 0], dt[0, 1, 1]
        trail[2, 0], trail[2, 1] = dt[0, 2, 0], dt[0, 2, 1]
        trail[3, 0], trail[3, 1] = dd_add_d(dt[0, 3, 0], dt[0, 3, 1], -1.0)
        trail[4, 0], trail[4, 1] = -e[0, 0], -e[0, 1]
        trail[5, 0], trail[5, 1] = -e[1, 0], -e[1, 1]
        return _solve_trailing(trail, delta, 0, sing_tol)
    tile = np.zeros((4, 7, 2))
    carry = np.zeros((2, 7, 2))
    # closure row block: -I on block 0, DT(z_{q-1}) on the corner, rhs -e_0
    carry[0, 0, 0] = -1.0
    carry[1, 1, 0] = -1.0
    carry[0, 4, 0], carry[0, 4, 1] = dt[q - 1, 0, 0], dt[q - 1, 0, 1]
    carry[0, 5, 0], carry[0, 5, 1] = dt[q - 1, 1, 0], dt[q - 1, 1, 1]
    carry[1, 4, 0], carry[1, 4, 1] = dt[q - 1, 2, 0], dt[q - 1, 2, 1]
    carry[1, 5, 0], carry[1, 5, 1] = dt[q - 1, 3, 0], dt[q - 1, 3, 1]
    carry[0, 6, 0], carry[0, 6, 1] = -e[0, 0], -e[0, 1]
    carry[1, 6, 0], carry[1, 6, 1] = -e[1, 0], -e[1, 1]
    for j in range(q - 1):
        last = j + 1 == q - 1
        tile[:, :, :] = 0.0
        tile[0] = carry[0]
        tile[1] = carry[1]
        tile[2, 0, 0], tile[2, 0, 1] = dt[j, 0, 0], dt[j, 0, 1]
        tile[2, 1, 0], tile[2, 1, 1] = dt[j, 1, 0], dt[j, 1, 1]
        tile[3, 0, 0], tile[3, 0, 1] = dt[j, 2, 0], dt[j, 2, 1]
        tile[3, 1, 0], tile[3, 1, 1] = dt[j, 3, 0], dt[j, 3, 1]
        if last:
            tile[2, 4, 0] = -1.0  # the next block *is* the corner column
            tile[3, 5, 0] = -1.0
        else:
            tile[2, 2, 0] = -1.0
            tile[3, 3, 0] = -1.0
        tile[2, 6, 0], tile[2, 6, 1] = -e[2 * (j + 1), 0], -e[2 * (j + 1), 1]
        tile[3, 6, 0], tile[3, 6, 1] = -e[2 * (j + 1) + 1, 0], -e[2 * (j + 1) + 1, 1]
        for col in range(2):
            piv = col
            best = abs(tile[col, col, 0])
            for r in range(col + 1, 4):
                v = abs(tile[r, col, 0])
                if v > best:
                    best = v
                    piv = r
            if best == 0.0:
                return -1.0
            if piv != col:
                for c in range(7):
                    for w in range(2):
                        tmp = tile[col, c, w]
                        tile[col, c, w] = tile[piv, c, w]
                        tile[piv, c, w] = tmp
            ph, pl = tile[col, col, 0], tile[col, col, 1]
            for r in range(col + 1, 4):
                if tile[r, col, 0] == 0.0 and tile[r, col, 1] == 0.0:
                    continue
                fh, fl = dd_div(tile[r, col, 0], tile[r, col, 1], ph, pl)
                _row_axpy(tile, col, r, fh, fl)
                tile[r, col, 0] = tile[r, col, 1] = 0.0
        # store the two pivot rows: triangular part over dt[j], fill in
        # fill_b (block j+1) and fill_c (corner); transformed rhs over e
        dt[j, 0, 0], dt[j, 0, 1] = tile[0, 0, 0], tile[0, 0, 1]
        dt[j, 1, 0], dt[j, 1, 1] = tile[0, 1, 0], tile[0, 1, 1]
        dt[j, 2, 0], dt[j, 2, 1] = tile[1, 1, 0], tile[1, 1, 1]
        dt[j, 3, 0], dt[j, 3, 1] = 0.0, 0.0
        for r in range(2):
            fill_b[j, 2 * r, 0], fill_b[j, 2 * r, 1] = tile[r, 2, 0], tile[r, 2, 1]
            fill_b[j, 2 * r + 1, 0], fill_b[j, 2 * r + 1, 1] = tile[r, 3, 0], tile[r, 3, 1]
            fill_c[j, 2 * r, 0], fill_c[j, 2 * r, 1] = tile[r, 4, 0], tile[r, 4, 1]
            fill_c[j, 2 * r + 1, 0], fill_c[j, 2 * r + 1, 1] = tile[r, 5, 0], tile[r, 5, 1]
            e[2 * j + r, 0], e[2 * j + r, 1] = tile[r, 6, 0], tile[r, 6, 1]
        for r in range(2):
            src = r + 2
            carry[r, 0, 0], carry[r, 0, 1] = tile[src, 2, 0], tile[src, 2, 1]
            carry[r, 1, 0], carry[r, 1, 1] = tile[src, 3, 0], tile[src, 3, 1]
            carry[r, 2, 0] = carry[r, 2, 1] = 0.0
            carry[r, 3, 0] = carry[r, 3, 1] = 0.0
            carry[r, 4, 0], carry[r, 4, 1] = tile[src, 4, 0], tile[src, 4, 1]
            carry[r, 5, 0], carry[r, 5, 1] = tile[src, 5, 0], tile[src, 5, 1]
            carry[r, 6, 0], carry[r, 6, 1] = tile[src, 6, 0], tile[src, 6, 1]
    trail[0, 0], trail[0, 1] = carry[0, 4, 0], carry[0, 4, 1]
    trail[1, 0], trail[1, 1] = carry[0, 5, 0], carry[0, 5, 1]
    trail[2, 0], trail[2, 1] = carry[1, 4, 0], carry[1, 4, 1]
    trail[3, 0], trail[3, 1] = carry[1, 5, 0], carry[1, 5, 1]
    trail[4, 0], trail[4, 1] = carry[0, 6, 0], carry[0, 6, 1]
    trail[5, 0], trail[5, 1] = carry[1, 6, 0], carry[1, 6, 1]
    rel_det = _solve_trailing(trail, delta, 2 * (q - 1), sing_tol)
    if rel_det < 0.0:
        return rel_det
    for j in range(q - 2, -1, -1):
        for r in (1, 0):
            rh, rl = e[2 * j + r, 0], e[2 * j + r, 1]
            for c in range(2):
                th, tl = dd_mul(fill_b[j, 2 * r + c, 0], fill_b[j, 2 * r + c, 1],
                                delta[2 * (j + 1) + c, 0], delta[2 * (j + 1) + c, 1])
                rh, rl = dd_sub(rh, rl, th, tl)
                th, tl = dd_mul(fill_c[j, 2 * r + c, 0], fill_c[j, 2 * r + c, 1],
                                delta[2 * (q - 1) + c, 0], delta[2 * (q - 1) + c, 1])
                rh, rl = dd_sub(rh, rl, th, tl)
            if r == 1:
                dh, dl = dd_div(rh, rl, dt[j, 2, 0], dt[j, 2, 1])
                delta[2 * j + 1, 0], delta[2 * j + 1, 1] = dh, dl
            else:
                th, tl = dd_mul(dt[j, 1, 0], dt[j, 1, 1],
                                delta[2 * j + 1, 0], delta[2 * j + 1, 1])
                rh, rl = dd_sub(rh, rl, th, tl)
                dh, dl = dd_div(rh, rl, dt[j, 0, 0], dt[j, 0, 1])
                delta[2 * j, 0], delta[2 * j, 1] = dh, dl
    return rel_det


def structured_solve(dt: np.ndarray, e: np.ndarray, sing_tol: float = 1e-20):
    """Solve the block-cyclic Newton system; dt and e are consumed.

    Returns (delta, trailing_rel_det, slots).  Raises SingularSystemError
    when the trailing block determinant is below ``sing_tol`` relatively.
    """
    q = dt.shape[0]
    delta = np.zeros((2 * q, 2))
    fill_b = np.zeros((q, 4, 2))
    fill_c = np.zeros((q, 4, 2))
    trail = np.zeros((6, 2))
    rel_det = _structured_solve_kernel(dt, e, delta, fill_b, fill_c, trail,
                                       sing_tol)
    slots = {
        # dd slots actually allocated for the factorisation
        "matrix_dd_slots": dt[..., 0].size + fill_b[..., 0].size
        + fill_c[..., 0].size + 4,
        "vector_dd_slots": e[..., 0].size + delta[..., 0].size,
    }
    if rel_det < 0.0:
        raise SingularSystemError(
            f"trailing 2x2 block nearly singular (rel det {abs(rel_det):.2e})")
    return delta, rel_det, slots


def closure_error(state: ShootingState, tmap: TwistMap) -> DoubleDouble:
    """E = || T^q(z_0) - z_0 - P || by literal iteration."""
    xh, xl, yh, yl, w = iterate_wrapped(
        tmap.map_id, tmap.params, state.x[0, 0], state.x[0, 1],
        state.y[0, 0], state.y[0, 1], state.q, _SECTOR, _SIN_COEF, _COS_COEF)
    if not (np.isfinite(xh) and np.isfinite(yh)):
        return DoubleDouble(float("inf"))
    dx = DoubleDouble(xh, xl) - DoubleDouble(state.x[0, 0], state.x[0, 1]) \
        + DoubleDouble(float(w - state.p))
    dy = DoubleDouble(yh, yl) - DoubleDouble(state.y[0, 0], state.y[0, 1])
    return (dx * dx + dy * dy).sqrt()


def newton_gauss_step(state: ShootingState, tmap: TwistMap,
                      delta_cap: float = 0.25, sing_tol: float = 1e-20):
    """One multiple-shooting Newton update (returns a new state).

    info carries the step norm, largest mismatch, the trailing-block
    relative determinant, and the dd slot accounting.
    """
    q = state.q
    e = np.empty((2 * q, 2))
    dt = np.empty((q, 4, 2))
    _mismatches(tmap.map_id, tmap.params, state.x, state.y, state.wind,
                e, dt, _SECTOR, _SIN_COEF, _COS_COEF)
    mismatch_max = float(np.max(np.abs(e[:, 0] + e[:, 1])))
    delta, rel_det, slots = structured_solve(dt, e, sing_tol)
    step_norm = float(np.max(np.abs(delta[:, 0] + delta[:, 1])))
    if not np.isfinite(step_norm) or step_norm > delta_cap:
        raise DivergenceError(
            f"Newton step {step_norm:.3e} exceeds the trust cap {delta_cap}")
    new = state.copy()
    _apply_delta(new.x, new.y, new.wind, delta)
    info = {"step_norm": step_norm, "mismatch_max": mismatch_max,
            "trailing_rel_det": rel_det, **slots}
    return new, info


@njit(cache=True, nogil=True)
def _apply_delta(x, y, wind, delta):
    q = x.shape[0]
    for i in range(q):
        xh, xl = dd_add(x[i, 0], x[i, 1], delta[2 * i, 0], delta[2 * i, 1])
        shift = np.floor(xh)
        if shift != 0.0:
            # x_i drops by `shift` cells: the incoming step gains it, the
            # outgoing step sheds it (sum of windings is preserved)
            xh, xl = dd_add_d(xh, xl, -shift)
            s = int(shift)
            wind[i - 1 if i > 0 else q - 1] += s
            wind[i] -= s
        x[i, 0], x[i, 1] = xh, xl
        y[i, 0], y[i, 1] = dd_add(y[i, 0], y[i, 1], delta[2 * i + 1, 0],
                                  delta[2 * i + 1, 1])


def orbit_residue(state: ShootingState, tmap: TwistMap):
    """Residue and monodromy-determinant diagnostic along the stored orbit."""
    out = np.empty(4)
    _residue_kernel(tmap.map_id, tmap.params, state.x, state.q, out,
                    _SECTOR, _SIN_COEF, _COS_COEF)
    return DoubleDouble(out[0], out[1]), DoubleDouble(out[2], out[3])


def refine(z0: Point2 | None, tmap: TwistMap, p: int, q: int,
           tol: float = 1e-28, max_iter: int = 50,
           delta_cap: float = 0.25,
           state: ShootingState | None = None) -> OrbitSolution:
    """Drive a seed to a period-q orbit; always returns the best iterate.

    An oversized Newton step is damped onto the trust radius rather than
    aborted (near criticality the ill-conditioned solve can overshoot on the
    first iteration even from a good warm start); only repeated failure to
    progress gives up.
    """
    st = state.copy() if state is not None else seed_orbit(z0, tmap, p, q)
    best = st
    best_err = float(closure_error(st, tmap))
    failure = None
    iters = 0
    damped_in_a_row = 0
    last_info: dict = {}
    for iters in range(1, max_iter + 1):
        q_ = st.q
        e = np.empty((2 * q_, 2))
        dt = np.empty((q_, 4, 2))
        _mismatches(tmap.map_id, tmap.params, st.x, st.y, st.wind,
                    e, dt, _SECTOR, _SIN_COEF, _COS_COEF)
        try:
            delta, rel_det, slots = structured_solve(dt, e)
        except SingularSystemError as exc:
            failure = f"SingularSystemError: {exc}"
            break
        step_norm = float(np.max(np.abs(delta[:, 0] + delta[:, 1])))
        if not np.isfinite(step_norm):
            failure = "DivergenceError: non-finite Newton step"
            break
        if step_norm > delta_cap:
            damped_in_a_row += 1
            if damped_in_a_row > 8:
                failure = (f"DivergenceError: step stayed above the trust "
                           f"cap ({step_norm:.3e})")
                break
            scale = delta_cap / step_norm
            delta[:, 0] *= scale
            delta[:, 1] *= scale
        else:
            damped_in_a_row = 0
        new = st.copy()
        _apply_delta(new.x, new.y, new.wind, delta)
        st = new
        last_info = {"step_norm": min(step_norm, delta_cap),
                     "mismatch_max": float(np.max(np.abs(e[:, 0] + e[:, 1]))),
                     "trailing_rel_det": rel_det, **slots}
        err = float(closure_error(st, tmap))
        if err < best_err or not np.isfinite(best_err):
            best, best_err = st, err
        if err < tol:
            break
        if step_norm < 1e-31:
            break  # stagnated at the arithmetic floor
    residue, mono_det = orbit_residue(best, tmap)
    return OrbitSolution(
        state=best,
        error=best_err,
        residue=residue,
        monodromy_det=mono_det,
        stability=classify(float(residue)),
        iterations=iters,
        converged=best_err < tol,
        failure=failure,
        diagnostics=last_info,
    )


def plain_newton_2d(z0: Point2, tmap: TwistMap, p: int, q: int,
                    tol: float = 1e-28, max_iter: int = 50):
    """Single-point Newton on the q-fold closure map (the unstable baseline).

    Forms DT^q by accumulation and solves (DT^q - I) d = -(T^q(z) - z - P).
    Contrast harness only; the intermediate product growth makes this
    unreliable at large periods.
    """
    x = z0.x.mod1()
    y = z0.y
    err = float("inf")
    for it in range(1, max_iter + 1):
        st = seed_orbit(Point2(x, y), tmap, p, q)
        err = float(closure_error(st, tmap))
        if not np.isfinite(err):
            return Point2(x, y), err, False, it
        if err < tol:
            return Point2(x, y), err, True, it
        m11, m12, m21, m22 = _monodromy_entries(st, tmap)
        gx, gy = _closure_vector(st, tmap)
        a00 = m11 - DoubleDouble(1.0)
        a11 = m22 - DoubleDouble(1.0)
        det = a00 * a11 - m12 * m21
        if float(det) == 0.0 or not np.isfinite(float(det)):
            return Point2(x, y), err, False, it
        dx = (m12 * gy - a11 * gx) / det
        dy = (m21 * gx - a00 * gy) / det
        if not (np.isfinite(float(dx)) and np.isfinite(float(dy))):
            return Point2(x, y), err, False, it
        if max(abs(float(dx)), abs(float(dy))) > 0.25:
            return Point2(x, y), err, False, it
        x = (x + dx).mod1()
        y = y + dy
    return Point2(x, y), err, False, max_iter


def _monodromy_entries(state: ShootingState, tmap: TwistMap):
    m11, m12 = DoubleDouble(1.0), DoubleDouble(0.0)
    m21, m22 = DoubleDouble(0.0), DoubleDouble(1.0)
    for i in range(state.q):
        jac = tmap.jacobian(state.point(i))
        n11 = jac.a11 * m11 + jac.a12 * m21
        n12 = jac.a11 * m12 + jac.a12 * m22
        n21 = jac.a21 * m11 + jac.a22 * m21
        n22 = jac.a21 * m12 + jac.a22 * m22
        m11, m12, m21, m22 = n11, n12, n21, n22
    return m11, m12, m21, m22


def _closure_vector(state: ShootingState, tmap: TwistMap):
    xh, xl, yh, yl, w = iterate_wrapped(
        tmap.map_id, tmap.params, state.x[0, 0], state.x[0, 1],
        state.y[0, 0], state.y[0, 1], state.q, _SECTOR, _SIN_COEF, _COS_COEF)
    gx = DoubleDouble(xh, xl) - DoubleDouble(state.x[0, 0], state.x[0, 1]) \
        + DoubleDouble(float(w - state.p))
    gy = DoubleDouble(yh, yl) - DoubleDouble(state.y[0, 0], state.y[0, 1])
    return gx, gy
