"""Quasi-Newton iteration driving a Fourier curve onto a periodic orbit.

One step, given the current curve K with rotation p/q:

1. sample the conjugacy defect e(theta) = T(K(theta)) - K(theta + p/q) on the
   grid (the shift is spectral, never an index roll);
2. build the adapted frame M(theta) = [DK | J^{-1} DK N] with
   N = (DK^t DK)^{-1}; its determinant is identically one, so the frame
   inverse is free, and the local twist S(theta) couples the two components;
3. solve the two difference equations for W2 then W1 on the non-resonant
   subspace, choosing the free average of W2 so the W1 right-hand side has
   (numerically) zero mean;
4. update K <- K + M W, re-projected to n_star harmonics with the resonant
   gauge modes re-zeroed;
5. re-phase K so the q-point orbit grid sits where the defect is smallest.

The outer loop repeats until the smallest defect on the orbit grid drops
below the target, the step diverges, or the iteration budget runs out; the
best curve seen is always returned (a stalled curve is still a usable seed
for the shooting refinement).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numba import njit

from twistpo.curves import FourierCurve, solve_cohomology
from twistpo.dd import (
    _COS_COEF,
    _SECTOR,
    _SIN_COEF,
    DoubleDouble,
    add_pairwise_columns,
    dd_add,
    dd_div,
    dd_mul,
    dd_sub,
    np_two_sum,
)
from twistpo.errors import DegenerateFrameError, TwistViolationError
from twistpo.fft import _frac_err, field_to_modes, modes_to_field
from twistpo.maps import TwistMap, jac_grid, map_eval


@dataclass
class StepReport:
    """Diagnostics for one quasi-Newton step (errors in double precision)."""

    grid_max_before: float
    grid_mean_before: float
    orbit_min_before: float
    orbit_mean_before: float = float("nan")
    grid_max_after: float = float("nan")
    grid_mean_after: float = float("nan")
    orbit_min_after: float = float("nan")
    orbit_mean_after: float = float("nan")
    resonant_energy: float = 0.0
    rhs1_mean_after_injection: float = 0.0
    sigma: float = 0.0
    harmonics: int = 0


@dataclass
class MPMResult:
    curve: FourierCurve
    converged: bool
    history: list[StepReport] = field(default_factory=list)

    @property
    def final_orbit_error(self) -> float:
        return self.history[-1].orbit_min_after if self.history else float("nan")


# --- grid kernels -------------------------------------------------------------


@njit(cache=True, nogil=True)
def _grid_defect(map_id, par, px, py, pxs, pys, pq_h, pq_l, ex, ey,
                 sector, sin_c, cos_c):
    """e(theta_j) on the sampling grid; K vs spectrally shifted K."""
    n = px.shape[0]
    for j in range(n):
        th = j / n  # exact dyadic theta
        xh, xl = dd_add(th, 0.0, px[j, 0], px[j, 1])
        txh, txl, tyh, tyl = map_eval(map_id, par, xh, xl, py[j, 0], py[j, 1],
                                      sector, sin_c, cos_c)
        # subtract K_x(theta + p/q) = theta + p/q + pxs
        txh, txl = dd_add(txh, txl, -th, 0.0)
        txh, txl = dd_sub(txh, txl, pq_h, pq_l)
        txh, txl = dd_sub(txh, txl, pxs[j, 0], pxs[j, 1])
        ex[j, 0], ex[j, 1] = txh, txl
        ey[j, 0], ey[j, 1] = dd_sub(tyh, tyl, pys[j, 0], pys[j, 1])


@njit(cache=True, nogil=True)
def _frame_rhs(ex, ey, dkx, dky, dkxs, dkys, jac, rhs2, rhs1p, s0, n0, min_dk2):
    """Frame-projected right-hand sides and the local twist field.

    rhs2  = -[M^{-1}(theta+w) e]_2 = dky(theta+w) e_x - dkx(theta+w) e_y
    rhs1p = -[M^{-1}(theta+w) e]_1 = -N(theta+w) (DK(theta+w) . e)
    s0    = N(theta+w) DK(theta+w)^t DT(K(theta)) DK(theta) N(theta)
    """
    n = ex.shape[0]
    mind = 1e300
    for j in range(n):
        d2h, d2l = dd_mul(dkx[j, 0], dkx[j, 1], dkx[j, 0], dkx[j, 1])
        t2h, t2l = dd_mul(dky[j, 0], dky[j, 1], dky[j, 0], dky[j, 1])
        d2h, d2l = dd_add(d2h, d2l, t2h, t2l)
        if d2h < mind:
            mind = d2h
        n0h, n0l = dd_div(1.0, 0.0, d2h, d2l)
        n0[j, 0], n0[j, 1] = n0h, n0l
        s2h, s2l = dd_mul(dkxs[j, 0], dkxs[j, 1], dkxs[j, 0], dkxs[j, 1])
        u2h, u2l = dd_mul(dkys[j, 0], dkys[j, 1], dkys[j, 0], dkys[j, 1])
        s2h, s2l = dd_add(s2h, s2l, u2h, u2l)
        n0sh, n0sl = dd_div(1.0, 0.0, s2h, s2l)
        # rhs2: symplectic-normal projection of -e
        a1h, a1l = dd_mul(dkys[j, 0], dkys[j, 1], ex[j, 0], ex[j, 1])
        a2h, a2l = dd_mul(dkxs[j, 0], dkxs[j, 1], ey[j, 0], ey[j, 1])
        rhs2[j, 0], rhs2[j, 1] = dd_sub(a1h, a1l, a2h, a2l)
        # rhs1 partial: tangential projection of -e
        b1h, b1l = dd_mul(dkxs[j, 0], dkxs[j, 1], ex[j, 0], ex[j, 1])
        b2h, b2l = dd_mul(dkys[j, 0], dkys[j, 1], ey[j, 0], ey[j, 1])
        bh, bl = dd_add(b1h, b1l, b2h, b2l)
        bh, bl = dd_mul(bh, bl, n0sh, n0sl)
        rhs1p[j, 0], rhs1p[j, 1] = -bh, -bl
        # local twist field: project DT applied to the second frame column
        # J^{-1} DK N = (-dky, dkx) N onto the shifted tangent
        u_xh, u_xl = dd_mul(dky[j, 0], dky[j, 1], -n0h, -n0l)
        u_yh, u_yl = dd_mul(dkx[j, 0], dkx[j, 1], n0h, n0l)
        vxh, vxl = dd_mul(jac[j, 0, 0], jac[j, 0, 1], u_xh, u_xl)
        t_h, t_l = dd_mul(jac[j, 1, 0], jac[j, 1, 1], u_yh, u_yl)
        vxh, vxl = dd_add(vxh, vxl, t_h, t_l)
        vyh, vyl = dd_mul(jac[j, 2, 0], jac[j, 2, 1], u_xh, u_xl)
        t_h, t_l = dd_mul(jac[j, 3, 0], jac[j, 3, 1], u_yh, u_yl)
        vyh, vyl = dd_add(vyh, vyl, t_h, t_l)
        c1h, c1l = dd_mul(dkxs[j, 0], dkxs[j, 1], vxh, vxl)
        c2h, c2l = dd_mul(dkys[j, 0], dkys[j, 1], vyh, vyl)
        ch, cl = dd_add(c1h, c1l, c2h, c2l)
        ch, cl = dd_mul(ch, cl, n0sh, n0sl)
        s0[j, 0], s0[j, 1] = ch, cl
    min_dk2[0] = mind


@njit(cache=True, nogil=True)
def _dd_mean(f):
    n = f.shape[0]
    ah, al = 0.0, 0.0
    for j in range(n):
        ah, al = dd_add(ah, al, f[j, 0], f[j, 1])
    q1 = ah / n
    rem = ((ah - q1 * n) + al) / n  # n is a grid size: exact product
    return q1, rem


@njit(cache=True, nogil=True)
def _subtract_scaled(f, s, c_h, c_l, out):
    """out = f - c * s, elementwise dd."""
    for j in range(f.shape[0]):
        th, tl = dd_mul(s[j, 0], s[j, 1], c_h, c_l)
        out[j, 0], out[j, 1] = dd_sub(f[j, 0], f[j, 1], th, tl)


@njit(cache=True, nogil=True)
def _add_scalar(f, c_h, c_l, out):
    for j in range(f.shape[0]):
        out[j, 0], out[j, 1] = dd_add(f[j, 0], f[j, 1], c_h, c_l)


@njit(cache=True, nogil=True)
def _delta_fields(w1, w2, dkx, dky, n0, dx, dy):
    """Delta = M W with M = [[dkx, -dky N], [dky, dkx N]]."""
    n = w1.shape[0]
    for j in range(n):
        t1h, t1l = dd_mul(dkx[j, 0], dkx[j, 1], w1[j, 0], w1[j, 1])
        t2h, t2l = dd_mul(dky[j, 0], dky[j, 1], w2[j, 0], w2[j, 1])
        t2h, t2l = dd_mul(t2h, t2l, n0[j, 0], n0[j, 1])
        dx[j, 0], dx[j, 1] = dd_sub(t1h, t1l, t2h, t2l)
        t3h, t3l = dd_mul(dky[j, 0], dky[j, 1], w1[j, 0], w1[j, 1])
        t4h, t4l = dd_mul(dkx[j, 0], dkx[j, 1], w2[j, 0], w2[j, 1])
        t4h, t4l = dd_mul(t4h, t4l, n0[j, 0], n0[j, 1])
        dy[j, 0], dy[j, 1] = dd_add(t3h, t3l, t4h, t4l)


@njit(cache=True, nogil=True)
def _orbit_mismatch_kernel(map_id, par, vx, vy, p, q, sig_h, sig_l,
                           ex, ey, sector, sin_c, cos_c):
    """Defect at the orbit points theta_n = sigma + n p/q, orbit order.

    vx, vy hold periodic parts in positional order (theta = sigma + m/q);
    the lift bookkeeping is the exact integer carry of m -> m + p mod q.
    """
    m = 0
    for n_i in range(q):
        m_next = m + p
        carry = 0.0
        if m_next >= q:
            m_next -= q
            carry = 1.0
        fh = m / q
        fl = _frac_err(m, q)
        xh, xl = dd_add(fh, fl, sig_h, sig_l)
        xh, xl = dd_add(xh, xl, vx[m, 0], vx[m, 1])
        txh, txl, tyh, tyl = map_eval(map_id, par, xh, xl, vy[m, 0], vy[m, 1],
                                      sector, sin_c, cos_c)
        gh = m_next / q
        gl = _frac_err(m_next, q)
        nxh, nxl = dd_add(gh, gl, sig_h, sig_l)
        nxh, nxl = dd_add(nxh, nxl, vx[m_next, 0], vx[m_next, 1])
        nxh, nxl = dd_add(nxh, nxl, carry, 0.0)
        ex[n_i, 0], ex[n_i, 1] = dd_sub(txh, txl, nxh, nxl)
        ey[n_i, 0], ey[n_i, 1] = dd_sub(tyh, tyl, vy[m_next, 0], vy[m_next, 1])
        m = m_next


# --- module API -----------------------------------------------------------------


def invariance_error(curve: FourierCurve, tmap: TwistMap):
    """Grid samples of e(theta) = T(K(theta)) - K(theta + p/q)."""
    rot = curve.rotation
    px, py = curve.periodic_parts()
    pxs, pys = curve.periodic_parts(shift=(rot.p, rot.q))
    n = curve.n_grid
    ex = np.empty((n, 2))
    ey = np.empty((n, 2))
    pq = rot.as_dd()
    _grid_defect(tmap.map_id, tmap.params, px, py, pxs, pys, pq.hi, pq.lo,
                 ex, ey, _SECTOR, _SIN_COEF, _COS_COEF)
    return ex, ey


def defect_stats(ex: np.ndarray, ey: np.ndarray) -> tuple[float, float]:
    mags = np.hypot(ex[:, 0] + ex[:, 1], ey[:, 0] + ey[:, 1])
    return float(mags.max()), float(mags.mean())


def orbit_defect(curve: FourierCurve, tmap: TwistMap,
                 sigma: DoubleDouble | None = None):
    """Per-orbit-point defect magnitudes |e_n| (floats) plus dd components."""
    if sigma is None:
        sigma = DoubleDouble(0.0)
    q = curve.rotation.q
    vx, vy = curve.orbit_parts(sigma)
    ex = np.empty((q, 2))
    ey = np.empty((q, 2))
    _orbit_mismatch_kernel(tmap.map_id, tmap.params, vx, vy,
                           curve.rotation.p, q, sigma.hi, sigma.lo,
                           ex, ey, _SECTOR, _SIN_COEF, _COS_COEF)
    mags = np.hypot(ex[:, 0] + ex[:, 1], ey[:, 0] + ey[:, 1])
    return mags, ex, ey


@dataclass
class ReducibilityFrame:
    """Grid fields of the adapted frame at the current curve."""

    dkx: np.ndarray
    dky: np.ndarray
    n0: np.ndarray
    s0: np.ndarray
    mean_s0: DoubleDouble
    min_tangent_sq: float


def build_frame(curve: FourierCurve, tmap: TwistMap,
                ex: np.ndarray | None = None, ey: np.ndarray | None = None):
    """Assemble the frame fields and the projected RHS in one pass.

    Returns (frame, rhs2, rhs1_partial); rhs1_partial still lacks the
    -S * W2 contribution (added once W2 is known).
    """
    rot = curve.rotation
    if ex is None or ey is None:
        ex, ey = invariance_error(curve, tmap)
    n = curve.n_grid
    dpx, dpy = curve.derivative_parts()
    dpxs, dpys = curve.derivative_parts(shift=(rot.p, rot.q))
    # +1 from the winding term of K_x, via compensated addition: a plain
    # hi-column add would truncate the frame at double precision
    dkx = np.empty_like(dpx)
    dkx[:, 0], err = np_two_sum(dpx[:, 0], 1.0)
    dkx[:, 1] = err + dpx[:, 1]
    dkxs = np.empty_like(dpxs)
    dkxs[:, 0], err = np_two_sum(dpxs[:, 0], 1.0)
    dkxs[:, 1] = err + dpxs[:, 1]
    px, _ = curve.periodic_parts()
    kx = np.empty_like(px)
    kx[:, 0], err = np_two_sum(px[:, 0], np.arange(n) / n)
    kx[:, 1] = err + px[:, 1]
    jac = np.empty((n, 4, 2))
    jac_grid(tmap.map_id, tmap.params, kx, jac, _SECTOR, _SIN_COEF, _COS_COEF)
    rhs2 = np.empty((n, 2))
    rhs1p = np.empty((n, 2))
    s0 = np.empty((n, 2))
    n0 = np.empty((n, 2))
    min_dk2 = np.empty(1)
    _frame_rhs(ex, ey, dkx, dpy, dkxs, dpys, jac, rhs2, rhs1p, s0, n0, min_dk2)
    if min_dk2[0] < 1e-20:
        raise DegenerateFrameError(
            f"curve tangent degenerates: min |DK|^2 = {min_dk2[0]:.3e}")
    ms_h, ms_l = _dd_mean(s0)
    frame = ReducibilityFrame(dkx=dkx, dky=dpy, n0=n0, s0=s0,
                              mean_s0=DoubleDouble(ms_h, ms_l),
                              min_tangent_sq=min_dk2[0])
    return frame, rhs2, rhs1p


def newton_step(curve: FourierCurve, tmap: TwistMap,
                ex: np.ndarray | None = None,
                ey: np.ndarray | None = None) -> tuple[FourierCurve, StepReport]:
    """One frame-reduced Newton correction of the curve."""
    rot = curve.rotation
    if ex is None or ey is None:
        ex, ey = invariance_error(curve, tmap)
    gmax, gmean = defect_stats(ex, ey)
    omags, _, _ = orbit_defect(curve, tmap)
    report = StepReport(grid_max_before=gmax, grid_mean_before=gmean,
                        orbit_min_before=float(omags.min()),
                        orbit_mean_before=float(omags.mean()),
                        harmonics=curve.n_star)
    frame, rhs2, rhs1p = build_frame(curve, tmap, ex, ey)
    if abs(float(frame.mean_s0)) < 1e-10:
        raise TwistViolationError(
            f"average local twist {float(frame.mean_s0):.3e} too small")
    # W2: zero-average solution on the non-resonant subspace
    w2_modes, diag2 = solve_cohomology(field_to_modes(rhs2), rot)
    w2g = modes_to_field(w2_modes)
    # rhs1p <- rhs1p - S*W2deg0, then the free average of W2 zeroes its mean
    tmp = np.empty_like(rhs1p)
    _subtract_scaled_field(rhs1p, frame.s0, w2g, tmp)
    num_h, num_l = _dd_mean(tmp)
    avg = DoubleDouble(num_h, num_l) / frame.mean_s0
    rhs1 = np.empty_like(tmp)
    _subtract_scaled(tmp, frame.s0, avg.hi, avg.lo, rhs1)
    w2full = np.empty_like(w2g)
    _add_scalar(w2g, avg.hi, avg.lo, w2full)
    mean_rhs1 = _dd_mean(rhs1)
    report.rhs1_mean_after_injection = abs(mean_rhs1[0] + mean_rhs1[1])
    w1_modes, diag1 = solve_cohomology(field_to_modes(rhs1), rot)
    w1g = modes_to_field(w1_modes)
    report.resonant_energy = diag2["resonant_norm"] + diag1["resonant_norm"]
    # Delta = M W, added spectrally; the curve constructor re-projects
    dx = np.empty_like(w1g)
    dy = np.empty_like(w1g)
    _delta_fields(w1g, w2full, frame.dkx, frame.dky, frame.n0, dx, dy)
    mx = add_pairwise_columns(curve.modes_x, field_to_modes(dx))
    my = add_pairwise_columns(curve.modes_y, field_to_modes(dy))
    return curve.with_modes(mx, my), report


@njit(cache=True, nogil=True)
def _subtract_scaled_field(f, s, g, out):
    """out = f - s*g, elementwise dd (field times field)."""
    for j in range(f.shape[0]):
        th, tl = dd_mul(s[j, 0], s[j, 1], g[j, 0], g[j, 1])
        out[j, 0], out[j, 1] = dd_sub(f[j, 0], f[j, 1], th, tl)


def default_phase_samples(q: int) -> int:
    if q <= 512:
        return 64
    if q <= 4096:
        return 32
    return 16


def adjust_phase(curve: FourierCurve, tmap: TwistMap, samples: int | None = None,
                 refine_tol_turns: float | None = None):
    """Minimise the mean orbit-point defect over the phase sigma in [0, 1/q).

    Returns (sigma_star, rephased_curve, scan_values).
    """
    q = curve.rotation.q
    if samples is None:
        samples = default_phase_samples(q)

    def objective(s: DoubleDouble) -> float:
        mags, _, _ = orbit_defect(curve, tmap, s)
        return float(mags.mean())

    vals = np.empty(samples)
    sigmas = []
    for i in range(samples):
        s = DoubleDouble.from_fraction(Fraction(i, samples * q))
        sigmas.append(s)
        vals[i] = objective(s)
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= 0.0 or (hi - lo) <= 1e-9 * hi:
        return DoubleDouble(0.0), curve, vals  # flat objective: keep gauge
    i0 = int(np.argmin(vals))
    span = 1.0 / (samples * q)
    a = float(sigmas[i0]) - span
    b = float(sigmas[i0]) + span
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = objective(DoubleDouble(c)), objective(DoubleDouble(d))
    tol = refine_tol_turns if refine_tol_turns is not None else (
        1e-8 / q if q <= 512 else 1e-5 / q)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = objective(DoubleDouble(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = objective(DoubleDouble(d))
    sstar = DoubleDouble(0.5 * (a + b))
    if float(sstar) < 0.0:
        sstar = sstar + DoubleDouble.from_fraction(Fraction(1, q))
    return sstar, curve.rephase(sstar), vals


def iterate_to_tolerance(curve: FourierCurve, tmap: TwistMap,
                         eps_tilde: float = 1e-18, max_iter: int = 30,
                         phase_samples: int | None = None,
                         divergence_factor: float = 10.0) -> MPMResult:
    """Outer loop: newton_step then adjust_phase until the orbit grid locks.

    The stopping metric is the smallest orbit-grid defect after re-phasing;
    before any step it would be fooled by isolated zeros of the defect (the
    bare integrable seed has one wherever the kick vanishes), so the no-step
    exit requires the whole cycle to be quiet, not one lucky point.
    """
    history: list[StepReport] = []
    best_curve = curve
    mags0 = orbit_defect(curve, tmap)[0]
    best_err = float(mags0.mean())
    if best_err < eps_tilde:
        return MPMResult(curve=curve, converged=True, history=history)
    growth_count = 0
    prev_grid_max = None
    ex, ey = invariance_error(curve, tmap)
    for _ in range(max_iter):
        new_curve, report = newton_step(curve, tmap, ex, ey)
        sigma, new_curve, _ = adjust_phase(new_curve, tmap, samples=phase_samples)
        report.sigma = float(sigma)
        omags, _, _ = orbit_defect(new_curve, tmap)
        ex, ey = invariance_error(new_curve, tmap)
        report.grid_max_after, report.grid_mean_after = defect_stats(ex, ey)
        report.orbit_min_after = float(omags.min())
        report.orbit_mean_after = float(omags.mean())
        history.append(report)
        if float(omags.mean()) < best_err:
            best_err = float(omags.mean())
            best_curve = new_curve
        if report.orbit_min_after < eps_tilde:
            return MPMResult(curve=new_curve, converged=True, history=history)
        if report.grid_max_after > divergence_factor * report.grid_max_before:
            break
        if prev_grid_max is not None and report.grid_max_after > prev_grid_max:
            growth_count += 1
            if growth_count >= 2:
                break
        else:
            growth_count = 0
        prev_grid_max = report.grid_max_after
        curve = new_curve
    return MPMResult(curve=best_curve, converged=False, history=history)
