"""Truncated Fourier curves K: S^1 -> S^1 x R and the cohomology solver.

A curve is stored as the complex spectra of its *periodic parts*:

    K_x(theta) = theta + sum_k cx_k e^{2 pi i k theta}
    K_y(theta) =         sum_k cy_k e^{2 pi i k theta}

so the unit winding of the angle component is structural, never numerical.
Spectra live on a power-of-two grid of size >= 2*(n_star + 1) and are kept
Hermitian (the curve is real) with every coefficient beyond ``n_star`` zero.

A curve tagged ``resonance_free`` additionally has all modes with frequency
k = m q (m != 0) zeroed; those modes are invisible on the period-q orbit grid
(they shift all orbit points in unison), so zeroing them is a gauge choice
that costs nothing and keeps the quasi-Newton iteration well posed.

``solve_cohomology`` inverts phi(theta) - phi(theta + p/q) = eta(theta) in
mode space: phi_k = eta_k / (1 - e^{2 pi i k p/q}) away from the resonant
frequencies k = m q, where the solution is pinned to zero and the skipped
input energy is reported back as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

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
    dd_sqr,
    dd_sub,
    TWO_PI_HI,
    TWO_PI_LO,
    two_prod,
)
from twistpo.fft import (
    _frac_err,
    apply_rational_shift,
    apply_real_shift,
    complex_dd,
    derivative_modes,
    dft_arbitrary,
    fft_forward,
    fft_inverse,
    field_to_modes,
    hermitize,
    truncate_modes,
    zero_resonant_modes,
)
from twistpo.maps import Point2


@dataclass(frozen=True)
class RotationNumber:
    """Rational rotation number p/q in lowest terms, 0 <= p/q < 1."""

    p: int
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("rotation denominator must be positive")
        if not (0 <= self.p < self.q or (self.p, self.q) == (0, 1)):
            raise ValueError("rotation must satisfy 0 <= p/q < 1")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError("rotation p/q must be in lowest terms")

    def as_fraction(self) -> Fraction:
        return Fraction(self.p, self.q)

    def as_dd(self) -> DoubleDouble:
        return DoubleDouble.from_fraction(self.as_fraction())

    def __str__(self):
        return f"{self.p}/{self.q}"


def default_n_star(q: int, cap: int | None = None) -> int:
    """Harmonic count: 2q for modest periods, 4q for large ones."""
    n = 2 * q if q <= 256 else 4 * q
    return min(n, cap) if cap else n


def grid_size_for(n_star: int) -> int:
    n = 1
    while n < 2 * (n_star + 1):
        n <<= 1
    return n


@njit(cache=True, nogil=True)
def _eval_modes_at(modes, n_star, th, tl, deriv, sector, sin_c, cos_c):
    """Direct summation of a Hermitian spectrum at one angle (dd)."""
    n = modes.shape[0]
    scale = 1.0  # forward-unnormalised spectra carry a 1/n in synthesis
    acc_h, acc_l = modes[0, 0] / n, modes[0, 1] / n
    if deriv:
        acc_h, acc_l = 0.0, 0.0
    for k in range(1, n_star + 1):
        reh, rel = modes[k, 0] / n, modes[k, 1] / n
        imh, iml = modes[k, 2] / n, modes[k, 3] / n
        if reh == 0.0 and rel == 0.0 and imh == 0.0 and iml == 0.0:
            continue
        ph, pl = dd_mul_d(th, tl, float(k))
        ph, pl = dd_mod1(ph, pl)
        sh, sl, ch, cl = dd_sincos_turns(ph, pl, sector, sin_c, cos_c)
        if deriv:
            # d/dtheta 2[Re cos - Im sin] = -2*2pik [Re sin + Im cos]
            t1h, t1l = dd_mul(reh, rel, sh, sl)
            t2h, t2l = dd_mul(imh, iml, ch, cl)
            uh, ul = dd_add(t1h, t1l, t2h, t2l)
            wh, wl = dd_mul_d(TWO_PI_HI, TWO_PI_LO, -2.0 * k)
            uh, ul = dd_mul(uh, ul, wh, wl)
        else:
            t1h, t1l = dd_mul(reh, rel, ch, cl)
            t2h, t2l = dd_mul(imh, iml, sh, sl)
            uh, ul = dd_sub(t1h, t1l, t2h, t2l)
            uh, ul = dd_mul_d(uh, ul, 2.0)
        acc_h, acc_l = dd_add(acc_h, acc_l, uh, ul)
    return acc_h, acc_l


@njit(cache=True, nogil=True)
def _fold_modes(modes, q, sh_, sl_, out, sector, sin_c, cos_c):
    """F_r = sum_{k = r mod q} c_k e^{2 pi i k sigma}, synthesis-normalised."""
    n = modes.shape[0]
    for k in range(n):
        ks = k if 2 * k <= n else k - n
        reh, rel = modes[k, 0] / n, modes[k, 1] / n
        imh, iml = modes[k, 2] / n, modes[k, 3] / n
        if reh == 0.0 and rel == 0.0 and imh == 0.0 and iml == 0.0:
            continue
        if sh_ != 0.0 or sl_ != 0.0:
            ph, pl = dd_mul_d(sh_, sl_, float(ks))
            ph, pl = dd_mod1(ph, pl)
            s2h, s2l, c2h, c2l = dd_sincos_turns(ph, pl, sector, sin_c, cos_c)
            t1h, t1l = dd_mul(reh, rel, c2h, c2l)
            t2h, t2l = dd_mul(imh, iml, s2h, s2l)
            nreh, nrel = dd_sub(t1h, t1l, t2h, t2l)
            t3h, t3l = dd_mul(reh, rel, s2h, s2l)
            t4h, t4l = dd_mul(imh, iml, c2h, c2l)
            nimh, niml = dd_add(t3h, t3l, t4h, t4l)
            reh, rel, imh, iml = nreh, nrel, nimh, niml
        r = ks % q
        out[r, 0], out[r, 1] = dd_add(out[r, 0], out[r, 1], reh, rel)
        out[r, 2], out[r, 3] = dd_add(out[r, 2], out[r, 3], imh, iml)


def _idft_unnormalized(z: np.ndarray) -> np.ndarray:
    """sum_r z_r e^{+2 pi i r m / n} via conjugated forward transform."""
    w = z.copy()
    w[:, 2] = -w[:, 2]
    w[:, 3] = -w[:, 3]
    out = dft_arbitrary(w)
    out[:, 2] = -out[:, 2]
    out[:, 3] = -out[:, 3]
    return out


class FourierCurve:
    """Immutable curve through candidate periodic points."""

    __slots__ = ("rotation", "n_star", "modes_x", "modes_y", "resonance_free")

    def __init__(self, rotation: RotationNumber, n_star: int,
                 modes_x: np.ndarray, modes_y: np.ndarray,
                 resonance_free: bool = True):
        self.rotation = rotation
        self.n_star = n_star
        mx = hermitize(modes_x)
        my = hermitize(modes_y)
        mx = truncate_modes(mx, n_star)
        my = truncate_modes(my, n_star)
        if resonance_free and rotation.q > 1:
            mx = zero_resonant_modes(mx, rotation.q, keep_mean=True,
                                     compensate_mean=True)
            my = zero_resonant_modes(my, rotation.q, keep_mean=True,
                                     compensate_mean=True)
        mx.setflags(write=False)
        my.setflags(write=False)
        self.modes_x = mx
        self.modes_y = my
        self.resonance_free = resonance_free

    # --- constructors --------------------------------------------------------
    @classmethod
    def integrable(cls, rotation: RotationNumber, n_star: int | None = None,
                   n_grid: int | None = None,
                   mean_y: DoubleDouble | None = None) -> "FourierCurve":
        """K(theta) = (theta, p/q): the exact curve of the unperturbed shear."""
        n_star = n_star or default_n_star(rotation.q)
        n = n_grid or grid_size_for(n_star)
        mx = complex_dd(n)
        my = complex_dd(n)
        y0 = mean_y if mean_y is not None else rotation.as_dd()
        my[0, 0], my[0, 1] = y0.hi * n, y0.lo * n  # mean in unnormalised units
        return cls(rotation, n_star, mx, my)

    @classmethod
    def from_grid(cls, rotation: RotationNumber, n_star: int,
                  x_field: np.ndarray, y_field: np.ndarray,
                  resonance_free: bool = True) -> "FourierCurve":
        """Analyse grid samples of (K_x - theta, K_y)."""
        return cls(rotation, n_star, field_to_modes(x_field),
                   field_to_modes(y_field), resonance_free)

    @property
    def n_grid(self) -> int:
        return self.modes_x.shape[0]

    # --- grid synthesis -------------------------------------------------------
    def grid_thetas(self) -> np.ndarray:
        n = self.n_grid
        out = np.zeros((n, 2))
        out[:, 0] = np.arange(n) / n  # exact dyadic rationals
        return out

    def periodic_parts(self, shift: tuple[int, int] | None = None):
        """Grid samples of the periodic parts, optionally of K(theta + p'/q')."""
        mx, my = self.modes_x, self.modes_y
        if shift is not None:
            mx = apply_rational_shift(mx, shift[0], shift[1])
            my = apply_rational_shift(my, shift[0], shift[1])
        fx = fft_inverse(mx)
        fy = fft_inverse(my)
        return fx[:, :2].copy(), fy[:, :2].copy()

    def derivative_parts(self, shift: tuple[int, int] | None = None):
        """Grid samples of (dK_x/dtheta - 1, dK_y/dtheta)."""
        mx = derivative_modes(self.modes_x)
        my = derivative_modes(self.modes_y)
        if shift is not None:
            mx = apply_rational_shift(mx, shift[0], shift[1])
            my = apply_rational_shift(my, shift[0], shift[1])
        fx = fft_inverse(mx)
        fy = fft_inverse(my)
        return fx[:, :2].copy(), fy[:, :2].copy()

    # --- pointwise ------------------------------------------------------------
    def evaluate(self, theta: DoubleDouble) -> Point2:
        px_h, px_l = _eval_modes_at(self.modes_x, self.n_star, theta.hi, theta.lo,
                                    False, _SECTOR, _SIN_COEF, _COS_COEF)
        py_h, py_l = _eval_modes_at(self.modes_y, self.n_star, theta.hi, theta.lo,
                                    False, _SECTOR, _SIN_COEF, _COS_COEF)
        return Point2(theta + DoubleDouble(px_h, px_l), DoubleDouble(py_h, py_l))

    def derivative(self, theta: DoubleDouble) -> tuple[DoubleDouble, DoubleDouble]:
        dx_h, dx_l = _eval_modes_at(self.modes_x, self.n_star, theta.hi, theta.lo,
                                    True, _SECTOR, _SIN_COEF, _COS_COEF)
        dy_h, dy_l = _eval_modes_at(self.modes_y, self.n_star, theta.hi, theta.lo,
                                    True, _SECTOR, _SIN_COEF, _COS_COEF)
        return DoubleDouble(dx_h, dx_l) + DoubleDouble(1.0), DoubleDouble(dy_h, dy_l)

    def orbit_parts(self, sigma: DoubleDouble) -> tuple[np.ndarray, np.ndarray]:
        """Periodic parts at the q points sigma + m/q, positional order m."""
        q = self.rotation.q
        fx = complex_dd(q)
        fy = complex_dd(q)
        _fold_modes(self.modes_x, q, sigma.hi, sigma.lo, fx,
                    _SECTOR, _SIN_COEF, _COS_COEF)
        _fold_modes(self.modes_y, q, sigma.hi, sigma.lo, fy,
                    _SECTOR, _SIN_COEF, _COS_COEF)
        vx = _idft_unnormalized(fx)
        vy = _idft_unnormalized(fy)
        return vx[:, :2].copy(), vy[:, :2].copy()

    # --- transformations -------------------------------------------------------
    def rephase(self, sigma: DoubleDouble) -> "FourierCurve":
        """K(theta + sigma); the +sigma of the angle goes into the x mean."""
        mx = apply_real_shift(self.modes_x, sigma.hi, sigma.lo)
        my = apply_real_shift(self.modes_y, sigma.hi, sigma.lo)
        n = self.n_grid
        sh, sl = dd_mul_d(sigma.hi, sigma.lo, float(n))
        mx[0, 0], mx[0, 1] = dd_add(mx[0, 0], mx[0, 1], sh, sl)
        return FourierCurve(self.rotation, self.n_star, mx, my,
                            self.resonance_free)

    def with_modes(self, modes_x: np.ndarray, modes_y: np.ndarray) -> "FourierCurve":
        return FourierCurve(self.rotation, self.n_star, modes_x, modes_y,
                            self.resonance_free)

    def resize(self, n_star: int) -> "FourierCurve":
        """Re-embed the spectrum on the grid matching a new harmonic count."""
        n_new = grid_size_for(n_star)
        n_old = self.n_grid
        if n_new == n_old:
            return FourierCurve(self.rotation, n_star, self.modes_x, self.modes_y,
                                self.resonance_free)
        mx = complex_dd(n_new)
        my = complex_dd(n_new)
        keep = min(self.n_star, n_star, n_old // 2 - 1, n_new // 2 - 1)
        scale = n_new / n_old  # unnormalised spectra rescale with grid size
        for k in range(-keep, keep + 1):
            src = k % n_old
            dst = k % n_new
            mx[dst] = self.modes_x[src] * scale
            my[dst] = self.modes_y[src] * scale
        return FourierCurve(self.rotation, n_star, mx, my, self.resonance_free)

    # --- serialization -----------------------------------------------------------
    def save(self, path) -> None:
        np.savez(path, p=self.rotation.p, q=self.rotation.q, n_star=self.n_star,
                 modes_x=self.modes_x, modes_y=self.modes_y,
                 resonance_free=self.resonance_free)

    @classmethod
    def load(cls, path) -> "FourierCurve":
        data = np.load(path)
        return cls(RotationNumber(int(data["p"]), int(data["q"])),
                   int(data["n_star"]), data["modes_x"], data["modes_y"],
                   bool(data["resonance_free"]))

    def mode_rows(self):
        """(component, k, re, im) rows of nonzero modes for the CSV dump."""
        n = self.n_grid
        for name, modes in (("x", self.modes_x), ("y", self.modes_y)):
            for k in range(n):
                ks = k if 2 * k <= n else k - n
                if np.any(modes[k] != 0.0):
                    re = DoubleDouble(modes[k, 0] / n, modes[k, 1] / n)
                    im = DoubleDouble(modes[k, 2] / n, modes[k, 3] / n)
                    yield name, ks, re, im


# --- cohomology ---------------------------------------------------------------


@njit(cache=True, nogil=True)
def _cohomology_kernel(eta, p, q, phi, sector, sin_c, cos_c):
    """phi_k = eta_k / (1 - e^{2 pi i k p/q}); resonant modes dropped.

    Returns (resonant_energy, mean_energy): squared l2 mass of the skipped
    m != 0 resonant modes and of the k = 0 mode, in synthesis units.
    """
    n = eta.shape[0]
    res_acc = 0.0
    mean_acc = 0.0
    for k in range(n):
        ks = k if 2 * k <= n else k - n
        reh, rel = eta[k, 0], eta[k, 1]
        imh, iml = eta[k, 2], eta[k, 3]
        r = (ks * p) % q
        if ks % q == 0:
            mag = (reh / n) ** 2 + (imh / n) ** 2
            if ks == 0:
                mean_acc += mag
            else:
                res_acc += mag
            continue
        sh, sl, ch, cl = dd_sincos_turns(r / q, _frac_err(r, q), sector, sin_c, cos_c)
        # d = 1 - e^{2 pi i r / q} = (1 - c) - i s
        drh, drl = dd_add(1.0, 0.0, -ch, -cl)
        dih, dil = -sh, -sl
        # |d|^2
        m1h, m1l = dd_sqr(drh, drl)
        m2h, m2l = dd_sqr(dih, dil)
        mh, ml = dd_add(m1h, m1l, m2h, m2l)
        # eta * conj(d)
        t1h, t1l = dd_mul(reh, rel, drh, drl)
        t2h, t2l = dd_mul(imh, iml, dih, dil)
        nrh, nrl = dd_add(t1h, t1l, t2h, t2l)
        t3h, t3l = dd_mul(imh, iml, drh, drl)
        t4h, t4l = dd_mul(reh, rel, dih, dil)
        nih, nil = dd_sub(t3h, t3l, t4h, t4l)
        phi[k, 0], phi[k, 1] = dd_div(nrh, nrl, mh, ml)
        phi[k, 2], phi[k, 3] = dd_div(nih, nil, mh, ml)
    return res_acc, mean_acc


def solve_cohomology(eta_modes: np.ndarray, rotation: RotationNumber):
    """Invert the difference operator on the non-resonant subspace.

    Returns ``(phi_modes, diagnostics)`` where the diagnostics dict carries
    the l2 norm of the skipped resonant input modes and the input mean.
    """
    phi = complex_dd(eta_modes.shape[0])
    res2, mean2 = _cohomology_kernel(eta_modes, rotation.p, rotation.q, phi,
                                     _SECTOR, _SIN_COEF, _COS_COEF)
    phi = hermitize(phi)
    return phi, {"resonant_norm": math.sqrt(res2), "mean_norm": math.sqrt(mean2)}


def cohomology_operator(phi_modes: np.ndarray, rotation: RotationNumber) -> np.ndarray:
    """phi(theta) - phi(theta + p/q) in mode space (for verification)."""
    shifted = apply_rational_shift(phi_modes, rotation.p, rotation.q)
    out = phi_modes.copy()
    n = out.shape[0]
    for k in range(n):
        out[k, 0], out[k, 1] = dd_sub(out[k, 0], out[k, 1], shifted[k, 0], shifted[k, 1])
        out[k, 2], out[k, 3] = dd_sub(out[k, 2], out[k, 3], shifted[k, 2], shifted[k, 3])
    return out
