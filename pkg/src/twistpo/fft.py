"""FFT and DFT machinery over double-double complex arrays.

Complex dd vectors are float64 arrays of shape (n, 4) with columns
``[re_hi, re_lo, im_hi, im_lo]``; real dd grid fields are (n, 2).

Conventions
-----------
* forward transform is unnormalised: ``X_k = sum_j x_j e^{-2 pi i jk/n}``,
* the inverse carries the ``1/n`` factor, so ``inverse(forward(x)) == x``,
* power-of-two sizes run through an iterative radix-2 decimation-in-time
  kernel with precomputed dd twiddles; arbitrary sizes (needed for the
  period-q orbit grid) go through Bluestein's chirp-z reduction onto the
  radix-2 kernel.

Mode index ``k`` in ``0..n-1`` carries the signed frequency ``k`` for
``k <= n/2`` and ``k - n`` above, as usual.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from twistpo.dd import (
    _SECTOR,
    _SIN_COEF,
    _COS_COEF,
    TWO_PI_HI,
    TWO_PI_LO,
    dd_add,
    dd_mul,
    dd_mul_d,
    dd_sincos_turns,
    dd_sub,
    two_prod,
    dd_mod1,
)

__all__ = [
    "fft_forward",
    "fft_inverse",
    "dft_arbitrary",
    "complex_dd",
    "apply_rational_shift",
    "apply_real_shift",
    "derivative_modes",
    "truncate_modes",
    "zero_resonant_modes",
    "hermitize",
    "field_to_modes",
    "modes_to_field",
]


def complex_dd(n: int) -> np.ndarray:
    return np.zeros((n, 4))


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@njit(cache=True, nogil=True)
def _build_twiddles(n, out, sector, sin_c, cos_c):
    # out[k] = e^{-2 pi i k/n}, k = 0..n/2-1; k/n is exact (n a power of two)
    for k in range(n // 2):
        sh, sl, ch, cl = dd_sincos_turns(k / n, 0.0, sector, sin_c, cos_c)
        out[k, 0] = ch
        out[k, 1] = cl
        out[k, 2] = -sh
        out[k, 3] = -sl


_TWIDDLE_CACHE: dict[int, np.ndarray] = {}
_BITREV_CACHE: dict[int, np.ndarray] = {}


def _twiddles(n: int) -> np.ndarray:
    tw = _TWIDDLE_CACHE.get(n)
    if tw is None:
        tw = np.empty((n // 2, 4))
        _build_twiddles(n, tw, _SECTOR, _SIN_COEF, _COS_COEF)
        _TWIDDLE_CACHE[n] = tw
    return tw


def _bitrev(n: int) -> np.ndarray:
    perm = _BITREV_CACHE.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        perm = np.zeros(n, dtype=np.int64)
        for i in range(n):
            r = 0
            v = i
            for _ in range(bits):
                r = (r << 1) | (v & 1)
                v >>= 1
            perm[i] = r
        _BITREV_CACHE[n] = perm
    return perm


@njit(cache=True, nogil=True)
def _fft_kernel(z, tw, perm, inverse):
    n = z.shape[0]
    out = np.empty_like(z)
    for i in range(n):
        out[i, 0] = z[perm[i], 0]
        out[i, 1] = z[perm[i], 1]
        out[i, 2] = z[perm[i], 2]
        out[i, 3] = z[perm[i], 3]
    length = 2
    while length <= n:
        half = length >> 1
        step = n // length
        for start in range(0, n, length):
            for j in range(half):
                wrh = tw[j * step, 0]
                wrl = tw[j * step, 1]
                wih = tw[j * step, 2]
                wil = tw[j * step, 3]
                if inverse:
                    wih = -wih
                    wil = -wil
                ia = start + j
                ib = ia + half
                brh, brl, bih, bil = out[ib, 0], out[ib, 1], out[ib, 2], out[ib, 3]
                # t = w * b
                t1h, t1l = dd_mul(brh, brl, wrh, wrl)
                t2h, t2l = dd_mul(bih, bil, wih, wil)
                trh, trl = dd_sub(t1h, t1l, t2h, t2l)
                t3h, t3l = dd_mul(brh, brl, wih, wil)
                t4h, t4l = dd_mul(bih, bil, wrh, wrl)
                tih, til = dd_add(t3h, t3l, t4h, t4l)
                arh, arl, aih, ail = out[ia, 0], out[ia, 1], out[ia, 2], out[ia, 3]
                sh, sl = dd_add(arh, arl, trh, trl)
                out[ia, 0], out[ia, 1] = sh, sl
                sh, sl = dd_add(aih, ail, tih, til)
                out[ia, 2], out[ia, 3] = sh, sl
                sh, sl = dd_sub(arh, arl, trh, trl)
                out[ib, 0], out[ib, 1] = sh, sl
                sh, sl = dd_sub(aih, ail, tih, til)
                out[ib, 2], out[ib, 3] = sh, sl
        length <<= 1
    if inverse:
        scale = 1.0 / n  # n is a power of two: exact
        for i in range(n):
            out[i, 0] *= scale
            out[i, 1] *= scale
            out[i, 2] *= scale
            out[i, 3] *= scale
    return out


def fft_forward(z: np.ndarray) -> np.ndarray:
    n = z.shape[0]
    if not _is_pow2(n):
        raise ValueError(f"FFT size must be a power of two, got {n}")
    if n == 1:
        return z.copy()
    return _fft_kernel(z, _twiddles(n), _bitrev(n), False)


def fft_inverse(z: np.ndarray) -> np.ndarray:
    n = z.shape[0]
    if not _is_pow2(n):
        raise ValueError(f"FFT size must be a power of two, got {n}")
    if n == 1:
        return z.copy()
    return _fft_kernel(z, _twiddles(n), _bitrev(n), True)


# --- Bluestein (chirp-z) for arbitrary sizes --------------------------------

_BLUESTEIN_CACHE: dict[int, tuple[np.ndarray, np.ndarray, int]] = {}


@njit(cache=True, nogil=True)
def _build_chirp(n, chirp, sector, sin_c, cos_c):
    # chirp[m] = e^{-pi i m^2 / n}; angle as exact integer residue mod 2n
    twon = 2 * n
    for m in range(n):
        r = (m * m) % twon
        sh, sl, ch, cl = dd_sincos_turns(r / (2.0 * n), _frac_err(r, twon), sector, sin_c, cos_c)
        chirp[m, 0] = ch
        chirp[m, 1] = cl
        chirp[m, 2] = -sh
        chirp[m, 3] = -sl


@njit(cache=True, nogil=True, inline="always")
def _frac_err(r, d):
    # low word of the division r/d computed in dd
    q1 = r / d
    p1h, p1l = two_prod(q1, d)
    rem = ((r - p1h) - p1l)
    return rem / d


def _bluestein_plan(n: int):
    plan = _BLUESTEIN_CACHE.get(n)
    if plan is None:
        m = 1
        while m < 2 * n - 1:
            m <<= 1
        chirp = np.empty((n, 4))
        _build_chirp(n, chirp, _SECTOR, _SIN_COEF, _COS_COEF)
        # v_k = conj(chirp_k) laid out circularly for linear convolution
        v = np.zeros((m, 4))
        for k in range(n):
            v[k, 0], v[k, 1] = chirp[k, 0], chirp[k, 1]
            v[k, 2], v[k, 3] = -chirp[k, 2], -chirp[k, 3]
            if k > 0:
                v[m - k] = v[k]
        vhat = fft_forward(v)
        plan = (chirp, vhat, m)
        _BLUESTEIN_CACHE[n] = plan
    return plan


@njit(cache=True, nogil=True)
def _cmul_arrays(a, b, out):
    for i in range(a.shape[0]):
        t1h, t1l = dd_mul(a[i, 0], a[i, 1], b[i, 0], b[i, 1])
        t2h, t2l = dd_mul(a[i, 2], a[i, 3], b[i, 2], b[i, 3])
        rh, rl = dd_sub(t1h, t1l, t2h, t2l)
        t3h, t3l = dd_mul(a[i, 0], a[i, 1], b[i, 2], b[i, 3])
        t4h, t4l = dd_mul(a[i, 2], a[i, 3], b[i, 0], b[i, 1])
        ih, il = dd_add(t3h, t3l, t4h, t4l)
        out[i, 0], out[i, 1], out[i, 2], out[i, 3] = rh, rl, ih, il


@njit(cache=True, nogil=True)
def _chirp_mul(z, chirp, conj_chirp, out):
    for i in range(z.shape[0]):
        crh, crl = chirp[i, 0], chirp[i, 1]
        cih, cil = chirp[i, 2], chirp[i, 3]
        if conj_chirp:
            cih, cil = -cih, -cil
        t1h, t1l = dd_mul(z[i, 0], z[i, 1], crh, crl)
        t2h, t2l = dd_mul(z[i, 2], z[i, 3], cih, cil)
        rh, rl = dd_sub(t1h, t1l, t2h, t2l)
        t3h, t3l = dd_mul(z[i, 0], z[i, 1], cih, cil)
        t4h, t4l = dd_mul(z[i, 2], z[i, 3], crh, crl)
        ih, il = dd_add(t3h, t3l, t4h, t4l)
        out[i, 0], out[i, 1], out[i, 2], out[i, 3] = rh, rl, ih, il


def dft_arbitrary(z: np.ndarray, inverse: bool = False) -> np.ndarray:
    """DFT of any length; forward unnormalised, inverse carries 1/n."""
    n = z.shape[0]
    if _is_pow2(n):
        return fft_inverse(z) if inverse else fft_forward(z)
    chirp, vhat, m = _bluestein_plan(n)
    work = z
    if inverse:
        # conjugate input, run forward, conjugate output, scale by 1/n
        work = z.copy()
        work[:, 2] = -work[:, 2]
        work[:, 3] = -work[:, 3]
    u = np.zeros((m, 4))
    _chirp_mul(work, chirp, False, u[:n])
    uhat = fft_forward(u)
    prod = np.empty((m, 4))
    _cmul_arrays(uhat, vhat, prod)
    conv = fft_inverse(prod)
    out = np.empty((n, 4))
    _chirp_mul(conv[:n], chirp, False, out)
    if inverse:
        out[:, 2] = -out[:, 2]
        out[:, 3] = -out[:, 3]
        _scale_dd(out, 1.0 / n, _frac_err(1, n))
    return out


@njit(cache=True, nogil=True)
def _scale_dd(z, sh, sl):
    for i in range(z.shape[0]):
        z[i, 0], z[i, 1] = dd_mul(z[i, 0], z[i, 1], sh, sl)
        z[i, 2], z[i, 3] = dd_mul(z[i, 2], z[i, 3], sh, sl)


# --- spectral utilities ------------------------------------------------------


@njit(cache=True, nogil=True)
def _apply_rational_shift_kernel(modes, p, q, sector, sin_c, cos_c):
    n = modes.shape[0]
    for k in range(n):
        ks = k if 2 * k <= n else k - n
        r = (ks * p) % q
        if r == 0:
            continue
        sh, sl, ch, cl = dd_sincos_turns(r / q, _frac_err(r, q), sector, sin_c, cos_c)
        rh, rl = modes[k, 0], modes[k, 1]
        ih, il = modes[k, 2], modes[k, 3]
        t1h, t1l = dd_mul(rh, rl, ch, cl)
        t2h, t2l = dd_mul(ih, il, sh, sl)
        nrh, nrl = dd_sub(t1h, t1l, t2h, t2l)
        t3h, t3l = dd_mul(rh, rl, sh, sl)
        t4h, t4l = dd_mul(ih, il, ch, cl)
        nih, nil = dd_add(t3h, t3l, t4h, t4l)
        modes[k, 0], modes[k, 1] = nrh, nrl
        modes[k, 2], modes[k, 3] = nih, nil


def apply_rational_shift(modes: np.ndarray, p: int, q: int) -> np.ndarray:
    """Return modes of f(theta + p/q) given modes of f; exact mode phases."""
    out = modes.copy()
    _apply_rational_shift_kernel(out, p, q, _SECTOR, _SIN_COEF, _COS_COEF)
    return out


@njit(cache=True, nogil=True)
def _apply_real_shift_kernel(modes, sh_, sl_, sector, sin_c, cos_c):
    n = modes.shape[0]
    for k in range(n):
        ks = k if 2 * k <= n else k - n
        if ks == 0:
            continue
        ph, pl = dd_mul_d(sh_, sl_, float(ks))
        ph, pl = dd_mod1(ph, pl)
        s2h, s2l, c2h, c2l = dd_sincos_turns(ph, pl, sector, sin_c, cos_c)
        rh, rl = modes[k, 0], modes[k, 1]
        ih, il = modes[k, 2], modes[k, 3]
        t1h, t1l = dd_mul(rh, rl, c2h, c2l)
        t2h, t2l = dd_mul(ih, il, s2h, s2l)
        nrh, nrl = dd_sub(t1h, t1l, t2h, t2l)
        t3h, t3l = dd_mul(rh, rl, s2h, s2l)
        t4h, t4l = dd_mul(ih, il, c2h, c2l)
        nih, nil = dd_add(t3h, t3l, t4h, t4l)
        modes[k, 0], modes[k, 1] = nrh, nrl
        modes[k, 2], modes[k, 3] = nih, nil


def apply_real_shift(modes: np.ndarray, sigma_hi: float, sigma_lo: float = 0.0) -> np.ndarray:
    out = modes.copy()
    _apply_real_shift_kernel(out, sigma_hi, sigma_lo, _SECTOR, _SIN_COEF, _COS_COEF)
    return out


@njit(cache=True, nogil=True)
def _derivative_kernel(modes):
    n = modes.shape[0]
    for k in range(n):
        ks = k if 2 * k <= n else k - n
        wh, wl = dd_mul_d(TWO_PI_HI, TWO_PI_LO, float(ks))
        rh, rl = modes[k, 0], modes[k, 1]
        ih, il = modes[k, 2], modes[k, 3]
        # multiply by i*w: (re, im) -> (-im*w, re*w)
        nrh, nrl = dd_mul(ih, il, -wh, -wl)
        nih, nil = dd_mul(rh, rl, wh, wl)
        modes[k, 0], modes[k, 1] = nrh, nrl
        modes[k, 2], modes[k, 3] = nih, nil


def derivative_modes(modes: np.ndarray) -> np.ndarray:
    """Modes of df/dtheta given modes of f (theta measured in turns)."""
    out = modes.copy()
    _derivative_kernel(out)
    return out


@njit(cache=True, nogil=True)
def _truncate_kernel(out, n_star):
    n = out.shape[0]
    for k in range(n):
        ks = k if 2 * k <= n else k - n
        if abs(ks) > n_star:
            out[k, 0] = out[k, 1] = out[k, 2] = out[k, 3] = 0.0


def truncate_modes(modes: np.ndarray, n_star: int) -> np.ndarray:
    out = modes.copy()
    _truncate_kernel(out, n_star)
    return out


@njit(cache=True, nogil=True)
def _zero_resonant_kernel(out, q, keep_mean, compensate):
    n = out.shape[0]
    acc_rh, acc_rl = 0.0, 0.0
    for k in range(n):
        ks = k if 2 * k <= n else k - n
        if ks % q == 0 and (ks != 0 or not keep_mean):
            acc_rh, acc_rl = dd_add(acc_rh, acc_rl, out[k, 0], out[k, 1])
            out[k, 0] = out[k, 1] = out[k, 2] = out[k, 3] = 0.0
    if compensate:
        # resonant modes are constant on any period-q orbit grid in phase
        # with theta = 0; folding their sum into the mean preserves every
        # orbit-grid value exactly (imaginary parts cancel by symmetry)
        out[0, 0], out[0, 1] = dd_add(out[0, 0], out[0, 1], acc_rh, acc_rl)


def zero_resonant_modes(modes: np.ndarray, q: int, keep_mean: bool = True,
                        compensate_mean: bool = False) -> np.ndarray:
    """Zero every mode with signed frequency divisible by q (k=0 optional).

    With ``compensate_mean`` the dropped (real) resonant mass is added to the
    k = 0 coefficient, which leaves the curve unchanged on the orbit grid.
    """
    out = modes.copy()
    _zero_resonant_kernel(out, q, keep_mean, compensate_mean)
    return out


@njit(cache=True, nogil=True)
def _hermitize_kernel(out):
    n = out.shape[0]
    out[0, 2] = out[0, 3] = 0.0  # mean is real
    for k in range(1, n // 2 + 1):
        j = n - k
        if j == k:  # Nyquist mode of a real field is real
            out[k, 2] = out[k, 3] = 0.0
            continue
        re_h, re_l = dd_add(out[k, 0], out[k, 1], out[j, 0], out[j, 1])
        im_h, im_l = dd_sub(out[k, 2], out[k, 3], out[j, 2], out[j, 3])
        out[k, 0], out[k, 1] = 0.5 * re_h, 0.5 * re_l
        out[k, 2], out[k, 3] = 0.5 * im_h, 0.5 * im_l
        out[j, 0], out[j, 1] = out[k, 0], out[k, 1]
        out[j, 2], out[j, 3] = -out[k, 2], -out[k, 3]


def hermitize(modes: np.ndarray) -> np.ndarray:
    """Project onto the Hermitian subspace: c_{-k} = conj(c_k)."""
    out = modes.copy()
    _hermitize_kernel(out)
    return out


def field_to_modes(field: np.ndarray) -> np.ndarray:
    """Forward FFT of a real dd grid field (n, 2) -> complex modes (n, 4)."""
    n = field.shape[0]
    z = np.zeros((n, 4))
    z[:, 0] = field[:, 0]
    z[:, 1] = field[:, 1]
    return fft_forward(z)


def modes_to_field(modes: np.ndarray) -> np.ndarray:
    """Inverse FFT, returning the real part as an (n, 2) dd field."""
    z = fft_inverse(modes)
    out = np.empty((modes.shape[0], 2))
    out[:, 0] = z[:, 0]
    out[:, 1] = z[:, 1]
    return out
