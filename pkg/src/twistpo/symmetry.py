"""Symmetry-line cross-validation solver for the standard map.

The standard map factors into two involutions whose fixed sets are the four
lines x = 0, x = 1/2, x = y/2, x = (y+1)/2; every symmetric periodic orbit
keeps two points on those lines, so orbits can be found by a 1-D root solve
in y of the lift closure

    g(y) = [T^q(z(y))]_x - x_line(y) - p,     z(y) on the line.

This is a deliberately independent route (no Fourier curves, no multiple
shooting): continuation in kappa from the integrable root y = p/q, with a
bisection bracket and secant polish at each step.  It exists to validate the
production pipeline, and only for the standard map; the rational harmonic
map's involutions are not usable for this purpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from twistpo.dd import (
    _COS_COEF,
    _SECTOR,
    _SIN_COEF,
    DoubleDouble,
)
from twistpo.errors import SolverFailure, UnsupportedMapError
from twistpo.maps import Point2, StandardMap, TwistMap, iterate_wrapped
from twistpo.shooting import OrbitSolution, classify, closure_error, orbit_residue, seed_orbit

LINES = ("x=0", "x=1/2", "x=y/2", "x=(y+1)/2")


def line_point(line: str, y: DoubleDouble) -> Point2:
    if line == "x=0":
        return Point2(DoubleDouble(0.0), y)
    if line == "x=1/2":
        return Point2(DoubleDouble(0.5), y)
    if line == "x=y/2":
        return Point2(y * DoubleDouble(0.5), y)
    if line == "x=(y+1)/2":
        return Point2((y + DoubleDouble(1.0)) * DoubleDouble(0.5), y)
    raise ValueError(f"unknown symmetry line {line!r}")


def closure_gap(tmap: TwistMap, p: int, q: int, line: str,
                y: DoubleDouble) -> DoubleDouble:
    """x-component of the lift closure from the line point at height y."""
    z = line_point(line, y)
    x0 = z.x.mod1()
    xh, xl, yh, yl, w = iterate_wrapped(
        tmap.map_id, tmap.params, x0.hi, x0.lo, z.y.hi, z.y.lo, q,
        _SECTOR, _SIN_COEF, _COS_COEF)
    return DoubleDouble(xh, xl) - x0 + DoubleDouble(float(w - p))


def _secant_polish(fun, y0: DoubleDouble, y1: DoubleDouble,
                   max_iter: int = 80) -> DoubleDouble:
    f0, f1 = fun(y0), fun(y1)
    best_y, best_f = (y0, f0) if abs(float(f0)) < abs(float(f1)) else (y1, f1)
    for _ in range(max_iter):
        denom = f1 - f0
        if float(denom) == 0.0:
            break
        y2 = y1 - f1 * (y1 - y0) / denom
        f2 = fun(y2)
        if abs(float(f2)) < abs(float(best_f)):
            best_y, best_f = y2, f2
        if float(f2) == 0.0 or abs(float(f2)) < 1e-31:
            return y2
        y0, f0, y1, f1 = y1, f1, y2, f2
    return best_y


def _bisect_then_secant(fun, lo: DoubleDouble, hi: DoubleDouble,
                        bisections: int = 60) -> DoubleDouble:
    flo, fhi = fun(lo), fun(hi)
    if float(flo) == 0.0:
        return lo
    if float(fhi) == 0.0:
        return hi
    if float(flo) * float(fhi) > 0:
        raise SolverFailure("no sign change in the scan window")
    for _ in range(bisections):
        mid = (lo + hi) * DoubleDouble(0.5)
        fm = fun(mid)
        if float(fm) == 0.0:
            return mid
        if float(flo) * float(fm) < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
        if abs(float(hi - lo)) < 1e-18:
            break
    return _secant_polish(fun, lo, hi)


@dataclass
class SymmetricOrbit:
    line: str
    y: DoubleDouble
    solution: OrbitSolution


def find_symmetric_orbit(p: int, q: int, kappa, line: str,
                         dk: float = 0.02, tol: float = 1e-28) -> SymmetricOrbit:
    """1-D continuation in kappa along one symmetry line.

    At kappa = 0 the root is y = p/q exactly; each kappa step brackets the
    moved root around the warm value and polishes it by bisection + secant.
    """
    from fractions import Fraction

    if line not in LINES:
        raise ValueError(f"unknown symmetry line {line!r}")
    kappa_target = float(kappa)
    y = DoubleDouble.from_fraction(Fraction(p, q))
    k = 0.0
    while k < kappa_target - 1e-15:
        k_next = min(k + dk, kappa_target)
        tmap = StandardMap(kappa if k_next == kappa_target else k_next)

        def g(yy: DoubleDouble, _t=tmap):
            return closure_gap(_t, p, q, line, yy)

        width = DoubleDouble(max(2e-2 * dk, 1e-4) )
        lo, hi = y - width, y + width
        # expand the bracket if the root moved farther than expected
        for _ in range(12):
            if float(g(lo)) * float(g(hi)) <= 0:
                break
            width = width * DoubleDouble(2.0)
            lo, hi = y - width, y + width
        else:
            raise SolverFailure(
                f"lost the {line} root near kappa = {k_next:.4f}")
        y = _bisect_then_secant(g, lo, hi)
        k = k_next
    tmap = StandardMap(kappa)
    state = seed_orbit(line_point(line, y), tmap, p, q)
    err = float(closure_error(state, tmap))
    residue, det = orbit_residue(state, tmap)
    sol = OrbitSolution(state=state, error=err, residue=residue,
                        monodromy_det=det, stability=classify(float(residue)),
                        iterations=0, converged=err < tol)
    return SymmetricOrbit(line=line, y=y, solution=sol)


def find_orbits_all_lines(p: int, q: int, kappa, tol: float = 1e-26):
    """Distinct symmetric orbits across the four lines, keyed by stability."""
    found: list[SymmetricOrbit] = []
    for line in LINES:
        try:
            found.append(find_symmetric_orbit(p, q, kappa, line, tol=tol))
        except SolverFailure:
            continue
    if not found:
        raise SolverFailure(f"no symmetric {p}/{q} orbit found on any line")
    return found


def points_on_symmetry_lines(sol: OrbitSolution, atol: float = 1e-25) -> int:
    """Count orbit points lying on any of the four lines (mod 1, dd exact)."""
    half = DoubleDouble(0.5)
    count = 0
    for pt in sol.points():
        x = pt.x.mod1()
        y = pt.y
        residues = [
            _dist_mod1(x, DoubleDouble(0.0)),
            _dist_mod1(x, half),
            _dist_mod1(x, y * half),
            _dist_mod1(x, (y + DoubleDouble(1.0)) * half),
        ]
        if min(residues) < atol:
            count += 1
    return count


def _dist_mod1(a: DoubleDouble, b: DoubleDouble) -> float:
    d = (a - b).mod1()
    return min(float(d), float(DoubleDouble(1.0) - d))
