"""Parameter continuation and residue-based criticality studies.

A branch of period-q orbits is continued in the perturbation strength kappa
with the hybrid policy: while the orbit's residue magnitude stays below a
switch threshold the Fourier-curve stage alone tracks the orbit cheaply
(one warm-started curve per kappa); once the residue is measurable the two
seed points are refined by multiple shooting and from there on the orbit
states themselves are warm-started (the shooting stage is both faster and
more robust close to criticality).

Criticality of an invariant circle is read off Greene-style: the kappa at
which the residue magnitude of a high-order rational approximant crosses
the universal value 0.2554 is located by bisection on warm-started orbits.

The rotation numbers of interest approximate the inverse golden mean via
the ratio ladder F_{N-1}/F_N with F_1 = 1, F_2 = 2 (so N = 5 is 5/8 and
N = 16 is 987/1597).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from twistpo.curves import FourierCurve, RotationNumber, default_n_star
from twistpo.dd import DoubleDouble
from twistpo.errors import (
    DivergenceError,
    FlatProfileError,
    SingularSystemError,
    SolverFailure,
)
from twistpo.maps import RationalHarmonicMap, StandardMap, TwistMap
from twistpo.parameterization import (
    default_phase_samples,
    iterate_to_tolerance,
    orbit_defect,
)
from twistpo.shooting import OrbitSolution, ShootingState, refine
from twistpo.tracking import locate_error_minima, locate_seeds, profile

CRITICAL_RESIDUE = 0.2554


def fibonacci_pair(n: int) -> tuple[int, int]:
    """(F_{N-1}, F_N) with F_1 = 1, F_2 = 2."""
    if n < 2:
        raise ValueError("ladder index starts at 2")
    a, b = 1, 2
    for _ in range(n - 2):
        a, b = b, a + b
    return a, b


def golden_rotation(n: int) -> RotationNumber:
    p, q = fibonacci_pair(n)
    return RotationNumber(p, q)


def fibonacci_ladder(n_min: int, n_max: int) -> list[RotationNumber]:
    return [golden_rotation(n) for n in range(n_min, n_max + 1)]


def standard_family(kappa) -> TwistMap:
    return StandardMap(kappa)


class RhmFamily:
    """Picklable rational-harmonic family at fixed (alpha, beta)."""

    def __init__(self, alpha, beta):
        self.alpha = alpha
        self.beta = beta

    def __call__(self, kappa) -> TwistMap:
        return RationalHarmonicMap(kappa, self.alpha, self.beta)


def rhm_family(alpha, beta):
    return RhmFamily(alpha, beta)


@dataclass
class ContinuationSettings:
    dk_init: float = 1e-2
    dk_min: float = 1e-6
    dk_max: float = 5e-2
    r_switch: float = 1e-8
    eps_tilde: float = 1e-18
    mpm_max_iter: int = 12
    ng_tol: float = 1e-28
    ng_max_iter: int = 50
    coarse_profile_samples: int = 16
    seed_profile_samples: int = 64
    grow_after: int = 2
    n_star_cap: int | None = None
    n_star_override: int | None = None


@dataclass
class ContinuationRecord:
    kappa: float
    n_index: int | None
    rotation: RotationNumber
    r_hyp: float
    r_ell: float
    e_hyp: float
    e_ell: float
    x_hyp: DoubleDouble
    provenance: str  # "mpm" | "newton-gauss" | "warm-start"


@dataclass
class BranchState:
    """Everything needed to warm-start the next kappa."""

    kappa: float
    curve: FourierCurve | None = None
    hyp: ShootingState | None = None
    ell: ShootingState | None = None


@dataclass
class ContinuationResult:
    rotation: RotationNumber
    records: list[ContinuationRecord]
    state: BranchState
    stop_reason: str
    n_index: int | None = None
    states_at: dict = None  # kappa -> BranchState snapshots (if requested)

    @property
    def kappas(self):
        return np.array([r.kappa for r in self.records])

    @property
    def r_hyps(self):
        return np.array([r.r_hyp for r in self.records])


def _coarse_residue_scale(curve: FourierCurve, tmap: TwistMap, samples: int) -> float:
    prof = profile(curve, tmap, samples=samples)
    return float(np.max(np.abs(prof.r_tilde)))


def _refine_branches(state: BranchState, tmap: TwistMap, rot: RotationNumber,
                     settings: ContinuationSettings,
                     branches: tuple[str, ...] = ("hyp", "ell")):
    """Newton-Gauss the requested branches from warm states.

    Raises SolverFailure unless each requested branch refines cleanly to a
    healthy closure (1e-15 is far above any legitimate near-critical floor).
    """
    out = {}
    for name in branches:
        st = state.hyp if name == "hyp" else state.ell
        sol = refine(None, tmap, rot.p, rot.q, tol=settings.ng_tol,
                     max_iter=settings.ng_max_iter, state=st)
        if sol.failure is not None:
            raise SolverFailure(f"{name} branch: {sol.failure}")
        if not (sol.error < 1e-15):
            raise SolverFailure(
                f"{name} branch stalled at E = {sol.error:.3e}")
        out[name] = sol
    return out.get("hyp"), out.get("ell")


def _seed_from_curve(curve: FourierCurve, tmap: TwistMap, rot: RotationNumber,
                     settings: ContinuationSettings):
    seeds = locate_seeds(curve, tmap, samples=settings.seed_profile_samples)
    hyp = refine(seeds.hyperbolic_point, tmap, rot.p, rot.q,
                 tol=settings.ng_tol, max_iter=settings.ng_max_iter)
    ell = refine(seeds.elliptic_point, tmap, rot.p, rot.q,
                 tol=settings.ng_tol, max_iter=settings.ng_max_iter)
    return hyp, ell


def _record(kappa: float, rot: RotationNumber, n_index, hyp: OrbitSolution,
            ell: OrbitSolution, provenance: str) -> ContinuationRecord:
    # by convention the negative-residue solution is the hyperbolic branch
    if float(hyp.residue) > float(ell.residue):
        hyp, ell = ell, hyp
    return ContinuationRecord(
        kappa=kappa, n_index=n_index, rotation=rot,
        r_hyp=float(hyp.residue), r_ell=float(ell.residue),
        e_hyp=hyp.error, e_ell=ell.error,
        x_hyp=hyp.anchor_x, provenance=provenance,
    )


def continue_in_kappa(map_factory, rotation: RotationNumber,
                      kappa_targets=None, kappa_max: float | None = None,
                      settings: ContinuationSettings | None = None,
                      n_index: int | None = None,
                      r_stop: float | None = None,
                      past_critical: bool = False,
                      collect_curve_errors: bool = False,
                      keep_states: bool = False) -> ContinuationResult:
    """Track both orbit branches from kappa = 0 upward.

    ``kappa_targets``: kappas at which a record must be taken (sorted);
    ``kappa_max`` caps the sweep; ``r_stop`` ends it once |R_hyp| exceeds the
    threshold (unless ``past_critical``, which keeps going to kappa_max).
    """
    settings = settings or ContinuationSettings()
    # targets may be strings/DoubleDouble to pin exact decimal kappas; the
    # original object reaches the map factory untouched
    targets = sorted(kappa_targets or [], key=float)
    target_of = {float(t): t for t in targets}
    if kappa_max is None:
        kappa_max = float(targets[-1]) if targets else 1.0
    rot = rotation
    n_star = settings.n_star_override or default_n_star(rot.q,
                                                        settings.n_star_cap)
    curve = FourierCurve.integrable(rot, n_star=n_star)
    records: list[ContinuationRecord] = []
    state = BranchState(kappa=0.0, curve=curve)
    stop_reason = "kappa_max"
    states_at: dict = {}
    dk = settings.dk_init
    kappa = 0.0
    switched = False
    successes = 0
    phase_samples = default_phase_samples(rot.q)

    def next_kappa(k: float, d: float) -> float:
        nk = k + d
        for t in targets:
            tf = float(t)
            if k < tf < nk - 1e-15:
                return tf
        return min(nk, kappa_max)

    while kappa < kappa_max - 1e-15:
        k_try = next_kappa(kappa, dk)
        tmap = map_factory(target_of.get(k_try, k_try))
        ok = False
        if not switched:
            res = iterate_to_tolerance(curve, tmap, eps_tilde=settings.eps_tilde,
                                       max_iter=settings.mpm_max_iter,
                                       phase_samples=phase_samples)
            omin = float(orbit_defect(res.curve, tmap)[0].min())
            ok = res.converged or omin < 1e-8
            if not ok:
                # the curve stage is saturating: hand over to shooting at the
                # last good kappa, then retry this step warm-started
                try:
                    hyp, ell = _seed_from_curve(curve, map_factory(kappa),
                                                rot, settings)
                    state = BranchState(kappa=kappa, curve=curve,
                                        hyp=hyp.state, ell=ell.state)
                    switched = True
                    continue
                except (FlatProfileError, SolverFailure, DivergenceError,
                        SingularSystemError):
                    pass
            if ok:
                curve = res.curve
                rscale = _coarse_residue_scale(curve, tmap,
                                               settings.coarse_profile_samples)
                if rscale >= settings.r_switch:
                    try:
                        hyp, ell = _seed_from_curve(curve, tmap, rot, settings)
                        state = BranchState(kappa=k_try, curve=curve,
                                            hyp=hyp.state, ell=ell.state)
                        switched = True
                        records.append(_record(k_try, rot, n_index, hyp, ell,
                                               "newton-gauss"))
                        if keep_states and k_try in target_of:
                            states_at[k_try] = BranchState(
                                kappa=k_try, hyp=hyp.state.copy(),
                                ell=ell.state.copy())
                    except (FlatProfileError, SolverFailure, DivergenceError,
                            SingularSystemError):
                        ok = False
                        switched = False
                else:
                    state = BranchState(kappa=k_try, curve=curve)
                    if k_try in target_of or collect_curve_errors:
                        # curve-only record: residues below the switch
                        # threshold are reported from the profile extrema
                        try:
                            seeds = locate_seeds(
                                curve, tmap,
                                samples=settings.seed_profile_samples)
                            records.append(ContinuationRecord(
                                kappa=k_try, n_index=n_index, rotation=rot,
                                r_hyp=seeds.hyperbolic_r,
                                r_ell=seeds.elliptic_r,
                                e_hyp=float(orbit_defect(
                                    curve, tmap,
                                    seeds.hyperbolic_theta)[0].mean()),
                                e_ell=float(orbit_defect(
                                    curve, tmap,
                                    seeds.elliptic_theta)[0].mean()),
                                x_hyp=seeds.hyperbolic_point.x.mod1(),
                                provenance="mpm",
                            ))
                        except FlatProfileError:
                            pass
        else:
            try:
                new_state = BranchState(kappa=k_try, curve=None,
                                        hyp=state.hyp, ell=state.ell)
                hyp, ell = _refine_branches(new_state, tmap, rot, settings)
                state = BranchState(kappa=k_try, curve=None,
                                    hyp=hyp.state, ell=ell.state)
                records.append(_record(k_try, rot, n_index, hyp, ell,
                                       "warm-start"))
                if keep_states and k_try in target_of:
                    states_at[k_try] = BranchState(
                        kappa=k_try, hyp=hyp.state.copy(),
                        ell=ell.state.copy())
                ok = True
            except (SolverFailure, DivergenceError, SingularSystemError):
                ok = False
        if ok:
            kappa = k_try
            successes += 1
            if successes >= settings.grow_after and dk < settings.dk_max:
                dk = min(2 * dk, settings.dk_max)
                successes = 0
            if r_stop is not None and records and records[-1].kappa == kappa \
                    and abs(records[-1].r_hyp) > r_stop and not past_critical:
                stop_reason = "critical"
                break
        else:
            successes = 0
            dk *= 0.5
            if dk < settings.dk_min:
                stop_reason = "break"
                break
    return ContinuationResult(rotation=rot, records=records, state=state,
                              stop_reason=stop_reason, n_index=n_index,
                              states_at=states_at)


def walk_branch(map_factory, rotation: RotationNumber, branch: str,
                warm: ShootingState, k_from: float, k_to: float,
                settings: ContinuationSettings):
    """Continue one orbit branch from k_from to k_to in adaptive sub-steps.

    Near criticality a single jump across a bisection bracket can leave the
    Newton basin even when the continuation itself is healthy; halving the
    stride until each sub-step refines cleanly fixes that.  Returns
    (solution_at_k_to, state_at_k_to).
    """
    span = k_to - k_from
    steps = 1
    if span == 0.0:
        sol = refine(None, map_factory(k_to), rotation.p, rotation.q,
                     tol=settings.ng_tol, max_iter=settings.ng_max_iter,
                     state=warm)
        return sol, sol.state
    while True:
        try:
            st = warm
            for i in range(1, steps + 1):
                k_i = k_to if i == steps else k_from + span * i / steps
                tmap = map_factory(k_i)
                bs = BranchState(kappa=k_i, hyp=st, ell=st)
                hyp, ell = _refine_branches(bs, tmap, rotation, settings,
                                            branches=(branch,))
                sol = hyp if branch == "hyp" else ell
                st = sol.state
            return sol, st
        except (SolverFailure, DivergenceError, SingularSystemError):
            steps *= 2
            if abs(span) / steps < min(settings.dk_min, 1e-9):
                raise


def residue_at(map_factory, rotation: RotationNumber, kappa: float,
               state: BranchState, settings: ContinuationSettings):
    """Hyperbolic/elliptic orbit solutions at one kappa from warm states."""
    hyp, _ = walk_branch(map_factory, rotation, "hyp", state.hyp,
                         state.kappa, kappa, settings)
    ell, _ = walk_branch(map_factory, rotation, "ell", state.ell,
                         state.kappa, kappa, settings)
    return hyp, ell


def refine_at_kappa(map_factory, rotation: RotationNumber, kappa,
                    settings: ContinuationSettings | None = None):
    """Curve-stage continuation to one kappa, then shooting on both seeds.

    Used when the orbit residue is far below the hybrid switch threshold but
    refined orbit solutions are still wanted (the shooting stage falls back
    to the seeded trajectory when its trailing block is numerically
    parabolic).  Returns (hyp_solution, ell_solution).
    """
    settings = settings or ContinuationSettings()
    # drive the curve stage well below the generic stopping bound: the
    # residue structure on the profile only emerges once the whole-curve
    # defect sits under the residue scale of interest
    mpm_only = ContinuationSettings(
        dk_init=settings.dk_init, dk_min=settings.dk_min,
        dk_max=settings.dk_max, r_switch=float("inf"),
        eps_tilde=min(settings.eps_tilde, 1e-25),
        mpm_max_iter=max(settings.mpm_max_iter, 20),
        ng_tol=settings.ng_tol, ng_max_iter=settings.ng_max_iter,
        seed_profile_samples=settings.seed_profile_samples,
        n_star_cap=settings.n_star_cap,
        n_star_override=settings.n_star_override)
    res = continue_in_kappa(map_factory, rotation, kappa_targets=[kappa],
                            kappa_max=float(kappa), settings=mpm_only)
    if res.state.curve is None or res.state.kappa < float(kappa) - 1e-12:
        raise SolverFailure(
            f"curve stage stopped at kappa = {res.state.kappa} "
            f"({res.stop_reason})")
    tmap = map_factory(kappa)
    curve = res.state.curve
    seeds = locate_seeds(curve, tmap, samples=settings.seed_profile_samples)
    candidates = [seeds.hyperbolic_point, seeds.elliptic_point]
    # near the integrable regime the error minima are the better indicator
    candidates += [pt for _, pt in locate_error_minima(
        curve, tmap, samples=settings.seed_profile_samples)]
    best = {}
    for pt in candidates:
        sol = refine(pt, tmap, rotation.p, rotation.q,
                     tol=settings.ng_tol, max_iter=settings.ng_max_iter)
        sign = "hyp" if float(sol.residue) < 0 else "ell"
        if sign not in best or sol.error < best[sign].error:
            best[sign] = sol
    if "hyp" not in best or "ell" not in best:
        raise SolverFailure(
            f"refinement produced residue signs {sorted(best)} only")
    return best["hyp"], best["ell"]


@dataclass
class CriticalResult:
    rotation: RotationNumber
    n_index: int | None
    kappa_c: float
    r_hyp: float
    r_ell: float
    iterations: int
    continuation: ContinuationResult


def find_critical_kappa(map_factory, rotation: RotationNumber,
                        target: float = CRITICAL_RESIDUE,
                        dk_tol: float = 1e-8,
                        settings: ContinuationSettings | None = None,
                        n_index: int | None = None,
                        kappa_cap: float = 5.0) -> CriticalResult:
    """Bisect |R_hyp|(kappa) = target along the warm-started branch."""
    settings = settings or ContinuationSettings()
    cont = continue_in_kappa(map_factory, rotation, kappa_max=kappa_cap,
                             settings=settings, n_index=n_index,
                             r_stop=target)
    if cont.stop_reason != "critical":
        raise SolverFailure(
            f"no residue bracket found up to kappa = {kappa_cap} "
            f"(stop: {cont.stop_reason})")
    recs = cont.records
    hi = recs[-1].kappa
    below = [r for r in recs if abs(r.r_hyp) < target
             and r.provenance != "mpm"]
    if below:
        lo = below[-1].kappa
    else:
        lo = max(hi - settings.dk_init, 0.0)
    # bisection tracks the hyperbolic branch only; the elliptic branch is
    # re-walked once at the located critical kappa
    k_w = hi
    warm = cont.state.hyp
    iters = 0
    while hi - lo > dk_tol:
        mid = 0.5 * (lo + hi)
        sol, warm = walk_branch(map_factory, rotation, "hyp", warm, k_w, mid,
                                settings)
        k_w = mid
        iters += 1
        if abs(float(sol.residue)) < target:
            lo = mid
        else:
            hi = mid
        if iters > 80:
            break
    kappa_c = 0.5 * (lo + hi)
    hyp, _ = walk_branch(map_factory, rotation, "hyp", warm, k_w, kappa_c,
                         settings)
    ell, _ = walk_branch(map_factory, rotation, "ell", cont.state.ell,
                         cont.state.kappa, kappa_c, settings)
    r_vals = sorted([float(hyp.residue), float(ell.residue)])
    return CriticalResult(rotation=rotation, n_index=n_index, kappa_c=kappa_c,
                          r_hyp=r_vals[0], r_ell=r_vals[1],
                          iterations=iters, continuation=cont)


@dataclass
class SurfaceCell:
    alpha: float
    beta: float
    kappa_c: float
    n_index: int | None
    stop_reason: str
    r_hyp: float = float("nan")
    flagged: bool = False


@dataclass
class CriticalSurfaceGrid:
    alphas: np.ndarray
    betas: np.ndarray
    cells: list[SurfaceCell]

    def kappa_grid(self) -> np.ndarray:
        out = np.full((len(self.alphas), len(self.betas)), np.nan)
        for c in self.cells:
            i = int(np.argmin(np.abs(self.alphas - c.alpha)))
            j = int(np.argmin(np.abs(self.betas - c.beta)))
            out[i, j] = c.kappa_c
        return out


def scan_critical_surface(alphas, betas, n_index: int,
                          dk_tol: float = 1e-6,
                          settings: ContinuationSettings | None = None,
                          workers: int = 0) -> CriticalSurfaceGrid:
    """Per-cell criticality over the half domain [0, pi) x [0, 1).

    The (alpha, beta) -> (alpha + pi, -beta) symmetry halves the domain, so
    only beta >= 0 cells are scanned.  Failures are recorded per cell and do
    not abort the scan.
    """
    rotation = golden_rotation(n_index)
    cells_in = [(float(a), float(b)) for a in alphas for b in betas]

    def run_cell(ab):
        a, b = ab
        try:
            res = find_critical_kappa(rhm_family(a, b), rotation,
                                      dk_tol=dk_tol, settings=settings,
                                      n_index=n_index)
            return SurfaceCell(alpha=a, beta=b, kappa_c=res.kappa_c,
                               n_index=n_index, stop_reason="critical",
                               r_hyp=res.r_hyp)
        except Exception as exc:  # cell-level containment
            return SurfaceCell(alpha=a, beta=b, kappa_c=float("nan"),
                               n_index=n_index,
                               stop_reason=f"failed: {type(exc).__name__}")

    if workers and workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_cell, cells_in))
    else:
        cells = [run_cell(ab) for ab in cells_in]
    grid = CriticalSurfaceGrid(alphas=np.asarray(alphas, dtype=float),
                               betas=np.asarray(betas, dtype=float),
                               cells=cells)
    _flag_nonmonotonic(grid)
    return grid


def _flag_nonmonotonic(grid: CriticalSurfaceGrid) -> None:
    """Flag cells where kappa_c(beta) at fixed alpha is non-monotonic."""
    by_alpha: dict[float, list[SurfaceCell]] = {}
    for c in grid.cells:
        by_alpha.setdefault(c.alpha, []).append(c)
    for cells in by_alpha.values():
        cells.sort(key=lambda c: c.beta)
        ks = [c.kappa_c for c in cells]
        for i in range(1, len(ks) - 1):
            if not np.isfinite(ks[i - 1] + ks[i] + ks[i + 1]):
                continue
            if (ks[i] - ks[i - 1]) * (ks[i + 1] - ks[i]) < 0:
                cells[i].flagged = True


@dataclass
class ReoccurrenceWindow:
    kappa_enter: float
    kappa_exit: float | None  # None if still sub-critical at the end


def reoccurrence_scan(map_factory, rotation: RotationNumber,
                      kappa_max: float,
                      settings: ContinuationSettings | None = None,
                      n_index: int | None = None,
                      threshold: float = CRITICAL_RESIDUE):
    """Residue trace past first breakup and its sub-threshold windows."""
    cont = continue_in_kappa(map_factory, rotation, kappa_max=kappa_max,
                             settings=settings, n_index=n_index,
                             past_critical=True)
    recs = [r for r in cont.records if r.provenance != "mpm"]
    windows = []
    above = False
    first_breakup = None
    enter = None
    for r in recs:
        over = abs(r.r_hyp) > threshold
        if over and first_breakup is None:
            first_breakup = r.kappa
        if first_breakup is None:
            continue
        if not over and not above:
            continue
        if over:
            if enter is not None:
                windows.append(ReoccurrenceWindow(enter, r.kappa))
                enter = None
            above = True
        elif above:  # dropped back below past the first breakup
            enter = r.kappa
            above = False
    if enter is not None:
        windows.append(ReoccurrenceWindow(enter, None))
    return cont, first_breakup, windows


def rescaled_comparison(records_a, kc_a: float, records_b, kc_b: float,
                        eta_a: float = 1.0, eta_b: float | None = None):
    """Residue traces over the scaled abscissa (kappa/kappa_c)^eta.

    When ``eta_b`` is None it is fitted by least-squares alignment of
    log10 |R| between the two families on the overlapping scaled range.
    Returns (trace_a, trace_b, eta_b) with traces as (u, |R|) arrays.
    """

    def trace(records, kc, eta):
        ks = np.array([r.kappa for r in records])
        rs = np.abs(np.array([r.r_hyp for r in records]))
        mask = rs > 0
        return (ks[mask] / kc) ** eta, rs[mask]

    ua, ra = trace(records_a, kc_a, eta_a)

    def misfit(eta):
        ub, rb = trace(records_b, kc_b, eta)
        lo = max(ua.min(), ub.min())
        hi = min(ua.max(), ub.max())
        if hi <= lo:
            return np.inf
        grid = np.linspace(lo, hi, 64)
        fa = np.interp(grid, ua, np.log10(ra))
        fb = np.interp(grid, ub, np.log10(rb))
        return float(np.mean((fa - fb) ** 2))

    if eta_b is None:
        lo_e, hi_e = 0.5, 1.5
        invphi = (np.sqrt(5.0) - 1.0) / 2.0
        c = hi_e - invphi * (hi_e - lo_e)
        d = lo_e + invphi * (hi_e - lo_e)
        fc, fd = misfit(c), misfit(d)
        for _ in range(48):
            if fc < fd:
                hi_e, d, fd = d, c, fc
                c = hi_e - invphi * (hi_e - lo_e)
                fc = misfit(c)
            else:
                lo_e, c, fc = c, d, fd
                d = lo_e + invphi * (hi_e - lo_e)
                fd = misfit(d)
        eta_b = 0.5 * (lo_e + hi_e)
    ub, rb = trace(records_b, kc_b, eta_b)
    return (ua, ra), (ub, rb), eta_b
