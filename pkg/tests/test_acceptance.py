"""End-to-end reproduction of the published orbit data and criticality values.

One test per acceptance criterion, each printing a PASS/FAIL line into the
terminal summary (see conftest).  Expensive pipelines are cached on disk in
``tests/_acceptance_cache``; delete the directory (or set
TWISTPO_ACCEPT_CACHE=0) for a from-scratch run.

Run with:  pytest tests/test_acceptance.py -v
"""

import math

import numpy as np
import pytest

from conftest import cache_get, cache_put, record_criterion
from twistpo.continuation import (
    CRITICAL_RESIDUE,
    ContinuationSettings,
    continue_in_kappa,
    find_critical_kappa,
    golden_rotation,
    refine_at_kappa,
    reoccurrence_scan,
    rescaled_comparison,
    rhm_family,
    scan_critical_surface,
    standard_family,
)
from twistpo.curves import RotationNumber
from twistpo.dd import DoubleDouble
from twistpo.maps import Point2, RationalHarmonicMap, StandardMap
from twistpo.shooting import ShootingState, refine, seed_orbit
from twistpo.symmetry import find_orbits_all_lines
from twistpo.shooting import Stability

pytestmark = pytest.mark.acceptance


# --- published reference values ------------------------------------------------

TABLE1 = {  # N: (x of hyperbolic point nearest 0, R to the printed digits)
    5:  ("1.04262381263415710544e-01", "-2.3618e-01"),
    6:  ("7.2292421040641022513e-02",  "-2.1396e-01"),
    7:  ("5.06992260762055879603e-02", "-1.9779e-01"),
    8:  ("3.5022447826195364453e-02",  "-1.6521e-01"),
    9:  ("2.4048789198498598295e-02",  "-1.2748e-01"),
    10: ("1.62171825022147208409e-02", "-8.2110e-02"),
    11: ("1.0731773004662365072e-02",  "-4.0823e-02"),
    12: ("6.9344882456917456713e-03",  "-1.3101e-02"),
    13: ("4.39068507873134101191e-03", "-2.0969e-03"),
    14: ("2.74217144026659842688e-03", "-1.0800e-04"),
    15: ("1.70222914399736324091e-03", "-8.9147e-07"),
    16: ("1.05402094177906953965e-03", "-3.7914e-10"),
}

TABLE2 = {  # N: (x, R) of the shooting-refined rows; 144/233 resolves the
    # ladder (the printed "144/223" is incompatible with the published x/R)
    6:  ("9.84194430418146115882e-01", "-2.1777e-01"),
    8:  ("9.97722363363172234098e-01", "-1.8095e-01"),
    12: ("4.54519288406945185848e-04", "-2.5599e-02"),
    20: ("1.236939703348994242120533769e-02", "-2.0985e-24"),
}

STD_KAPPA_C = 0.971635046
RHM_KAPPA_C = 1.73360453
R_HYP_CRIT = -0.255426
R_ELL_CRIT = 0.2500888


# --- cached pipelines ------------------------------------------------------------


def _serialize_state(st: ShootingState):
    return {"p": st.p, "q": st.q, "x": st.x.tolist(), "y": st.y.tolist(),
            "wind": st.wind.tolist()}


def _restore_state(d) -> ShootingState:
    return ShootingState(p=d["p"], q=d["q"], x=np.array(d["x"]),
                         y=np.array(d["y"]),
                         wind=np.array(d["wind"], dtype=np.int64))


def _serialize_records(records):
    return [{"kappa": r.kappa, "r_hyp": r.r_hyp, "r_ell": r.r_ell,
             "e_hyp": r.e_hyp, "e_ell": r.e_ell,
             "x": [r.x_hyp.hi, r.x_hyp.lo], "prov": r.provenance}
            for r in records]


def _ladder_run(family_key: str, n: int, targets: tuple[str, ...],
                keep_states=True):
    key = f"run_{family_key}_N{n}_" + "_".join(targets)
    cached = cache_get(key)
    if cached is not None:
        cached["states"] = {float(k): {b: _restore_state(s)
                                       for b, s in v.items()}
                            for k, v in cached["states"].items()}
        return cached
    factory = {
        "std": standard_family,
        "rhm_3.0_0.4": rhm_family("3.0", "0.4"),
        "rhm_2.5_0.37": rhm_family("2.5", "0.37"),
    }[family_key]
    res = continue_in_kappa(factory, golden_rotation(n),
                            kappa_targets=list(targets),
                            kappa_max=float(targets[-1]), n_index=n,
                            keep_states=keep_states)
    payload = {
        "stop": res.stop_reason,
        "records": _serialize_records(res.records),
        "states": {str(k): {"hyp": _serialize_state(v.hyp),
                            "ell": _serialize_state(v.ell)}
                   for k, v in (res.states_at or {}).items()},
    }
    cache_put(key, payload)
    payload = dict(payload)
    payload["states"] = {float(k): {b: _restore_state(s)
                                    for b, s in v.items()}
                         for k, v in payload["states"].items()}
    return payload


def _record_at(run, kappa: float):
    recs = [r for r in run["records"] if abs(r["kappa"] - kappa) < 1e-12]
    assert recs, f"no record at kappa={kappa} (stop={run['stop']})"
    return recs[-1]


def _fold(x: DoubleDouble) -> DoubleDouble:
    return x if float(x) < 0.5 else DoubleDouble(1.0) - x


def _critical_run(family_key: str, n: int, dk_tol=1e-8):
    key = f"crit_{family_key}_N{n}_{dk_tol:g}"
    cached = cache_get(key)
    if cached is not None:
        return cached
    factory = {"std": standard_family,
               "rhm_3.0_0.4": rhm_family("3.0", "0.4")}[family_key]
    res = find_critical_kappa(factory, golden_rotation(n), dk_tol=dk_tol,
                              n_index=n)
    payload = {"kappa_c": res.kappa_c, "r_hyp": res.r_hyp, "r_ell": res.r_ell}
    cache_put(key, payload)
    return payload


# --- criterion 1: Table of standard-map orbits at kappa = 0.96 -----------------


def test_table1_standard_map_kappa_096():
    failures = []
    detail = []
    for n, (x_ref, r_ref) in TABLE1.items():
        run = _ladder_run("std", n, ("0.5", "0.9", "0.96"))
        rec = _record_at(run, 0.96)
        x = _fold(DoubleDouble(*rec["x"]))
        ref = DoubleDouble.from_str(x_ref)
        x_rel = abs(float((x - ref) / ref))
        r_rel = abs(rec["r_hyp"] - float(r_ref)) / abs(float(r_ref))
        ok = x_rel < 5e-15 and rec["e_hyp"] < 1e-28 and r_rel < 5e-4
        detail.append(f"[{n}]: x_rel={x_rel:.1e} E={rec['e_hyp']:.1e} "
                      f"R_rel={r_rel:.1e}")
        if not ok:
            failures.append(detail[-1])
    record_criterion("Table 1 (standard map, kappa=0.96, 12 rows)",
                     not failures,
                     f"worst x_rel={max(float(d.split('x_rel=')[1].split()[0]) for d in detail):.1e}")
    assert not failures, "\n".join(failures)


# --- criterion 2: Table of RHM orbits at kappa = 1.7150 -------------------------


def test_table2_rhm_spot_checks():
    failures = []
    details = []
    for n, (x_ref, r_ref) in TABLE2.items():
        run = _ladder_run("rhm_3.0_0.4", n, ("1.7150",))
        rec = _record_at(run, 1.7150)
        x = _fold(DoubleDouble(*rec["x"]))
        ref = _fold(DoubleDouble.from_str(x_ref))
        x_rel = abs(float((x - ref) / ref))
        r_rel = abs(rec["r_hyp"] - float(r_ref)) / abs(float(r_ref))
        ok = x_rel < 5e-15 and r_rel < 5e-4
        details.append(f"[{n}]: x_rel={x_rel:.2e} R_rel={r_rel:.2e} "
                       f"prov={rec['prov']}")
        if not ok:
            failures.append(details[-1])
    record_criterion("Table 2 (RHM kappa=1.7150, rows 8/13 21/34 144/233 "
                     "6765/10946)", not failures, "; ".join(details[-2:]))
    assert not failures, "\n".join(details)


# --- criterion 3: profile-figure residues for RHM (2.5, 0.37), 55/89 ------------


def _fig2_pair(kappa: str):
    key = f"fig2_{kappa}"
    cached = cache_get(key)
    if cached is None:
        hyp, ell = refine_at_kappa(rhm_family("2.5", "0.37"),
                                   golden_rotation(10), kappa)
        cached = {"r_hyp": float(hyp.residue), "r_ell": float(ell.residue)}
        cache_put(key, cached)
    return cached


def test_fig2_refined_residues():
    """Published caption values, asserted as stated.

    Independent 350-bit refinements of the same orbits give
    R(0.4) = -+5.6321246976e-19 and R(0.9) = -0.0179712253 / +0.0179412835;
    the caption's kappa=0.9 hyperbolic value matches ours to all printed
    digits, but its elliptic entry repeats the hyperbolic magnitude and its
    kappa=0.4 values sit 7% off the verified residues of the stated map.
    The assertions keep the published numbers (see the decisions ledger);
    the expected mismatches are marked below.
    """
    r04 = _fig2_pair("0.4")
    r09 = _fig2_pair("0.9")
    # kappa = 0.4: refined residues -+5.25e-19 to two significant digits
    ok_04 = (abs(r04["r_hyp"] + 5.25e-19) < 0.02 * 5.25e-19
             and abs(r04["r_ell"] - 5.25e-19) < 0.02 * 5.25e-19)
    # kappa = 0.9: -+0.01797122 to five decimal places
    ok_09_hyp = abs(r09["r_hyp"] + 0.01797122) < 1e-5
    ok_09_ell = abs(r09["r_ell"] - 0.01797122) < 1e-5
    record_criterion(
        "Fig.2 residues (RHM 2.5/0.37, 55/89)",
        ok_04 and ok_09_hyp and ok_09_ell,
        f"measured R(0.4)={r04['r_hyp']:.4e}/{r04['r_ell']:.4e} "
        f"(350-bit oracle -+5.6321e-19), "
        f"R(0.9)={r09['r_hyp']:.8f}/{r09['r_ell']:.8f} "
        f"(350-bit oracle -0.01797123/+0.01794128)")
    assert ok_09_hyp, r09  # reproducible caption value
    assert ok_04, r04      # expected red: caption 7% off the verified value
    assert ok_09_ell, r09  # expected red: caption repeats the hyp magnitude


# --- criteria 4/5: Greene criticality -------------------------------------------


def test_std_map_criticality():
    results = {n: _critical_run("std", n) for n in range(14, 19)}
    failures = []
    for n, res in results.items():
        ok = (abs(res["kappa_c"] - 0.971635) < 5e-5
              and abs(res["r_hyp"] - (-0.2554)) < 2e-3
              and abs(res["r_ell"] - 0.2501) < 2e-3)
        if not ok:
            failures.append(f"[{n}]: kappa_c={res['kappa_c']:.7f} "
                            f"R={res['r_hyp']:.5f}/{res['r_ell']:.5f}")
    kcs = [results[n]["kappa_c"] for n in sorted(results)]
    record_criterion("Greene criticality, standard map (N=14..18)",
                     not failures,
                     f"kappa_c range [{min(kcs):.7f}, {max(kcs):.7f}]")
    assert not failures, failures


def test_rhm_criticality():
    results = {n: _critical_run("rhm_3.0_0.4", n) for n in range(14, 19)}
    failures = []
    for n, res in results.items():
        ok = (abs(res["kappa_c"] - 1.7336) < 5e-4
              and abs(abs(res["r_hyp"]) - CRITICAL_RESIDUE) < 5e-3)
        if not ok:
            failures.append(f"[{n}]: kappa_c={res['kappa_c']:.7f} "
                            f"R={res['r_hyp']:.5f}")
    gaps = {n: abs(results[n + 1]["kappa_c"] - results[n]["kappa_c"])
            for n in (16, 17)}
    for n, gap in gaps.items():
        if gap >= 1e-4:
            failures.append(f"gap [{n}] -> [{n + 1}] = {gap:.2e}")
    record_criterion("RHM criticality at (3.0, 0.4) (N=14..18)",
                     not failures,
                     "gaps " + ", ".join(f"{n}->{n+1}: {g:.1e}"
                                         for n, g in gaps.items()))
    assert not failures, failures


# --- criterion 6: symmetry-line oracle vs compound method -----------------------


def _oracle_orbits(n: int, kappa: str):
    key = f"oracle_N{n}_{kappa}"
    cached = cache_get(key)
    if cached is not None:
        return {k: _restore_state(v) for k, v in cached.items()}
    rot = golden_rotation(n)
    orbits = find_orbits_all_lines(rot.p, rot.q, kappa)
    by_stab = {}
    for orb in orbits:
        r = float(orb.solution.residue)
        if r < 0 and ("hyp" not in by_stab
                      or r < float(by_stab["hyp"][1])):
            by_stab["hyp"] = (orb.solution.state, r)
        if r > 0 and ("ell" not in by_stab
                      or r > float(by_stab["ell"][1])):
            by_stab["ell"] = (orb.solution.state, r)
    states = {k: v[0] for k, v in by_stab.items()}
    cache_put(key, {k: _serialize_state(v) for k, v in states.items()})
    return states


def _point_set_distance(a: ShootingState, b: ShootingState) -> float:
    """max over a's points of the dd distance to the nearest b point."""
    worst = 0.0
    bx = b.x
    by = b.y
    for i in range(a.q):
        best = np.inf
        for j in range(b.q):
            dx = (DoubleDouble(a.x[i, 0], a.x[i, 1])
                  - DoubleDouble(bx[j, 0], bx[j, 1])).mod1()
            dxf = min(float(dx), 1.0 - float(dx))
            dyf = float(DoubleDouble(a.y[i, 0], a.y[i, 1])
                        - DoubleDouble(by[j, 0], by[j, 1]))
            d = math.hypot(dxf, dyf)
            if d < best:
                best = d
        worst = max(worst, best)
    return worst


def test_oracle_equivalence():
    kappas = ("0.5", "0.9", "0.96")
    failures = []
    checked = 0
    for n in range(5, 17):
        run = _ladder_run("std", n, kappas)
        for kap in kappas:
            rec = _record_at(run, float(kap))
            states = run["states"].get(float(kap))
            oracle = _oracle_orbits(n, kap)
            if "hyp" not in oracle or states is None:
                failures.append(f"[{n}]@{kap}: missing orbit "
                                f"(prov={rec['prov']})")
                continue
            tmap = StandardMap(kap)
            from twistpo.shooting import orbit_residue
            r_o, _ = orbit_residue(oracle["hyp"], tmap)
            dist = _point_set_distance(oracle["hyp"], states["hyp"])
            r_c = rec["r_hyp"]
            rel = abs(float(r_o) - r_c) / max(abs(r_c), 1e-300)
            checked += 1
            if dist > 1e-24 or rel > 1e-20:
                failures.append(f"[{n}]@{kap}: point dist {dist:.2e}, "
                                f"R rel diff {rel:.2e}")
    record_criterion("Oracle equivalence (N=5..16, kappa in 0.5/0.9/0.96)",
                     not failures,
                     f"{checked} cells checked, {len(failures)} failed")
    assert not failures, "\n".join(failures)


# --- criterion 7: property suite -------------------------------------------------


def test_property_suite():
    import mpmath
    from twistpo.fft import complex_dd, fft_forward, fft_inverse
    from twistpo.curves import solve_cohomology, cohomology_operator
    from twistpo.fft import modes_to_field
    from twistpo.maps import jac_grid
    from twistpo.dd import _SECTOR, _SIN_COEF, _COS_COEF
    from twistpo.shooting import (closure_error, newton_gauss_step,
                                  structured_solve, orbit_residue)

    checks = {}

    # FFT round trip <= 1e-26
    rng = np.random.default_rng(1)
    z = complex_dd(4096)
    z[:, 0] = rng.standard_normal(4096)
    z[:, 2] = rng.standard_normal(4096)
    back = fft_inverse(fft_forward(z))
    err = np.max(np.abs((back[:, 0] + back[:, 1]) - (z[:, 0] + z[:, 1])))
    checks["fft_round_trip"] = err / np.max(np.abs(z[:, 0])) < 1e-26

    # cohomology operator identity <= 1e-26
    rot = RotationNumber(5, 8)
    eta = complex_dd(256)
    for k in range(1, 100):
        if k % 8 == 0:
            continue
        eta[k, 0] = rng.normal() * 256 / (1 + k)
        eta[256 - k, 0] = eta[k, 0]
    phi, _ = solve_cohomology(eta, rot)
    back_m = cohomology_operator(phi, rot)
    g_eta = modes_to_field(eta)
    g_back = modes_to_field(back_m)
    err = np.max(np.abs((g_back[:, 0] + g_back[:, 1])
                        - (g_eta[:, 0] + g_eta[:, 1])))
    checks["cohomology_identity"] = err < 1e-26 * np.max(np.abs(g_eta[:, 0]))

    # Jacobian symplecticity <= 1e-28
    m = RationalHarmonicMap("1.7", "3.0", "0.4")
    xs = np.zeros((512, 2))
    xs[:, 0] = rng.uniform(0, 1, 512)
    jac = np.empty((512, 4, 2))
    jac_grid(m.map_id, m.params, xs, jac, _SECTOR, _SIN_COEF, _COS_COEF)
    worst = 0.0
    for i in range(512):
        det = (DoubleDouble(jac[i, 0, 0], jac[i, 0, 1])
               * DoubleDouble(jac[i, 3, 0], jac[i, 3, 1])
               - DoubleDouble(jac[i, 1, 0], jac[i, 1, 1])
               * DoubleDouble(jac[i, 2, 0], jac[i, 2, 1]))
        worst = max(worst, abs(float(det - DoubleDouble(1.0))))
    checks["symplecticity"] = worst < 1e-28

    # Newton-Gauss quadratic slope in [1.8, 2.2]
    ms = StandardMap("0.96")
    seed = Point2(DoubleDouble.from_str("0.8957376187365842894558486")
                  + DoubleDouble(1e-4),
                  DoubleDouble.from_str("0.5543897886770357179877042"))
    st = seed_orbit(seed, ms, 5, 8)
    errs = [float(closure_error(st, ms))]
    for _ in range(6):
        st, _info = newton_gauss_step(st, ms)
        errs.append(float(closure_error(st, ms)))
    pairs = [(a, b) for a, b in zip(errs, errs[1:]) if 1e-29 < b < a < 1e-2]
    slope = float(np.mean([np.log(b) / np.log(a) for a, b in pairs]))
    checks["ng_quadratic_slope"] = 1.8 <= slope <= 2.2

    # structured = dense at q <= 16 (within 1e-22)
    from test_shooting import dense_solve_dd, rand_sympl_blocks
    for q in (8, 16):
        dt = rand_sympl_blocks(q, seed=q)
        e = np.zeros((2 * q, 2))
        e[:, 0] = rng.standard_normal(2 * q) * 1e-3
        dense = dense_solve_dd(dt.copy(), e.copy())
        delta, _, _ = structured_solve(dt.copy(), e.copy())
        worst = max(abs((delta[i, 0] + delta[i, 1]) - float(dense[i]))
                    for i in range(2 * q))
        checks[f"structured_vs_dense_q{q}"] = worst < 1e-22

    # monodromy det at q = 1597 within 1e-24 (from the Table-1 end state)
    run = _ladder_run("std", 16, ("0.5", "0.9", "0.96"))
    st1597 = run["states"][0.96]["hyp"]
    _, det = orbit_residue(st1597, StandardMap("0.96"))
    checks["monodromy_det_q1597"] = abs(float(det) - 1.0) < 1e-24

    # analytic residues: fixed point kappa/4, period-2 kappa^2/4
    sol_fp = refine(Point2(DoubleDouble(1e-3), DoubleDouble(1e-3)),
                    ms, 0, 1, tol=1e-28)
    kd = DoubleDouble.from_str("0.96")
    checks["fixed_point_residue"] = \
        abs(float(sol_fp.residue - kd / 4)) < 1e-28
    sol_p2 = refine(Point2(DoubleDouble(1e-4), DoubleDouble(0.5001)),
                    ms, 1, 2, tol=1e-28)
    checks["period2_residue"] = \
        abs(float(sol_p2.residue - kd * kd / 4)) < 1e-28

    bad = [k for k, ok in checks.items() if not ok]
    record_criterion("Property suite (7 invariants)", not bad,
                     "all ok" if not bad else f"failed: {bad}")
    assert not bad, bad


# --- criterion 8: desk-scale substitutions ---------------------------------------


def test_coarse_critical_surface():
    alphas = np.linspace(0.0, np.pi, 4, endpoint=False)
    betas = np.array([0.0, 0.2, 0.4])
    grid_key = "surface_4x3_N6"
    cached = cache_get(grid_key)
    if cached is None:
        grid = scan_critical_surface(alphas, betas, n_index=6, dk_tol=1e-5)
        cached = [{"alpha": c.alpha, "beta": c.beta, "kappa_c": c.kappa_c,
                   "stop": c.stop_reason} for c in grid.cells]
        cache_put(grid_key, cached)
    kcs = {(round(c["alpha"], 6), round(c["beta"], 6)): c["kappa_c"]
           for c in cached}
    finite = [v for v in kcs.values() if np.isfinite(v)]
    ok_cover = len(finite) == len(cached)
    # beta = 0 column: alpha-independent (shifted standard map)
    col0 = [v for (a, b), v in kcs.items() if b == 0.0]
    ok_beta0 = max(col0) - min(col0) < 1e-3
    record_criterion("Coarse critical surface (4x3 cells, N=6)",
                     ok_cover and ok_beta0,
                     f"beta0 spread {max(col0) - min(col0):.1e}")
    assert ok_cover and ok_beta0


def test_reoccurrence_window_rhm():
    key = "reoccurrence_rhm_N8"
    cached = cache_get(key)
    if cached is None:
        cont, first, windows = reoccurrence_scan(
            rhm_family("3.0", "0.4"), golden_rotation(8), kappa_max=2.3,
            n_index=8)
        cached = {"first": first,
                  "windows": [[w.kappa_enter, w.kappa_exit] for w in windows],
                  "trace": [[r.kappa, r.r_hyp] for r in cont.records
                            if r.provenance != "mpm"]}
        cache_put(key, cached)
    first = cached["first"]
    windows = cached["windows"]
    ok = first is not None and len(windows) >= 1
    # qualitative: a sub-critical window exists past the first breakup,
    # overlapping the reported reoccurrence range
    overlap = any(w[0] < 2.25 and (w[1] is None or w[1] > 1.41)
                  for w in windows)
    record_criterion("Reoccurrence window past breakup (RHM 3.0/0.4)",
                     ok and overlap,
                     f"first breakup {first}, windows {windows}")
    assert ok and overlap, (first, windows)


def test_rescaled_comparison_eta():
    run_std = [r for n in (11, 12, 13)
               for r in _ladder_run("std", n, ("0.5", "0.9", "0.96"))["records"]
               if r["prov"] != "mpm"]
    run_rhm = [r for n in (11, 12, 13)
               for r in _ladder_run("rhm_3.0_0.4", n, ("1.7150",))["records"]
               if r["prov"] != "mpm"]

    class R:
        def __init__(self, d):
            self.kappa = d["kappa"]
            self.r_hyp = d["r_hyp"]

    (ua, ra), (ub, rb), eta = rescaled_comparison(
        [R(r) for r in run_std], 0.9716354,
        [R(r) for r in run_rhm], RHM_KAPPA_C, eta_b=None)
    # reported, not strictly asserted: the fitted exponent should land in a
    # sane band around the published 0.885
    ok = 0.6 < eta < 1.2 and len(ua) and len(ub)
    record_criterion("Rescaled comparison (eta fit, reported)", ok,
                     f"eta_fit = {eta:.3f} (published 0.885)")
    assert ok
