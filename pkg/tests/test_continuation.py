import math

import numpy as np
import pytest

from twistpo.continuation import (
    ContinuationSettings,
    continue_in_kappa,
    fibonacci_ladder,
    fibonacci_pair,
    find_critical_kappa,
    golden_rotation,
    reoccurrence_scan,
    rescaled_comparison,
    rhm_family,
    scan_critical_surface,
    standard_family,
)
from twistpo.curves import RotationNumber


def test_fibonacci_ladder_indexing():
    assert fibonacci_pair(5) == (5, 8)
    assert fibonacci_pair(11) == (89, 144)
    assert fibonacci_pair(16) == (987, 1597)
    assert fibonacci_pair(18) == (2584, 4181)
    assert fibonacci_pair(20) == (6765, 10946)
    ladder = fibonacci_ladder(5, 16)
    assert len(ladder) == 12
    golden = (math.sqrt(5) - 1) / 2
    for rot in ladder:
        assert math.gcd(rot.p, rot.q) == 1
    assert abs(ladder[-1].p / ladder[-1].q - golden) < 1e-6


def test_integrable_limit_residues_vanish():
    res = continue_in_kappa(standard_family, golden_rotation(5),
                            kappa_targets=[0.01], kappa_max=0.01)
    assert res.records, "a record at the target kappa is required"
    for r in res.records:
        assert abs(r.r_hyp) < 1e-9
        assert abs(r.r_ell) < 1e-9


def test_record_at_exact_target_with_monotone_residues():
    res = continue_in_kappa(standard_family, golden_rotation(5),
                            kappa_targets=["0.5"], kappa_max=0.5)
    kappas = [r.kappa for r in res.records]
    assert 0.5 in kappas
    ng = [r for r in res.records if r.provenance != "mpm"]
    rs = [abs(r.r_hyp) for r in ng]
    for a, b in zip(rs, rs[1:]):
        assert b >= a - 1e-12  # monotone growth before criticality
    final = [r for r in res.records if r.kappa == 0.5][0]
    assert final.r_hyp < 0 < final.r_ell
    assert final.e_hyp < 1e-28


def test_warm_start_independence_under_step_halving():
    rot = golden_rotation(5)
    sols = []
    for dk in (1e-2, 5e-3):
        settings = ContinuationSettings(dk_init=dk, dk_max=dk)
        res = continue_in_kappa(standard_family, rot, kappa_targets=["0.5"],
                                kappa_max=0.5, settings=settings)
        final = [r for r in res.records if r.kappa == 0.5][0]
        sols.append(final.x_hyp)
    diff = abs(float(sols[0] - sols[1]))
    assert diff < 1e-20


def test_find_critical_kappa_small_convergent():
    res = find_critical_kappa(standard_family, golden_rotation(6),
                              dk_tol=1e-7)
    # low-order approximants overshoot the asymptotic 0.971635 slightly
    assert 0.95 < res.kappa_c < 1.0
    assert res.r_hyp == pytest.approx(-0.2554, abs=2e-3)
    assert res.r_ell == pytest.approx(0.2501, abs=2e-3)


def test_no_reoccurrence_for_standard_map():
    cont, first, windows = reoccurrence_scan(standard_family,
                                             golden_rotation(5),
                                             kappa_max=1.35)
    assert first is not None and 0.9 < first < 1.05
    assert windows == []
    ng = [r for r in cont.records if r.provenance != "mpm"]
    assert abs(ng[-1].r_hyp) > 0.2554  # still super-critical at the end


def test_rescaled_comparison_identity_fit():
    res = continue_in_kappa(standard_family, golden_rotation(5),
                            kappa_targets=["0.5", "0.7", "0.9"],
                            kappa_max=0.9)
    ng = [r for r in res.records if r.provenance != "mpm"]
    (ua, ra), (ub, rb), eta = rescaled_comparison(ng, 0.9716, ng, 0.9716,
                                                  eta_a=1.0, eta_b=None)
    assert abs(eta - 1.0) < 0.02
    assert np.allclose(ra, rb)


@pytest.mark.slow
def test_tiny_critical_surface_beta_zero_column():
    # beta = 0 reduces to a phase-shifted standard map: kappa_c is
    # alpha-independent and equals the standard-map value at this N
    ref = find_critical_kappa(standard_family, golden_rotation(5),
                              dk_tol=1e-5)
    grid = scan_critical_surface([0.7, 2.1], [0.0], n_index=5, dk_tol=1e-5)
    ks = [c.kappa_c for c in grid.cells]
    assert all(np.isfinite(ks))
    assert abs(ks[0] - ks[1]) < 5e-4
    assert abs(ks[0] - ref.kappa_c) < 5e-4
    for c in grid.cells:
        assert c.stop_reason == "critical"
