import numpy as np
import pytest

from twistpo_plots import (
    SchemaError,
    fig_mpm_error,
    fig_profile,
    fig_rescaled_comparison,
    fig_residue_trace,
    fig_surface_difference,
    fig_surface_heatmap,
    read_csv,
    render_all,
)


def write_profile(path, n=64):
    theta = np.arange(n) / (n * 89)
    e = 1e-20 + 1e-18 * np.sin(2 * np.pi * 89 * theta) ** 2
    r = 1.8e-2 * np.sin(2 * np.pi * 89 * theta)
    lines = ["# twistpo-csv profile v1", "# config=abcdef123456",
             "# map=rhm kappa=0.9 pq=55/89", "theta,E_tilde,R_tilde"]
    for t, ee, rr in zip(theta, e, r):
        lines.append(f"{float(t)!r},{float(ee)!r},{float(rr)!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_residues(path, kcs=(0.9716,), n_list=(11, 12, 13), provenance=True):
    lines = ["# twistpo-csv residue-trace v1", "# config=abcdef123456",
             "kappa,N,R_hyp,R_ell,E,x,provenance"]
    for n in n_list:
        for k in np.linspace(0.3, 1.05, 40):
            r = -min(0.4, (k / kcs[0]) ** (1.6 ** n))
            prov = "mpm" if abs(r) < 1e-8 else "warm-start"
            lines.append(
                f"{float(k)!r},{n},{float(r)!r},{float(-r)!r},{1e-30!r},"
                f"1.0402E-1,{prov}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_surface(path, offset=0.0):
    lines = ["# twistpo-csv critical-surface v1", "# config=abcdef123456",
             "alpha,beta,N,kappa_c,stop_reason,flagged"]
    for a in np.linspace(0, 3.0, 4):
        for b in np.linspace(0, 0.75, 4):
            kc = 0.97 + 0.8 * (1 - b) + 0.05 * np.cos(a) + offset
            lines.append(f"{float(a)!r},{float(b)!r},19,{float(kc)!r},critical,0")
    path.write_text("\n".join(lines) + "\n")
    return path


def test_read_csv_meta_and_columns(tmp_path):
    p = write_profile(tmp_path / "profile.csv")
    meta, cols = read_csv(p, "profile")
    assert meta["config"] == "abcdef123456"
    assert set(cols) == {"theta", "E_tilde", "R_tilde"}
    assert len(cols["theta"]) == 64


def test_schema_mismatch_is_loud(tmp_path):
    p = write_profile(tmp_path / "profile.csv")
    with pytest.raises(SchemaError) as err:
        read_csv(p, "residue-trace")
    assert "residue-trace" in str(err.value)


def test_profile_figure(tmp_path):
    p = write_profile(tmp_path / "profile.csv")
    out = fig_profile(p, tmp_path / "figs" / "profile.png")
    assert out.exists() and out.stat().st_size > 0


def test_residue_trace_with_inset(tmp_path):
    p = write_residues(tmp_path / "residues.csv")
    out = fig_residue_trace(p, tmp_path / "residues.png")
    assert out.exists() and out.stat().st_size > 0


def test_mpm_error_figure(tmp_path):
    p = write_residues(tmp_path / "residues.csv")
    out = fig_mpm_error(p, tmp_path / "mpm.png")
    assert out.exists()


def test_heatmap_and_difference(tmp_path):
    a = write_surface(tmp_path / "surface_a.csv")
    b = write_surface(tmp_path / "surface_b.csv", offset=3e-6)
    out1 = fig_surface_heatmap(a, tmp_path / "surf.png")
    out2 = fig_surface_difference(a, b, tmp_path / "diff.png")
    assert out1.exists() and out2.exists()


def test_rescaled_comparison(tmp_path):
    a = write_residues(tmp_path / "std.csv")
    b = write_residues(tmp_path / "rhm.csv", kcs=(1.7336,))
    out = fig_rescaled_comparison(a, 0.9716354, b, 1.73360453, 0.885,
                                  tmp_path / "cmp.png")
    assert out.exists()


def test_empty_trace_warns_but_renders(tmp_path):
    p = tmp_path / "profile.csv"
    p.write_text("# twistpo-csv profile v1\n# config=x\n"
                 "theta,E_tilde,R_tilde\n")
    with pytest.warns(UserWarning):
        out = fig_profile(p, tmp_path / "empty.png")
    assert out.exists()


def test_render_all_from_run_dir(tmp_path):
    write_profile(tmp_path / "profile.csv")
    write_residues(tmp_path / "residues.csv")
    write_surface(tmp_path / "surface.csv")
    produced = render_all(tmp_path)
    names = {p.name for p in produced}
    assert {"profile.png", "residues.png", "surface.png",
            "mpm_error.png"} <= names


def test_render_is_deterministic(tmp_path):
    p = write_profile(tmp_path / "profile.csv")
    out1 = fig_profile(p, tmp_path / "a.png").read_bytes()
    out2 = fig_profile(p, tmp_path / "b.png").read_bytes()
    assert out1 == out2


def test_cli_entry(tmp_path, capsys):
    from twistpo_plots.cli import main
    write_profile(tmp_path / "profile.csv")
    rc = main([str(tmp_path)])
    assert rc == 0
    assert "profile.png" in capsys.readouterr().out
