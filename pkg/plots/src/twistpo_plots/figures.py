"""Figure builders over twistpo CSV schemas.

Each builder takes file paths and an output path, returns the output path,
and never recomputes physics: residue/error values are plotted as stored,
with logarithmic axes where magnitudes span decades.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # headless, deterministic backend
import matplotlib.pyplot as plt
import numpy as np

CRITICAL_RESIDUE = 0.2554


class SchemaError(ValueError):
    """CSV does not carry the expected twistpo schema."""


def read_csv(path, expected_schema: str):
    """Parse a twistpo CSV: returns (meta dict, columns dict of arrays).

    Numeric columns come back as float arrays; non-numeric ones as lists.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# twistpo-csv"):
        raise SchemaError(
            f"{path}: missing '# twistpo-csv {expected_schema} v1' header")
    parts = lines[0].split()
    schema = parts[2] if len(parts) > 2 else ""
    if schema != expected_schema:
        raise SchemaError(
            f"{path}: schema {schema!r}, expected {expected_schema!r}")
    meta = {"schema": schema}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.startswith("#"):
            text = line[1:].strip()
            if "=" in text and " " not in text.split("=", 1)[0]:
                key, val = text.split("=", 1)
                meta[key] = val
            continue
        body_start = i
        break
    if body_start is None:
        raise SchemaError(f"{path}: no column header found")
    names = lines[body_start].split(",")
    raw = [line.split(",") for line in lines[body_start + 1:] if line]
    cols: dict[str, object] = {}
    for j, name in enumerate(names):
        vals = [row[j] for row in raw]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = vals
    return meta, cols


def _finish(fig, out_path):
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def _warn_if_empty(ax, n, label):
    if n == 0:
        warnings.warn(f"{label}: no rows to plot; rendering empty axes")
        ax.text(0.5, 0.5, "no data", ha="center", va="center",
                transform=ax.transAxes)


def fig_profile(profile_csv, out_path):
    """Cycle error and conjugated residue over the fundamental interval."""
    _, cols = read_csv(profile_csv, "profile")
    theta = cols.get("theta", np.array([]))
    fig, ax_e = plt.subplots(figsize=(8, 4.5))
    _warn_if_empty(ax_e, len(theta), "profile")
    ax_r = ax_e.twinx()
    if len(theta):
        ax_e.semilogy(theta, np.maximum(cols["E_tilde"], 1e-320), "b-",
                      label=r"$\tilde{E}$")
        ax_r.plot(theta, cols["R_tilde"], "r-", label=r"$\tilde{R}$")
        ax_r.axhline(0.0, color="0.7", lw=0.5)
    ax_e.set_xlabel(r"$\theta$")
    ax_e.set_ylabel("cycle error (log)", color="b")
    ax_r.set_ylabel("conjugated residue", color="r")
    fig.tight_layout()
    return _finish(fig, out_path)


def fig_residue_trace(residues_csv, out_path, inset: bool = True,
                      kappa_inset_halfwidth: float = 0.01):
    """|R| of the hyperbolic branches vs kappa, one curve per N.

    The inset zooms on the pinch toward the critical residue where the
    curves for different N cross.
    """
    _, cols = read_csv(residues_csv, "residue-trace")
    fig, ax = plt.subplots(figsize=(8, 5))
    ks = cols.get("kappa", np.array([]))
    _warn_if_empty(ax, len(ks), "residue-trace")
    if len(ks):
        ns = cols["N"].astype(int)
        r = np.abs(cols["R_hyp"])
        for n in sorted(set(ns)):
            m = (ns == n) & (r > 0)
            ax.semilogy(ks[m], r[m], label=f"[{n}]")
        ax.axhline(CRITICAL_RESIDUE, color="k", ls=":", lw=0.8)
        if inset:
            crossings = []
            for n in sorted(set(ns)):
                m = (ns == n) & (r > 0)
                kk, rr = ks[m], r[m]
                above = np.nonzero(rr > CRITICAL_RESIDUE)[0]
                if len(above) and above[0] > 0:
                    crossings.append(kk[above[0]])
            if crossings:
                kc = float(np.median(crossings))
                axin = ax.inset_axes([0.55, 0.08, 0.42, 0.42])
                for n in sorted(set(ns)):
                    m = (ns == n) & (r > 0)
                    axin.semilogy(ks[m], r[m])
                axin.set_xlim(kc - kappa_inset_halfwidth,
                              kc + kappa_inset_halfwidth)
                axin.set_ylim(CRITICAL_RESIDUE / 1.6, CRITICAL_RESIDUE * 1.6)
                axin.axhline(CRITICAL_RESIDUE, color="k", ls=":", lw=0.8)
        ax.legend(fontsize=7, ncol=2)
    ax.set_xlabel(r"$\kappa$")
    ax.set_ylabel("|R| (log)")
    fig.tight_layout()
    return _finish(fig, out_path)


def fig_mpm_error(residues_csv, out_path):
    """Curve-stage cycle error vs kappa (rows with provenance 'mpm')."""
    _, cols = read_csv(residues_csv, "residue-trace")
    fig, ax = plt.subplots(figsize=(8, 5))
    ks = cols.get("kappa", np.array([]))
    prov = cols.get("provenance", [])
    mask = np.array([p == "mpm" for p in prov], dtype=bool) \
        if len(prov) else np.zeros(0, dtype=bool)
    _warn_if_empty(ax, int(mask.sum()), "mpm-error")
    if mask.any():
        ns = cols["N"].astype(int)
        es = cols["E"]
        for n in sorted(set(ns[mask])):
            m = mask & (ns == n) & (es > 0)
            ax.semilogy(ks[m], es[m], "o-", ms=2.5, label=f"[{n}]")
        ax.legend(fontsize=7, ncol=2)
    ax.set_xlabel(r"$\kappa$")
    ax.set_ylabel("curve-stage error (log)")
    fig.tight_layout()
    return _finish(fig, out_path)


def _surface_pivot(cols):
    alphas = np.unique(cols["alpha"])
    betas = np.unique(cols["beta"])
    grid = np.full((len(betas), len(alphas)), np.nan)
    for a, b, k in zip(cols["alpha"], cols["beta"], cols["kappa_c"]):
        i = int(np.argmin(np.abs(betas - b)))
        j = int(np.argmin(np.abs(alphas - a)))
        grid[i, j] = k
    return alphas, betas, grid


def fig_surface_heatmap(surface_csv, out_path):
    """kappa_c(alpha, beta) as a heatmap over the scanned half-domain."""
    _, cols = read_csv(surface_csv, "critical-surface")
    fig, ax = plt.subplots(figsize=(7, 5))
    _warn_if_empty(ax, len(cols.get("alpha", [])), "critical-surface")
    if len(cols.get("alpha", [])):
        alphas, betas, grid = _surface_pivot(cols)
        im = ax.pcolormesh(alphas, betas, grid, shading="nearest",
                           cmap="viridis")
        fig.colorbar(im, ax=ax, label=r"$\kappa_c$")
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$\beta$")
    fig.tight_layout()
    return _finish(fig, out_path)


def fig_surface_difference(surface_csv_a, surface_csv_b, out_path):
    """log10 |kappa_c difference| between two convergents' surfaces."""
    _, ca = read_csv(surface_csv_a, "critical-surface")
    _, cb = read_csv(surface_csv_b, "critical-surface")
    fig, ax = plt.subplots(figsize=(7, 5))
    _warn_if_empty(ax, len(ca.get("alpha", [])), "surface-difference")
    if len(ca.get("alpha", [])):
        alphas, betas, ga = _surface_pivot(ca)
        _, _, gb = _surface_pivot(cb)
        with np.errstate(divide="ignore", invalid="ignore"):
            diff = np.log10(np.abs(ga - gb))
        im = ax.pcolormesh(alphas, betas, diff, shading="nearest",
                           cmap="magma")
        fig.colorbar(im, ax=ax, label=r"$\log_{10}|\Delta\kappa_c|$")
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$\beta$")
    fig.tight_layout()
    return _finish(fig, out_path)


def fig_rescaled_comparison(residues_csv_a, kc_a, residues_csv_b, kc_b, eta_b,
                            out_path, eta_a: float = 1.0):
    """|R| of two families over the common abscissa (kappa/kappa_c)^eta."""
    _, ca = read_csv(residues_csv_a, "residue-trace")
    _, cb = read_csv(residues_csv_b, "residue-trace")
    fig, ax = plt.subplots(figsize=(8, 5))
    n_rows = len(ca.get("kappa", [])) + len(cb.get("kappa", []))
    _warn_if_empty(ax, n_rows, "rescaled-comparison")

    def plot(cols, kc, eta, style):
        if not len(cols.get("kappa", [])):
            return
        ns = cols["N"].astype(int)
        r = np.abs(cols["R_hyp"])
        for n in sorted(set(ns)):
            m = (ns == n) & (r > 0)
            ax.semilogy((cols["kappa"][m] / kc) ** eta, r[m], style, lw=1)

    plot(ca, kc_a, eta_a, "-")
    plot(cb, kc_b, eta_b, "--")
    ax.axhline(CRITICAL_RESIDUE, color="k", ls=":", lw=0.8)
    ax.set_xlabel(r"$(\kappa/\kappa_c)^{\eta}$")
    ax.set_ylabel("|R| (log)")
    fig.tight_layout()
    return _finish(fig, out_path)


FIGURE_FILES = {
    "profile.csv": ("profile", fig_profile),
    "residues.csv": ("residue-trace", fig_residue_trace),
    "surface.csv": ("critical-surface", fig_surface_heatmap),
}


def render_all(run_dir, out_dir=None) -> list[Path]:
    """Render every figure the run directory's CSVs support."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir / "figs"
    produced = []
    for name, (_schema, builder) in FIGURE_FILES.items():
        src = run_dir / name
        if src.exists():
            produced.append(builder(src, out_dir / (src.stem + ".png")))
    if (run_dir / "residues.csv").exists():
        produced.append(fig_mpm_error(run_dir / "residues.csv",
                                      out_dir / "mpm_error.png"))
    return produced
