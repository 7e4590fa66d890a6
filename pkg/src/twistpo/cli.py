"""Command-line entry points and bit-stable CSV/JSON outputs.

Every number that carries extended precision is serialized as a decimal
string with 34 significant digits (enough to round-trip the hi/lo pair);
identical configurations therefore produce byte-identical files.  Each
output embeds the 12-hex-digit hash of the canonical config JSON, and a
``manifest.json`` echoes the full configuration next to the data.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 partial
scan (some cells failed but the scan completed).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from twistpo import __version__
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
    standard_family,
)
from twistpo.curves import FourierCurve, RotationNumber
from twistpo.dd import DoubleDouble
from twistpo.errors import ConfigError, SolverFailure, TwistpoError
from twistpo.maps import make_map
from twistpo.parameterization import iterate_to_tolerance
from twistpo.shooting import OrbitSolution
from twistpo.symmetry import LINES, find_symmetric_orbit, points_on_symmetry_lines
from twistpo.tracking import profile

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PARTIAL = 0, 2, 3, 4
CSV_VERSION = "v1"


@dataclass
class RunConfig:
    command: str
    map: str = "standard"
    kappa: str = "0"
    alpha: str = "0"
    beta: str = "0"
    pq: str | None = None
    ladder: str | None = None
    kappa_max: str | None = None
    target_residue: float = 0.2554
    dk_tol: float = 1e-8
    eps_tilde: float = 1e-18
    ng_tol: float = 1e-28
    r_switch: float = 1e-8
    alpha_grid: str | None = None
    beta_grid: str | None = None
    n_index: int | None = None
    samples: int = 64
    out_dir: str = "."
    threads: int = field(
        default_factory=lambda: int(os.environ.get("TWISTPO_THREADS", "1")))
    seed: int = 0

    def canonical(self) -> str:
        """Scientific configuration only: where results go and how many
        threads compute them cannot change the numbers."""
        payload = asdict(self)
        payload.pop("out_dir", None)
        payload.pop("threads", None)
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]


def _parse_pq(text: str) -> RotationNumber:
    try:
        p_str, q_str = text.split("/")
        return RotationNumber(int(p_str), int(q_str))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad rotation number {text!r}: {exc}") from exc


def _parse_ladder(text: str) -> list[int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
        if lo < 2 or hi < lo:
            raise ValueError("need 2 <= N_min <= N_max")
        return list(range(lo, hi + 1))
    except ValueError as exc:
        raise ConfigError(f"bad ladder spec {text!r}: {exc}") from exc


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
        if n < 1 or hi <= lo:
            raise ValueError("need lo < hi and n >= 1")
        return np.linspace(lo, hi, n, endpoint=False)
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {text!r} (want lo:hi:n): {exc}") from exc


def _dd(s) -> DoubleDouble:
    try:
        return DoubleDouble.from_str(str(s))
    except Exception as exc:
        raise ConfigError(f"bad decimal literal {s!r}: {exc}") from exc


def _fmt(v) -> str:
    if isinstance(v, DoubleDouble):
        return v.to_decimal_str()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _map_factory(cfg: RunConfig):
    if cfg.map == "standard":
        return standard_family
    if cfg.map == "rhm":
        _validate_rhm(cfg)
        return rhm_family(cfg.alpha, cfg.beta)
    raise ConfigError(f"unknown map {cfg.map!r}")


def _validate_rhm(cfg: RunConfig):
    beta = _dd(cfg.beta)
    if abs(float(beta)) >= 1.0:
        raise ConfigError(f"|beta| must be < 1, got {cfg.beta}")


def _settings(cfg: RunConfig) -> ContinuationSettings:
    if cfg.eps_tilde <= 0 or cfg.ng_tol <= 0 or cfg.r_switch <= 0:
        raise ConfigError("tolerances must be positive")
    return ContinuationSettings(eps_tilde=cfg.eps_tilde, ng_tol=cfg.ng_tol,
                                r_switch=cfg.r_switch,
                                seed_profile_samples=cfg.samples)


class OutputWriter:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.dir = Path(cfg.out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)

    def write_manifest(self):
        payload = {"config": json.loads(self.cfg.canonical()),
                   "config_hash": self.cfg.digest(),
                   "version": __version__}
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return path

    def csv(self, name: str, schema: str, columns: list[str], rows,
            extra_header: list[str] | None = None) -> Path:
        path = self.dir / name
        lines = [f"# twistpo-csv {schema} {CSV_VERSION}",
                 f"# config={self.cfg.digest()}"]
        for h in extra_header or []:
            lines.append(f"# {h}")
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        path.write_text("\n".join(lines) + "\n")
        return path


def _compound_orbit(cfg: RunConfig, rot: RotationNumber):
    """Continuation to the requested kappa; returns the final record pair."""
    factory = _map_factory(cfg)
    settings = _settings(cfg)
    if float(_dd(cfg.kappa)) == 0.0:
        return None  # integrable: handled by the caller
    res = continue_in_kappa(factory, rot, kappa_targets=[cfg.kappa],
                            kappa_max=float(_dd(cfg.kappa)),
                            settings=settings)
    recs = [r for r in res.records if r.kappa == float(_dd(cfg.kappa))]
    if not recs:
        raise SolverFailure(
            f"continuation stopped early ({res.stop_reason}) at "
            f"kappa = {res.records[-1].kappa if res.records else 0.0}")
    return recs[-1]


def cmd_orbit(cfg: RunConfig) -> int:
    rot = _parse_pq(cfg.pq)
    writer = OutputWriter(cfg)
    if float(_dd(cfg.kappa)) == 0.0:
        x = DoubleDouble(0.0)
        print(f"map={cfg.map} pq={rot} kappa={cfg.kappa}")
        print("x=0.0E+0 E=0.0E+0 R=0.0E+0 stability=parabolic")
        writer.write_manifest()
        writer.csv("orbit.csv", "orbit", ["index", "x_mod1", "x_lift", "y"],
                   [(i, _fmt(DoubleDouble(0.0)), i * rot.p / rot.q, _fmt(rot.as_dd()))
                    for i in range(rot.q)],
                   extra_header=[f"map={cfg.map} kappa={cfg.kappa} pq={rot} "
                                 f"E=0 R=0"])
        return EXIT_OK
    rec = _compound_orbit(cfg, rot)
    print(f"map={cfg.map} pq={rot} kappa={cfg.kappa}")
    print(f"x={rec.x_hyp.to_decimal_str()} E={rec.e_hyp:.4e} "
          f"R_hyp={rec.r_hyp:.10e} R_ell={rec.r_ell:.10e}")
    writer.write_manifest()
    writer.csv("orbit.csv", "orbit-summary",
               ["kappa", "p", "q", "x_hyp", "E_hyp", "R_hyp", "R_ell"],
               [(cfg.kappa, rot.p, rot.q, rec.x_hyp, rec.e_hyp, rec.r_hyp,
                 rec.r_ell)])
    return EXIT_OK


def cmd_profile(cfg: RunConfig) -> int:
    rot = _parse_pq(cfg.pq)
    factory = _map_factory(cfg)
    settings = _settings(cfg)
    kap = float(_dd(cfg.kappa))
    curve = FourierCurve.integrable(rot)
    k = 0.0
    dk = settings.dk_init
    tmap = factory(cfg.kappa)
    while k < kap - 1e-15:
        k_next = min(k + dk, kap)
        step_map = factory(cfg.kappa) if k_next == kap else factory(k_next)
        res = iterate_to_tolerance(curve, step_map,
                                   eps_tilde=settings.eps_tilde,
                                   max_iter=settings.mpm_max_iter)
        curve = res.curve
        k = k_next
    prof = profile(curve, tmap, samples=cfg.samples)
    writer = OutputWriter(cfg)
    writer.write_manifest()
    path = writer.csv("profile.csv", "profile",
                      ["theta", "E_tilde", "R_tilde"],
                      zip(prof.thetas, prof.e_tilde, prof.r_tilde),
                      extra_header=[f"map={cfg.map} kappa={cfg.kappa} pq={rot}"])
    print(f"profile written: {path}")
    return EXIT_OK


def cmd_continue(cfg: RunConfig) -> int:
    ns = _parse_ladder(cfg.ladder)
    factory = _map_factory(cfg)
    settings = _settings(cfg)
    kmax = float(_dd(cfg.kappa_max))
    writer = OutputWriter(cfg)
    writer.write_manifest()
    rows = []
    for n in ns:
        rot = golden_rotation(n)
        res = continue_in_kappa(factory, rot, kappa_max=kmax,
                                settings=settings, n_index=n,
                                past_critical=True,
                                collect_curve_errors=True)
        for r in res.records:
            rows.append((r.kappa, n, r.r_hyp, r.r_ell,
                         max(r.e_hyp, r.e_ell), r.x_hyp, r.provenance))
    path = writer.csv("residues.csv", "residue-trace",
                      ["kappa", "N", "R_hyp", "R_ell", "E", "x",
                       "provenance"], rows,
                      extra_header=[f"map={cfg.map} alpha={cfg.alpha} "
                                    f"beta={cfg.beta}"])
    print(f"residue traces written: {path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_critical(cfg: RunConfig) -> int:
    ns = _parse_ladder(cfg.ladder) if cfg.ladder else [cfg.n_index]
    if not ns or ns[0] is None:
        raise ConfigError("critical needs --ladder or --N")
    factory = _map_factory(cfg)
    settings = _settings(cfg)
    writer = OutputWriter(cfg)
    writer.write_manifest()
    rows = []
    for n in ns:
        rot = golden_rotation(n)
        res = find_critical_kappa(factory, rot, target=cfg.target_residue,
                                  dk_tol=cfg.dk_tol, settings=settings,
                                  n_index=n)
        rows.append((n, rot.p, rot.q, res.kappa_c, res.r_hyp, res.r_ell))
        print(f"[N={n}] {rot}: kappa_c = {res.kappa_c:.9f} "
              f"R_hyp = {res.r_hyp:.6f} R_ell = {res.r_ell:.6f}")
    writer.csv("critical.csv", "critical-kappa",
               ["N", "p", "q", "kappa_c", "R_hyp", "R_ell"], rows,
               extra_header=[f"map={cfg.map} alpha={cfg.alpha} beta={cfg.beta} "
                             f"target={cfg.target_residue}"])
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    if cfg.map != "rhm":
        raise ConfigError("scan is defined for the rhm map")
    if cfg.n_index is None:
        raise ConfigError("scan needs --N")
    alphas = _parse_grid(cfg.alpha_grid or "0:3.141592653589793:4")
    betas = _parse_grid(cfg.beta_grid or "0:1:4")
    from twistpo.continuation import scan_critical_surface
    grid = scan_critical_surface(alphas, betas, n_index=cfg.n_index,
                                 dk_tol=cfg.dk_tol, settings=_settings(cfg),
                                 workers=cfg.threads)
    writer = OutputWriter(cfg)
    writer.write_manifest()
    rows = [(c.alpha, c.beta, cfg.n_index, c.kappa_c, c.stop_reason,
             int(c.flagged)) for c in grid.cells]
    path = writer.csv("surface.csv", "critical-surface",
                      ["alpha", "beta", "N", "kappa_c", "stop_reason",
                       "flagged"], rows)
    failed = sum(1 for c in grid.cells if not np.isfinite(c.kappa_c))
    print(f"surface written: {path} ({failed} failed cells)")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    rot = _parse_pq(cfg.pq)
    writer = OutputWriter(cfg)
    writer.write_manifest()
    rows = []
    for line in LINES:
        try:
            orb = find_symmetric_orbit(rot.p, rot.q, cfg.kappa, line)
        except SolverFailure as exc:
            rows.append((line, "failed", str(exc), "", "", ""))
            continue
        s = orb.solution
        rows.append((line, s.stability.value, orb.y, s.anchor_x,
                     s.error, float(s.residue)))
        print(f"{line:11s} {s.stability.value:10s} "
              f"x0={s.anchor_x.to_decimal_str(25)} R={float(s.residue):+.8e} "
              f"E={s.error:.2e} points_on_lines="
              f"{points_on_symmetry_lines(s)}")
    writer.csv("oracle.csv", "symmetry-oracle",
               ["line", "stability", "y", "x_anchor", "E", "R"], rows,
               extra_header=[f"kappa={cfg.kappa} pq={rot}"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="twistpo",
        description="High-order periodic orbits of twist maps and "
                    "residue-based criticality studies.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, pq=False, ladder=False, kmax=False):
        p.add_argument("--map", default="standard",
                       choices=("standard", "rhm"))
        p.add_argument("--kappa", default="0")
        p.add_argument("--alpha", default="0")
        p.add_argument("--beta", default="0")
        p.add_argument("--out", dest="out_dir", default=".")
        p.add_argument("--samples", type=int, default=64)
        p.add_argument("--eps-tilde", dest="eps_tilde", type=float,
                       default=1e-18)
        p.add_argument("--ng-tol", dest="ng_tol", type=float, default=1e-28)
        p.add_argument("--r-switch", dest="r_switch", type=float,
                       default=1e-8)
        if pq:
            p.add_argument("--pq", required=True)
        if ladder:
            p.add_argument("--ladder")
            p.add_argument("--N", dest="n_index", type=int)
        if kmax:
            p.add_argument("--kappa-max", dest="kappa_max", required=True)

    common(sub.add_parser("orbit", help="single compound-method solve"),
           pq=True)
    common(sub.add_parser("profile", help="error/residue profile CSV"),
           pq=True)
    common(sub.add_parser("continue", help="residue traces over kappa"),
           ladder=True, kmax=True)
    pc = sub.add_parser("critical", help="critical kappa per convergent")
    common(pc, ladder=True)
    pc.add_argument("--target", dest="target_residue", type=float,
                    default=0.2554)
    pc.add_argument("--dk-tol", dest="dk_tol", type=float, default=1e-8)
    ps = sub.add_parser("scan", help="critical surface over (alpha, beta)")
    common(ps, ladder=True)
    ps.add_argument("--alpha-grid", dest="alpha_grid")
    ps.add_argument("--beta-grid", dest="beta_grid")
    ps.add_argument("--dk-tol", dest="dk_tol", type=float, default=1e-6)
    common(sub.add_parser("oracle", help="symmetry-line cross-check"),
           pq=True)
    return ap


COMMANDS = {
    "orbit": cmd_orbit,
    "profile": cmd_profile,
    "continue": cmd_continue,
    "critical": cmd_critical,
    "scan": cmd_scan,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    kwargs = {k: v for k, v in vars(ns).items() if v is not None}
    cfg = RunConfig(**kwargs)
    if cfg.ladder is None and getattr(ns, "n_index", None) is not None:
        cfg.n_index = ns.n_index
    try:
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "detail": str(exc)}),
              file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, TwistpoError) as exc:
        print(json.dumps({"error": "solver", "detail": str(exc)}),
              file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
