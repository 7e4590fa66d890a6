"""``render_figs <run_dir>``: all figures a run directory supports."""

from __future__ import annotations

import argparse
import sys

from twistpo_plots.figures import SchemaError, render_all


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="render_figs",
        description="Render figures from a twistpo run directory.")
    ap.add_argument("run_dir")
    ap.add_argument("--out", default=None, help="output directory "
                    "(default: <run_dir>/figs)")
    ns = ap.parse_args(argv)
    try:
        produced = render_all(ns.run_dir, ns.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    if not produced:
        print("no recognised CSV files found", file=sys.stderr)
        return 1
    for path in produced:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
