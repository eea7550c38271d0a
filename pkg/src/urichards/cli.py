"""Command-line entry point ``urichards``.

    urichards solve <config.json> --out <dir> [--scheme S] [--dt DT] [--mesh-n N] [--quiet]
    urichards convergence <config.json> --axis space|time --levels K [--out DIR]
    urichards list

``<config.json>`` may also be the name of a shipped fixture. The number of
worker processes for convergence levels comes from ``URICHARDS_THREADS``.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import scenario as sc
from .schemes import SCHEMES

log = logging.getLogger("urichards")


def _parser():
    p = argparse.ArgumentParser(prog="urichards", description="Richards equation solver in the bounded u variable.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run a scenario and write its outputs")
    s.add_argument("config", help="scenario JSON file or fixture name")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--scheme", choices=SCHEMES)
    s.add_argument("--dt", type=float)
    s.add_argument("--mesh-n", type=int, dest="mesh_n")
    s.add_argument("--quiet", action="store_true")

    c = sub.add_parser("convergence", help="manufactured-solution convergence study")
    c.add_argument("config")
    c.add_argument("--axis", choices=("space", "time"), required=True)
    c.add_argument("--levels", type=int, required=True)
    c.add_argument("--out", default=".")
    c.add_argument("--quiet", action="store_true")

    sub.add_parser("list", help="names of the shipped scenarios")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format="%(levelname)s %(message)s")
    if args.command == "list":
        for name in sc.list_scenarios():
            print(name)
        return 0
    try:
        runs = sc.parse_scenario(sc.resolve_config(args.config))
        if args.command == "solve":
            if args.mesh_n is not None and args.mesh_n < 1:
                raise sc.ScenarioError("--mesh-n must be positive")
            results = sc.run_all(runs, args.out, quiet=quiet, scheme=args.scheme, dt=args.dt, mesh_n=args.mesh_n)
            for r in results:
                line = f"{r.outdir}: {r.summary['status']}"
                if "error" in r.summary:
                    line += f" ({r.summary['error']})"
                print(line)
            return 1 if any(r.status for r in results) else 0
        if args.levels < 3:
            raise sc.ScenarioError("--levels must be at least 3")
        sc.out.ensure_dir(args.out)
        rep = sc.run_convergence(runs[0], args.axis, args.levels, args.out)
        print(rep)
        return 0
    except sc.ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except sc.SOLVER_FAILURES as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
