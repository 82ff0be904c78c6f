"""Command line entry point ``evl-lab``.

Exit status: 0 on success, 2 on an invalid scenario or configuration,
3 when the run hits a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from .scenarios import SCENARIOS, ScenarioError, list_scenarios, run_scenario

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evl-lab", description="Extreme value experiments for sequential beta-maps.")
    p.add_argument("--scenario", metavar="NAME", help="scenario to run; without it the scenario table is printed")
    p.add_argument("--config", metavar="PATH", help="JSON file overriding scenario parameters")
    p.add_argument("--seed", type=int, default=0, help="64-bit master seed (default 0)")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory for report.json")
    p.add_argument("--dump", action="store_true", help="also write per-replicate and diagnostic CSV files")
    p.add_argument("--threads", type=int, default=None, help="worker threads for replicate simulation")
    p.add_argument("--precision", choices=("exact", "float", "auto"), default=None)
    p.add_argument("--json", action="store_true", help="print the scenario table as JSON")
    p.add_argument("--filter", metavar="TEXT", help="only list scenarios whose name contains TEXT")
    return p


def _print_table(rows) -> None:
    w = max(len(r["name"]) for r in rows) if rows else 4
    for r in rows:
        print(f"{r['name']:<{w}}  {r['kind']:<8}  {r['case']}")


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    if args.scenario is None:
        rows = list_scenarios(args.filter)
        if args.json:
            print(json.dumps(rows, indent=2))
        else:
            _print_table(rows)
        return EXIT_OK
    if args.scenario not in SCENARIOS:
        print(f"error: unknown scenario {args.scenario!r}; valid names: {', '.join(SCENARIOS)}", file=sys.stderr)
        return EXIT_INVALID
    overrides = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_INVALID
        if not isinstance(overrides, dict):
            print("error: config must be a JSON object", file=sys.stderr)
            return EXIT_INVALID
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        report = run_scenario(args.scenario, overrides, args.seed, args.out, args.dump, args.threads, args.precision)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{args.scenario}: wrote {args.out}/report.json")
    for f in report.get("flags", []):
        print(f"  flag: {f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
