"""``curbzone`` command line: solve, generate, bench, validate.

Exit codes: 0 success, 2 infeasible / failed validation / fingerprint
mismatch, 1 usage or I/O errors and solver failures.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import METHODS, run_bench, run_method
from .model import ScenarioError, check_feasible, evaluate
from .scenario_io import (FingerprintError, fingerprint, generate_synthetic, load_allocation, load_scenario,
                          save_allocation, save_scenario)

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="curbzone", description="Dynamic curb zoning solvers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one scenario with one method")
    s.add_argument("--scenario", required=True)
    s.add_argument("--method", required=True, choices=METHODS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--time-limit", type=float, default=None)
    s.add_argument("--rho-override", type=float, default=None)
    s.add_argument("--out", help="report JSON path")
    s.add_argument("--alloc-out", help="allocation JSON path")

    g = sub.add_parser("generate", help="write a seeded synthetic scenario")
    g.add_argument("--curbs", type=_positive_int, required=True)
    g.add_argument("--timesteps", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--profile", choices=("peaked", "uniform"), default="peaked")
    g.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="run a (method, seed) grid and write CSV summaries")
    b.add_argument("--scenario", required=True)
    b.add_argument("--methods", type=_csv_list, required=True)
    b.add_argument("--seeds", type=lambda t: [int(x) for x in _csv_list(t)], default=[0])
    b.add_argument("--time-limit", type=float, default=None)
    b.add_argument("--out", required=True)

    v = sub.add_parser("validate", help="check an allocation against a scenario")
    v.add_argument("--scenario", required=True)
    v.add_argument("--alloc", required=True)
    return p


def _load(path, rho=None):
    s = load_scenario(path)
    fp = fingerprint(s)
    if rho is not None:
        s = s.replace(rho=rho)
    return s, fp


def cmd_solve(args) -> int:
    scenario, fp = _load(args.scenario, args.rho_override)
    report = run_method(scenario, args.method, seed=args.seed, time_limit=args.time_limit, fp=fp)
    if args.rho_override is not None:
        report.config["rho_override"] = args.rho_override
    if args.out:
        report.write(args.out)
    if args.alloc_out and report.allocation is not None:
        # the plan is paired with the scenario file as stored
        save_allocation(report.allocation, args.alloc_out, fp=fp)
    print(report.summary_line())
    if report.status == "infeasible":
        print(f"infeasible: {report.extras.get('message', '')}", file=sys.stderr)
        return EXIT_INVALID
    if report.status == "error":
        print(f"solver failed: {report.extras.get('message', '')}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_generate(args) -> int:
    s = generate_synthetic(args.curbs, args.timesteps, args.seed, args.profile)
    save_scenario(s, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario, _ = _load(args.scenario)
    reports = run_bench(scenario, args.methods, args.seeds, args.out, time_limit=args.time_limit)
    for r in reports:
        print(f"{r.seed} {r.summary_line()} {r.status}")
    failed = [r for r in reports if not r.ok]
    for r in failed:
        print(f"run {r.method} seed {r.seed} failed: {r.extras.get('message', '')}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_ERROR


def cmd_validate(args) -> int:
    scenario, _ = _load(args.scenario)
    try:
        alloc = load_allocation(args.alloc, scenario)
    except FingerprintError as exc:
        print(f"fingerprint mismatch: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        rep = check_feasible(scenario, alloc)
    except ValueError as exc:
        print(f"invalid allocation: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps({"feasible": rep.feasible, "objective": evaluate(scenario, alloc), **rep.to_dict()},
                     indent=2))
    for v in rep.violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_OK if rep.feasible else EXIT_INVALID


COMMANDS = {"solve": cmd_solve, "generate": cmd_generate, "bench": cmd_bench, "validate": cmd_validate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
