"""Command-line interface: validate, derive, solve, evaluate, sweep.

Exit codes are a stable contract: 0 success/proven optimum, 1 validation
violations, 2 parse or usage errors, 3 infeasible, 4 optimality unproven
(node/time limits hit).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import derivation as dv
from . import reporting
from .scenario import (
    ROUNDING_MODES,
    Scenario,
    ScenarioError,
    ScenarioValidationError,
    load_scenario,
    validate,
)
from .search import SolveReport, decision_from_dict, evaluate_decision, solve_mblap
from .sensitivity import FACTORS, SweepSpec, run_sweep

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_UNPROVEN = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mblap",
        description="Exact solver for the maintenance-base location-allocation problem",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
        p.add_argument("--scenario", required=True, help="scenario document (JSON)")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    def add_overrides(p: argparse.ArgumentParser) -> None:
        p.add_argument("--budget", type=float, help="override the investment budget (M RMB)")
        p.add_argument("--theta", type=float, help="override the dispatch unbalance coefficient")
        p.add_argument("--rounding", choices=ROUNDING_MODES, help="override the demand rounding mode")
        p.add_argument("--workers", type=int, help="worker processes (default: available parallelism)")
        p.add_argument("--node-limit", type=int, help="branch-and-bound node limit per dispatch solve")
        p.add_argument("--time-limit", type=float, help="time limit in seconds per dispatch solve")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p = sub.add_parser("validate", help="check a scenario document")
    add_common(p, out_required=False)

    p = sub.add_parser("derive", help="dump demand and capacity tables")
    add_common(p)
    p.add_argument("--rounding", choices=ROUNDING_MODES)

    p = sub.add_parser("solve", help="find the optimal investment and dispatch plan")
    add_common(p)
    add_overrides(p)

    p = sub.add_parser("evaluate", help="evaluate a fixed investment decision")
    add_common(p)
    add_overrides(p)
    p.add_argument(
        "--plan",
        action="append",
        default=[],
        metavar="BASE=ID",
        help="plan choice per base, repeatable (bases not named take plan 0)",
    )
    p.add_argument("--no-budget-check", action="store_true", help="allow decisions above the budget")

    p = sub.add_parser("sweep", help="run a sensitivity sweep")
    add_common(p)
    add_overrides(p)
    p.add_argument("--factor", required=True, choices=FACTORS)
    p.add_argument("--budget-relax", type=float, help="budget relax multiplier during the sweep")
    return parser


def _slug(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


def _load(path: str) -> Scenario:
    return load_scenario(Path(path))


def _apply_overrides(s: Scenario, args: argparse.Namespace) -> Scenario:
    changes = {}
    if getattr(args, "budget", None) is not None:
        changes["budget"] = args.budget
    if getattr(args, "theta", None) is not None:
        changes["dispatch_unbalance"] = args.theta
    if getattr(args, "rounding", None) is not None:
        changes["demand_rounding"] = args.rounding
    if getattr(args, "budget_relax", None) is not None:
        changes["sweep_budget_relax"] = args.budget_relax
    return s.with_globals(**changes) if changes else s


def _parse_plan_args(s: Scenario, specs: list[str]) -> dict[int, int]:
    by_slug = {_slug(b.name): b.id for b in s.bases}
    by_id = {str(b.id): b.id for b in s.bases}
    plans: dict[int, int] = {}
    for spec in specs:
        if "=" not in spec:
            raise KeyError(f"plan spec {spec!r} is not of the form BASE=ID")
        name, _, pid = spec.partition("=")
        key = _slug(name)
        if key in by_id:
            base_id = by_id[key]
        elif key in by_slug:
            base_id = by_slug[key]
        else:
            raise KeyError(f"unknown base {name!r}")
        plans[base_id] = int(pid)
    return plans


def _emit_solution(
    s: Scenario, report: SolveReport, out: Path, args: argparse.Namespace, run_meta: dict
) -> None:
    out.mkdir(parents=True, exist_ok=True)
    reporting.write_report_json(out / "report.json", s, report, run_meta)
    reporting.write_allocation_csv(out / "allocation.csv", report)
    reporting.write_summary_txt(out / "summary.txt", s, report)
    if not getattr(args, "no_figures", False) and report.allocation is not None:
        reporting.render_allocation_figure(out / "allocation.png", s, report)


def _report_exit(report: SolveReport) -> int:
    if report.status == "infeasible":
        return EXIT_INFEASIBLE
    if report.status == "unproven":
        return EXIT_UNPROVEN
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        text = Path(args.scenario).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        s = load_scenario(text)
    except ScenarioValidationError as exc:
        for v in exc.violations:
            print(v)
        return EXIT_VIOLATIONS
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    leftovers = validate(s)
    for v in leftovers:
        print(v)
    if leftovers:
        return EXIT_VIOLATIONS
    print(f"ok: {len(s.depots)} depots, {len(s.bases)} bases, {len(s.emu_types)} EMU types")
    return EXIT_OK


def cmd_derive(args: argparse.Namespace) -> int:
    s = _load(args.scenario)
    if args.rounding:
        s = s.with_globals(demand_rounding=args.rounding)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reporting.write_demand_csv(out / "demand.csv", s, dv.demand_table(s))
    reporting.write_capacity_csv(out / "capacity.csv", s)
    print(f"wrote {out / 'demand.csv'} and {out / 'capacity.csv'}")
    return EXIT_OK


def _run_meta(args: argparse.Namespace, started: float) -> dict:
    overrides = {
        k: getattr(args, k)
        for k in ("budget", "theta", "rounding", "budget_relax", "workers", "node_limit", "time_limit")
        if getattr(args, k, None) is not None
    }
    return {
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "wall_time_s": round(time.monotonic() - started, 3),
        "scenario": str(args.scenario),
        "overrides": overrides,
    }


def cmd_solve(args: argparse.Namespace) -> int:
    started = time.monotonic()
    s = _apply_overrides(_load(args.scenario), args)
    report = solve_mblap(
        s, workers=args.workers, node_limit=args.node_limit, time_limit=args.time_limit
    )
    _emit_solution(s, report, Path(args.out), args, _run_meta(args, started))
    print((Path(args.out) / "summary.txt").read_text(encoding="utf-8"), end="")
    return _report_exit(report)


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    s = _apply_overrides(_load(args.scenario), args)
    plans = _parse_plan_args(s, args.plan)
    decision = decision_from_dict(s, plans)
    report = evaluate_decision(
        s,
        decision,
        check_budget=not args.no_budget_check,
        node_limit=args.node_limit,
        time_limit=args.time_limit,
    )
    _emit_solution(s, report, Path(args.out), args, _run_meta(args, started))
    print((Path(args.out) / "summary.txt").read_text(encoding="utf-8"), end="")
    return _report_exit(report)


def cmd_sweep(args: argparse.Namespace) -> int:
    s = _apply_overrides(_load(args.scenario), args)
    spec = SweepSpec(factor=args.factor, budget_relax=args.budget_relax)
    rows = run_sweep(s, spec, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reporting.write_sweep_csv(out / f"sweep_{args.factor}.csv", s, rows)
    reporting.write_sweep_long_csv(out / f"sweep_{args.factor}_long.csv", rows)
    if not args.no_figures:
        reporting.render_sweep_figure(out / f"sweep_{args.factor}.png", args.factor, rows)
    feasible = sum(1 for r in rows if r.feasible)
    print(f"sweep {args.factor}: {feasible}/{len(rows)} feasible rows -> {out}")
    return EXIT_OK if feasible == len(rows) else EXIT_INFEASIBLE


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "validate": cmd_validate,
        "derive": cmd_derive,
        "solve": cmd_solve,
        "evaluate": cmd_evaluate,
        "sweep": cmd_sweep,
    }
    try:
        return handlers[args.command](args)
    except ScenarioValidationError as exc:
        for v in exc.violations:
            print(v)
        return EXIT_VIOLATIONS
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
