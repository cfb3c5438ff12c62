"""Report emission: JSON report, CSV tables, text summary, figures.

All delimited output is deterministic (sorted keys, fixed float formatting);
wall-clock metadata is quarantined in a ``run_meta`` block so reports from
identical runs compare byte-for-byte once that block is dropped.  Figures
are rendered with the Agg backend next to the delimited files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any

from . import derivation as dv
from .scenario import Scenario
from .search import SolveReport
from .sensitivity import SweepRow


def _fmt(x: float) -> str:
    return repr(round(float(x), 10))


def _num(x: float) -> float | None:
    """JSON-safe number: non-finite values become null."""
    x = float(x)
    return x if math.isfinite(x) else None


def decision_labels(s: Scenario, report: SolveReport) -> dict[str, dict[str, Any]]:
    bases = s.base_map()
    out: dict[str, dict[str, Any]] = {}
    if report.decision is None:
        return out
    for b, p in zip(report.decision.base_ids, report.decision.plan_ids):
        base = bases[b]
        plan = base.plan(p)
        out[base.name] = {
            "base_id": b,
            "plan": p,
            "kind": "none" if plan is None else plan.kind,
            "investment": base.investment(p),
        }
    return out


def report_to_dict(s: Scenario, report: SolveReport, run_meta: dict | None = None) -> dict:
    doc: dict[str, Any] = {
        "status": report.status,
        "message": report.message,
        "decision": decision_labels(s, report),
        "costs": {
            "total_investment": _num(report.total_investment),
            "annualized_investment": _num(report.annualized_investment),
            "dispatch": _num(report.dispatch_cost),
            "maintenance": _num(report.maint_cost),
            "z_lower": _num(report.z_lower),
            "z_upper": _num(report.z_upper),
        },
        "search": {
            "decisions_enumerated": report.stats.decisions_enumerated,
            "pruned_by_budget": report.stats.pruned_by_budget,
            "pruned_by_capacity": report.stats.pruned_by_capacity,
            "pruned_by_bound": report.stats.pruned_by_bound,
            "lower_level_solves": report.stats.lower_level_solves,
            "infeasible_decisions": report.stats.infeasible_decisions,
            "optimality_proven": report.status == "optimal",
        },
    }
    if report.uncovered:
        doc["uncovered_demand"] = [
            {"depot": i, "type": e, "level": g} for (i, e, g) in report.uncovered
        ]
    if report.allocation is not None:
        bases = s.base_map()
        doc["workload"] = {
            bases[j].name: n
            for j, n in sorted(report.allocation.sets_per_base().items())
        }
        doc["pools"] = [
            {
                "base": bases[j].name,
                "pool": pid,
                "utilization": round(u, 10),
            }
            for (j, pid), u in sorted(report.allocation.pool_utilization.items())
        ]
    doc["run_meta"] = run_meta or {}
    return doc


def write_report_json(path: Path, s: Scenario, report: SolveReport, run_meta: dict | None = None) -> None:
    path.write_text(
        json.dumps(report_to_dict(s, report, run_meta), indent=2, sort_keys=True, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )


def write_allocation_csv(path: Path, report: SolveReport) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["depot", "base", "type", "level", "sets"])
        if report.allocation is None:
            return
        for (i, e, g, j), n in sorted(report.allocation.assignments.items()):
            w.writerow([i, j, e, g, n])


def read_allocation_csv(path: Path) -> dict[tuple[int, int, int, int], int]:
    out: dict[tuple[int, int, int, int], int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["depot"]), int(row["type"]), int(row["level"]), int(row["base"]))
            out[key] = int(row["sets"])
    return out


def write_summary_txt(path: Path, s: Scenario, report: SolveReport) -> None:
    bases = s.base_map()
    lines = [f"status: {report.status}"]
    if report.message:
        lines.append(f"note: {report.message}")
    if report.decision is not None:
        lines.append("decision:")
        for b, p in zip(report.decision.base_ids, report.decision.plan_ids):
            if p == 0:
                continue
            base = bases[b]
            plan = base.plan(p)
            lines.append(
                f"  {base.name}: plan {p} ({plan.kind}), investment {base.investment(p):,.2f} M RMB"
            )
        if not report.decision.chosen():
            lines.append("  no construction at any base")
    if report.status != "infeasible" and math.isfinite(report.z_upper):
        lines += [
            "costs (million RMB/year):",
            f"  total investment     {report.total_investment:,.2f}",
            f"  annualized investment {report.annualized_investment:,.2f}",
            f"  dispatch              {report.dispatch_cost:,.2f}",
            f"  maintenance operation {report.maint_cost:,.2f}",
            f"  annual total (upper)  {report.z_upper:,.2f}",
        ]
        if report.allocation is not None:
            lines.append("workload (standard trainsets/year):")
            for j, n in sorted(report.allocation.sets_per_base().items()):
                lines.append(f"  {bases[j].name}: {n}")
    else:
        lines.append(f"uncovered demand cells: {len(report.uncovered)}")
        for (i, e, g) in report.uncovered[:20]:
            lines.append(f"  depot {i}, type {e}, level {g}")
        if len(report.uncovered) > 20:
            lines.append(f"  ... and {len(report.uncovered) - 20} more")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_demand_csv(path: Path, s: Scenario, table: dv.DemandTable) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["depot", "type", "level", "raw", "N"])
        for (i, e, g), cell in sorted(table.cells.items()):
            w.writerow([i, e, g, _fmt(cell.raw), cell.count])


def write_capacity_csv(path: Path, s: Scenario) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["base", "plan", "pool", "positions", "capacity"])
        for base in s.bases:
            for plan_id in [0] + [p.id for p in base.plans]:
                pools = dv.effective_pools(base, plan_id)
                caps = dv.effective_capacity(s, base, plan_id)
                for pid in sorted(pools):
                    _, positions = pools[pid]
                    w.writerow([base.name, plan_id, pid, positions, _fmt(caps[pid])])


def write_sweep_csv(path: Path, s: Scenario, rows: list[SweepRow]) -> None:
    bases = s.base_map()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["multiplier", "feasible", "z_upper", "annualized_investment", "construction_share", "decision"]
        )
        for r in rows:
            decision = ""
            if r.decision is not None:
                decision = ";".join(
                    f"{bases[b].name}={p}" for b, p in r.decision.chosen().items()
                )
            w.writerow(
                [
                    _fmt(r.multiplier),
                    int(r.feasible),
                    _fmt(r.z_upper) if r.feasible else "",
                    _fmt(r.annualized_investment) if r.feasible else "",
                    _fmt(r.construction_share) if r.feasible else "",
                    decision,
                ]
            )


def write_sweep_long_csv(path: Path, rows: list[SweepRow]) -> None:
    """Plot-ready long format: one (multiplier, metric, value) per line."""
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["multiplier", "metric", "value"])
        for r in rows:
            if not r.feasible:
                continue
            w.writerow([_fmt(r.multiplier), "z_upper", _fmt(r.z_upper)])
            w.writerow([_fmt(r.multiplier), "annualized_investment", _fmt(r.annualized_investment)])
            w.writerow([_fmt(r.multiplier), "construction_share", _fmt(r.construction_share)])


# ---------------------------------------------------------------------------
# Figures (rendered alongside the delimited output)
# ---------------------------------------------------------------------------


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_allocation_figure(path: Path, s: Scenario, report: SolveReport) -> None:
    """Bubble chart of dispatched sets per (depot, base) pair."""
    if report.allocation is None:
        return
    plt = _plt()
    depots = {d.id: d.name for d in s.depots}
    bases = {b.id: b.name for b in s.bases}
    flows: dict[tuple[int, int], int] = {}
    for (i, _, _, j), n in report.allocation.assignments.items():
        flows[(i, j)] = flows.get((i, j), 0) + n
    used_bases = sorted({j for _, j in flows})
    depot_ids = sorted(depots)
    fig, ax = plt.subplots(figsize=(7.5, 4.5))
    xs, ys, sizes = [], [], []
    for (i, j), n in sorted(flows.items()):
        xs.append(used_bases.index(j))
        ys.append(depot_ids.index(i))
        sizes.append(60.0 * n)
    ax.scatter(xs, ys, s=sizes, alpha=0.6, edgecolors="k", linewidths=0.5)
    for (i, j), n in sorted(flows.items()):
        ax.annotate(str(n), (used_bases.index(j), depot_ids.index(i)),
                    ha="center", va="center", fontsize=8)
    ax.set_xticks(range(len(used_bases)), [bases[j] for j in used_bases])
    ax.set_yticks(range(len(depot_ids)), [depots[i] for i in depot_ids])
    ax.set_xlabel("maintenance base")
    ax.set_ylabel("depot")
    ax.set_title("Annual maintenance dispatch (standard trainsets)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figure(path: Path, factor: str, rows: list[SweepRow]) -> None:
    """Two-panel trend chart: total cost and construction share."""
    plt = _plt()
    feas = [r for r in rows if r.feasible]
    if not feas:
        return
    xs = [r.multiplier for r in feas]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8))
    ax1.plot(xs, [r.z_upper for r in feas], "o-")
    ax1.set_xlabel(f"{factor} multiplier")
    ax1.set_ylabel("annualized total cost (M RMB)")
    ax1.grid(True, alpha=0.3)
    ax2.plot(xs, [100.0 * r.construction_share for r in feas], "s-", color="tab:orange")
    ax2.set_xlabel(f"{factor} multiplier")
    ax2.set_ylabel("construction share (%)")
    ax2.grid(True, alpha=0.3)
    fig.suptitle(f"Sensitivity to {factor}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
