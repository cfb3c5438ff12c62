"""Upper-level optimization: choose one construction plan per base.

The decision space is finite (one plan id per base, 0 meaning no build), so
the solver enumerates it exhaustively under the budget, with three sound
cuts: subtree budget cuts during enumeration, a capacity-sufficiency
pre-check against the best attainable capacities of still-unassigned bases,
and an admissible per-decision bound (annualized investment plus the
capacity-relaxed dispatch-and-maintenance minimum) against the incumbent.
Every surviving decision gets an exact lower-level solve, so the returned
optimum carries a proof, not a heuristic.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import derivation as dv
from .allocation import (
    AllocationInfeasible,
    AllocationPlan,
    AllocationUnsolved,
    build_lower_model,
    solve_allocation,
)
from .scenario import NO_BUILD, Scenario

_TIE_TOL = 1e-9


@dataclass(frozen=True, order=True)
class InvestmentDecision:
    """One chosen plan id per base, in base-id order (0 = no build)."""

    base_ids: tuple[int, ...] = field(compare=False)
    plan_ids: tuple[int, ...]

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.base_ids, self.plan_ids))

    def chosen(self) -> dict[int, int]:
        return {b: p for b, p in zip(self.base_ids, self.plan_ids) if p != NO_BUILD}

    def total_investment(self, s: Scenario) -> float:
        bases = s.base_map()
        return sum(bases[b].investment(p) for b, p in zip(self.base_ids, self.plan_ids))

    def annualized_investment(self, s: Scenario) -> float:
        bases = s.base_map()
        return sum(
            dv.annualized_investment(s, bases[b], p)
            for b, p in zip(self.base_ids, self.plan_ids)
        )


def decision_from_dict(s: Scenario, plans: dict[int, int]) -> InvestmentDecision:
    base_ids = tuple(sorted(b.id for b in s.bases))
    bases = s.base_map()
    for b, p in plans.items():
        if b not in bases:
            raise KeyError(f"unknown base id {b}")
        bases[b].plan(p)  # raises on unknown plan id
    return InvestmentDecision(
        base_ids=base_ids, plan_ids=tuple(plans.get(b, NO_BUILD) for b in base_ids)
    )


def enumerate_decisions(s: Scenario, budget: float | None = None):
    """Yield every budget-feasible decision, lexicographically by plan ids.

    Depth-first product over bases in id order; a subtree is cut the moment
    its committed investment already exceeds the budget.
    """
    cap = s.globals.budget if budget is None else budget
    bases = sorted(s.bases, key=lambda b: b.id)
    base_ids = tuple(b.id for b in bases)
    options = [
        [(NO_BUILD, 0.0)] + [(p.id, b.investment(p.id)) for p in sorted(b.plans, key=lambda q: q.id)]
        for b in bases
    ]

    chosen: list[int] = []

    def rec(depth: int, spent: float):
        if depth == len(bases):
            yield InvestmentDecision(base_ids=base_ids, plan_ids=tuple(chosen))
            return
        for plan_id, cost in options[depth]:
            if spent + cost > cap + 1e-9:
                continue
            chosen.append(plan_id)
            yield from rec(depth + 1, spent + cost)
            chosen.pop()

    yield from rec(0, 0.0)


def dispatch_lower_bound(s: Scenario, demand: dv.DemandTable) -> float:
    """Admissible bound on the lower-level cost of any feasible decision.

    Relaxes capacity and plan exclusivity: each demand cell goes to the
    cheapest base that could ever serve it under any plan.  Infinite when
    some demand has no potentially capable base at all.
    """
    types = s.type_map()
    best_unit: dict[tuple[int, int, int], float] = {}
    for base in s.bases:
        could = dv.any_plan_capability(s, base)
        for (i, e, g) in demand.nonzero():
            if (e, g) not in could:
                continue
            unit = dv.dispatch_unit(s, i, base.id) + dv.maint_unit(s, base, types[e], g)
            key = (i, e, g)
            if key not in best_unit or unit < best_unit[key]:
                best_unit[key] = unit
    total = 0.0
    for cell in demand.nonzero():
        if cell not in best_unit:
            return math.inf
        total += best_unit[cell] * demand.count(*cell)
    return total


@dataclass
class SearchStats:
    decisions_enumerated: int = 0
    pruned_by_budget: int = 0  # subtree cuts during enumeration
    pruned_by_capacity: int = 0
    pruned_by_bound: int = 0
    lower_level_solves: int = 0
    cache_hits: int = 0
    infeasible_decisions: int = 0
    wall_time_s: float = 0.0
    workers: int = 1


@dataclass
class SolveReport:
    status: str  # optimal | infeasible | unproven
    decision: InvestmentDecision | None
    allocation: AllocationPlan | None
    total_investment: float
    annualized_investment: float
    dispatch_cost: float
    maint_cost: float
    z_lower: float
    z_upper: float
    stats: SearchStats
    uncovered: list[tuple[int, int, int]] = field(default_factory=list)
    message: str = ""

    def verify(self, s: Scenario, check_budget: bool = True) -> None:
        if self.status == "infeasible" or self.decision is None:
            return
        if check_budget:
            assert self.total_investment <= s.globals.budget + 1e-6, "budget exceeded"
        assert math.isclose(
            self.z_upper,
            self.annualized_investment + self.z_lower,
            rel_tol=1e-6,
            abs_tol=1e-9,
        ), "cost decomposition broken"


def _evaluate(
    s: Scenario,
    demand: dv.DemandTable,
    decision: InvestmentDecision,
    node_limit: int | None,
    time_limit: float | None,
    cutoff: float | None = None,
):
    """Lower-level solve for one decision; returns (kind, payload)."""
    model = build_lower_model(s, demand, decision.as_dict())
    try:
        plan = solve_allocation(
            model, node_limit=node_limit, time_limit=time_limit, cutoff=cutoff
        )
        if plan is None:
            return ("dominated", None)
        return ("ok", plan)
    except AllocationInfeasible as exc:
        return ("infeasible", list(exc.witnesses))
    except AllocationUnsolved:
        return ("unsolved", None)


_W_SCENARIO: Scenario | None = None
_W_DEMAND: dv.DemandTable | None = None
_W_LIMITS: tuple[int | None, float | None] = (None, None)


def _worker_init(s: Scenario, demand: dv.DemandTable, limits) -> None:
    global _W_SCENARIO, _W_DEMAND, _W_LIMITS
    _W_SCENARIO = s
    _W_DEMAND = demand
    _W_LIMITS = limits


def _worker_eval(job: tuple[InvestmentDecision, float | None]):
    decision, cutoff = job
    return decision, _evaluate(_W_SCENARIO, _W_DEMAND, decision, *_W_LIMITS, cutoff=cutoff)


def _capacity_signature(s: Scenario, decision: InvestmentDecision) -> tuple:
    bases = s.base_map()
    sig = []
    for b, p in zip(decision.base_ids, decision.plan_ids):
        caps = dv.effective_capacity(s, bases[b], p)
        sig.append((b, tuple(sorted((pid, c) for pid, c in caps.items() if c > 0))))
    return tuple(sig)


class _SufficiencyCheck:
    """Necessary capacity condition per pool id, usable on DFS prefixes.

    Demand units are attributed to a pool id only when every base that could
    serve the cell would do so through a pool of that same id, which keeps
    the check conservative for exotic pooling layouts.
    """

    def __init__(self, s: Scenario, demand: dv.DemandTable):
        theta = s.globals.dispatch_unbalance
        types = s.type_map()
        bases = sorted(s.bases, key=lambda b: b.id)
        self.base_ids = [b.id for b in bases]

        cover_ids: dict[tuple[int, int], set[str]] = {}
        conversions: dict[str, float] = {}
        for base in bases:
            for plan_id in [NO_BUILD] + [p.id for p in base.plans]:
                for pid, (pool, _) in dv.effective_pools(base, plan_id).items():
                    for t in s.emu_types:
                        for g in (3, 4, 5):
                            if pool.covers(t, g):
                                cover_ids.setdefault((t.id, g), set()).add(pid)
                                key = f"{pid}:{g}"
                                lam = pool.conversion(g)
                                if key not in conversions or lam < conversions[key]:
                                    conversions[key] = lam

        self.required: dict[str, float] = {}
        for (i, e, g) in demand.nonzero():
            ids = cover_ids.get((e, g), set())
            if len(ids) == 1:
                (pid,) = ids
                lam = conversions[f"{pid}:{g}"]
                self.required[pid] = (
                    self.required.get(pid, 0.0)
                    + theta * lam * demand.count(i, e, g)
                )

        # per base: capacity by pool id per plan, and the best over all plans
        self.cap: dict[int, dict[int, dict[str, float]]] = {}
        self.best: dict[int, dict[str, float]] = {}
        for base in bases:
            per_plan: dict[int, dict[str, float]] = {}
            best: dict[str, float] = {}
            for plan_id in [NO_BUILD] + [p.id for p in base.plans]:
                caps = dv.effective_capacity(s, base, plan_id)
                per_plan[plan_id] = caps
                for pid, c in caps.items():
                    if c > best.get(pid, 0.0):
                        best[pid] = c
            self.cap[base.id] = per_plan
            self.best[base.id] = best

        # suffix sums of best attainable capacity per pool id
        n = len(bases)
        self.suffix_best: list[dict[str, float]] = [dict() for _ in range(n + 1)]
        for k in range(n - 1, -1, -1):
            acc = dict(self.suffix_best[k + 1])
            for pid, c in self.best[self.base_ids[k]].items():
                acc[pid] = acc.get(pid, 0.0) + c
            self.suffix_best[k] = acc

    def prefix_ok(self, assigned: list[int]) -> bool:
        """True when the prefix can still reach sufficient total capacity."""
        k = len(assigned)
        for pid, need in self.required.items():
            have = self.suffix_best[k].get(pid, 0.0)
            for depth, plan_id in enumerate(assigned):
                have += self.cap[self.base_ids[depth]][plan_id].get(pid, 0.0)
            if have < need - 1e-9:
                return False
        return True


def _candidate_decisions(
    s: Scenario, demand: dv.DemandTable, stats: SearchStats, prune: bool
) -> list[InvestmentDecision]:
    """Budget-feasible decisions surviving the capacity pre-check."""
    cap = s.globals.budget
    bases = sorted(s.bases, key=lambda b: b.id)
    base_ids = tuple(b.id for b in bases)
    options = [
        [(NO_BUILD, 0.0)]
        + [(p.id, b.investment(p.id)) for p in sorted(b.plans, key=lambda q: q.id)]
        for b in bases
    ]
    checker = _SufficiencyCheck(s, demand) if prune else None

    out: list[InvestmentDecision] = []
    chosen: list[int] = []

    def rec(depth: int, spent: float):
        if checker is not None and not checker.prefix_ok(chosen):
            stats.pruned_by_capacity += 1
            return
        if depth == len(bases):
            out.append(InvestmentDecision(base_ids=base_ids, plan_ids=tuple(chosen)))
            return
        for plan_id, cost in options[depth]:
            if spent + cost > cap + 1e-9:
                stats.pruned_by_budget += 1
                continue
            chosen.append(plan_id)
            rec(depth + 1, spent + cost)
            chosen.pop()

    rec(0, 0.0)
    stats.decisions_enumerated = len(out) if not prune else stats.decisions_enumerated
    return out


def _decision_bound(
    s: Scenario,
    demand: dv.DemandTable,
    decision: InvestmentDecision,
    unit_rank: dict[tuple[int, int, int], list[tuple[float, int]]],
    capability: dict[tuple[int, int], set[tuple[int, int]]],
) -> float:
    """Capacity-relaxed lower bound on the decision's lower-level cost."""
    total = 0.0
    plan_of = decision.as_dict()
    for cell, ranked in unit_rank.items():
        i, e, g = cell
        unit = None
        for cost, j in ranked:
            if (e, g) in capability[(j, plan_of[j])]:
                unit = cost
                break
        if unit is None:
            return math.inf
        total += unit * demand.count(i, e, g)
    return total


def _infeasibility_witnesses(
    s: Scenario, demand: dv.DemandTable
) -> list[tuple[int, int, int]]:
    """Cells no single budget-affordable plan could ever cover."""
    budget = s.globals.budget
    covered: set[tuple[int, int]] = set()
    for base in s.bases:
        covered |= dv.capability_matrix(s, base, NO_BUILD)
        for plan in base.plans:
            if base.investment(plan.id) <= budget + 1e-9:
                covered |= dv.capability_matrix(s, base, plan.id)
    return [cell for cell in demand.nonzero() if (cell[1], cell[2]) not in covered]


def evaluate_decision(
    s: Scenario,
    plans: dict[int, int] | InvestmentDecision,
    check_budget: bool = True,
    node_limit: int | None = None,
    time_limit: float | None = None,
) -> SolveReport:
    """Cost breakdown for exactly one decision (what-if evaluation)."""
    started = time.monotonic()
    decision = plans if isinstance(plans, InvestmentDecision) else decision_from_dict(s, plans)
    if check_budget and decision.total_investment(s) > s.globals.budget + 1e-9:
        raise ValueError(
            f"decision investment {decision.total_investment(s):.2f} exceeds budget {s.globals.budget:.2f}"
        )
    demand = dv.demand_table(s)
    stats = SearchStats(decisions_enumerated=1, lower_level_solves=1)
    kind, payload = _evaluate(s, demand, decision, node_limit, time_limit)
    stats.wall_time_s = time.monotonic() - started
    if kind == "infeasible":
        return SolveReport(
            status="infeasible",
            decision=decision,
            allocation=None,
            total_investment=decision.total_investment(s),
            annualized_investment=decision.annualized_investment(s),
            dispatch_cost=math.nan,
            maint_cost=math.nan,
            z_lower=math.nan,
            z_upper=math.nan,
            stats=stats,
            uncovered=payload,
            message="lower level infeasible for this decision",
        )
    if kind == "unsolved":
        return SolveReport(
            status="unproven",
            decision=decision,
            allocation=None,
            total_investment=decision.total_investment(s),
            annualized_investment=decision.annualized_investment(s),
            dispatch_cost=math.nan,
            maint_cost=math.nan,
            z_lower=math.nan,
            z_upper=math.nan,
            stats=stats,
            message="node/time limit hit before any integer plan was found",
        )
    plan: AllocationPlan = payload
    ann = decision.annualized_investment(s)
    report = SolveReport(
        status="optimal" if plan.proven_optimal else "unproven",
        decision=decision,
        allocation=plan,
        total_investment=decision.total_investment(s),
        annualized_investment=ann,
        dispatch_cost=plan.dispatch_cost,
        maint_cost=plan.maint_cost,
        z_lower=plan.z_lower,
        z_upper=ann + plan.z_lower,
        stats=stats,
    )
    report.verify(s, check_budget=check_budget)
    return report


def solve_mblap(
    s: Scenario,
    workers: int | None = None,
    prune: bool = True,
    node_limit: int | None = None,
    time_limit: float | None = None,
) -> SolveReport:
    """Global optimum over every budget-feasible investment decision.

    Exhaustive enumeration with admissible pruning; ties on total cost break
    to the lexicographically smallest decision vector, so the result is
    independent of evaluation scheduling.
    """
    started = time.monotonic()
    stats = SearchStats()
    n_workers = max(1, workers if workers is not None else (os.cpu_count() or 1))
    stats.workers = n_workers

    demand = dv.demand_table(s)
    candidates = _candidate_decisions(s, demand, stats, prune)
    stats.decisions_enumerated = len(candidates)

    if not demand.nonzero():
        zero = InvestmentDecision(
            base_ids=tuple(sorted(b.id for b in s.bases)),
            plan_ids=tuple(0 for _ in s.bases),
        )
        empty = AllocationPlan({}, {}, 0.0, 0.0, 0.0, {}, True, 0, 0)
        stats.wall_time_s = time.monotonic() - started
        return SolveReport(
            status="optimal",
            decision=zero,
            allocation=empty,
            total_investment=0.0,
            annualized_investment=0.0,
            dispatch_cost=0.0,
            maint_cost=0.0,
            z_lower=0.0,
            z_upper=0.0,
            stats=stats,
        )

    # admissible per-decision bound: precompute unit-cost rankings and
    # per-(base, plan) capability sets once
    types = s.type_map()
    capability: dict[tuple[int, int], set[tuple[int, int]]] = {}
    for base in s.bases:
        for plan_id in [NO_BUILD] + [p.id for p in base.plans]:
            capability[(base.id, plan_id)] = dv.capability_matrix(s, base, plan_id)
    unit_rank: dict[tuple[int, int, int], list[tuple[float, int]]] = {}
    for cell in demand.nonzero():
        i, e, g = cell
        ranked = sorted(
            (
                dv.dispatch_unit(s, i, base.id) + dv.maint_unit(s, base, types[e], g),
                base.id,
            )
            for base in s.bases
        )
        unit_rank[cell] = ranked

    scored: list[tuple[float, InvestmentDecision, float]] = []
    for decision in candidates:
        ann = decision.annualized_investment(s)
        bound = _decision_bound(s, demand, decision, unit_rank, capability)
        if math.isinf(bound):
            stats.pruned_by_capacity += 1
            continue
        scored.append((ann + bound, decision, ann))
    scored.sort(key=lambda t: (t[0], t[1].plan_ids))

    incumbent: SolveReport | None = None
    # cache per capacity signature: a full plan is the decision's true
    # optimum (reusable unconditionally); a domination verdict only remains
    # valid for cutoffs at or below the one that produced it
    cache: dict[tuple, tuple[str, object, float | None]] = {}
    any_unproven = False

    def lower_cutoff(ann: float) -> float | None:
        if not prune or incumbent is None:
            return None
        return incumbent.z_upper - ann

    def consider(decision: InvestmentDecision, kind: str, payload) -> None:
        nonlocal incumbent, any_unproven
        if kind == "infeasible":
            stats.infeasible_decisions += 1
            return
        if kind == "dominated":
            return
        if kind == "unsolved":
            any_unproven = True
            return
        plan: AllocationPlan = payload
        if not plan.proven_optimal:
            any_unproven = True
        ann = decision.annualized_investment(s)
        z_upper = ann + plan.z_lower
        if (
            incumbent is None
            or z_upper < incumbent.z_upper - _TIE_TOL
            or (
                abs(z_upper - incumbent.z_upper) <= _TIE_TOL
                and decision.plan_ids < incumbent.decision.plan_ids
            )
        ):
            incumbent = SolveReport(
                status="optimal",
                decision=decision,
                allocation=plan,
                total_investment=decision.total_investment(s),
                annualized_investment=ann,
                dispatch_cost=plan.dispatch_cost,
                maint_cost=plan.maint_cost,
                z_lower=plan.z_lower,
                z_upper=z_upper,
                stats=stats,
            )

    def evaluate_cached(decision: InvestmentDecision, ann: float):
        cutoff = lower_cutoff(ann)
        sig = _capacity_signature(s, decision)
        if sig in cache:
            kind, payload, used = cache[sig]
            reusable = kind in ("ok", "infeasible") or (
                kind == "dominated"
                and used is not None
                and (cutoff is not None and cutoff <= used + _TIE_TOL)
            )
            if reusable:
                stats.cache_hits += 1
                return kind, payload
        stats.lower_level_solves += 1
        kind, payload = _evaluate(s, demand, decision, node_limit, time_limit, cutoff)
        cache[sig] = (kind, payload, cutoff)
        return kind, payload

    if n_workers <= 1 or len(scored) <= 2:
        for score, decision, ann in scored:
            if prune and incumbent is not None and score > incumbent.z_upper + _TIE_TOL:
                stats.pruned_by_bound += 1
                continue
            kind, payload = evaluate_cached(decision, ann)
            consider(decision, kind, payload)
    else:
        # bootstrap the incumbent on the most promising candidate so the
        # parallel waves all run with a tight cutoff
        _, first_decision, first_ann = scored[0]
        stats.lower_level_solves += 1
        consider(first_decision, *_evaluate(s, demand, first_decision, node_limit, time_limit))

        wave = max(2 * n_workers, 8)
        with ProcessPoolExecutor(
            max_workers=n_workers,
            initializer=_worker_init,
            initargs=(s, demand, (node_limit, time_limit)),
        ) as pool:
            idx = 1
            while idx < len(scored):
                batch = []
                while idx < len(scored) and len(batch) < wave:
                    score, decision, ann = scored[idx]
                    idx += 1
                    if (
                        prune
                        and incumbent is not None
                        and score > incumbent.z_upper + _TIE_TOL
                    ):
                        stats.pruned_by_bound += 1
                        continue
                    batch.append((decision, ann))
                if not batch:
                    continue
                jobs = [(d, lower_cutoff(ann)) for d, ann in batch]
                stats.lower_level_solves += len(jobs)
                for decision, result in pool.map(_worker_eval, jobs):
                    consider(decision, *result)

    stats.wall_time_s = time.monotonic() - started
    if incumbent is None:
        if any_unproven:
            status = "unproven"
            uncovered: list[tuple[int, int, int]] = []
            message = "node/time limits exhausted before any plan was proven"
        else:
            status = "infeasible"
            uncovered = _infeasibility_witnesses(s, demand)
            message = (
                "no budget-feasible decision covers every demand cell"
                if uncovered
                else "capacity is insufficient under every budget-feasible decision"
            )
        return SolveReport(
            status=status,
            decision=None,
            allocation=None,
            total_investment=math.nan,
            annualized_investment=math.nan,
            dispatch_cost=math.nan,
            maint_cost=math.nan,
            z_lower=math.nan,
            z_upper=math.nan,
            stats=stats,
            uncovered=uncovered,
            message=message,
        )
    if any_unproven:
        incumbent.status = "unproven"
        incumbent.message = "limits hit during some evaluations; optimality unproven"
    incumbent.stats = stats
    incumbent.verify(s)
    return incumbent
