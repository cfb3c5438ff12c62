"""Dispatch optimization for a fixed investment decision.

Builds the lower-level integer program (which base maintains how many
standard trainsets from each depot, per EMU type and level) and solves it
exactly by branch-and-bound on the LP relaxation.  Columns exist only for
(depot, type, level, base) combinations the decision makes possible;
capability never enters as constraints.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import derivation as dv
from .lp_core import INT_TOL, LinearProgram, WarmLp
from .scenario import Scenario

COST_REL_TOL = 1e-6
_TIE_TOL = 1e-9

Column = tuple[int, int, int, int]  # (depot id, type id, level, base id)


class AllocationInfeasible(Exception):
    """No dispatch plan satisfies demand under the given decision."""

    def __init__(self, message: str, witnesses: list[tuple[int, int, int]] | None = None):
        super().__init__(message)
        self.witnesses = witnesses or []


class AllocationUnsolved(Exception):
    """Search hit its node/time limit before finding any integer plan."""


@dataclass(frozen=True)
class LowerModel:
    """Index maps and numeric data of one dispatch problem."""

    scenario: Scenario
    decision: dict[int, int]  # base id -> plan id (0 = no build)
    columns: tuple[Column, ...]
    costs: tuple[float, ...]  # million RMB per standard set, per column
    demand_cells: tuple[tuple[int, int, int], ...]  # cells with positive demand
    demand: dict[tuple[int, int, int], int]
    pool_rows: tuple[tuple[int, str, float], ...]  # (base id, pool id, capacity)
    pool_coeffs: dict[tuple[int, str], dict[int, float]]  # row -> {col idx: coeff}
    uncovered: tuple[tuple[int, int, int], ...]  # demand cells with no column

    def column_index(self) -> dict[Column, int]:
        return {col: k for k, col in enumerate(self.columns)}


def build_lower_model(
    s: Scenario, demand: dv.DemandTable, decision: dict[int, int]
) -> LowerModel:
    """Assemble the dispatch model for one decision.

    Demand cells that no equipped base can serve are collected as an
    infeasibility witness list rather than raising, so callers can report
    every uncovered cell at once.
    """
    types = s.type_map()
    theta = s.globals.dispatch_unbalance

    capability: dict[int, set[tuple[int, int]]] = {}
    capacities: dict[int, dict[str, float]] = {}
    pools_at: dict[int, dict[str, object]] = {}
    pool_of: dict[tuple[int, int, int], str] = {}
    for base in s.bases:
        plan_id = decision.get(base.id, 0)
        capability[base.id] = dv.capability_matrix(s, base, plan_id)
        capacities[base.id] = dv.effective_capacity(s, base, plan_id)
        pools_at[base.id] = {
            pid: pool for pid, (pool, _) in dv.effective_pools(base, plan_id).items()
        }
        for (e, g) in capability[base.id]:
            pid = dv.covering_pool(base, plan_id, types[e], g)
            if pid is not None:
                pool_of[(base.id, e, g)] = pid

    cells = demand.nonzero()
    columns: list[Column] = []
    costs: list[float] = []
    uncovered: list[tuple[int, int, int]] = []
    for (i, e, g) in cells:
        found = False
        for base in s.bases:
            if (e, g) in capability[base.id]:
                columns.append((i, e, g, base.id))
                costs.append(
                    dv.dispatch_unit(s, i, base.id)
                    + dv.maint_unit(s, base, types[e], g)
                )
                found = True
        if not found:
            uncovered.append((i, e, g))

    pool_coeffs: dict[tuple[int, str], dict[int, float]] = {}
    for k, (i, e, g, j) in enumerate(columns):
        pid = pool_of[(j, e, g)]
        lam = pools_at[j][pid].conversion(g)
        pool_coeffs.setdefault((j, pid), {})[k] = theta * lam

    pool_rows = tuple(
        (j, pid, capacities[j][pid]) for (j, pid) in sorted(pool_coeffs.keys())
    )

    return LowerModel(
        scenario=s,
        decision=dict(decision),
        columns=tuple(columns),
        costs=tuple(costs),
        demand_cells=tuple(cells),
        demand={cell: demand.count(*cell) for cell in cells},
        pool_rows=pool_rows,
        pool_coeffs=pool_coeffs,
        uncovered=tuple(uncovered),
    )


def _strengthen_row(coeffs: dict[int, float], cap: float) -> tuple[dict[int, float], float]:
    """Integer-rounding tightening of a capacity row over integer variables.

    Scaling rational coefficients to integers and flooring the right-hand
    side keeps every integer point and cuts fractional relaxation mass,
    which is where the branch-and-bound otherwise burns its nodes.  Rows
    with non-rational-looking coefficients pass through unchanged.
    """
    fracs = []
    for v in coeffs.values():
        f = Fraction(v).limit_denominator(10_000)
        if abs(float(f) - v) > 1e-9:
            return coeffs, cap
        fracs.append(f)
    lcd = 1
    for f in fracs:
        lcd = lcd * f.denominator // math.gcd(lcd, f.denominator)
    ints = [int(f * lcd) for f in fracs]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    if g == 0:
        return coeffs, cap
    scaled = {k: v // g for k, v in zip(coeffs.keys(), ints)}
    rhs = math.floor(cap * lcd / g + 1e-9)
    return {k: float(v) for k, v in scaled.items()}, float(rhs)


def _relaxation(model: LowerModel) -> tuple[LinearProgram, int]:
    """LP relaxation over dispatch columns plus pool-load aggregates.

    Each (pool, level) gets a zero-cost aggregate column tied to its
    dispatch columns by an equality; capacity rows are written over the
    aggregates with integer-scaled coefficients and a floored right-hand
    side.  Branching on fractional aggregates forces whole maintenance
    events to move between bases, which moves the bound, while the dispatch
    columns at integral aggregates form per-level transportation polytopes
    whose vertices are already integral.

    Returns the program and the number of dispatch columns (aggregate
    columns follow after them).
    """
    n = len(model.columns)
    agg_groups: list[tuple[tuple[int, str], int, dict[int, float]]] = []
    for (j, pid, cap) in model.pool_rows:
        coeffs = model.pool_coeffs[(j, pid)]
        by_level: dict[int, dict[int, float]] = {}
        for k, v in coeffs.items():
            g = model.columns[k][2]
            by_level.setdefault(g, {})[k] = v
        for g in sorted(by_level):
            agg_groups.append(((j, pid), g, by_level[g]))

    lp = LinearProgram(n + len(agg_groups))
    lp.set_objective({k: c for k, c in enumerate(model.costs)})

    by_cell: dict[tuple[int, int, int], dict[int, float]] = {}
    for k, (i, e, g, _) in enumerate(model.columns):
        by_cell.setdefault((i, e, g), {})[k] = 1.0
    for cell in model.demand_cells:
        lp.add_row(by_cell[cell], "==", float(model.demand[cell]))

    # aggregate definitions and capacity rows over the aggregates
    agg_of_row: dict[tuple[int, str], dict[int, float]] = {}
    for idx, (row_key, g, cols) in enumerate(agg_groups):
        u = n + idx
        defn = {k: 1.0 for k in cols}
        defn[u] = -1.0
        lp.add_row(defn, "==", 0.0)
        lam = next(iter(cols.values()))  # theta * conversion, equal per level
        agg_of_row.setdefault(row_key, {})[u] = lam
        cap_events = sum(model.demand[model.columns[k][:3]] for k in cols)
        lp.set_bounds(u, 0.0, float(cap_events))
    for (j, pid, cap) in model.pool_rows:
        coeffs, rhs = _strengthen_row(agg_of_row[(j, pid)], cap)
        lp.add_row(coeffs, "<=", rhs)
        # coefficient-class rounding: aggregates with coefficient >= a
        # together fit at most floor(rhs / a) integer events
        if len(coeffs) > 1:
            for a in sorted({v for v in coeffs.values()}):
                group = {u: 1.0 for u, v in coeffs.items() if v >= a - 1e-12}
                lp.add_row(group, "<=", float(math.floor(rhs / a + 1e-9)))

    for k, (i, e, g, _) in enumerate(model.columns):
        lp.set_bounds(k, 0.0, float(model.demand[(i, e, g)]))
    return lp, n


@dataclass
class AllocationPlan:
    """An integer dispatch plan plus its audited cost breakdown."""

    assignments: dict[Column, int]
    base_totals: dict[tuple[int, int, int], int]  # (base, type, level) -> sets
    dispatch_cost: float
    maint_cost: float
    z_lower: float
    pool_utilization: dict[tuple[int, str], float]
    proven_optimal: bool
    nodes: int
    lp_iterations: int
    status: str = "optimal"  # optimal | incumbent

    def sets_per_base(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for (j, _, _), n in self.base_totals.items():
            out[j] = out.get(j, 0) + n
        return out

    def verify(self, model: LowerModel) -> None:
        """Assert the structural laws every returned plan must satisfy."""
        served: dict[tuple[int, int, int], int] = {}
        for (i, e, g, j), n in self.assignments.items():
            assert n >= 0 and n == int(n)
            served[(i, e, g)] = served.get((i, e, g), 0) + n
        for cell in model.demand_cells:
            assert served.get(cell, 0) == model.demand[cell], (
                f"flow balance violated at {cell}"
            )
        for (j, pid, cap) in model.pool_rows:
            load = sum(
                coeff * self.assignments.get(model.columns[k], 0)
                for k, coeff in model.pool_coeffs[(j, pid)].items()
            )
            assert load <= cap + 1e-6, f"pool ({j}, {pid}) over capacity: {load} > {cap}"
        recomputed = recompute_costs(model.scenario, self.assignments)
        assert math.isclose(
            recomputed[2], self.z_lower, rel_tol=COST_REL_TOL, abs_tol=1e-9
        ), "cost breakdown does not match an independent re-evaluation"


def recompute_costs(
    s: Scenario, assignments: dict[Column, int]
) -> tuple[float, float, float]:
    """Price a dispatch plan from scratch; used to audit solver output."""
    types = s.type_map()
    bases = s.base_map()
    dispatch = 0.0
    maint = 0.0
    for (i, e, g, j), n in assignments.items():
        if n == 0:
            continue
        dispatch += dv.dispatch_unit(s, i, j) * n
        maint += dv.maint_unit(s, bases[j], types[e], g) * n
    return dispatch, maint, dispatch + maint


def _fractional_branch(x: np.ndarray, n_cols: int) -> int | None:
    """Most fractional variable, aggregates first, ties to the lowest index."""
    frac = x - np.floor(x)
    dist = np.minimum(frac, 1.0 - frac)
    if x.size > n_cols:
        u = int(np.argmax(dist[n_cols:]))  # argmax takes the lowest index on ties
        if dist[n_cols + u] > INT_TOL:
            return n_cols + u
    j = int(np.argmax(dist[:n_cols]))
    return j if dist[j] > INT_TOL else None


def _components(model: LowerModel) -> list[list[int]]:
    """Column groups connected through shared demand cells or pool rows.

    Independent groups solve as separate branch-and-bound runs; their tree
    sizes then add up instead of multiplying.
    """
    parent = list(range(len(model.columns)))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    first_by_cell: dict[tuple[int, int, int], int] = {}
    for k, (i, e, g, _) in enumerate(model.columns):
        cell = (i, e, g)
        if cell in first_by_cell:
            union(first_by_cell[cell], k)
        else:
            first_by_cell[cell] = k
    for row_key in model.pool_coeffs:
        cols = list(model.pool_coeffs[row_key])
        for k in cols[1:]:
            union(cols[0], k)

    groups: dict[int, list[int]] = {}
    for k in range(len(model.columns)):
        groups.setdefault(find(k), []).append(k)
    return [sorted(g) for g in sorted(groups.values(), key=lambda g: g[0])]


def _submodel(model: LowerModel, cols: list[int]) -> LowerModel:
    keep = set(cols)
    columns = tuple(model.columns[k] for k in cols)
    remap = {k: idx for idx, k in enumerate(cols)}
    cells = tuple(sorted({(i, e, g) for (i, e, g, _) in columns}))
    pool_coeffs = {}
    pool_rows = []
    for (j, pid, cap) in model.pool_rows:
        coeffs = model.pool_coeffs[(j, pid)]
        sub = {remap[k]: v for k, v in coeffs.items() if k in keep}
        if sub:
            pool_coeffs[(j, pid)] = sub
            pool_rows.append((j, pid, cap))
    return LowerModel(
        scenario=model.scenario,
        decision=model.decision,
        columns=columns,
        costs=tuple(model.costs[k] for k in cols),
        demand_cells=cells,
        demand={c: model.demand[c] for c in cells},
        pool_rows=tuple(pool_rows),
        pool_coeffs=pool_coeffs,
        uncovered=(),
    )


def solve_allocation(
    model: LowerModel,
    node_limit: int | None = None,
    time_limit: float | None = None,
    cutoff: float | None = None,
) -> AllocationPlan | None:
    """Provably optimal integer dispatch via branch-and-bound.

    The model first splits into independent components (column groups not
    sharing any demand cell or pool row); each runs its own search:
    depth-first (deepest node first, best LP bound breaking ties, floor
    child ahead of ceiling child).  Nodes that cannot strictly beat the
    incumbent are pruned, so the search is deterministic and finite; when
    several equal-cost optima are encountered anyway, the lexicographically
    smallest assignment vector is kept.  Hitting a limit downgrades the
    result to an unproven incumbent.

    A ``cutoff`` declares that only plans costing at most that much are of
    interest; if the true optimum is provably above it, ``None`` comes back
    (usually after just the root relaxations).  Equal-cost plans survive it.
    """
    if model.uncovered:
        raise AllocationInfeasible(
            f"{len(model.uncovered)} demand cell(s) have no capable base",
            witnesses=list(model.uncovered),
        )
    if not model.columns:
        plan = AllocationPlan({}, {}, 0.0, 0.0, 0.0, {}, True, 0, 0)
        plan.verify(model)
        return plan

    groups = _components(model)
    if len(groups) > 1:
        return _solve_decomposed(model, groups, node_limit, time_limit, cutoff)
    return _solve_component(model, node_limit, time_limit, cutoff)


def _solve_decomposed(
    model: LowerModel,
    groups: list[list[int]],
    node_limit: int | None,
    time_limit: float | None,
    cutoff: float | None,
) -> AllocationPlan | None:
    started = time.monotonic()
    subs = [_submodel(model, g) for g in groups]

    # root relaxations give each component a sound share of the cutoff
    lbs = []
    for sub in subs:
        out = WarmLp(_relaxation(sub)[0]).root_outcome
        if out.status == "infeasible":
            raise AllocationInfeasible(
                "no integer dispatch plan satisfies the pool capacities"
            )
        if out.status != "optimal":
            raise RuntimeError(f"LP relaxation ended with status {out.status}")
        lbs.append(out.z)
    if cutoff is not None and sum(lbs) > cutoff + _TIE_TOL:
        return None

    plans: list[AllocationPlan] = []
    for idx, sub in enumerate(subs):
        remaining = None
        if time_limit is not None:
            remaining = max(0.0, time_limit - (time.monotonic() - started))
        sub_cutoff = None
        if cutoff is not None:
            sub_cutoff = cutoff - (sum(lbs) - lbs[idx])
        plan = _solve_component(sub, node_limit, remaining, sub_cutoff)
        if plan is None:
            return None
        plans.append(plan)
        lbs[idx] = plan.z_lower  # tighten the remaining components' budgets

    assignments: dict[Column, int] = {}
    for plan in plans:
        assignments.update(plan.assignments)
    dispatch, maint, total = recompute_costs(model.scenario, assignments)
    if cutoff is not None and total > cutoff + _TIE_TOL:
        return None
    base_totals: dict[tuple[int, int, int], int] = {}
    for (i, e, g, j), cnt in assignments.items():
        key = (j, e, g)
        base_totals[key] = base_totals.get(key, 0) + cnt
    utilization: dict[tuple[int, str], float] = {}
    for plan in plans:
        utilization.update(plan.pool_utilization)
    combined = AllocationPlan(
        assignments=assignments,
        base_totals=base_totals,
        dispatch_cost=dispatch,
        maint_cost=maint,
        z_lower=total,
        pool_utilization=utilization,
        proven_optimal=all(p.proven_optimal for p in plans),
        nodes=sum(p.nodes for p in plans),
        lp_iterations=sum(p.lp_iterations for p in plans),
        status="optimal" if all(p.proven_optimal for p in plans) else "incumbent",
    )
    combined.verify(model)
    return combined


def _solve_component(
    model: LowerModel,
    node_limit: int | None = None,
    time_limit: float | None = None,
    cutoff: float | None = None,
) -> AllocationPlan | None:

    lp, n = _relaxation(model)
    warm = WarmLp(lp)
    orig_lower = lp.lower.copy()
    orig_upper = lp.upper.copy()
    base_lower = lp.lower.copy()
    base_upper = lp.upper.copy()
    cost_vec = np.asarray(model.costs)
    started = time.monotonic()

    incumbent: np.ndarray | None = None
    incumbent_z = math.inf if cutoff is None else cutoff + 2.0 * _TIE_TOL
    proven = True
    feasible_seen = False
    nodes = 0
    lp_iters = 0

    # once the root relaxation is known, any nonbasic column whose reduced
    # cost alone exceeds the optimality gap can be pinned at its bound: no
    # strictly better integer plan moves it
    root_reduced: np.ndarray | None = None
    root_z = -math.inf
    fixed_for = math.inf

    def apply_reduced_cost_fixing() -> None:
        nonlocal fixed_for
        if root_reduced is None or incumbent_z >= fixed_for:
            return
        fixed_for = incumbent_z
        gap = incumbent_z - root_z
        for j in np.nonzero(np.abs(root_reduced) > gap + _TIE_TOL)[0]:
            if root_reduced[j] > 0:
                base_upper[j] = base_lower[j]
            else:
                base_lower[j] = base_upper[j]

    # heap entries: (-depth, parent LP bound, child order, bound patches);
    # deepest first, then best bound, then floor child before ceiling child
    seq = 0
    heap: list[tuple[int, float, int, dict[int, tuple[float, float]]]] = []
    heapq.heappush(heap, (0, -math.inf, seq, {}))

    while heap:
        if node_limit is not None and nodes >= node_limit:
            proven = False
            break
        if time_limit is not None and time.monotonic() - started > time_limit:
            proven = False
            break
        neg_depth, parent_bound, _, patches = heapq.heappop(heap)
        if parent_bound >= incumbent_z - _TIE_TOL:
            continue
        nodes += 1

        lower = base_lower.copy()
        upper = base_upper.copy()
        for j, (lo, hi) in patches.items():
            # intersect with the base bounds, which tighten over time
            lower[j] = max(lower[j], lo)
            upper[j] = min(upper[j], hi)
        if np.any(lower > upper):
            continue
        outcome = warm.resolve(lower, upper)
        lp_iters += outcome.iterations
        if outcome.status == "infeasible":
            continue
        if outcome.status != "optimal":
            raise RuntimeError(f"LP relaxation ended with status {outcome.status}")
        feasible_seen = True
        if not patches:
            root_reduced = outcome.reduced_costs
            root_z = outcome.z
            apply_reduced_cost_fixing()
        if outcome.z >= incumbent_z - _TIE_TOL:
            continue

        branch_j = _fractional_branch(outcome.x, n)
        if branch_j is None:
            x_int = np.rint(outcome.x[:n]).astype(int)
            z_int = float(cost_vec @ x_int)
            if z_int < incumbent_z - _TIE_TOL:
                incumbent_z = z_int
                incumbent = x_int
                apply_reduced_cost_fixing()
            elif incumbent is not None and abs(z_int - incumbent_z) <= _TIE_TOL:
                if tuple(x_int) < tuple(incumbent):
                    incumbent = x_int
            continue

        v = outcome.x[branch_j]
        lo, hi = patches.get(
            branch_j, (float(orig_lower[branch_j]), float(orig_upper[branch_j]))
        )
        floor_patch = dict(patches)
        floor_patch[branch_j] = (lo, math.floor(v))
        ceil_patch = dict(patches)
        ceil_patch[branch_j] = (math.ceil(v), hi)
        heapq.heappush(heap, (neg_depth - 1, outcome.z, seq + 1, floor_patch))
        heapq.heappush(heap, (neg_depth - 1, outcome.z, seq + 2, ceil_patch))
        seq += 2

    if incumbent is None:
        if proven and cutoff is not None and feasible_seen:
            return None  # optimum provably above the cutoff
        if proven:
            raise AllocationInfeasible(
                "no integer dispatch plan satisfies the pool capacities"
            )
        raise AllocationUnsolved("node/time limit hit before any integer plan was found")

    assignments = {
        model.columns[k]: int(incumbent[k]) for k in range(n) if incumbent[k] > 0
    }
    dispatch, maint, total = recompute_costs(model.scenario, assignments)
    base_totals: dict[tuple[int, int, int], int] = {}
    for (i, e, g, j), cnt in assignments.items():
        key = (j, e, g)
        base_totals[key] = base_totals.get(key, 0) + cnt
    utilization: dict[tuple[int, str], float] = {}
    for (j, pid, cap) in model.pool_rows:
        load = sum(
            coeff * assignments.get(model.columns[k], 0)
            for k, coeff in model.pool_coeffs[(j, pid)].items()
        )
        utilization[(j, pid)] = load / cap if cap > 0 else 0.0

    plan = AllocationPlan(
        assignments=assignments,
        base_totals=base_totals,
        dispatch_cost=dispatch,
        maint_cost=maint,
        z_lower=total,
        pool_utilization=utilization,
        proven_optimal=proven,
        nodes=nodes,
        lp_iterations=lp_iters,
        status="optimal" if proven else "incumbent",
    )
    plan.verify(model)
    return plan
