"""Shared test utilities: instance builders and brute-force oracles.

The oracles deliberately avoid every code path they are checking: demand
arithmetic uses exact fractions, dispatch optimization enumerates all
integer allocations, and the bi-level oracle crosses full decision
enumeration with the allocation oracle.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from mblap import derivation as dv
from mblap.scenario import (
    Base,
    CapacityPool,
    ConstructionPlan,
    Depot,
    DistanceMatrix,
    EmuType,
    GlobalParams,
    PoolMember,
    Scenario,
    validate,
)


def make_globals(**overrides) -> GlobalParams:
    params = dict(
        empty_run_cost_rmb_per_km=3000.0,
        interest_rate=0.065,
        budget=5000.0,
        dispatch_unbalance=1.2,
        working_days=300.0,
        durations={"A": {3: 30.0, 4: 45.0}, "B": {3: 30.0, 4: 45.0}},
        maint_cost_ref={
            "A": {3: 4.0, 4: 13.5, 5: 20.0},
            "B": {3: 2.8, 4: 9.45, 5: 14.0},
        },
    )
    params.update(overrides)
    return GlobalParams(**params)


def pool_for(series: str, levels: tuple[int, ...], positions: int, pool_id: str | None = None) -> CapacityPool:
    conv = {g: (1.0 if g < 5 else 1.25) for g in levels}
    return CapacityPool(
        id=pool_id or f"{series}-{'-'.join(map(str, levels))}",
        members=(PoolMember(levels=levels, conversion=conv, series=series),),
        positions=positions,
    )


def build_scenario(
    emu_types,
    depots,
    bases,
    distances,
    globals_=None,
    name="synthetic",
) -> Scenario:
    depot_ids = tuple(d.id for d in depots)
    base_ids = tuple(b.id for b in bases)
    s = Scenario(
        meta={"name": name},
        emu_types=tuple(emu_types),
        depots=tuple(depots),
        bases=tuple(bases),
        globals=globals_ or make_globals(),
        distances=DistanceMatrix(depot_ids=depot_ids, base_ids=base_ids, km=distances),
    )
    problems = validate(s)
    assert not problems, f"synthetic scenario invalid: {problems}"
    return s


def random_tiny_scenario(rng, max_depots=2, max_bases=2, max_plans=3, max_types=2):
    """Small random instance for oracle comparisons.

    Demand stays at a handful of cells with single-digit counts so full
    enumeration of decisions x integer allocations remains cheap.
    """
    n_types = int(rng.integers(1, max_types + 1))
    levels_pool = [(3,), (4, 5)]
    emu_types = []
    for t in range(1, n_types + 1):
        series = "A" if t % 2 == 1 else "B"
        emu_types.append(
            EmuType(
                id=t,
                name=f"T{t}",
                series=series,
                std_factor=int(rng.choice([1, 2])),
                annual_mileage_km=65000.0,
                cycle_km={3: 120000.0, 4: 240000.0, 5: 480000.0},
            )
        )

    n_depots = int(rng.integers(1, max_depots + 1))
    depots = []
    for i in range(1, n_depots + 1):
        fleet = []
        for t in emu_types:
            if rng.random() < 0.75:
                fleet.append((t.id, int(rng.integers(0, 8))))
        depots.append(Depot(id=i, name=f"D{i}", fleet=tuple(fleet)))

    present_series = tuple(sorted({t.series for t in emu_types}))
    n_bases = int(rng.integers(1, max_bases + 1))
    bases = []
    for j in range(1, n_bases + 1):
        pools = []
        if rng.random() < 0.4:
            pools.append(pool_for(present_series[0], (3,), int(rng.integers(1, 4))))
        plans = []
        n_plans = int(rng.integers(1, max_plans + 1))
        for p in range(1, n_plans + 1):
            plan_pools = []
            for series in present_series:
                for levels in levels_pool:
                    if rng.random() < 0.5:
                        plan_pools.append(
                            pool_for(series, levels, int(rng.integers(1, 7)))
                        )
            if not plan_pools:
                plan_pools.append(pool_for(present_series[0], (3,), int(rng.integers(1, 7))))
            plans.append(
                ConstructionPlan(
                    id=p,
                    kind="new",
                    pools=tuple(plan_pools),
                    invest_ref=float(rng.integers(4, 30) * 100),
                    payback_years=int(rng.integers(5, 30)),
                )
            )
        bases.append(
            Base(
                id=j,
                name=f"B{j}",
                invest_ratio=float(rng.uniform(-0.15, 0.15)),
                maint_ratio=float(rng.uniform(-0.1, 0.1)),
                pools=tuple(pools),
                plans=tuple(plans),
            )
        )

    distances = tuple(
        tuple(float(rng.integers(0, 2200)) for _ in bases) for _ in depots
    )
    globals_ = make_globals(
        budget=float(rng.integers(5, 40) * 100),
        dispatch_unbalance=float(rng.choice([1.0, 1.2, 1.5])),
    )
    return build_scenario(emu_types, depots, bases, distances, globals_)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def demand_cell_oracle(omega, m, trains, mileage, cycles, level) -> Fraction:
    """Eq-free reimplementation of one demand cell in exact arithmetic."""
    yearly = Fraction(trains) * Fraction(mileage)
    rate = yearly / Fraction(cycles[level])
    if level < 5:
        rate -= yearly / Fraction(cycles[level + 1])
    return Fraction(omega) * Fraction(m) * rate


def _compositions(total: int, parts: int):
    """All ways to split ``total`` units over ``parts`` ordered slots."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def allocation_oracle(s: Scenario, demand: dv.DemandTable, decision: dict[int, int]):
    """Exhaustive minimum-cost integer dispatch; None when infeasible."""
    types = s.type_map()
    bases = s.base_map()
    theta = s.globals.dispatch_unbalance

    capability = {
        b.id: dv.capability_matrix(s, b, decision.get(b.id, 0)) for b in s.bases
    }
    capacity = {
        b.id: dv.effective_capacity(s, b, decision.get(b.id, 0)) for b in s.bases
    }

    cells = demand.nonzero()
    per_cell_options = []
    for (i, e, g) in cells:
        capable = [b.id for b in s.bases if (e, g) in capability[b.id]]
        if not capable:
            return None
        n = demand.count(i, e, g)
        options = []
        for combo in _compositions(n, len(capable)):
            options.append(list(zip(capable, combo)))
        per_cell_options.append(((i, e, g), options))

    best_cost = math.inf
    best_assignment = None
    for choice in itertools.product(*[opts for _, opts in per_cell_options]):
        load: dict[tuple[int, str], float] = {}
        ok = True
        assignment: dict[tuple[int, int, int, int], int] = {}
        cost = 0.0
        for ((i, e, g), split) in zip([c for c, _ in per_cell_options], choice):
            for j, cnt in split:
                if cnt == 0:
                    continue
                pid = dv.covering_pool(bases[j], decision.get(j, 0), types[e], g)
                pools = dv.effective_pools(bases[j], decision.get(j, 0))
                lam = pools[pid][0].conversion(g)
                load[(j, pid)] = load.get((j, pid), 0.0) + theta * lam * cnt
                assignment[(i, e, g, j)] = cnt
                cost += cnt * (
                    dv.dispatch_unit(s, i, j) + dv.maint_unit(s, bases[j], types[e], g)
                )
        for (j, pid), used in load.items():
            if used > capacity[j][pid] + 1e-9:
                ok = False
                break
        if ok and cost < best_cost - 1e-12:
            best_cost = cost
            best_assignment = assignment
    if best_assignment is None:
        return None
    return best_cost, best_assignment


def bilevel_oracle(s: Scenario):
    """Brute force over decisions x integer allocations; None if infeasible."""
    from mblap.search import enumerate_decisions

    demand = dv.demand_table(s)
    best = None
    for decision in enumerate_decisions(s):
        plan = decision.as_dict()
        result = allocation_oracle(s, demand, plan)
        if result is None:
            continue
        cost, _ = result
        z = decision.annualized_investment(s) + cost
        key = (z, decision.plan_ids)
        if best is None or z < best[0] - 1e-9 or (abs(z - best[0]) <= 1e-9 and decision.plan_ids < best[1]):
            best = (z, decision.plan_ids)
    return best
