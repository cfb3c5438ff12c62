"""Derived quantities: demand table, pool capacities, capability, unit costs.

Everything here is a pure function of an immutable scenario (plus a chosen
plan id where relevant), so results can be computed freely and in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .scenario import (
    LEVELS,
    NO_BUILD,
    Base,
    CapacityPool,
    EmuType,
    Scenario,
)

# Epsilon guards protect ceil/floor against float dust on raws that are
# mathematically exact integers; half-up needs none (ties are exact halves).
_DUST = 1e-9


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def round_ceil(x: float) -> int:
    return int(math.ceil(x - _DUST))


def round_floor(x: float) -> int:
    return int(math.floor(x + _DUST))


ROUNDERS = {"halfUp": round_half_up, "ceil": round_ceil, "floor": round_floor}


def capital_recovery_factor(rate: float, years: float) -> float:
    """Annuity factor turning a one-time investment into equal yearly payments.

    rate * (1 + rate)^years / ((1 + rate)^years - 1); tends to ``rate`` as the
    payback horizon grows.
    """
    if rate <= 0:
        raise ValueError(f"interest rate must be > 0, got {rate}")
    if years < 1:
        raise ValueError(f"payback period must be >= 1 year, got {years}")
    growth = (1.0 + rate) ** years
    return rate * growth / (growth - 1.0)


# ---------------------------------------------------------------------------
# Demand
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DemandCell:
    raw: float
    count: int


@dataclass(frozen=True)
class DemandTable:
    """Annual high-level maintenance demand in standard trainsets.

    Keyed by (depot id, EMU type id, level); ``raw`` keeps the pre-rounding
    value so discretization effects stay auditable.
    """

    cells: dict[tuple[int, int, int], DemandCell]

    def count(self, depot_id: int, type_id: int, level: int) -> int:
        cell = self.cells.get((depot_id, type_id, level))
        return 0 if cell is None else cell.count

    def raw(self, depot_id: int, type_id: int, level: int) -> float:
        cell = self.cells.get((depot_id, type_id, level))
        return 0.0 if cell is None else cell.raw

    def total_count(self) -> int:
        return sum(c.count for c in self.cells.values())

    def total_raw(self) -> float:
        return sum(c.raw for c in self.cells.values())

    def nonzero(self) -> list[tuple[int, int, int]]:
        return sorted(k for k, c in self.cells.items() if c.count > 0)

    def series_level_counts(self, s: Scenario) -> dict[tuple[str, int], int]:
        types = s.type_map()
        out: dict[tuple[str, int], int] = {}
        for (_, e, g), cell in self.cells.items():
            key = (types[e].series, g)
            out[key] = out.get(key, 0) + cell.count
        return out


def demand_table(s: Scenario, rounding: str | None = None) -> DemandTable:
    """Annual demand per (depot, type, level) from mileage cycles.

    A trainset reaching the level-g threshold but not yet the level-(g+1)
    threshold generates level-g work, so each cell is the difference of the
    two event rates (the top level keeps its full rate); rates are fleet size
    x annual mileage / cycle, scaled by the standardization factor and the
    demand unbalance coefficient, then rounded per cell.
    """
    mode = rounding or s.globals.demand_rounding
    rounder = ROUNDERS[mode]
    omega = s.globals.demand_unbalance
    types = s.type_map()
    cells: dict[tuple[int, int, int], DemandCell] = {}
    for depot in s.depots:
        for type_id, trains in depot.fleet:
            t = types[type_id]
            yearly_km = trains * t.annual_mileage_km
            for g in LEVELS:
                rate = yearly_km / t.cycle_km[g]
                if g < max(LEVELS):
                    rate -= yearly_km / t.cycle_km[g + 1]
                raw = omega * t.std_factor * rate
                cells[(depot.id, type_id, g)] = DemandCell(raw=raw, count=rounder(raw))
    return DemandTable(cells=cells)


# ---------------------------------------------------------------------------
# Capacity and capability
# ---------------------------------------------------------------------------


def pool_capacity(
    positions: float,
    working_days: float,
    duration_days: float,
    work_unbalance: float = 1.0,
) -> float:
    """Standard trainsets a line group can turn over per year."""
    if duration_days <= 0:
        raise ValueError(f"maintenance duration must be > 0, got {duration_days}")
    if working_days <= 0:
        raise ValueError(f"working days must be > 0, got {working_days}")
    if positions < 0:
        raise ValueError(f"positions must be >= 0, got {positions}")
    return positions * working_days / (work_unbalance * duration_days)


def pool_duration(s: Scenario, pool: CapacityPool) -> float:
    """Duration (days) of the pool's reference level, shared by all members."""
    ref = pool.reference_level()
    types = s.type_map()
    for m in pool.members:
        if m.series is not None:
            return s.globals.durations[m.series][ref]
        for tid in m.type_ids or ():
            return s.globals.durations[types[tid].series][ref]
    raise ValueError(f"pool {pool.id} has no members")


def effective_pools(base: Base, plan_id: int) -> dict[str, tuple[CapacityPool, int]]:
    """Pools present at a base under a plan, with their total positions."""
    merged: dict[str, tuple[CapacityPool, int]] = {
        p.id: (p, p.positions) for p in base.pools
    }
    plan = base.plan(plan_id)
    if plan is not None:
        for tpl in plan.pools:
            if tpl.id in merged:
                spec, pos = merged[tpl.id]
                merged[tpl.id] = (spec, pos + tpl.positions)
            else:
                merged[tpl.id] = (tpl, tpl.positions)
    return merged


def effective_capacity(s: Scenario, base: Base, plan_id: int) -> dict[str, float]:
    """Per-pool annual capacity at a base under the chosen plan.

    A declared override replaces the position formula for the initial
    endowment; positions added by the plan still contribute through it.
    """
    out: dict[str, float] = {}
    for pool_id, (pool, positions) in effective_pools(base, plan_id).items():
        duration = pool_duration(s, pool)
        if pool.capacity_override is not None:
            added = positions - pool.positions
            cap = pool.capacity_override + pool_capacity(
                added, s.globals.working_days, duration, s.globals.work_unbalance
            )
        else:
            cap = pool_capacity(
                positions, s.globals.working_days, duration, s.globals.work_unbalance
            )
        out[pool_id] = cap
    return out


def capability_matrix(s: Scenario, base: Base, plan_id: int) -> set[tuple[int, int]]:
    """(type id, level) pairs the base can maintain under the chosen plan."""
    caps = effective_capacity(s, base, plan_id)
    pools = effective_pools(base, plan_id)
    out: set[tuple[int, int]] = set()
    for pool_id, (pool, _) in pools.items():
        if caps[pool_id] <= 0:
            continue
        for t in s.emu_types:
            for g in LEVELS:
                if pool.covers(t, g):
                    out.add((t.id, g))
    return out


def covering_pool(base: Base, plan_id: int, emu: EmuType, level: int) -> str | None:
    """Id of the pool at this base that would host (type, level) work."""
    for pool_id, (pool, _) in effective_pools(base, plan_id).items():
        if pool.covers(emu, level):
            return pool_id
    return None


def any_plan_capability(s: Scenario, base: Base) -> set[tuple[int, int]]:
    """Pairs the base could maintain under at least one plan (or initially)."""
    out = capability_matrix(s, base, NO_BUILD)
    for plan in base.plans:
        out |= capability_matrix(s, base, plan.id)
    return out


# ---------------------------------------------------------------------------
# Unit costs (million RMB per standard trainset)
# ---------------------------------------------------------------------------


def dispatch_unit(s: Scenario, depot_id: int, base_id: int) -> float:
    return s.globals.empty_run_cost_rmb_per_km * s.distance(depot_id, base_id) / 1e6


def maint_unit(s: Scenario, base: Base, emu: EmuType, level: int) -> float:
    ref = s.globals.maint_cost_ref[emu.series][level]
    return ref * (1.0 + base.maint_ratio)


def annualized_investment(s: Scenario, base: Base, plan_id: int) -> float:
    plan = base.plan(plan_id)
    if plan is None:
        return 0.0
    crf = capital_recovery_factor(s.globals.interest_rate, plan.payback_years)
    return crf * base.investment(plan_id)
