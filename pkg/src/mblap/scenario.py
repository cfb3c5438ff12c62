"""Problem instances: EMU fleets, depots, candidate bases, construction plans.

A scenario is an immutable bundle of everything the solvers consume: the
rolling-stock fleet per depot, the candidate maintenance bases with their
initial line endowments and construction plans, global cost/technology
parameters, and the depot-to-base distance table.  Scenarios are loaded from
a single JSON document (see ``docs`` in the repository README for the schema)
and validated eagerly; all solver code may assume a valid, fully
cross-referenced instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

LEVELS = (3, 4, 5)
CYCLE_RATIO = {3: 1, 4: 2, 5: 4}
ROUNDING_MODES = ("halfUp", "ceil", "floor")
NO_BUILD = 0


class ScenarioError(Exception):
    """Malformed scenario document (unparseable or schema violation)."""


@dataclass(frozen=True)
class Violation:
    """One violated invariant, with a machine-readable code and a path."""

    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


class ScenarioValidationError(ScenarioError):
    """Raised by loaders when a parsed document violates invariants."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "\n".join(str(v) for v in violations)
        super().__init__(f"{len(violations)} validation error(s):\n{lines}")


@dataclass(frozen=True)
class EmuType:
    """One EMU type: series membership, standardization factor, cycles."""

    id: int
    name: str
    series: str
    std_factor: int
    annual_mileage_km: float
    cycle_km: dict[int, float]  # level -> mileage threshold


@dataclass(frozen=True)
class Depot:
    id: int
    name: str
    fleet: tuple[tuple[int, int], ...]  # (emu type id, train count)

    def std_sets(self, types: dict[int, EmuType]) -> int:
        return sum(types[t].std_factor * n for t, n in self.fleet)


@dataclass(frozen=True)
class PoolMember:
    """A (series-or-types, levels) slice of maintenance work a pool accepts.

    ``conversion`` gives the capacity units one standard trainset of each
    level consumes; pools denominate capacity in units of their reference
    (lowest) level.
    """

    levels: tuple[int, ...]
    conversion: dict[int, float]  # level -> units per standard set
    series: str | None = None
    type_ids: tuple[int, ...] | None = None

    def covers(self, emu: EmuType, level: int) -> bool:
        if level not in self.levels:
            return False
        if self.type_ids is not None:
            return emu.id in self.type_ids
        return emu.series == self.series


@dataclass(frozen=True)
class CapacityPool:
    """A group of maintenance positions shared by compatible activities."""

    id: str
    members: tuple[PoolMember, ...]
    positions: int = 0
    capacity_override: float | None = None

    def covers(self, emu: EmuType, level: int) -> bool:
        return any(m.covers(emu, level) for m in self.members)

    def conversion(self, level: int) -> float:
        for m in self.members:
            if level in m.conversion:
                return m.conversion[level]
        raise KeyError(f"pool {self.id} has no conversion for level {level}")

    def reference_level(self) -> int:
        return min(min(m.levels) for m in self.members)

    def structure_key(self) -> tuple:
        return tuple(
            (m.series, m.type_ids, m.levels, tuple(sorted(m.conversion.items())))
            for m in self.members
        )


@dataclass(frozen=True)
class ConstructionPlan:
    """One investment option: positions added per pool, reference price."""

    id: int
    kind: str  # "new" | "expansion"
    pools: tuple[CapacityPool, ...]  # positions here are *added* positions
    invest_ref: float  # million RMB before regional adjustment
    payback_years: int

    def added_positions(self, pool_id: str) -> int:
        for p in self.pools:
            if p.id == pool_id:
                return p.positions
        return 0


@dataclass(frozen=True)
class Base:
    id: int
    name: str
    invest_ratio: float  # regional adjustment on plan investment
    maint_ratio: float  # regional adjustment on per-set maintenance cost
    pools: tuple[CapacityPool, ...] = ()
    plans: tuple[ConstructionPlan, ...] = ()

    def plan(self, plan_id: int) -> ConstructionPlan | None:
        if plan_id == NO_BUILD:
            return None
        for p in self.plans:
            if p.id == plan_id:
                return p
        raise KeyError(f"base {self.name} has no plan {plan_id}")

    def investment(self, plan_id: int) -> float:
        p = self.plan(plan_id)
        return 0.0 if p is None else p.invest_ref * (1.0 + self.invest_ratio)


@dataclass(frozen=True)
class GlobalParams:
    empty_run_cost_rmb_per_km: float
    interest_rate: float
    budget: float  # million RMB
    dispatch_unbalance: float
    working_days: float
    durations: dict[str, dict[int, float]]  # series -> level -> days
    maint_cost_ref: dict[str, dict[int, float]]  # series -> level -> M RMB/set
    demand_unbalance: float = 1.0
    work_unbalance: float = 1.0
    demand_rounding: str = "halfUp"
    sweep_budget_relax: float = 1.5


@dataclass(frozen=True)
class DistanceMatrix:
    depot_ids: tuple[int, ...]
    base_ids: tuple[int, ...]
    km: tuple[tuple[float, ...], ...]  # depot-major

    def get(self, depot_id: int, base_id: int) -> float:
        return self.km[self.depot_ids.index(depot_id)][self.base_ids.index(base_id)]


@dataclass(frozen=True)
class Scenario:
    meta: dict[str, Any]
    emu_types: tuple[EmuType, ...]
    depots: tuple[Depot, ...]
    bases: tuple[Base, ...]
    globals: GlobalParams
    distances: DistanceMatrix

    def type_map(self) -> dict[int, EmuType]:
        return {t.id: t for t in self.emu_types}

    def base_map(self) -> dict[int, Base]:
        return {b.id: b for b in self.bases}

    def depot_map(self) -> dict[int, Depot]:
        return {d.id: d for d in self.depots}

    def series_tags(self) -> tuple[str, ...]:
        seen: list[str] = []
        for t in self.emu_types:
            if t.series not in seen:
                seen.append(t.series)
        return tuple(seen)

    def distance(self, depot_id: int, base_id: int) -> float:
        return self.distances.get(depot_id, base_id)

    def with_globals(self, **changes: Any) -> "Scenario":
        return replace(self, globals=replace(self.globals, **changes))


# ---------------------------------------------------------------------------
# Schema parsing
# ---------------------------------------------------------------------------

_TOP_KEYS = {"meta", "globals", "emu_types", "depots", "bases", "distances"}
_GLOBAL_KEYS = {
    "empty_run_cost_rmb_per_km",
    "interest_rate",
    "budget",
    "dispatch_unbalance",
    "demand_unbalance",
    "working_days",
    "work_unbalance",
    "durations",
    "maint_cost_ref",
    "demand_rounding",
    "sweep_budget_relax",
}
_TYPE_KEYS = {"id", "name", "series", "std_factor", "annual_mileage_km", "cycle_km"}
_DEPOT_KEYS = {"id", "name", "fleet"}
_FLEET_KEYS = {"type", "trains"}
_BASE_KEYS = {"id", "name", "invest_ratio", "maint_ratio", "pools", "plans"}
_POOL_KEYS = {"id", "members", "positions", "capacity_override"}
_MEMBER_KEYS = {"series", "type_ids", "levels", "conversion"}
_PLAN_KEYS = {"id", "kind", "pools", "invest_ref", "payback_years"}
_DIST_KEYS = {"depot_ids", "base_ids", "km"}


def _reject_unknown(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}")


def _parse_levels_map(doc: dict, where: str) -> dict[int, float]:
    out: dict[int, float] = {}
    for k, v in doc.items():
        try:
            out[int(k)] = float(v)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"bad level entry {k!r}: {v!r} in {where}") from exc
    return out


def _parse_member(doc: dict, where: str) -> PoolMember:
    _reject_unknown(doc, _MEMBER_KEYS, where)
    if ("series" in doc) == ("type_ids" in doc):
        raise ScenarioError(f"exactly one of series/type_ids required in {where}")
    return PoolMember(
        levels=tuple(int(v) for v in doc["levels"]),
        conversion=_parse_levels_map(doc["conversion"], where),
        series=doc.get("series"),
        type_ids=tuple(int(v) for v in doc["type_ids"]) if "type_ids" in doc else None,
    )


def _parse_pool(doc: dict, where: str) -> CapacityPool:
    _reject_unknown(doc, _POOL_KEYS, where)
    return CapacityPool(
        id=str(doc["id"]),
        members=tuple(
            _parse_member(m, f"{where}.members[{i}]")
            for i, m in enumerate(doc["members"])
        ),
        positions=int(doc.get("positions", 0)),
        capacity_override=(
            float(doc["capacity_override"])
            if doc.get("capacity_override") is not None
            else None
        ),
    )


def _parse_plan(doc: dict, where: str) -> ConstructionPlan:
    _reject_unknown(doc, _PLAN_KEYS, where)
    return ConstructionPlan(
        id=int(doc["id"]),
        kind=str(doc["kind"]),
        pools=tuple(
            _parse_pool(p, f"{where}.pools[{i}]") for i, p in enumerate(doc["pools"])
        ),
        invest_ref=float(doc["invest_ref"]),
        payback_years=int(doc["payback_years"]),
    )


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a Scenario from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "top level")
    for key in _TOP_KEYS:
        if key not in doc:
            raise ScenarioError(f"missing section {key!r}")

    g = doc["globals"]
    _reject_unknown(g, _GLOBAL_KEYS, "globals")
    try:
        params = GlobalParams(
            empty_run_cost_rmb_per_km=float(g["empty_run_cost_rmb_per_km"]),
            interest_rate=float(g["interest_rate"]),
            budget=float(g["budget"]),
            dispatch_unbalance=float(g["dispatch_unbalance"]),
            demand_unbalance=float(g.get("demand_unbalance", 1.0)),
            working_days=float(g["working_days"]),
            work_unbalance=float(g.get("work_unbalance", 1.0)),
            durations={
                str(series): _parse_levels_map(levels, "globals.durations")
                for series, levels in g["durations"].items()
            },
            maint_cost_ref={
                str(series): _parse_levels_map(levels, "globals.maint_cost_ref")
                for series, levels in g["maint_cost_ref"].items()
            },
            demand_rounding=str(g.get("demand_rounding", "halfUp")),
            sweep_budget_relax=float(g.get("sweep_budget_relax", 1.5)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed globals section: {exc}") from exc

    emu_types = []
    for i, t in enumerate(doc["emu_types"]):
        where = f"emu_types[{i}]"
        _reject_unknown(t, _TYPE_KEYS, where)
        cycles = _parse_levels_map(t["cycle_km"], where)
        if set(cycles) == {3}:
            # only the level-3 threshold given: apply the standard 1:2:4 ladder
            cycles = {lvl: cycles[3] * CYCLE_RATIO[lvl] for lvl in LEVELS}
        emu_types.append(
            EmuType(
                id=int(t["id"]),
                name=str(t["name"]),
                series=str(t["series"]),
                std_factor=int(t["std_factor"]),
                annual_mileage_km=float(t["annual_mileage_km"]),
                cycle_km=cycles,
            )
        )

    depots = []
    for i, d in enumerate(doc["depots"]):
        where = f"depots[{i}]"
        _reject_unknown(d, _DEPOT_KEYS, where)
        fleet = []
        for j, f in enumerate(d["fleet"]):
            _reject_unknown(f, _FLEET_KEYS, f"{where}.fleet[{j}]")
            fleet.append((int(f["type"]), int(f["trains"])))
        depots.append(Depot(id=int(d["id"]), name=str(d["name"]), fleet=tuple(fleet)))

    bases = []
    for i, b in enumerate(doc["bases"]):
        where = f"bases[{i}]"
        _reject_unknown(b, _BASE_KEYS, where)
        bases.append(
            Base(
                id=int(b["id"]),
                name=str(b["name"]),
                invest_ratio=float(b["invest_ratio"]),
                maint_ratio=float(b["maint_ratio"]),
                pools=tuple(
                    _parse_pool(p, f"{where}.pools[{j}]")
                    for j, p in enumerate(b.get("pools", []))
                ),
                plans=tuple(
                    _parse_plan(p, f"{where}.plans[{j}]")
                    for j, p in enumerate(b.get("plans", []))
                ),
            )
        )

    dd = doc["distances"]
    _reject_unknown(dd, _DIST_KEYS, "distances")
    distances = DistanceMatrix(
        depot_ids=tuple(int(v) for v in dd["depot_ids"]),
        base_ids=tuple(int(v) for v in dd["base_ids"]),
        km=tuple(tuple(float(x) for x in row) for row in dd["km"]),
    )

    scenario = Scenario(
        meta=dict(doc["meta"]),
        emu_types=tuple(emu_types),
        depots=tuple(depots),
        bases=tuple(bases),
        globals=params,
        distances=distances,
    )
    violations = validate(scenario)
    if violations:
        raise ScenarioValidationError(violations)
    return scenario


def load_scenario(source: str | Path | bytes) -> Scenario:
    """Load a scenario from a file path or raw JSON bytes/text."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, Path) or (
        isinstance(source, str) and not source.lstrip().startswith("{")
    ):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario file {source}: {exc}") from exc
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from exc
    return scenario_from_dict(doc)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _check_pool(
    pool: CapacityPool,
    path: str,
    series_tags: set[str],
    type_ids: set[int],
    out: list[Violation],
) -> None:
    if pool.positions < 0:
        out.append(Violation("pool.positions_negative", path, f"positions {pool.positions} < 0"))
    if pool.capacity_override is not None and pool.capacity_override < 0:
        out.append(Violation("pool.override_negative", path, "capacity override < 0"))
    if not pool.members:
        out.append(Violation("pool.no_members", path, "pool has no member pairs"))
    for k, m in enumerate(pool.members):
        mpath = f"{path}.members[{k}]"
        if m.series is not None and m.series not in series_tags:
            out.append(Violation("pool.unknown_series", mpath, f"series {m.series!r} matches no EMU type"))
        if m.type_ids is not None:
            for t in m.type_ids:
                if t not in type_ids:
                    out.append(Violation("pool.unknown_type", mpath, f"EMU type {t} not defined"))
        for lvl in m.levels:
            if lvl not in LEVELS:
                out.append(Violation("pool.bad_level", mpath, f"level {lvl} outside {LEVELS}"))
            if m.conversion.get(lvl, 0.0) <= 0.0:
                out.append(Violation("pool.conversion_nonpositive", mpath, f"conversion for level {lvl} must be > 0"))


def _pairs_of(pool: CapacityPool, types: list[EmuType]) -> set[tuple[int, int]]:
    return {
        (t.id, lvl)
        for t in types
        for lvl in LEVELS
        if pool.covers(t, lvl)
    }


def validate(s: Scenario) -> list[Violation]:
    """Return every violated invariant; empty list means the scenario is sound."""
    out: list[Violation] = []
    g = s.globals
    if g.empty_run_cost_rmb_per_km <= 0:
        out.append(Violation("globals.empty_run_nonpositive", "globals", "empty-run cost must be > 0"))
    if not (0.0 < g.interest_rate < 1.0):
        out.append(Violation("globals.interest_rate_range", "globals", f"interest rate {g.interest_rate} outside (0, 1)"))
    if g.budget < 0:
        out.append(Violation("globals.budget_negative", "globals", "budget < 0"))
    if g.dispatch_unbalance < 1.0:
        out.append(Violation("globals.dispatch_unbalance_below_1", "globals", f"dispatch unbalance {g.dispatch_unbalance} < 1"))
    if not (1.0 <= g.working_days <= 366.0):
        out.append(Violation("globals.working_days_range", "globals", f"working days {g.working_days} outside [1, 366]"))
    if g.work_unbalance <= 0:
        out.append(Violation("globals.work_unbalance_nonpositive", "globals", "work unbalance must be > 0"))
    if g.demand_unbalance <= 0:
        out.append(Violation("globals.demand_unbalance_nonpositive", "globals", "demand unbalance must be > 0"))
    if g.demand_rounding not in ROUNDING_MODES:
        out.append(Violation("globals.rounding_mode", "globals", f"demand rounding {g.demand_rounding!r} not one of {ROUNDING_MODES}"))
    if g.sweep_budget_relax < 1.0:
        out.append(Violation("globals.sweep_relax_below_1", "globals", "sweep budget relax multiplier < 1"))
    for series, levels in g.durations.items():
        for lvl, days in levels.items():
            if days <= 0:
                out.append(Violation("globals.duration_nonpositive", f"globals.durations.{series}.{lvl}", "duration must be > 0"))
    for series, levels in g.maint_cost_ref.items():
        for lvl, cost in levels.items():
            if cost <= 0:
                out.append(Violation("globals.maint_cost_nonpositive", f"globals.maint_cost_ref.{series}.{lvl}", "reference cost must be > 0"))

    type_ids: set[int] = set()
    series_tags = set(s.series_tags())
    for i, t in enumerate(s.emu_types):
        path = f"emu_types[{i}]({t.name})"
        if t.id in type_ids:
            out.append(Violation("emu_type.duplicate_id", path, f"duplicate type id {t.id}"))
        type_ids.add(t.id)
        if t.std_factor not in (1, 2):
            out.append(Violation("emu_type.std_factor", path, f"standardization factor {t.std_factor} not in {{1, 2}}"))
        if t.annual_mileage_km <= 0:
            out.append(Violation("emu_type.mileage_nonpositive", path, "annual mileage must be > 0"))
        missing = [lvl for lvl in LEVELS if lvl not in t.cycle_km]
        if missing:
            out.append(Violation("emu_type.cycle_missing", path, f"no cycle for level(s) {missing}"))
        else:
            if not (t.cycle_km[3] < t.cycle_km[4] < t.cycle_km[5]):
                out.append(Violation("emu_type.cycle_order", path, "cycles must satisfy level3 < level4 < level5"))
        if any(v <= 0 for v in t.cycle_km.values()):
            out.append(Violation("emu_type.cycle_nonpositive", path, "cycle thresholds must be > 0"))

    depot_ids: set[int] = set()
    for i, d in enumerate(s.depots):
        path = f"depots[{i}]({d.name})"
        if d.id in depot_ids:
            out.append(Violation("depot.duplicate_id", path, f"duplicate depot id {d.id}"))
        depot_ids.add(d.id)
        for t, n in d.fleet:
            if t not in type_ids:
                out.append(Violation("depot.unknown_type", path, f"fleet references unknown EMU type {t}"))
            if n < 0:
                out.append(Violation("depot.fleet_negative", path, f"train count {n} < 0 for type {t}"))

    types = list(s.emu_types)
    base_ids: set[int] = set()
    pool_structures: dict[str, tuple] = {}
    for i, b in enumerate(s.bases):
        path = f"bases[{i}]({b.name})"
        if b.id in base_ids:
            out.append(Violation("base.duplicate_id", path, f"duplicate base id {b.id}"))
        base_ids.add(b.id)
        if b.invest_ratio <= -1.0 or b.maint_ratio <= -1.0:
            out.append(Violation("base.ratio_out_of_range", path, "regional ratios must be > -1"))
        covered: set[tuple[int, int]] = set()
        for j, pool in enumerate(b.pools):
            ppath = f"{path}.pools[{j}]({pool.id})"
            _check_pool(pool, ppath, series_tags, type_ids, out)
            pairs = _pairs_of(pool, types)
            if pairs & covered:
                out.append(Violation("pool.members_overlap", ppath, "member pairs overlap another pool at this base"))
            covered |= pairs
            pool_structures.setdefault(f"{b.id}:{pool.id}", pool.structure_key())
        plan_ids: set[int] = set()
        for j, plan in enumerate(b.plans):
            qpath = f"{path}.plans[{j}]"
            if plan.id == NO_BUILD:
                out.append(Violation("plan.id_zero_reserved", qpath, "plan id 0 is reserved for the no-build option"))
            if plan.id in plan_ids:
                out.append(Violation("plan.duplicate_id", qpath, f"duplicate plan id {plan.id}"))
            plan_ids.add(plan.id)
            if plan.kind not in ("new", "expansion"):
                out.append(Violation("plan.kind", qpath, f"kind {plan.kind!r} not new/expansion"))
            if plan.invest_ref <= 0:
                out.append(Violation("plan.invest_nonpositive", qpath, "reference investment must be > 0"))
            if plan.payback_years < 1:
                out.append(Violation("plan.payback_below_1", qpath, "payback period must be >= 1 year"))
            added = [p.positions for p in plan.pools]
            if any(a < 0 for a in added):
                out.append(Violation("plan.added_negative", qpath, "added positions must be >= 0"))
            if not any(a > 0 for a in added):
                out.append(Violation("plan.no_added_positions", qpath, "plan adds no positions"))
            tcovered: set[tuple[int, int]] = set()
            for k, pool in enumerate(plan.pools):
                tpath = f"{qpath}.pools[{k}]({pool.id})"
                _check_pool(pool, tpath, series_tags, type_ids, out)
                pairs = _pairs_of(pool, types)
                if pairs & tcovered:
                    out.append(Violation("pool.members_overlap", tpath, "member pairs overlap another pool in this plan"))
                tcovered |= pairs
                key = f"{b.id}:{pool.id}"
                if key in pool_structures:
                    if pool_structures[key] != pool.structure_key():
                        out.append(Violation("pool.structure_mismatch", tpath, f"pool {pool.id!r} declared with a different member structure elsewhere at this base"))
                else:
                    pool_structures[key] = pool.structure_key()

    # distance table must densely cover all (depot, base) pairs
    d = s.distances
    if set(d.depot_ids) != depot_ids or len(d.depot_ids) != len(depot_ids):
        out.append(Violation("distances.depot_ids", "distances", "depot ids do not match the depots section"))
    if set(d.base_ids) != base_ids or len(d.base_ids) != len(base_ids):
        out.append(Violation("distances.base_ids", "distances", "base ids do not match the bases section"))
    if len(d.km) != len(d.depot_ids):
        out.append(Violation("distances.shape", "distances", "row count does not match depot count"))
    else:
        for r, row in enumerate(d.km):
            if len(row) != len(d.base_ids):
                out.append(Violation("distances.shape", f"distances.km[{r}]", "column count does not match base count"))
                continue
            for c, val in enumerate(row):
                if not math.isfinite(val):
                    out.append(Violation("distances.nonfinite", f"distances.km[{r}][{c}]", f"distance ({d.depot_ids[r]}, {d.base_ids[c]}) is not finite"))
                elif val < 0:
                    out.append(Violation("distances.negative", f"distances.km[{r}][{c}]", f"distance ({d.depot_ids[r]}, {d.base_ids[c]}) = {val} < 0"))

    # every (series, level) that can generate demand needs a reference cost;
    # every pool's reference level needs a duration for each member series
    demanded_series = {t.series for d_ in s.depots for tid, n in d_.fleet if n > 0 for t in types if t.id == tid}
    for series in sorted(demanded_series):
        for lvl in LEVELS:
            if g.maint_cost_ref.get(series, {}).get(lvl) is None:
                out.append(Violation("globals.maint_cost_missing", f"globals.maint_cost_ref.{series}.{lvl}", "no reference maintenance cost for a demanded series/level"))
    for b in s.bases:
        all_pools = list(b.pools) + [p for plan in b.plans for p in plan.pools]
        for pool in all_pools:
            ref = pool.reference_level() if pool.members else None
            if ref is None:
                continue
            durations = set()
            for m in pool.members:
                series_list = [m.series] if m.series else sorted({t.series for t in types if m.type_ids and t.id in m.type_ids})
                for series in series_list:
                    dur = g.durations.get(series, {}).get(ref)
                    if dur is None:
                        out.append(Violation("globals.duration_missing", f"bases({b.name}).pool({pool.id})", f"no duration for series {series!r} at reference level {ref}"))
                    else:
                        durations.add(dur)
            if len(durations) > 1:
                out.append(Violation("pool.duration_ambiguous", f"bases({b.name}).pool({pool.id})", f"member series disagree on the level-{ref} duration"))

    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _member_to_dict(m: PoolMember) -> dict:
    out: dict[str, Any] = {}
    if m.series is not None:
        out["series"] = m.series
    else:
        out["type_ids"] = list(m.type_ids or ())
    out["levels"] = list(m.levels)
    out["conversion"] = {str(k): v for k, v in sorted(m.conversion.items())}
    return out


def _pool_to_dict(p: CapacityPool) -> dict:
    out: dict[str, Any] = {
        "id": p.id,
        "members": [_member_to_dict(m) for m in p.members],
        "positions": p.positions,
    }
    if p.capacity_override is not None:
        out["capacity_override"] = p.capacity_override
    return out


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "meta": dict(s.meta),
        "globals": {
            "empty_run_cost_rmb_per_km": s.globals.empty_run_cost_rmb_per_km,
            "interest_rate": s.globals.interest_rate,
            "budget": s.globals.budget,
            "dispatch_unbalance": s.globals.dispatch_unbalance,
            "demand_unbalance": s.globals.demand_unbalance,
            "working_days": s.globals.working_days,
            "work_unbalance": s.globals.work_unbalance,
            "durations": {series: {str(k): v for k, v in sorted(levels.items())} for series, levels in s.globals.durations.items()},
            "maint_cost_ref": {series: {str(k): v for k, v in sorted(levels.items())} for series, levels in s.globals.maint_cost_ref.items()},
            "demand_rounding": s.globals.demand_rounding,
            "sweep_budget_relax": s.globals.sweep_budget_relax,
        },
        "emu_types": [
            {
                "id": t.id,
                "name": t.name,
                "series": t.series,
                "std_factor": t.std_factor,
                "annual_mileage_km": t.annual_mileage_km,
                "cycle_km": {str(k): v for k, v in sorted(t.cycle_km.items())},
            }
            for t in s.emu_types
        ],
        "depots": [
            {"id": d.id, "name": d.name, "fleet": [{"type": t, "trains": n} for t, n in d.fleet]}
            for d in s.depots
        ],
        "bases": [
            {
                "id": b.id,
                "name": b.name,
                "invest_ratio": b.invest_ratio,
                "maint_ratio": b.maint_ratio,
                "pools": [_pool_to_dict(p) for p in b.pools],
                "plans": [
                    {
                        "id": p.id,
                        "kind": p.kind,
                        "pools": [_pool_to_dict(q) for q in p.pools],
                        "invest_ref": p.invest_ref,
                        "payback_years": p.payback_years,
                    }
                    for p in b.plans
                ],
            }
            for b in s.bases
        ],
        "distances": {
            "depot_ids": list(s.distances.depot_ids),
            "base_ids": list(s.distances.base_ids),
            "km": [list(row) for row in s.distances.km],
        },
    }


def dumps_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, ensure_ascii=False)


def bundled_scenario_path(name: str = "northwest") -> Path:
    """Path of a scenario document shipped with the package."""
    return Path(str(resources.files("mblap.data") / f"{name}.mblap.json"))
