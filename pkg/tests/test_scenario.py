import json

import pytest

from helpers import make_globals, pool_for
from mblap.scenario import (
    Depot,
    EmuType,
    ScenarioError,
    ScenarioValidationError,
    dumps_scenario,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)


def test_bundled_scenario_loads(northwest):
    assert len(northwest.depots) == 8
    assert len(northwest.bases) == 7
    assert len(northwest.emu_types) == 8
    assert sum(n for d in northwest.depots for _, n in d.fleet) == 421


def test_bundled_scenario_fleet_subtotals(northwest):
    types = northwest.type_map()

    def series_sets(depot, series):
        return sum(
            types[t].std_factor * n for t, n in depot.fleet if types[t].series == series
        )

    by_name = {d.name: d for d in northwest.depots}
    expected = {
        "Urumqi": (28, 26),
        "Hami": (12, 14),
        "Xining": (6, 12),
        "Lanzhou West": (39, 28),
        "Yinchuan": (19, 23),
        "Baoji South": (0, 16),
        "Xi'an North": (118, 80),
        "Xi'an East": (0, 30),
    }
    for name, (crh, cr) in expected.items():
        assert series_sets(by_name[name], "CRH") == crh, name
        assert series_sets(by_name[name], "CR") == cr, name
    assert sum(series_sets(d, "CRH") for d in northwest.depots) == 222
    assert sum(series_sets(d, "CR") for d in northwest.depots) == 229


def test_bundled_scenario_self_validates(northwest):
    assert validate(northwest) == []


def test_plan_zero_never_listed(northwest):
    for base in northwest.bases:
        assert all(p.id != 0 for p in base.plans)


def test_cycle_ratio_defaults(northwest):
    for t in northwest.emu_types:
        assert t.cycle_km[4] == pytest.approx(2 * t.cycle_km[3])
        assert t.cycle_km[5] == pytest.approx(4 * t.cycle_km[3])


def test_round_trip(northwest):
    again = scenario_from_dict(json.loads(dumps_scenario(northwest)))
    assert again == northwest


def test_empty_scenario_is_valid():
    doc = {
        "meta": {"name": "empty"},
        "globals": {
            "empty_run_cost_rmb_per_km": 1500.0,
            "interest_rate": 0.065,
            "budget": 0.0,
            "dispatch_unbalance": 1.0,
            "working_days": 300,
            "durations": {},
            "maint_cost_ref": {},
        },
        "emu_types": [],
        "depots": [],
        "bases": [],
        "distances": {"depot_ids": [], "base_ids": [], "km": []},
    }
    s = scenario_from_dict(doc)
    assert s.depots == () and s.bases == ()


def test_unknown_type_reference_rejected():
    doc = {
        "meta": {},
        "globals": {
            "empty_run_cost_rmb_per_km": 1500.0,
            "interest_rate": 0.065,
            "budget": 100.0,
            "dispatch_unbalance": 1.2,
            "working_days": 300,
            "durations": {"A": {"3": 30}},
            "maint_cost_ref": {"A": {"3": 4, "4": 13.5, "5": 20}},
        },
        "emu_types": [
            {"id": 1, "name": "T1", "series": "A", "std_factor": 1,
             "annual_mileage_km": 65000, "cycle_km": {"3": 120000}}
        ],
        "depots": [{"id": 1, "name": "D1", "fleet": [{"type": 9, "trains": 3}]}],
        "bases": [],
        "distances": {"depot_ids": [1], "base_ids": [], "km": [[]]},
    }
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(doc)
    codes = {v.code for v in err.value.violations}
    assert "depot.unknown_type" in codes
    assert any("D1" in v.path for v in err.value.violations)


def test_unknown_keys_rejected(northwest):
    doc = scenario_to_dict(northwest)
    doc["surprise"] = 1
    with pytest.raises(ScenarioError, match="surprise"):
        scenario_from_dict(doc)
    doc = scenario_to_dict(northwest)
    doc["globals"]["mystery"] = 2
    with pytest.raises(ScenarioError, match="mystery"):
        scenario_from_dict(doc)


def test_malformed_json_raises_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_validate_flags_dispatch_unbalance(northwest):
    bad = northwest.with_globals(dispatch_unbalance=0.5)
    codes = {v.code for v in validate(bad)}
    assert "globals.dispatch_unbalance_below_1" in codes


def test_validate_flags_negative_distance():
    t = EmuType(id=1, name="T1", series="A", std_factor=1,
                annual_mileage_km=65000.0, cycle_km={3: 1e5, 4: 2e5, 5: 4e5})
    d = Depot(id=1, name="D1", fleet=((1, 2),))
    from mblap.scenario import Base
    b = Base(id=1, name="B1", invest_ratio=0.0, maint_ratio=0.0,
             pools=(pool_for("A", (3,), 2),), plans=())
    from mblap.scenario import DistanceMatrix, Scenario
    s = Scenario(
        meta={}, emu_types=(t,), depots=(d,), bases=(b,),
        globals=make_globals(),
        distances=DistanceMatrix(depot_ids=(1,), base_ids=(1,), km=((-5.0,),)),
    )
    violations = validate(s)
    assert any(v.code == "distances.negative" and "(1, 1)" in v.message for v in violations)


def test_validate_enforces_cycle_order():
    t = EmuType(id=1, name="T1", series="A", std_factor=1,
                annual_mileage_km=65000.0, cycle_km={3: 4e5, 4: 2e5, 5: 1e5})
    from mblap.scenario import DistanceMatrix, Scenario
    s = Scenario(
        meta={}, emu_types=(t,), depots=(), bases=(),
        globals=make_globals(),
        distances=DistanceMatrix(depot_ids=(), base_ids=(), km=()),
    )
    codes = {v.code for v in validate(s)}
    assert "emu_type.cycle_order" in codes


def test_pool_overlap_detected():
    t = EmuType(id=1, name="T1", series="A", std_factor=1,
                annual_mileage_km=65000.0, cycle_km={3: 1e5, 4: 2e5, 5: 4e5})
    from mblap.scenario import Base, DistanceMatrix, Scenario
    b = Base(
        id=1, name="B1", invest_ratio=0.0, maint_ratio=0.0,
        pools=(pool_for("A", (3,), 2, pool_id="p1"), pool_for("A", (3, 4), 2, pool_id="p2")),
        plans=(),
    )
    s = Scenario(
        meta={}, emu_types=(t,), depots=(), bases=(b,),
        globals=make_globals(),
        distances=DistanceMatrix(depot_ids=(), base_ids=(1,), km=()),
    )
    codes = {v.code for v in validate(s)}
    assert "pool.members_overlap" in codes


def test_repo_data_copy_matches_packaged(northwest):
    from pathlib import Path

    from mblap.scenario import bundled_scenario_path

    repo_copy = Path(__file__).resolve().parents[1] / "data" / "northwest.mblap.json"
    assert repo_copy.read_bytes() == bundled_scenario_path().read_bytes()
