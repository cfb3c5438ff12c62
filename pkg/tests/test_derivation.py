from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import build_scenario, demand_cell_oracle, pool_for
from mblap import derivation as dv
from mblap.scenario import Base, Depot, EmuType


# -- capital recovery factor -------------------------------------------------

def test_crf_case_study_value():
    # frozen by hand: 0.065 * 1.065^20 / (1.065^20 - 1)
    crf = dv.capital_recovery_factor(0.065, 20)
    assert crf == pytest.approx(0.0907564, abs=5e-7)
    assert 0.0903 <= crf <= 0.0912


def test_crf_single_year_identity():
    for rate in (0.01, 0.065, 0.2, 0.9):
        assert dv.capital_recovery_factor(rate, 1) == pytest.approx(1 + rate, rel=1e-12)


def test_crf_two_year_hand_value():
    # 0.1 * 1.21 / 0.21
    assert dv.capital_recovery_factor(0.10, 2) == pytest.approx(0.5761904761904763, rel=1e-12)


def test_crf_limit_is_rate():
    assert dv.capital_recovery_factor(0.065, 500) == pytest.approx(0.065, abs=1e-6)


def test_crf_domain_errors():
    with pytest.raises(ValueError):
        dv.capital_recovery_factor(0.0, 10)
    with pytest.raises(ValueError):
        dv.capital_recovery_factor(-0.1, 10)
    with pytest.raises(ValueError):
        dv.capital_recovery_factor(0.1, 0)


# -- demand ------------------------------------------------------------------

def test_demand_case_study_cell(northwest):
    # 14 trains, 65k km/yr, 120k cycle at level 3 on the 1:2:4 ladder
    table = dv.demand_table(northwest)
    urumqi = next(d for d in northwest.depots if d.name == "Urumqi")
    crh2g = next(t for t in northwest.emu_types if t.name == "CRH2G")
    assert table.raw(urumqi.id, crh2g.id, 3) == pytest.approx(3.791667, abs=1e-5)
    assert table.count(urumqi.id, crh2g.id, 3) == 4


def test_demand_zero_fleet_rows():
    t = EmuType(id=1, name="T1", series="A", std_factor=1,
                annual_mileage_km=65000.0, cycle_km={3: 1.2e5, 4: 2.4e5, 5: 4.8e5})
    s = build_scenario(
        [t],
        [Depot(id=1, name="D1", fleet=((1, 0),))],
        [Base(id=1, name="B1", invest_ratio=0.0, maint_ratio=0.0,
              pools=(pool_for("A", (3,), 2),), plans=())],
        ((0.0,),),
    )
    table = dv.demand_table(s)
    assert table.total_count() == 0
    assert table.total_raw() == 0.0


def test_demand_matches_exact_oracle(northwest):
    table = dv.demand_table(northwest)
    types = northwest.type_map()
    for depot in northwest.depots:
        for tid, trains in depot.fleet:
            t = types[tid]
            for g in (3, 4, 5):
                exact = demand_cell_oracle(
                    1, t.std_factor, trains, t.annual_mileage_km, t.cycle_km, g
                )
                assert table.raw(depot.id, tid, g) == pytest.approx(float(exact), rel=1e-12)
                # half-up on an exact rational
                expected = int(exact + Fraction(1, 2))
                assert table.count(depot.id, tid, g) == expected


def test_demand_raw_total_and_realized_total(northwest):
    table = dv.demand_table(northwest)
    # telescoped identity: sum of raws = sum over fleets of m*H*l/L3
    types = northwest.type_map()
    expected = sum(
        types[t].std_factor * n * types[t].annual_mileage_km / types[t].cycle_km[3]
        for d in northwest.depots
        for t, n in d.fleet
    )
    assert table.total_raw() == pytest.approx(expected, rel=1e-12)
    assert table.total_raw() == pytest.approx(194.7725, abs=5e-4)
    # half-up per cell lands on 195 (the source reports 194; see the README
    # note on demand discretization)
    assert table.total_count() == 195


def test_demand_rounding_modes(northwest):
    up = dv.demand_table(northwest, rounding="ceil")
    down = dv.demand_table(northwest, rounding="floor")
    default = dv.demand_table(northwest)
    for key, cell in default.cells.items():
        assert down.count(*key) <= cell.count <= up.count(*key)
    assert down.total_count() <= default.total_count() <= up.total_count()


@st.composite
def fleet_cases(draw):
    trains = draw(st.integers(min_value=0, max_value=400))
    m = draw(st.sampled_from([1, 2]))
    mileage = draw(st.integers(min_value=10_000, max_value=400_000))
    cycle3 = draw(st.integers(min_value=50_000, max_value=1_000_000))
    return trains, m, mileage, cycle3


@given(fleet_cases())
@settings(max_examples=200, deadline=None)
def test_demand_telescoping_property(case):
    trains, m, mileage, cycle3 = case
    cycles = {3: cycle3, 4: 2 * cycle3, 5: 4 * cycle3}
    total = sum(
        demand_cell_oracle(1, m, trains, mileage, cycles, g) for g in (3, 4, 5)
    )
    assert total == Fraction(m) * Fraction(trains) * Fraction(mileage) / Fraction(cycle3)


@given(fleet_cases(), st.integers(min_value=1, max_value=40))
@settings(max_examples=100, deadline=None)
def test_demand_monotone_in_fleet(case, extra):
    trains, m, mileage, cycle3 = case
    cycles = {3: cycle3, 4: 2 * cycle3, 5: 4 * cycle3}
    for g in (3, 4, 5):
        low = demand_cell_oracle(1, m, trains, mileage, cycles, g)
        high = demand_cell_oracle(1, m, trains + extra, mileage, cycles, g)
        assert high >= low


def test_demand_antitone_in_cycle(northwest):
    longer = tuple(
        t.__class__(**{**t.__dict__, "cycle_km": {g: 1.5 * km for g, km in t.cycle_km.items()}})
        for t in northwest.emu_types
    )
    import dataclasses
    slower = dataclasses.replace(northwest, emu_types=longer)
    a = dv.demand_table(northwest)
    b = dv.demand_table(slower)
    for key in a.cells:
        assert b.raw(*key) <= a.raw(*key) + 1e-12


# -- capacity and capability ---------------------------------------------------

def test_pool_capacity_examples():
    assert dv.pool_capacity(3, 300, 30, 1) == pytest.approx(30.0)
    assert dv.pool_capacity(6, 300, 45, 1) == pytest.approx(40.0)
    assert dv.pool_capacity(0, 300, 30, 1) == 0.0


def test_pool_capacity_domain_errors():
    with pytest.raises(ValueError):
        dv.pool_capacity(3, 300, 0, 1)
    with pytest.raises(ValueError):
        dv.pool_capacity(-1, 300, 30, 1)
    with pytest.raises(ValueError):
        dv.pool_capacity(3, 0, 30, 1)


def test_effective_capacity_case_study(northwest):
    xian = next(b for b in northwest.bases if b.name == "Xi'an")
    hami = next(b for b in northwest.bases if b.name == "Hami")
    assert dv.effective_capacity(northwest, xian, 0)["CRH-III"] == pytest.approx(30.0)
    assert dv.effective_capacity(northwest, hami, 0) == {}
    caps8 = dv.effective_capacity(northwest, xian, 8)
    assert caps8["CRH-III"] == pytest.approx(60.0)
    hami8 = dv.effective_capacity(northwest, hami, 8)
    assert hami8 == pytest.approx(
        {"CRH-III": 30.0, "CRH-IV&V": 20.0, "CR-III": 30.0, "CR-IV&V": 40.0}
    )


def test_effective_capacity_unknown_plan(northwest):
    xian = next(b for b in northwest.bases if b.name == "Xi'an")
    with pytest.raises(KeyError):
        dv.effective_capacity(northwest, xian, 99)


def test_capacity_additivity(northwest):
    for base in northwest.bases:
        base_caps = dv.effective_capacity(northwest, base, 0)
        for plan in base.plans:
            caps = dv.effective_capacity(northwest, base, plan.id)
            for pid, cap in base_caps.items():
                assert caps.get(pid, 0.0) >= cap - 1e-12


def test_capability_case_study(northwest):
    types = northwest.type_map()
    xian = next(b for b in northwest.bases if b.name == "Xi'an")
    hami = next(b for b in northwest.bases if b.name == "Hami")
    urumqi = next(b for b in northwest.bases if b.name == "Urumqi")

    xian0 = dv.capability_matrix(northwest, xian, 0)
    assert xian0 == {
        (t.id, g) for t in northwest.emu_types if t.series == "CRH" for g in (3, 4, 5)
    }
    assert dv.capability_matrix(northwest, urumqi, 0) == set()
    hami8 = dv.capability_matrix(northwest, hami, 8)
    assert hami8 == {(t.id, g) for t in northwest.emu_types for g in (3, 4, 5)}
    del types


def test_capacity_override_bypasses_positions():
    t = EmuType(id=1, name="T1", series="A", std_factor=1,
                annual_mileage_km=65000.0, cycle_km={3: 1.2e5, 4: 2.4e5, 5: 4.8e5})
    pool = pool_for("A", (3,), 2)
    import dataclasses
    pool = dataclasses.replace(pool, capacity_override=77.0)
    base = Base(id=1, name="B1", invest_ratio=0.0, maint_ratio=0.0, pools=(pool,), plans=())
    s = build_scenario([t], [Depot(id=1, name="D1", fleet=((1, 1),))], [base], ((10.0,),))
    assert dv.effective_capacity(s, base, 0)["A-3"] == pytest.approx(77.0)


def test_unit_costs(northwest):
    types = northwest.type_map()
    hami = next(b for b in northwest.bases if b.name == "Hami")
    urumqi_depot = next(d for d in northwest.depots if d.name == "Urumqi")
    # 530 km at 3,000 RMB/km
    assert dv.dispatch_unit(northwest, urumqi_depot.id, hami.id) == pytest.approx(1.59)
    crh = next(t for t in northwest.emu_types if t.series == "CRH")
    assert dv.maint_unit(northwest, hami, crh, 3) == pytest.approx(4.0 * 1.04)
