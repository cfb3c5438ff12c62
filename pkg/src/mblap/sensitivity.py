"""Proportional perturbation sweeps: fleet size, mileage cycles, durations.

Each sweep re-optimizes the whole location-allocation problem per multiplier
under a slightly relaxed budget, tracking the total annual cost and the
share contributed by annualized construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .derivation import round_half_up
from .scenario import Scenario
from .search import InvestmentDecision, SearchStats, solve_mblap

FACTORS = ("fleetSize", "mileageCycle", "maintDuration")
DEFAULT_MULTIPLIERS = (0.80, 0.85, 0.90, 0.95, 1.00, 1.05, 1.10, 1.15, 1.20)


@dataclass(frozen=True)
class SweepSpec:
    factor: str
    multipliers: tuple[float, ...] = DEFAULT_MULTIPLIERS
    budget_relax: float | None = None  # None: take the scenario default

    def __post_init__(self) -> None:
        if self.factor not in FACTORS:
            raise ValueError(f"factor must be one of {FACTORS}, got {self.factor!r}")
        if any(m <= 0 for m in self.multipliers):
            raise ValueError("multipliers must be positive")
        if not any(abs(m - 1.0) < 1e-12 for m in self.multipliers):
            raise ValueError("multiplier grid must include 1.00")


@dataclass(frozen=True)
class SweepRow:
    multiplier: float
    feasible: bool
    z_upper: float | None
    annualized_investment: float | None
    construction_share: float | None
    decision: InvestmentDecision | None
    stats: SearchStats | None


def perturb(s: Scenario, factor: str, multiplier: float, budget_relax: float | None = None) -> Scenario:
    """Scaled copy of the scenario; the original is left untouched.

    Fleet counts round half-up back to integers; mileage cycles scale at
    every level jointly (their ratios are preserved); durations scale on the
    capacity side only.  The budget is relaxed by the sweep multiplier so
    larger instances keep a feasible plan space.
    """
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    relax = s.globals.sweep_budget_relax if budget_relax is None else budget_relax

    out = s.with_globals(budget=s.globals.budget * relax)
    if factor == "fleetSize":
        depots = tuple(
            replace(
                d,
                fleet=tuple((t, round_half_up(n * multiplier)) for t, n in d.fleet),
            )
            for d in out.depots
        )
        out = replace(out, depots=depots)
    elif factor == "mileageCycle":
        types = tuple(
            replace(t, cycle_km={g: km * multiplier for g, km in t.cycle_km.items()})
            for t in out.emu_types
        )
        out = replace(out, emu_types=types)
    elif factor == "maintDuration":
        durations = {
            series: {g: days * multiplier for g, days in levels.items()}
            for series, levels in out.globals.durations.items()
        }
        out = out.with_globals(durations=durations)
    else:
        raise ValueError(f"unknown factor {factor!r}")
    return out


def run_sweep(s: Scenario, spec: SweepSpec, workers: int | None = None) -> list[SweepRow]:
    """One full re-optimization per multiplier, in multiplier order.

    Infeasible rows are recorded and the sweep continues.
    """
    rows: list[SweepRow] = []
    for m in sorted(spec.multipliers):
        scenario = perturb(s, spec.factor, m, spec.budget_relax)
        report = solve_mblap(scenario, workers=workers)
        if report.status == "infeasible":
            rows.append(SweepRow(m, False, None, None, None, None, report.stats))
            continue
        share = (
            report.annualized_investment / report.z_upper if report.z_upper > 0 else 0.0
        )
        rows.append(
            SweepRow(
                multiplier=m,
                feasible=True,
                z_upper=report.z_upper,
                annualized_investment=report.annualized_investment,
                construction_share=share,
                decision=report.decision,
                stats=report.stats,
            )
        )
    return rows
