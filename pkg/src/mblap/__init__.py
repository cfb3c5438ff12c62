"""Exact solver toolkit for the maintenance-base location-allocation problem."""

from .scenario import Scenario, load_scenario, validate, bundled_scenario_path
from .derivation import capital_recovery_factor, demand_table, pool_capacity
from .search import evaluate_decision, solve_mblap
from .sensitivity import SweepSpec, perturb, run_sweep

__all__ = [
    "Scenario",
    "load_scenario",
    "validate",
    "bundled_scenario_path",
    "capital_recovery_factor",
    "demand_table",
    "pool_capacity",
    "evaluate_decision",
    "solve_mblap",
    "SweepSpec",
    "perturb",
    "run_sweep",
]
