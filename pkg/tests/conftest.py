import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mblap.scenario import bundled_scenario_path, load_scenario  # noqa: E402


@pytest.fixture(scope="session")
def northwest():
    return load_scenario(bundled_scenario_path())


@pytest.fixture(scope="session")
def northwest_solution(northwest):
    """One shared exact solve of the bundled scenario, with its wall time."""
    from mblap.search import solve_mblap

    started = time.monotonic()
    report = solve_mblap(northwest, workers=1)
    elapsed = time.monotonic() - started
    return report, elapsed


@pytest.fixture(scope="session")
def all_sweeps(northwest):
    """The full 27-solve sensitivity grid, shared across tests."""
    from mblap.sensitivity import SweepSpec, run_sweep

    started = time.monotonic()
    rows = {
        factor: run_sweep(northwest, SweepSpec(factor=factor), workers=1)
        for factor in ("fleetSize", "mileageCycle", "maintDuration")
    }
    elapsed = time.monotonic() - started
    return rows, elapsed
