from __future__ import annotations

import numpy as np
import pytest

from robust_lmp import case as case_mod
from robust_lmp import ccg, formulation, pipeline, pricing, synthetic
from robust_lmp.cli import bundled

# shrinkage picked by cross-validation on the bundled history; fixed here to keep fixtures fast
BUNDLED_SHRINKAGE = 0.01


@pytest.fixture(scope="session")
def bundled_case():
    return case_mod.load_case(bundled("pjm5.json"))


@pytest.fixture(scope="session")
def bundled_history():
    return case_mod.read_history(bundled("wind_history.csv"))


@pytest.fixture(scope="session")
def fitted(bundled_history, bundled_case):
    cap = bundled_case.wind_farms[0].capacity
    return pipeline.fit_history(bundled_history["actual"], bundled_history["forecast"], 0.9, 6,
                                shrinkage=BUNDLED_SHRINKAGE, capacity=cap)


@pytest.fixture(scope="session")
def pjm5_wind_set(fitted, bundled_case):
    farm = bundled_case.wind_farms[0]
    return pipeline.build_set("imeus", fitted, farm.forecast, 0.9, 6, budget=0, n_samples=1000, seed=[0, 0],
                              capacity=farm.capacity)


@pytest.fixture(scope="session")
def pjm5_solved(bundled_case, pjm5_wind_set):
    """Robust commitment and priced dispatch of the bundled case (model 1)."""
    system = formulation.build_ruc(bundled_case, "model1")
    unc = ccg.UncertaintyModel.for_case(bundled_case, [pjm5_wind_set], load_budget=24)
    sol = ccg.solve_rscuc(system, unc, epsilon=1.0, max_iter=20)
    res = pricing.solve_rsced(system, sol.commitment, sol.worst_case)
    return system, unc, sol, res


@pytest.fixture(scope="session")
def ramp_toy():
    case = case_mod.case_from_dict(synthetic.ramp_toy_case_dict(), name="ramp-toy")
    system = formulation.build_ruc(case, "model1")
    res = pricing.solve_rsced(system, np.ones((2, case.horizon)))
    return case, system, res


def two_bus_doc(line_cap: float = 1000.0, load=(80.0, 120.0)) -> dict:
    """Cheap unit at bus 1 feeding a load at bus 2 that also hosts a dear unit."""
    def unit(name, bus, cost):
        return {"name": name, "bus": bus, "cost_energy": cost, "cost_startup": 0.0, "cost_shutdown": 0.0,
                "p_min": 0.0, "p_max": 200.0, "ramp_up": 200.0, "ramp_down": 200.0, "startup_ramp": 200.0,
                "shutdown_ramp": 200.0, "min_up": 1, "min_down": 1, "initial_status": {"on": True, "hours": 2},
                "initial_output": 50.0}

    return {"horizon": len(load), "buses": ["b1", "b2"],
            "lines": [{"name": "l12", "from_bus": "b1", "to_bus": "b2", "reactance": 0.1, "capacity": line_cap}],
            "units": [unit("g1", "b1", 10.0), unit("g2", "b2", 25.0)],
            "wind_farms": [], "loads": [{"name": "d", "bus": "b2", "forecast": list(load)}], "slack_bus": "b1"}
