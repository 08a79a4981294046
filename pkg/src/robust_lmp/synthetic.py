"""Synthetic wind history with a known Gaussian-copula structure.

Forecast scores follow a slowly varying AR(1) process; realised scores mix
the forecast score with an independent AR(1) error whose autocorrelation
halves every ``half_life`` hours.  Both are mapped to MW through Beta
marginals scaled by the farm capacity.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr
from scipy.stats import beta as beta_dist


def ar1_scores(rng, n: int, T: int, rho: float) -> np.ndarray:
    """Stationary standard-normal AR(1) paths, one per row."""
    z = rng.standard_normal((n, T))
    out = np.empty_like(z)
    out[:, 0] = z[:, 0]
    s = np.sqrt(1.0 - rho * rho)
    for t in range(1, T):
        out[:, t] = rho * out[:, t - 1] + s * z[:, t]
    return out


def wind_history(n_days: int, T: int = 24, capacity: float = 300.0, half_life: float = 4.0,
                 coupling: float = 0.95, forecast_rho: float = 0.95, seed=0):
    """Return ``(forecast, actual)`` arrays of shape days × T in MW."""
    rng = np.random.default_rng(seed)
    rho_e = 0.5 ** (1.0 / half_life)
    zy = ar1_scores(rng, n_days, T, forecast_rho)
    ze = ar1_scores(rng, n_days, T, rho_e)
    zx = coupling * zy + np.sqrt(1.0 - coupling**2) * ze
    forecast = capacity * beta_dist.ppf(ndtr(zy), 1.3, 2.2)
    actual = capacity * beta_dist.ppf(ndtr(zx), 1.2, 2.4)
    return forecast, actual


def load_profile(T: int = 24, peak: float = 950.0, trough: float = 600.0) -> np.ndarray:
    """Smooth two-hump daily system load in MW."""
    h = np.arange(T) * 24.0 / T
    morning = np.exp(-0.5 * ((h - 11.0) / 3.5) ** 2)
    evening = np.exp(-0.5 * ((h - 19.5) / 2.5) ** 2)
    shape = 0.75 * morning + 1.0 * evening
    shape = (shape - shape.min()) / (shape.max() - shape.min())
    return trough + (peak - trough) * shape


# PJM 5-bus data: capacities, zero minimum outputs and marginal costs follow
# the standard test system; ramps, start/stop costs, min up/down times,
# initial conditions and the load profile are synthetic.
PJM5_UNITS = [
    # name, bus, cost, su, sd, p_min, p_max, ramp, UT, DT, on, hours, p0
    ("A", "A", 15.0, 360.0, 40.0, 0.0, 210.0, 25.0, 4, 3, True, 8, 190.0),
    ("C", "C", 30.0, 500.0, 80.0, 0.0, 520.0, 60.0, 4, 4, True, 8, 60.0),
    ("D", "D", 40.0, 300.0, 50.0, 0.0, 200.0, 25.0, 2, 2, False, 8, 0.0),
    ("E", "E", 20.0, 550.0, 90.0, 0.0, 600.0, 80.0, 3, 3, True, 8, 240.0),
]
PJM5_LINES = [
    ("A", "B", 0.0281, 400.0), ("A", "D", 0.0304, 999.0), ("A", "E", 0.0064, 999.0),
    ("B", "C", 0.0108, 999.0), ("C", "D", 0.0297, 999.0), ("D", "E", 0.0297, 240.0),
]


def pjm5_case_dict(wind_forecast, load_total=None, wind_capacity: float = 300.0) -> dict:
    """Case document for the 5-bus system with one wind farm at bus D."""
    wind_forecast = np.asarray(wind_forecast, float)
    T = wind_forecast.size
    load_total = load_profile(T) if load_total is None else np.asarray(load_total, float)
    units = [{"name": n, "bus": b, "cost_energy": c, "cost_startup": su, "cost_shutdown": sd,
              "p_min": pmin, "p_max": pmax, "ramp_up": r, "ramp_down": r, "startup_ramp": r,
              "shutdown_ramp": r, "min_up": ut, "min_down": dt,
              "initial_status": {"on": on, "hours": hrs}, "initial_output": p0}
             for n, b, c, su, sd, pmin, pmax, r, ut, dt, on, hrs, p0 in PJM5_UNITS]
    loads = [{"name": f"L{b}", "bus": b, "forecast": (share * load_total).tolist(),
              "max_deviation": {"fraction": frac}}
             for b, share, frac in (("B", 0.3, 0.10), ("C", 0.3, 0.05), ("D", 0.4, 0.0))]
    return {
        "horizon": T,
        "buses": ["A", "B", "C", "D", "E"],
        "lines": [{"name": f"{a}-{b}", "from_bus": a, "to_bus": b, "reactance": x, "capacity": f}
                  for a, b, x, f in PJM5_LINES],
        "units": units,
        "wind_farms": [{"name": "W1", "bus": "D", "capacity": wind_capacity, "forecast": wind_forecast.tolist()}],
        "loads": loads,
        "slack_bus": "A",
        "notes": {"synthetic": "ramps, start/stop costs, minimum up/down times, initial conditions, load profile "
                                "and wind forecast are synthetic"},
    }


def ramp_toy_case_dict(load=(60.0, 120.0, 150.0), cheap_ramp: float = 30.0) -> dict:
    """Single-bus case with a cheap ramp-limited unit and an expensive flexible one.

    Load climbs faster than the cheap unit can follow, so one extra MW early
    in the day lets it run higher later and displace the expensive unit.
    The early-hour price then falls below the cheap unit's own cost.
    """
    def unit(name, cost, ramp, p0):
        return {"name": name, "bus": "N", "cost_energy": cost, "cost_startup": 0.0, "cost_shutdown": 0.0,
                "p_min": 0.0, "p_max": 200.0, "ramp_up": ramp, "ramp_down": ramp, "startup_ramp": ramp,
                "shutdown_ramp": ramp, "min_up": 1, "min_down": 1, "initial_status": {"on": True, "hours": 4},
                "initial_output": p0}

    load = [float(v) for v in load]
    return {"horizon": len(load), "buses": ["N"], "lines": [],
            "units": [unit("cheap", 10.0, cheap_ramp, 50.0), unit("peaker", 30.0, 200.0, 0.0)],
            "wind_farms": [], "loads": [{"name": "D", "bus": "N", "forecast": load}], "slack_bus": "N"}


BUNDLED_SEED = 2024
BUNDLED_DAYS = 300


def bundled_documents():
    """History arrays and the 5-bus case document shipped with the package.

    The case uses the forecast of the day that follows the history.
    """
    f, a = wind_history(BUNDLED_DAYS + 1, seed=BUNDLED_SEED)
    return f[:BUNDLED_DAYS], a[:BUNDLED_DAYS], pjm5_case_dict(f[BUNDLED_DAYS])


def write_bundled_data(directory) -> None:
    import json
    from pathlib import Path

    from .case import write_history

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    f, a, doc = bundled_documents()
    write_history(directory / "wind_history.csv", f, a)
    (directory / "pjm5.json").write_text(json.dumps(doc, indent=1) + "\n")
