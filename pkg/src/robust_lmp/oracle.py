"""Exhaustive reference solver for tiny robust commitment instances.

Used to validate the decomposition solver.  The robust objective is
``min_x c.x + max_{delta in U} Q(x, delta)`` where ``Q`` (the dispatch LP
value) is convex in ``delta``.  The maximum of a convex function over a
compact convex set sits on its boundary, so for each commitment the oracle
enumerates:

* every load budget pattern (vertices of the budgeted load polytope);
* every wind pin pattern with exactly the budgeted number of pinned hours;
* the boundary of the remaining wind region: interval endpoints with one
  free hour; with two free hours a radial trace from the forecast (exact
  extent per direction), an angular scan and golden-section refinement of
  the best peaks.

Commitments are visited in order of their forecast-scenario cost, which is
a lower bound on their robust cost, and pruned against the incumbent.
Intended for horizons of at most four hours and one wind farm.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .ccg import UncertaintyModel, evaluate_inner, infeasibility
from .formulation import ConstraintSystem, commitment_vector, commitment_violations
from .sets import Imeus

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class OracleError(ValueError):
    pass


@dataclass
class OracleResult:
    objective: float
    commitment: np.ndarray
    worst_case: np.ndarray
    commitments_checked: int
    lp_solves: int
    values: dict = field(default_factory=dict)  # commitment bytes -> robust cost


# ---------------------------------------------------------------------------
# wind region geometry
# ---------------------------------------------------------------------------

def _ray_extent(wset, base, direction) -> float:
    """Largest ``s >= 0`` with ``base + s * direction`` in the set (no budget)."""
    s_max = math.inf
    if isinstance(wset, Imeus):
        for sub in wset.subsets:
            h = sub.hours
            d = direction[h]
            if not np.any(d):
                continue
            P = sub.precision
            e = base[h] - sub.mean
            a = float(d @ P @ d)
            b = float(2.0 * e @ P @ d)
            c = float(e @ P @ e) - sub.radius
            disc = b * b - 4 * a * c
            if disc < 0:
                return 0.0
            s_max = min(s_max, (-b + math.sqrt(disc)) / (2 * a))
        lower, upper = wset.lower, wset.upper
    else:
        lower, upper = wset.lower, wset.upper
        if wset.limits is not None:
            lower = np.maximum(lower, wset.limits[0])
            upper = np.minimum(upper, wset.limits[1])
    for t in np.flatnonzero(direction):
        if direction[t] > 0 and upper is not None:
            s_max = min(s_max, (upper[t] - base[t]) / direction[t])
        elif direction[t] < 0 and lower is not None:
            s_max = min(s_max, (lower[t] - base[t]) / direction[t])
    return max(s_max, 0.0)


def _golden_max(fun, a, b, tol=1e-9, max_iter=80):
    """Maximise a unimodal function on ``[a, b]``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


# ---------------------------------------------------------------------------
# worst case for one commitment
# ---------------------------------------------------------------------------

class _Evaluator:
    def __init__(self, system, x, unc, backend):
        self.system, self.x, self.unc, self.backend = system, x, unc, backend
        self.lp_solves = 0

    def value(self, delta) -> float:
        self.lp_solves += 1
        return evaluate_inner(self.system, self.x, delta, self.backend).value

    def violation(self, delta) -> float:
        self.lp_solves += 1
        return infeasibility(self.system, self.x, delta, self.backend).value


def _load_patterns(unc: UncertaintyModel):
    T = unc.horizon
    dev = unc.load_deviation
    if dev.size == 0 or unc.load_budget == 0 or not np.any(dev):
        yield np.zeros_like(dev)
        return
    active = [t for t in range(T) if np.any(dev[:, t] > 0)]
    for k in range(min(unc.load_budget, len(active)) + 1):
        for hrs in itertools.combinations(active, k):
            d = np.zeros_like(dev)
            d[:, list(hrs)] = dev[:, list(hrs)]
            yield d


def _wind_patterns(wset, T):
    if wset is None:
        yield np.zeros(T, bool)
        return
    G = wset.budget or 0
    for hrs in itertools.combinations(range(T), G):
        pins = np.zeros(T, bool)
        pins[list(hrs)] = True
        yield pins


def _worst_for_commitment(ev: _Evaluator, unc: UncertaintyModel, n_angles: int, refine: int,
                          feas_tol: float, cutoff: float = math.inf):
    """Return ``(value, delta)``; value is inf when some realisation is infeasible.

    Stops early once the value exceeds ``cutoff``.
    """
    T = unc.horizon
    if unc.n_farms > 1:
        raise OracleError("the enumeration oracle supports at most one wind farm")
    wset = unc.wind_sets[0] if unc.n_farms else None
    f = unc.wind_forecast[0] if unc.n_farms else np.zeros(T)
    best = (-math.inf, None)

    def consider(dw, dd):
        nonlocal best
        delta = np.concatenate([dw, dd.ravel()]) if unc.n_farms else dd.ravel()
        v = ev.value(delta)
        if not math.isfinite(v):
            v = math.inf
        if v > best[0]:
            best = (v, delta)
        return v

    for dd in _load_patterns(unc):
        for pins in _wind_patterns(wset, T):
            free = np.flatnonzero(~pins)
            if wset is None or free.size == 0:
                consider(np.zeros(T), dd)
            elif free.size == 1:
                e = np.zeros(T)
                e[free[0]] = 1.0
                for sgn in (1.0, -1.0):
                    s = _ray_extent(wset, f, sgn * e)
                    consider(sgn * s * e, dd)
            elif free.size == 2:
                t1, t2 = free

                def point(theta):
                    dvec = np.zeros(T)
                    dvec[t1], dvec[t2] = math.cos(theta), math.sin(theta)
                    return _ray_extent(wset, f, dvec) * dvec

                def val(theta):
                    return consider(point(theta), dd)

                thetas = np.linspace(0.0, 2 * math.pi, n_angles, endpoint=False)
                vals = np.array([val(th) for th in thetas])
                if np.isinf(vals).any():
                    return math.inf, best[1]
                step = thetas[1] - thetas[0]
                # refine around the best local maxima of the scan
                is_peak = (vals >= np.roll(vals, 1)) & (vals >= np.roll(vals, -1))
                peaks = np.flatnonzero(is_peak)
                peaks = peaks[np.argsort(-vals[peaks])][:refine]
                for k in peaks:
                    _golden_max(val, thetas[k] - step, thetas[k] + step)
                # infeasibility: scan the violation on the same grid
                viol = np.array([ev.violation(np.concatenate([point(th), dd.ravel()])) for th in thetas])
                if viol.max() > feas_tol:
                    return math.inf, best[1]
            else:
                raise OracleError("the enumeration oracle handles at most two free wind hours; raise the wind budget")
            if best[0] == math.inf or best[0] > cutoff:
                return best
    return best


def enumerate_rscuc(system: ConstraintSystem, unc: UncertaintyModel, n_angles: int = 72, refine: int = 6,
                    feas_tol: float = 1e-7, backend: str = "highs", max_commitments: int = 4096) -> OracleResult:
    """Robust optimum by exhaustive enumeration (tiny instances only)."""
    cat = system.catalog
    N, T = cat.n_units, cat.horizon
    if N * T > 12:
        raise OracleError("instance too large for enumeration (units × hours must be at most 12)")
    cands = []
    for bits in itertools.product((0.0, 1.0), repeat=N * T):
        x = commitment_vector(system, np.array(bits).reshape(N, T))
        if commitment_violations(system, x):
            continue
        q0 = evaluate_inner(system, x, np.zeros(cat.nd), backend).value
        if math.isfinite(q0):
            cands.append((float(system.cx @ x) + q0, x))
        if len(cands) > max_commitments:
            raise OracleError("too many commitments to enumerate")
    cands.sort(key=lambda p: p[0])
    best_val, best_x, best_d = math.inf, None, None
    checked = 0
    lp = len(cands)
    values = {}
    for lb, x in cands:
        if lb >= best_val:
            break
        checked += 1
        ev = _Evaluator(system, x, unc, backend)
        cut = best_val - float(system.cx @ x)
        v, d = _worst_for_commitment(ev, unc, n_angles, refine, feas_tol, cutoff=cut)
        lp += ev.lp_solves
        total = float(system.cx @ x) + v
        values[np.round(x).astype(np.int8).tobytes()] = total
        if total < best_val:
            best_val, best_x, best_d = total, x, d
    if best_x is None:
        raise OracleError("no commitment is feasible for every realisation in the set")
    return OracleResult(best_val, best_x, best_d, checked, lp, values)


# ---------------------------------------------------------------------------
# random tiny instances
# ---------------------------------------------------------------------------

def tiny_instance(seed: int, horizon: int = 3, n_units: int = 2, n_buses: int = 2, wind_budget: int | None = None,
                  load_budget: int = 1, od: int = 2, alpha: float = 0.9):
    """Random small case with one farm and one load plus its uncertainty.

    Returns ``(case_document, wind_set)``; the wind set is an ellipsoid
    intersection centred on the forecast with an AR(1) covariance.
    """
    from scipy.stats import chi2

    from .sets import EllipsoidSubset, _upper_chol_of_inverse

    rng = np.random.default_rng(seed)
    T = horizon
    buses = [f"b{m}" for m in range(n_buses)]
    units = []
    for i in range(n_units):
        pmax = float(rng.uniform(60, 120))
        ramp = float(rng.uniform(15, 40))
        units.append({"name": f"g{i}", "bus": buses[i % n_buses], "cost_energy": float(rng.uniform(10, 40)),
                      "cost_startup": float(rng.uniform(20, 200)), "cost_shutdown": float(rng.uniform(0, 40)),
                      "p_min": float(rng.uniform(0, 15)), "p_max": pmax, "ramp_up": ramp, "ramp_down": ramp,
                      "startup_ramp": max(ramp, 20.0), "shutdown_ramp": max(ramp, 20.0),
                      "min_up": int(rng.integers(1, 3)), "min_down": int(rng.integers(1, 3)),
                      "initial_status": {"on": bool(i == 0), "hours": 4}, "initial_output": 40.0 if i == 0 else 0.0})
    load = rng.uniform(50, 90, T)
    wind_cap = 40.0
    wind_f = rng.uniform(10, 30, T)
    lines = []
    if n_buses > 1:
        lines = [{"name": "l0", "from_bus": buses[0], "to_bus": buses[1], "reactance": 0.1,
                  "capacity": float(rng.uniform(40, 80))}]
    doc = {"horizon": T, "buses": buses, "lines": lines, "units": units,
           "wind_farms": [{"name": "w0", "bus": buses[-1], "capacity": wind_cap, "forecast": wind_f.tolist()}],
           "loads": [{"name": "d0", "bus": buses[-1], "forecast": load.tolist(),
                      "max_deviation": {"fraction": 0.1}}],
           "slack_bus": buses[0]}
    sigma = rng.uniform(3, 8, T)
    rho = 0.5 ** (1 / 4)
    idx = np.arange(T)
    S = sigma[:, None] * sigma[None, :] * rho ** np.abs(idx[:, None] - idx[None, :])
    r = float(chi2.ppf(alpha, od))
    subsets = []
    for s in range(T - od + 1):
        w = slice(s, s + od)
        cov = S[w, w]
        subsets.append(EllipsoidSubset(s, wind_f[w].copy(), cov, r, _upper_chol_of_inverse(cov)))
    if wind_budget is None:
        wind_budget = max(0, T - 2)
    wset = Imeus(subsets, alpha, wind_f, wind_budget, "pin", np.zeros(T), np.full(T, wind_cap),
                 wind_f.copy(), S)
    return doc, wset


# ---------------------------------------------------------------------------
# equivalence suite
# ---------------------------------------------------------------------------

# (seed, horizon, wind budget): budget horizon-1 leaves one free wind hour,
# horizon-2 leaves two
DEFAULT_SUITE = ((1, 3, 2), (2, 3, 2), (4, 3, 2), (2, 3, 1), (4, 3, 1), (6, 3, 1), (3, 4, 3))


@dataclass
class EquivalenceRow:
    seed: int
    horizon: int
    wind_budget: int
    oracle: float
    ccg: float
    rel_error: float
    oracle_time: float
    ccg_time: float

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.oracle)


def equivalence_suite(instances=DEFAULT_SUITE, variant: str = "model1", load_budget: int = 1,
                      backend: str = "highs") -> list[EquivalenceRow]:
    """Solve each tiny instance both ways.

    Instances the oracle proves robust-infeasible are kept with both values
    ``inf`` when the decomposition also reports incompatibility.
    """
    import time

    from .case import case_from_dict
    from .ccg import IncompatibleSetError, solve_rscuc
    from .formulation import build_ruc

    rows = []
    for seed, T, wb in instances:
        doc, wset = tiny_instance(seed, horizon=T, wind_budget=wb)
        case = case_from_dict(doc, name=f"tiny{seed}")
        system = build_ruc(case, variant)
        unc = UncertaintyModel.for_case(case, [wset], load_budget=load_budget)
        t0 = time.perf_counter()
        try:
            ref = enumerate_rscuc(system, unc, backend=backend).objective
        except OracleError:
            ref = math.inf
        t1 = time.perf_counter()
        try:
            eps = 1e-7 * abs(ref) if math.isfinite(ref) else 1e-3
            got = solve_rscuc(system, unc, epsilon=eps, mip_gap=1e-9, backend=backend).objective
        except IncompatibleSetError:
            got = math.inf
        t2 = time.perf_counter()
        if math.isfinite(ref) and math.isfinite(got):
            err = abs(got - ref) / max(1.0, abs(ref))
        else:
            err = 0.0 if ref == got else math.inf
        rows.append(EquivalenceRow(seed, T, wb, ref, got, err, t1 - t0, t2 - t1))
    return rows
