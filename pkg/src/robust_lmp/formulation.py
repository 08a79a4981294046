"""Robust unit-commitment constraint system.

Variables split into first-stage commitment binaries ``x = [I, u, v]`` and a
second-stage block ``y = [P, dP]`` (basic dispatch and redispatch).  The
uncertainty enters only through right-hand sides::

    G x + E y  (sense)  h + M delta

where ``delta`` stacks the wind deviations (farm-major, then hour) and the
load deviations (load-major, then hour).  Commitment-only rows are kept in a
separate block.  Every row carries a stable name (``bal_b_t7``,
``ramp_agg_up_i2_t18``, ...), a family tag and its unit/line/hour indices;
pricing reads duals through the family tags.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import solver
from .case import MarketCase

# family -> dual label used in reports
DUAL_LABELS = {
    "bal_b": "lambda_b", "pmax_b": "beta_up_b", "pmin_b": "beta_dn_b",
    "ramp_up_b": "alpha_up_b", "ramp_dn_b": "alpha_dn_b",
    "line_max_b": "eta_up_b", "line_min_b": "eta_dn_b",
    "bal_r": "lambda_r", "pmax_r": "beta_up_r", "pmin_r": "beta_dn_r",
    "ramp_up_r": "alpha_up_r", "ramp_dn_r": "alpha_dn_r",
    "ramp_agg_up": "alpha_up_agg", "ramp_agg_dn": "alpha_dn_agg",
    "line_max_r": "eta_up_r", "line_min_r": "eta_dn_r",
}
RAMP_FAMILIES = ("ramp_up_b", "ramp_dn_b", "ramp_up_r", "ramp_dn_r", "ramp_agg_up", "ramp_agg_dn")
COMMITMENT_FAMILIES = ("minup", "mindn", "init", "logic", "excl")


class FormulationError(ValueError):
    pass


@dataclass(frozen=True)
class ModelVariant:
    """Which optional pieces of the formulation are active."""

    name: str = "model1"
    include_overall_ramp: bool = True
    include_reserve_cost: bool = True
    include_ramping: bool = True

    @classmethod
    def named(cls, name: str) -> "ModelVariant":
        if name == "model1":
            return cls("model1", True, True, True)
        if name == "model2":
            return cls("model2", False, False, True)
        if name == "model3":
            return cls("model3", False, True, False)
        raise FormulationError(f"unknown model variant {name!r} (expected model1, model2 or model3)")


@dataclass(frozen=True)
class VariableCatalog:
    """Index arithmetic for the commitment, dispatch and uncertainty vectors."""

    n_units: int
    horizon: int
    n_farms: int
    n_loads: int

    @property
    def nx(self) -> int:
        return 3 * self.n_units * self.horizon

    @property
    def ny(self) -> int:
        return 2 * self.n_units * self.horizon

    @property
    def nd(self) -> int:
        return (self.n_farms + self.n_loads) * self.horizon

    def on(self, i, t):
        return i * self.horizon + t

    def start(self, i, t):
        return (self.n_units + i) * self.horizon + t

    def stop(self, i, t):
        return (2 * self.n_units + i) * self.horizon + t

    def p(self, i, t):
        return i * self.horizon + t

    def dp(self, i, t):
        return (self.n_units + i) * self.horizon + t

    def wind(self, j, t):
        return j * self.horizon + t

    def load(self, k, t):
        return (self.n_farms + k) * self.horizon + t

    def split_x(self, x):
        NT = self.n_units * self.horizon
        shape = (self.n_units, self.horizon)
        return x[:NT].reshape(shape), x[NT:2 * NT].reshape(shape), x[2 * NT:].reshape(shape)

    def split_y(self, y):
        NT = self.n_units * self.horizon
        shape = (self.n_units, self.horizon)
        return y[:NT].reshape(shape), y[NT:].reshape(shape)

    def split_delta(self, d):
        FT = self.n_farms * self.horizon
        return d[:FT].reshape(self.n_farms, self.horizon), d[FT:].reshape(self.n_loads, self.horizon)

    def join_delta(self, wind_dev, load_dev):
        return np.concatenate([np.asarray(wind_dev, float).ravel(), np.asarray(load_dev, float).ravel()])

    def x_names(self):
        N, T = self.n_units, self.horizon
        return ([f"on_i{i}_t{t + 1}" for i in range(N) for t in range(T)]
                + [f"su_i{i}_t{t + 1}" for i in range(N) for t in range(T)]
                + [f"sd_i{i}_t{t + 1}" for i in range(N) for t in range(T)])

    def y_names(self, suffix: str = ""):
        N, T = self.n_units, self.horizon
        return ([f"p_i{i}_t{t + 1}{suffix}" for i in range(N) for t in range(T)]
                + [f"dp_i{i}_t{t + 1}{suffix}" for i in range(N) for t in range(T)])


@dataclass
class RowMeta:
    names: list
    family: np.ndarray
    unit: np.ndarray
    line: np.ndarray
    hour: np.ndarray

    def select(self, mask):
        return RowMeta([n for n, m in zip(self.names, mask) if m], self.family[mask], self.unit[mask],
                       self.line[mask], self.hour[mask])


@dataclass
class ConstraintSystem:
    """Second-stage rows ``G x + E y (sense) h + M delta`` plus commitment rows.

    ``cx`` and ``cy`` are the objective coefficients of the two stages.  When
    ``x_fixed`` is set the commitment has been folded into ``h``; when
    ``delta_fixed`` is set the uncertainty has been folded in as well.
    """

    case: MarketCase
    variant: ModelVariant
    catalog: VariableCatalog
    cx: np.ndarray
    cy: np.ndarray
    G: sp.csr_matrix
    E: sp.csr_matrix
    M: sp.csr_matrix
    h: np.ndarray
    sense: np.ndarray
    rows: RowMeta
    Ax: sp.csr_matrix
    sense_x: np.ndarray
    rhs_x: np.ndarray
    rows_x: RowMeta
    x_fixed: np.ndarray | None = None
    delta_fixed: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return self.h.size

    def family_mask(self, family) -> np.ndarray:
        fams = (family,) if isinstance(family, str) else tuple(family)
        return np.isin(self.rows.family, fams)

    def families(self) -> set:
        return set(self.rows.family.tolist()) | set(self.rows_x.family.tolist())

    def rhs(self, delta=None) -> np.ndarray:
        if delta is None:
            return self.h.copy()
        return self.h + self.M @ np.asarray(delta, float)

    def second_stage_request(self, delta=None, x=None, want_duals: bool = True) -> solver.SolveRequest:
        """LP over ``y`` for a fixed commitment and realisation."""
        rhs = self.rhs(delta)
        if x is not None:
            rhs = rhs - self.G @ np.asarray(x, float)
        elif self.x_fixed is None:
            raise FormulationError("commitment not fixed; pass x or call fix_commitment first")
        ny = self.catalog.ny
        return solver.SolveRequest(c=self.cy, A=self.E, sense=self.sense, rhs=rhs,
                                   lb=np.full(ny, -np.inf), ub=np.full(ny, np.inf),
                                   want_duals=want_duals, var_names=self.catalog.y_names(),
                                   row_names=list(self.rows.names))

    def full_request(self) -> solver.SolveRequest:
        """Single-scenario MILP over ``(x, y)`` with the current right-hand side."""
        cat = self.catalog
        nx, ny = cat.nx, cat.ny
        A = sp.vstack([sp.hstack([self.Ax, sp.csr_matrix((self.Ax.shape[0], ny))]),
                       sp.hstack([self.G, self.E])]).tocsr()
        lb = np.concatenate([np.zeros(nx), np.full(ny, -np.inf)])
        ub = np.concatenate([np.ones(nx), np.full(ny, np.inf)])
        integ = np.concatenate([np.ones(nx, int), np.zeros(ny, int)])
        return solver.SolveRequest(c=np.concatenate([self.cx, self.cy]), A=A,
                                   sense=np.concatenate([self.sense_x, self.sense]),
                                   rhs=np.concatenate([self.rhs_x, self.h]), lb=lb, ub=ub,
                                   integrality=integ, var_names=cat.x_names() + cat.y_names(),
                                   row_names=list(self.rows_x.names) + list(self.rows.names))


class _RowBuilder:
    def __init__(self):
        self.data = {"G": ([], [], []), "E": ([], [], []), "M": ([], [], [])}
        self.h, self.sense, self.names, self.family = [], [], [], []
        self.unit, self.line, self.hour = [], [], []

    def add(self, name, family, sense, rhs, x=(), y=(), d=(), unit=-1, line=-1, hour=-1):
        r = len(self.h)
        for key, terms in (("G", x), ("E", y), ("M", d)):
            rr, cc, vv = self.data[key]
            for col, val in terms:
                if val != 0.0:
                    rr.append(r)
                    cc.append(col)
                    vv.append(float(val))
        self.h.append(float(rhs))
        self.sense.append(sense)
        self.names.append(name)
        self.family.append(family)
        self.unit.append(unit)
        self.line.append(line)
        self.hour.append(hour)

    def matrix(self, key, ncols):
        rr, cc, vv = self.data[key]
        return sp.csr_matrix((vv, (rr, cc)), shape=(len(self.h), ncols))

    def meta(self):
        return RowMeta(self.names, np.array(self.family, dtype=object), np.array(self.unit, int),
                       np.array(self.line, int), np.array(self.hour, int))


def build_ruc(case: MarketCase, variant: ModelVariant | str = "model1") -> ConstraintSystem:
    """Assemble the robust unit-commitment rows for ``case``.

    Loads and wind sit at forecast in the basic-dispatch rows; deviations
    enter the redispatch balance and the redispatch line limits through
    ``M``.  The uncertainty sets themselves live outside the system.
    """
    if isinstance(variant, str):
        variant = ModelVariant.named(variant)
    T, N = case.horizon, case.n_units
    cat = VariableCatalog(N, T, len(case.wind_farms), len(case.loads))
    for u in case.units:
        if u.p_min > u.p_max:
            raise FormulationError(f"unit {u.name}: p_min {u.p_min} exceeds p_max {u.p_max}")
    wind_f = case.wind_forecast()
    load_f = case.load_forecast()
    gsf = np.asarray(case.gsf, float)
    # constant part of each bus injection at forecast
    inj0 = case.wind_bus_matrix() @ wind_f - case.load_bus_matrix() @ load_f  # buses × T

    rb = _RowBuilder()
    ramp = variant.include_ramping
    for t in range(T):
        tag = f"t{t + 1}"
        rb.add(f"bal_b_{tag}", "bal_b", "=", load_f[:, t].sum() - wind_f[:, t].sum(),
               y=[(cat.p(i, t), 1.0) for i in range(N)], hour=t)
        rb.add(f"bal_r_{tag}", "bal_r", "=", 0.0,
               y=[(cat.dp(i, t), 1.0) for i in range(N)],
               d=[(cat.load(k, t), 1.0) for k in range(cat.n_loads)]
               + [(cat.wind(j, t), -1.0) for j in range(cat.n_farms)], hour=t)
        for i, u in enumerate(case.units):
            it = f"i{i}_{tag}"
            on = cat.on(i, t)
            rb.add(f"pmax_b_{it}", "pmax_b", ">=", 0.0, x=[(on, u.p_max)], y=[(cat.p(i, t), -1.0)], unit=i, hour=t)
            rb.add(f"pmin_b_{it}", "pmin_b", ">=", 0.0, x=[(on, -u.p_min)], y=[(cat.p(i, t), 1.0)], unit=i, hour=t)
            rb.add(f"pmax_r_{it}", "pmax_r", ">=", 0.0, x=[(on, u.p_max)],
                   y=[(cat.p(i, t), -1.0), (cat.dp(i, t), -1.0)], unit=i, hour=t)
            rb.add(f"pmin_r_{it}", "pmin_r", ">=", 0.0, x=[(on, -u.p_min)],
                   y=[(cat.p(i, t), 1.0), (cat.dp(i, t), 1.0)], unit=i, hour=t)
            if not ramp:
                continue
            su, sd = cat.start(i, t), cat.stop(i, t)
            up_x = [(su, u.startup_ramp - u.ramp_up)]
            dn_x = [(sd, u.shutdown_ramp - u.ramp_down)]
            # previous-hour terms: variables for t > 0, initial output otherwise
            if t > 0:
                prev_p = [(cat.p(i, t - 1), 1.0)]
                prev_agg = [(cat.p(i, t - 1), 1.0), (cat.dp(i, t - 1), 1.0)]
                p0 = 0.0
            else:
                prev_p, prev_agg, p0 = [], [], u.initial_output
            cur = [(cat.p(i, t), 1.0)]
            cur_agg = [(cat.p(i, t), 1.0), (cat.dp(i, t), 1.0)]
            neg = lambda terms: [(c, -v) for c, v in terms]  # noqa: E731
            rb.add(f"ramp_up_b_{it}", "ramp_up_b", ">=", -u.ramp_up - p0, x=up_x,
                   y=prev_p + neg(cur), unit=i, hour=t)
            rb.add(f"ramp_dn_b_{it}", "ramp_dn_b", ">=", -u.ramp_down + p0, x=dn_x,
                   y=cur + neg(prev_p), unit=i, hour=t)
            rb.add(f"ramp_up_r_{it}", "ramp_up_r", ">=", -u.ramp_up, x=up_x,
                   y=[(cat.dp(i, t), -1.0)], unit=i, hour=t)
            rb.add(f"ramp_dn_r_{it}", "ramp_dn_r", ">=", -u.ramp_down, x=dn_x,
                   y=[(cat.dp(i, t), 1.0)], unit=i, hour=t)
            if variant.include_overall_ramp:
                rb.add(f"ramp_agg_up_{it}", "ramp_agg_up", ">=", -u.ramp_up - p0, x=up_x,
                       y=prev_agg + neg(cur_agg), unit=i, hour=t)
                rb.add(f"ramp_agg_dn_{it}", "ramp_agg_dn", ">=", -u.ramp_down + p0, x=dn_x,
                       y=cur_agg + neg(prev_agg), unit=i, hour=t)
        for l, line in enumerate(case.lines):
            lt = f"l{l}_{tag}"
            g = gsf[l]
            base = float(g @ inj0[:, t])
            gen = [(cat.p(i, t), g[u.bus]) for i, u in enumerate(case.units)]
            dgen = [(cat.dp(i, t), g[u.bus]) for i, u in enumerate(case.units)]
            # flow deviation from uncertainty moves to the right-hand side
            dd = ([(cat.wind(j, t), -g[w.bus]) for j, w in enumerate(case.wind_farms)]
                  + [(cat.load(k, t), g[d.bus]) for k, d in enumerate(case.loads)])
            rb.add(f"line_max_b_{lt}", "line_max_b", ">=", -line.capacity + base,
                   y=[(c, -v) for c, v in gen], line=l, hour=t)
            rb.add(f"line_min_b_{lt}", "line_min_b", ">=", -line.capacity - base, y=gen, line=l, hour=t)
            rb.add(f"line_max_r_{lt}", "line_max_r", ">=", -line.capacity + base,
                   y=[(c, -v) for c, v in gen + dgen], d=[(c, -v) for c, v in dd], line=l, hour=t)
            rb.add(f"line_min_r_{lt}", "line_min_r", ">=", -line.capacity - base,
                   y=gen + dgen, d=dd, line=l, hour=t)

    rx = _RowBuilder()
    for i, u in enumerate(case.units):
        I0 = 1.0 if u.initial_on else 0.0
        for t in range(T):
            it = f"i{i}_t{t + 1}"
            prev = [(cat.on(i, t - 1), 1.0)] if t > 0 else []
            rx.add(f"logic_{it}", "logic", "=", -I0 if t == 0 else 0.0,
                   x=[(cat.start(i, t), 1.0), (cat.stop(i, t), -1.0), (cat.on(i, t), -1.0)] + prev,
                   unit=i, hour=t)
            rx.add(f"excl_{it}", "excl", ">=", -1.0, x=[(cat.start(i, t), -1.0), (cat.stop(i, t), -1.0)],
                   unit=i, hour=t)
            q0 = max(0, t - u.min_up + 1)
            rx.add(f"minup_{it}", "minup", ">=", 0.0,
                   x=[(cat.start(i, q), -1.0) for q in range(q0, t + 1)] + [(cat.on(i, t), 1.0)], unit=i, hour=t)
            q0 = max(0, t - u.min_down + 1)
            rx.add(f"mindn_{it}", "mindn", ">=", -1.0,
                   x=[(cat.stop(i, q), -1.0) for q in range(q0, t + 1)] + [(cat.on(i, t), -1.0)], unit=i, hour=t)
        # remaining time in the initial state
        left = (u.min_up - u.initial_hours) if u.initial_on else (u.min_down - u.initial_hours)
        for t in range(min(max(left, 0), T)):
            it = f"i{i}_t{t + 1}"
            if u.initial_on:
                rx.add(f"init_{it}", "init", ">=", 1.0, x=[(cat.on(i, t), 1.0)], unit=i, hour=t)
            else:
                rx.add(f"init_{it}", "init", ">=", 0.0, x=[(cat.on(i, t), -1.0)], unit=i, hour=t)

    cx = np.zeros(cat.nx)
    cy = np.zeros(cat.ny)
    for i, u in enumerate(case.units):
        for t in range(T):
            cx[cat.start(i, t)] = u.cost_startup
            cx[cat.stop(i, t)] = u.cost_shutdown
            cy[cat.p(i, t)] = u.cost_energy
            if variant.include_reserve_cost:
                cy[cat.dp(i, t)] = u.cost_energy
    return ConstraintSystem(case, variant, cat, cx, cy,
                            rb.matrix("G", cat.nx), rb.matrix("E", cat.ny), rb.matrix("M", cat.nd),
                            np.array(rb.h), np.array(rb.sense, dtype=object), rb.meta(),
                            rx.matrix("G", cat.nx), np.array(rx.sense, dtype=object), np.array(rx.h), rx.meta())


def commitment_violations(system: ConstraintSystem, x, tol: float = 1e-9) -> list[str]:
    """Names of commitment rows violated by ``x``."""
    x = np.asarray(x, float)
    lhs = system.Ax @ x
    bad = []
    for r, (s, b) in enumerate(zip(system.sense_x, system.rhs_x)):
        v = lhs[r] - b
        if (s == ">=" and v < -tol) or (s == "<=" and v > tol) or (s == "=" and abs(v) > tol):
            bad.append(system.rows_x.names[r])
    return bad


def row_violations(system: ConstraintSystem, x, y, delta=None, families=None, tol: float = 1e-7) -> dict:
    """Second-stage rows of ``system`` that ``(x, y)`` violates, with the amount in MW.

    ``y`` may come from a different variant of the same case, which is how a
    dispatch cleared without some rows is checked against them.
    """
    lhs = system.G @ np.asarray(x, float) + system.E @ np.asarray(y, float)
    v = lhs - system.rhs(delta)
    amount = np.where(system.sense == ">=", -v, np.where(system.sense == "<=", v, np.abs(v)))
    mask = amount > tol
    if families is not None:
        mask &= system.family_mask(families)
    return {system.rows.names[r]: float(amount[r]) for r in np.flatnonzero(mask)}


def commitment_vector(system: ConstraintSystem, on, start=None, stop=None) -> np.ndarray:
    """Stack ``on`` (units × T) with start/stop derived from it when not given."""
    on = np.asarray(on, float)
    case = system.case
    if start is None or stop is None:
        I0 = np.array([1.0 if u.initial_on else 0.0 for u in case.units])
        prev = np.column_stack([I0, on[:, :-1]])
        diff = on - prev
        start = np.maximum(diff, 0.0)
        stop = np.maximum(-diff, 0.0)
    return np.concatenate([on.ravel(), np.asarray(start, float).ravel(), np.asarray(stop, float).ravel()])


def fix_commitment(system: ConstraintSystem, on, start=None, stop=None) -> ConstraintSystem:
    """Fold a commitment into the right-hand side; the result is an LP in ``y``."""
    x = commitment_vector(system, on, start, stop)
    if np.any((x != 0.0) & (x != 1.0)):
        raise FormulationError("commitment values must be 0 or 1")
    bad = commitment_violations(system, x)
    if bad:
        raise FormulationError("commitment violates logic rows: " + ", ".join(bad[:20]))
    h = system.h - system.G @ x
    return replace(system, h=h, G=sp.csr_matrix(system.G.shape), x_fixed=x,
                   cx=system.cx.copy())


def bind_uncertainty(system: ConstraintSystem, wind=None, load=None, delta=None) -> ConstraintSystem:
    """Substitute a realisation into the right-hand side.

    Either pass absolute ``wind`` (farms × T) and ``load`` (loads × T) in MW,
    or a stacked deviation vector ``delta``.
    """
    cat = system.catalog
    case = system.case
    if delta is None:
        wind = case.wind_forecast() if wind is None else np.asarray(wind, float).reshape(cat.n_farms, cat.horizon)
        load = case.load_forecast() if load is None else np.asarray(load, float).reshape(cat.n_loads, cat.horizon)
        delta = cat.join_delta(wind - case.wind_forecast(), load - case.load_forecast())
    delta = np.asarray(delta, float)
    if delta.shape != (cat.nd,):
        raise FormulationError(f"realisation must have {cat.nd} entries, got {delta.shape}")
    return replace(system, h=system.rhs(delta), M=sp.csr_matrix(system.M.shape), delta_fixed=delta)


def objective_parts(system: ConstraintSystem, x, y) -> dict:
    """Startup/shutdown, energy and reserve cost of a solution."""
    cat = system.catalog
    P, D = cat.split_y(np.asarray(y, float))
    c = np.array([u.cost_energy for u in system.case.units])[:, None]
    out = {"commitment": float(system.cx @ np.asarray(x, float)),
           "energy": float(np.sum(c * P)),
           "reserve": float(np.sum(c * D)) if system.variant.include_reserve_cost else 0.0}
    out["reserve_at_true_cost"] = float(np.sum(c * D))
    out["total"] = out["commitment"] + out["energy"] + out["reserve"]
    return out


def write_lp(system: ConstraintSystem, path) -> None:
    """Single-scenario MILP (current right-hand side) in LP-format text."""
    solver.write_lp(system.full_request(), path)
