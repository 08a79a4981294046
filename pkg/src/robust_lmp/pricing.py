"""Robust dispatch, locational prices and settlement.

With the commitment and the worst-case realisation fixed, the robust
dispatch is an LP.  Its duals give two bus prices per hour: the energy
price (LMP) for forecast quantities and the uncertainty price (ULMP) for
deviations from forecast.  Both are computed from the balance and line
duals, and cross-checked unit by unit from the stationarity conditions of
the dispatch and redispatch variables.

Dual convention: every dual is the derivative of the optimal cost with
respect to its row's right-hand side, so duals of ``>=`` rows are
non-negative.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import solver
from .formulation import (DUAL_LABELS, RAMP_FAMILIES, ConstraintSystem, build_ruc, commitment_vector,
                          commitment_violations, objective_parts, row_violations)

PRICE_TOL = 1e-6


class PricingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# dual bundle
# ---------------------------------------------------------------------------

@dataclass
class DualBundle:
    """Row duals grouped by family.

    Balance duals are ``(T,)`` arrays, unit-row duals ``(units, T)`` and line
    duals ``(lines, T)``.  Families absent from the model variant are zeros.
    """

    lambda_b: np.ndarray
    lambda_r: np.ndarray
    unit: dict  # family -> units × T
    line: dict  # family -> lines × T

    def get(self, family: str) -> np.ndarray:
        if family == "bal_b":
            return self.lambda_b
        if family == "bal_r":
            return self.lambda_r
        if family in self.unit:
            return self.unit[family]
        return self.line[family]

    def to_dict(self) -> dict:
        out = {"lambda_b": self.lambda_b.tolist(), "lambda_r": self.lambda_r.tolist()}
        for fam, arr in {**self.unit, **self.line}.items():
            out[DUAL_LABELS[fam]] = arr.tolist()
        return out


UNIT_FAMILIES = ("pmax_b", "pmin_b", "pmax_r", "pmin_r", "ramp_up_b", "ramp_dn_b",
                 "ramp_up_r", "ramp_dn_r", "ramp_agg_up", "ramp_agg_dn")
LINE_FAMILIES = ("line_max_b", "line_min_b", "line_max_r", "line_min_r")


def dual_bundle(system: ConstraintSystem, duals) -> DualBundle:
    """Scatter a row-dual vector into per-family arrays."""
    duals = np.asarray(duals, float)
    rows = system.rows
    T, N, L = system.catalog.horizon, system.catalog.n_units, len(system.case.lines)
    lam = {}
    for fam in ("bal_b", "bal_r"):
        v = np.zeros(T)
        m = rows.family == fam
        v[rows.hour[m]] = duals[m]
        lam[fam] = v
    unit, line = {}, {}
    for fam in UNIT_FAMILIES:
        a = np.zeros((N, T))
        m = rows.family == fam
        a[rows.unit[m], rows.hour[m]] = duals[m]
        unit[fam] = a
    for fam in LINE_FAMILIES:
        a = np.zeros((L, T))
        m = rows.family == fam
        a[rows.line[m], rows.hour[m]] = duals[m]
        line[fam] = a
    return DualBundle(lam["bal_b"], lam["bal_r"], unit, line)


# ---------------------------------------------------------------------------
# robust dispatch
# ---------------------------------------------------------------------------

@dataclass
class DispatchResult:
    """Solved robust dispatch for a fixed commitment and realisation."""

    system: ConstraintSystem
    commitment: np.ndarray  # stacked [on, start, stop]
    delta: np.ndarray
    dispatch: np.ndarray  # units × T basic output
    reserve: np.ndarray  # units × T redispatch
    objective: float  # second-stage cost
    commitment_cost: float
    duals: DualBundle
    row_duals: np.ndarray
    row_slack: np.ndarray
    dual_objective: float

    @property
    def total_cost(self) -> float:
        return self.objective + self.commitment_cost

    @property
    def on(self) -> np.ndarray:
        N, T = self.system.catalog.n_units, self.system.catalog.horizon
        return self.commitment[:N * T].reshape(N, T)

    def wind_deviation(self) -> np.ndarray:
        return self.system.catalog.split_delta(self.delta)[0]

    def load_deviation(self) -> np.ndarray:
        return self.system.catalog.split_delta(self.delta)[1]


def _as_commitment(system: ConstraintSystem, commitment) -> np.ndarray:
    x = np.asarray(commitment, float)
    cat = system.catalog
    if x.shape == (cat.nx,):
        return x
    if x.shape == (cat.n_units, cat.horizon):
        return commitment_vector(system, x)
    raise PricingError(f"commitment must be units × T or a stacked vector of {cat.nx}")


def solve_rsced(system: ConstraintSystem, commitment, delta=None, backend: str = "highs",
                tie_break: bool = True) -> DispatchResult:
    """Dispatch LP with commitment and realisation fixed.

    Duals come from the cost-minimising LP.  With ``tie_break`` the reported
    primal is then the optimal dispatch with least total redispatch
    ``sum |dP|``, found by a second LP with the cost held at its optimum.
    Any optimal primal is complementary to any optimal dual, so the price
    identities are unaffected; the tie-break only removes the arbitrary
    split between basic output and redispatch that a cost of ``P + dP``
    leaves open.
    """
    cat = system.catalog
    x = _as_commitment(system, commitment)
    bad = commitment_violations(system, x)
    if bad:
        raise PricingError("commitment violates logic rows: " + ", ".join(bad[:10]))
    delta = np.zeros(cat.nd) if delta is None else np.asarray(delta, float)
    req = system.second_stage_request(delta=delta, x=x, want_duals=True)
    res = solver.solve(req, backend)
    if res.status == "infeasible":
        total, hint = _violated_rows(system, x, delta, backend)
        raise PricingError("dispatch infeasible for the given commitment and realisation; "
                           f"least total violation {total:.6g} MW, largest on rows: {', '.join(hint)}")
    if not res.optimal:
        raise solver.SolverError(f"dispatch LP {res.status}: {res.message}")
    y = res.x
    if tie_break:
        y = _least_redispatch(system, req, res.objective, backend, fallback=y)
    rhs = req.rhs
    lhs = req.A @ y
    slack = lhs - rhs
    P, D = cat.split_y(y)
    dual_obj = float(rhs @ res.duals)
    return DispatchResult(system, x, delta, P.copy(), D.copy(), float(system.cy @ y),
                          float(system.cx @ x), dual_bundle(system, res.duals), res.duals, slack, dual_obj)


def _least_redispatch(system, req, opt, backend, fallback):
    cat = system.catalog
    ny = cat.ny
    NT = cat.n_units * cat.horizon
    # variables [y, s]; s >= |dP|
    I = sp.identity(NT, format="csr")
    Z = sp.csr_matrix((NT, NT))
    dsel = sp.hstack([Z, I]).tocsr()  # picks dP out of y
    A = sp.vstack([
        sp.hstack([req.A, sp.csr_matrix((req.n_rows, NT))]),
        sp.hstack([sp.csr_matrix(system.cy.reshape(1, -1)), sp.csr_matrix((1, NT))]),
        sp.hstack([-dsel, I]),
        sp.hstack([dsel, I]),
    ]).tocsr()
    sense = np.concatenate([req.sense, ["<="], np.full(2 * NT, ">=", dtype=object)]).astype(object)
    rhs = np.concatenate([req.rhs, [opt], np.zeros(2 * NT)])
    c = np.concatenate([np.zeros(ny), np.ones(NT)])
    lb = np.concatenate([np.full(ny, -np.inf), np.zeros(NT)])
    ub = np.full(ny + NT, np.inf)
    res = solver.solve(solver.SolveRequest(c=c, A=A, sense=sense, rhs=rhs, lb=lb, ub=ub), backend)
    if not res.optimal:
        return fallback
    return res.x[:ny]


def _violated_rows(system, x, delta, backend, limit: int = 8):
    """Total least violation and the rows carrying most of it."""
    from .ccg import infeasibility
    out = infeasibility(system, x, delta, backend)
    rhs = system.rhs(delta) - system.G @ np.asarray(x, float)
    r = system.E @ out.y - rhs
    viol = np.where(system.sense == "=", np.abs(r), np.maximum(-r, 0.0))
    order = np.argsort(-viol)[:limit]
    return out.value, [system.rows.names[k] for k in order if viol[k] > 1e-7]


# ---------------------------------------------------------------------------
# prices
# ---------------------------------------------------------------------------

def compute_lmp(duals: DualBundle, case) -> np.ndarray:
    """Energy price per bus and hour (buses × T).

    Balance dual of the basic dispatch minus the shift-factor weighted line
    duals of both the basic and the redispatch flow limits; forecast load
    appears in both flow states.
    """
    g = np.asarray(case.gsf, float)
    net_b = duals.line["line_max_b"] - duals.line["line_min_b"]
    net_r = duals.line["line_max_r"] - duals.line["line_min_r"]
    return duals.lambda_b[None, :] - g.T @ net_b - g.T @ net_r


def compute_ulmp(duals: DualBundle, case) -> np.ndarray:
    """Uncertainty price per bus and hour (buses × T)."""
    g = np.asarray(case.gsf, float)
    net_r = duals.line["line_max_r"] - duals.line["line_min_r"]
    return duals.lambda_r[None, :] - g.T @ net_r


def _shift(a: np.ndarray) -> np.ndarray:
    """``a[:, t+1]`` aligned at ``t``; zero past the horizon."""
    out = np.zeros_like(a)
    out[:, :-1] = a[:, 1:]
    return out


def energy_price_components(duals: DualBundle, system: ConstraintSystem) -> dict:
    """Unit-side energy price split into cost, output-limit and ramp parts (units × T each).

    The ramp part collects the basic and aggregate ramp duals of the
    current hour minus those of the next hour; it is what lets a price
    fall below, or rise above, the cost of an unconstrained marginal unit.
    """
    c = np.array([u.cost_energy for u in system.case.units])[:, None]
    U = duals.unit
    agg = (U["ramp_agg_up"] - U["ramp_agg_dn"]) - (_shift(U["ramp_agg_up"]) - _shift(U["ramp_agg_dn"]))
    basic = (U["ramp_up_b"] - U["ramp_dn_b"]) - (_shift(U["ramp_up_b"]) - _shift(U["ramp_dn_b"]))
    return {"cost": np.broadcast_to(c, agg.shape).copy(),
            "limits": U["pmax_b"] - U["pmin_b"] + U["pmax_r"] - U["pmin_r"],
            "ramp": basic + agg}


def unit_side_prices(duals: DualBundle, system: ConstraintSystem) -> tuple[np.ndarray, np.ndarray]:
    """Prices implied by each unit's stationarity conditions (units × T).

    Energy: cost plus output-limit duals plus the ramp duals of the current
    and next hour, for both the basic and the aggregate ramp rows.
    Uncertainty: reserve cost plus redispatch-limit and redispatch-ramp
    duals plus the aggregate ramp duals.
    """
    parts = energy_price_components(duals, system)
    lmp = parts["cost"] + parts["limits"] + parts["ramp"]
    U = duals.unit
    agg = (U["ramp_agg_up"] - U["ramp_agg_dn"]) - (_shift(U["ramp_agg_up"]) - _shift(U["ramp_agg_dn"]))
    c_r = parts["cost"] if system.variant.include_reserve_cost else np.zeros_like(parts["cost"])
    ulmp = c_r + U["pmax_r"] - U["pmin_r"] + U["ramp_up_r"] - U["ramp_dn_r"] + agg
    return lmp, ulmp


@dataclass
class KktReport:
    lmp_residual: np.ndarray  # units × T, NaN where the unit is off
    ulmp_residual: np.ndarray
    flagged: list  # (unit name, hour, which) above tolerance
    tol: float

    @property
    def max_residual(self) -> float:
        vals = np.concatenate([self.lmp_residual.ravel(), self.ulmp_residual.ravel()])
        vals = vals[np.isfinite(vals)]
        return float(vals.max()) if vals.size else 0.0

    @property
    def ok(self) -> bool:
        return not self.flagged


def kkt_crosscheck(result: DispatchResult, tol: float = 1e-5) -> KktReport:
    """Compare bus prices with unit-side prices for every committed unit-hour."""
    system = result.system
    case = system.case
    lmp = compute_lmp(result.duals, case)
    ulmp = compute_ulmp(result.duals, case)
    lmp_u, ulmp_u = unit_side_prices(result.duals, system)
    bus = np.array([u.bus for u in case.units])
    on = result.on > 0.5
    r1 = np.where(on, np.abs(lmp[bus] - lmp_u), np.nan)
    r2 = np.where(on, np.abs(ulmp[bus] - ulmp_u), np.nan)
    flagged = []
    for which, r in (("lmp", r1), ("ulmp", r2)):
        for i, t in zip(*np.nonzero(np.nan_to_num(r) > tol)):
            flagged.append((case.units[i].name, int(t) + 1, which))
    return KktReport(r1, r2, flagged, tol)


def complementary_slackness(result: DispatchResult) -> np.ndarray:
    """Per-row ``|dual * slack|``; zero for equality rows."""
    eq = result.system.sense == "="
    r = np.abs(result.row_duals * result.row_slack)
    r[eq] = 0.0
    return r


def congested(result: DispatchResult, tol: float = PRICE_TOL) -> np.ndarray:
    """Lines × T flags: any flow-limit dual above ``tol`` in either state."""
    L = result.duals.line
    return (L["line_max_b"] > tol) | (L["line_min_b"] > tol) | (L["line_max_r"] > tol) | (L["line_min_r"] > tol)


def marginal_units(result: DispatchResult, lmp: np.ndarray, tol: float = 1e-6) -> list[str]:
    """Per-hour annotation of units whose cost sets the price at their bus."""
    case = result.system.case
    out = []
    final = result.dispatch + result.reserve
    for t in range(case.horizon):
        names = []
        for i, u in enumerate(case.units):
            if result.on[i, t] < 0.5:
                continue
            interior = u.p_min + tol < result.dispatch[i, t] < u.p_max - tol or \
                u.p_min + tol < final[i, t] < u.p_max - tol
            if interior and abs(lmp[u.bus, t] - u.cost_energy) <= 1e-6:
                names.append(u.name)
        out.append("+".join(names) if names else "none (price set by ramp or limit duals)")
    return out


@dataclass
class PriceReport:
    lmp: np.ndarray  # buses × T
    ulmp: np.ndarray
    congestion: np.ndarray  # lines × T bool
    marginal: list

    def uniform_spread(self) -> tuple[float, float]:
        """Largest bus spread of LMP and ULMP over uncongested hours."""
        free = ~np.any(self.congestion, axis=0)
        if not free.any():
            return 0.0, 0.0
        s1 = np.ptp(self.lmp[:, free], axis=0).max()
        s2 = np.ptp(self.ulmp[:, free], axis=0).max()
        return float(s1), float(s2)


def price_report(result: DispatchResult) -> PriceReport:
    case = result.system.case
    lmp = compute_lmp(result.duals, case)
    ulmp = compute_ulmp(result.duals, case)
    return PriceReport(lmp, ulmp, congested(result), marginal_units(result, lmp))


# ---------------------------------------------------------------------------
# settlement
# ---------------------------------------------------------------------------

@dataclass
class SettlementReport:
    """Line items in $ per participant and hour."""

    unit_energy: np.ndarray  # units × T
    unit_reserve: np.ndarray
    unit_cost: np.ndarray
    unit_commitment_cost: np.ndarray
    load_energy: np.ndarray  # loads × T (payments)
    load_uncertainty: np.ndarray
    wind_energy: np.ndarray  # farms × T (income)
    wind_uncertainty: np.ndarray  # charge, -ULMP * dPw
    congestion_rent: float
    names: dict = field(default_factory=dict)

    @property
    def operating_profit(self) -> np.ndarray:
        """Whole-horizon energy and reserve income less production cost, per unit."""
        return self.unit_energy.sum(1) + self.unit_reserve.sum(1) - self.unit_cost.sum(1)

    @property
    def unit_profit(self) -> np.ndarray:
        """Whole-horizon profit per unit, net of start-up and shut-down costs."""
        return self.operating_profit - self.unit_commitment_cost.sum(1)

    def losing_units(self, tol: float = 1e-6) -> list[str]:
        """Units whose net whole-horizon profit is negative."""
        names = self.names.get("unit", [])
        return [names[i] if i < len(names) else f"unit{i}" for i in np.flatnonzero(self.unit_profit < -tol)]

    def totals(self) -> dict:
        load = float(self.load_energy.sum() + self.load_uncertainty.sum())
        gen = float(self.unit_energy.sum() + self.unit_reserve.sum())
        wind = float(self.wind_energy.sum() - self.wind_uncertainty.sum())
        return {"load_payments": load, "generator_credits": gen, "wind_net_credits": wind,
                "surplus": load - gen - wind, "congestion_rent": self.congestion_rent,
                "ulmp_cash_flow": float(np.abs(self.unit_reserve).sum() + np.abs(self.load_uncertainty).sum()
                                        + np.abs(self.wind_uncertainty).sum())}

    def reconciliation_error(self) -> float:
        t = self.totals()
        return abs(t["surplus"] - t["congestion_rent"])

    def rows(self):
        """``(participant, item, hour, amount)`` tuples."""
        T = self.unit_energy.shape[1]
        items = []
        for kind, arrays in (("unit", (("energy_income", self.unit_energy), ("reserve_income", self.unit_reserve),
                                       ("energy_cost", -self.unit_cost),
                                       ("commitment_cost", -self.unit_commitment_cost))),
                             ("load", (("energy_payment", self.load_energy),
                                       ("uncertainty_payment", self.load_uncertainty))),
                             ("wind", (("energy_income", self.wind_energy),
                                       ("uncertainty_charge", self.wind_uncertainty)))):
            names = self.names.get(kind, [])
            for item, arr in arrays:
                for k in range(arr.shape[0]):
                    for t in range(T):
                        items.append((names[k] if k < len(names) else f"{kind}{k}", item, t + 1, float(arr[k, t])))
        return items


def settle(prices: PriceReport, result: DispatchResult) -> SettlementReport:
    """Market cash flows at the computed prices.

    Loads pay the energy price on forecast consumption and the uncertainty
    price on their deviation; wind farms are paid the energy price on
    forecast output and charged the uncertainty price on their (signed)
    shortfall; units are paid both prices on basic output and redispatch.
    """
    system = result.system
    case = system.case
    cat = system.catalog
    lmp, ulmp = prices.lmp, prices.ulmp
    ubus = np.array([u.bus for u in case.units], int)
    wbus = np.array([w.bus for w in case.wind_farms], int)
    dbus = np.array([d.bus for d in case.loads], int)
    dw, dd = cat.split_delta(result.delta)
    c = np.array([u.cost_energy for u in case.units])[:, None]
    x_on, x_su, x_sd = cat.split_x(result.commitment)
    csu = np.array([u.cost_startup for u in case.units])[:, None]
    csd = np.array([u.cost_shutdown for u in case.units])[:, None]
    T = case.horizon
    zeros = lambda n: np.zeros((n, T))  # noqa: E731
    wf = case.wind_forecast() if case.wind_farms else zeros(0)
    lf = case.load_forecast() if case.loads else zeros(0)

    rep = SettlementReport(
        unit_energy=lmp[ubus] * result.dispatch,
        unit_reserve=ulmp[ubus] * result.reserve,
        unit_cost=c * (result.dispatch + result.reserve),
        unit_commitment_cost=csu * x_su + csd * x_sd,
        load_energy=lmp[dbus] * lf if case.loads else zeros(0),
        load_uncertainty=ulmp[dbus] * dd if case.loads else zeros(0),
        wind_energy=lmp[wbus] * wf if case.wind_farms else zeros(0),
        wind_uncertainty=-ulmp[wbus] * dw if case.wind_farms else zeros(0),
        congestion_rent=congestion_rent(result),
        names={"unit": [u.name for u in case.units], "load": [d.name for d in case.loads],
               "wind": [w.name for w in case.wind_farms]},
    )
    return rep


def line_flows_states(result: DispatchResult) -> tuple[np.ndarray, np.ndarray]:
    """Basic and post-redispatch flows (lines × T)."""
    case = result.system.case
    dw, dd = result.system.catalog.split_delta(result.delta)
    g = np.asarray(case.gsf, float)
    wf = case.wind_forecast()
    lf = case.load_forecast()
    inj_b = case.unit_bus_matrix() @ result.dispatch
    inj_r = case.unit_bus_matrix() @ (result.dispatch + result.reserve)
    if case.wind_farms:
        inj_b = inj_b + case.wind_bus_matrix() @ wf
        inj_r = inj_r + case.wind_bus_matrix() @ (wf + dw)
    if case.loads:
        inj_b = inj_b - case.load_bus_matrix() @ lf
        inj_r = inj_r - case.load_bus_matrix() @ (lf + dd)
    return g @ inj_b, g @ inj_r


def congestion_rent(result: DispatchResult) -> float:
    """Line-dual weighted flows summed over lines, hours and both states."""
    Fb, Fr = line_flows_states(result)
    L = result.duals.line
    return float(np.sum((L["line_max_b"] - L["line_min_b"]) * Fb)
                 + np.sum((L["line_max_r"] - L["line_min_r"]) * Fr))


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

@dataclass
class VariantOutcome:
    variant: str
    energy_cost: float
    reserve_cost: float  # redispatch at true unit costs, whatever the variant charges
    violations: dict  # rows of the reference variant the dispatch breaks


def variant_comparison(case, commitment, delta, variants=("model1", "model2", "model3"),
                       reference: str = "model1", backend: str = "highs") -> list[VariantOutcome]:
    """Dispatch every variant at one commitment and one realisation.

    Holding both fixed isolates what each variant's objective and row set
    do to the redispatch, which comparing each variant at its own worst
    case cannot.  Each dispatch is also checked against the reference
    variant's ramp rows.
    """
    ref = build_ruc(case, reference)
    x = _as_commitment(ref, commitment)
    out = []
    for v in variants:
        system = build_ruc(case, v)
        r = solve_rsced(system, x, delta, backend=backend)
        y = np.concatenate([r.dispatch.ravel(), r.reserve.ravel()])
        parts = objective_parts(system, x, y)
        bad = row_violations(ref, x, y, delta, families=RAMP_FAMILIES, tol=1e-6)
        out.append(VariantOutcome(v, parts["energy"], parts["reserve_at_true_cost"], bad))
    return out


def write_prices_csv(prices: PriceReport, case, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bus", "hour", "lmp", "ulmp"])
        for m, b in enumerate(case.buses):
            for t in range(case.horizon):
                w.writerow([b.name, t + 1, f"{prices.lmp[m, t]:.10g}", f"{prices.ulmp[m, t]:.10g}"])


def write_settlement_csv(report: SettlementReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["participant", "line_item", "hour", "amount"])
        for row in report.rows():
            w.writerow([row[0], row[1], row[2], f"{row[3]:.10g}"])


def write_dispatch_csv(result: DispatchResult, path) -> None:
    case = result.system.case
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "hour", "on", "dispatch_mw", "redispatch_mw"])
        for i, u in enumerate(case.units):
            for t in range(case.horizon):
                w.writerow([u.name, t + 1, int(round(result.on[i, t])),
                            f"{result.dispatch[i, t]:.10g}", f"{result.reserve[i, t]:.10g}"])


def price_text_report(prices: PriceReport, result: DispatchResult) -> str:
    """Readable per-hour summary with marginal-unit annotations."""
    case = result.system.case
    lines = [f"{'hour':>4}  {'LMP min':>9} {'LMP max':>9}  {'ULMP min':>9} {'ULMP max':>9}  congested  marginal"]
    for t in range(case.horizon):
        cong = [case.lines[l].name or str(l) for l in np.flatnonzero(prices.congestion[:, t])]
        lines.append(f"{t + 1:>4}  {prices.lmp[:, t].min():9.3f} {prices.lmp[:, t].max():9.3f}  "
                     f"{prices.ulmp[:, t].min():9.3f} {prices.ulmp[:, t].max():9.3f}  "
                     f"{','.join(cong) or '-':<9}  {prices.marginal[t]}")
    return "\n".join(lines) + "\n"
