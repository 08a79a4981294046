"""Column-and-constraint generation for the two-stage robust commitment.

The master problem keeps one full copy of the second-stage variables per
scenario found so far and an epigraph variable bounding their cost.  The
worst-case subproblem for a fixed commitment is a max-min; its inner value
is convex and piecewise linear in the realisation (the realisation only
moves right-hand sides), so it is maximised by alternating best response:
solve the inner LP, take the gradient ``M^T pi`` from its duals, maximise
that linear function over the uncertainty set, repeat.  The same climb run
on a slack-minimising LP finds realisations that make the commitment
infeasible.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import solver
from .formulation import ConstraintSystem, commitment_violations
from .sets import Imeus

logger = logging.getLogger(__name__)


class CcgError(RuntimeError):
    pass


class IncompatibleSetError(CcgError):
    """Raised when no commitment copes with the scenarios found."""


# ---------------------------------------------------------------------------
# uncertainty over the stacked deviation vector
# ---------------------------------------------------------------------------

@dataclass
class UncertaintyModel:
    """Product of per-farm wind sets and the budgeted load set.

    ``wind_sets[j]`` is an :class:`Imeus`, a :class:`BoxSet` or ``None``
    (farm fixed at forecast).  Loads deviate upward by ``load_deviation``
    in at most ``load_budget`` hours, all loads together.
    """

    wind_forecast: np.ndarray  # farms × T
    wind_sets: list
    load_deviation: np.ndarray  # loads × T
    load_budget: int = 0

    def __post_init__(self):
        self.wind_forecast = np.atleast_2d(np.asarray(self.wind_forecast, float))
        self.load_deviation = np.atleast_2d(np.asarray(self.load_deviation, float))
        T = self.horizon
        if len(self.wind_sets) != self.wind_forecast.shape[0]:
            raise CcgError("one wind set (or None) per farm required")
        if not 0 <= self.load_budget <= T:
            raise CcgError(f"load budget must lie in [0, {T}]")
        for j, s in enumerate(self.wind_sets):
            if s is not None and not np.allclose(s.forecast, self.wind_forecast[j]):
                raise CcgError(f"wind set {j} was built for a different forecast")

    @classmethod
    def for_case(cls, case, wind_sets=None, load_budget: int = 0) -> "UncertaintyModel":
        wind_sets = [None] * len(case.wind_farms) if wind_sets is None else list(wind_sets)
        dev = case.load_deviation() if case.loads else np.zeros((0, case.horizon))
        return cls(case.wind_forecast() if case.wind_farms else np.zeros((0, case.horizon)),
                   wind_sets, dev, load_budget)

    @property
    def horizon(self) -> int:
        return self.wind_forecast.shape[1] if self.wind_forecast.size else self.load_deviation.shape[1]

    @property
    def n_farms(self) -> int:
        return self.wind_forecast.shape[0]

    @property
    def size(self) -> int:
        return (self.n_farms + self.load_deviation.shape[0]) * self.horizon

    @property
    def trivial(self) -> bool:
        return all(s is None for s in self.wind_sets) and (self.load_budget == 0 or not np.any(self.load_deviation))

    def split(self, delta):
        T = self.horizon
        F = self.n_farms
        d = np.asarray(delta, float)
        return d[:F * T].reshape(F, T), d[F * T:].reshape(-1, T)

    def maximize_linear(self, g) -> tuple[np.ndarray, float]:
        """Maximise ``g . delta`` over the set; returns ``(delta, value)``."""
        gw, gd = self.split(g)
        T = self.horizon
        dw = np.zeros_like(self.wind_forecast)
        for j, s in enumerate(self.wind_sets):
            if s is None or not np.any(gw[j]):
                continue
            res = s.maximize_linear(gw[j])
            dw[j] = res.point - self.wind_forecast[j]
        dd = np.zeros_like(self.load_deviation)
        if self.load_budget and dd.size:
            gain = np.sum(gd * self.load_deviation, axis=0)
            order = np.argsort(-gain, kind="stable")[:self.load_budget]
            B = np.zeros(T, bool)
            B[order[gain[order] > 0]] = True
            dd[:, B] = self.load_deviation[:, B]
        delta = np.concatenate([dw.ravel(), dd.ravel()])
        return delta, float(np.asarray(g, float) @ delta)

    def contains(self, delta, tol: float = 1e-6) -> bool:
        dw, dd = self.split(delta)
        for j, s in enumerate(self.wind_sets):
            if s is None:
                if np.any(np.abs(dw[j]) > tol):
                    return False
                continue
            ok, _ = s.contains(self.wind_forecast[j] + dw[j], tol=tol)
            if not ok:
                return False
        if dd.size:
            dev = self.load_deviation
            on = np.abs(dd - dev) <= tol * np.maximum(1.0, dev)
            off = np.abs(dd) <= tol
            hour_on = np.all(on, axis=0) & np.any(dev > 0, axis=0)
            if not np.all(on | off) or not np.all(np.all(on, axis=0) | np.all(off, axis=0)):
                return False
            if hour_on.sum() > self.load_budget:
                return False
        return True

    def random_direction(self, rng) -> np.ndarray:
        return rng.standard_normal(self.size)


# ---------------------------------------------------------------------------
# inner problems
# ---------------------------------------------------------------------------

@dataclass
class InnerResult:
    value: float
    y: np.ndarray | None
    duals: np.ndarray | None
    feasible: bool


def evaluate_inner(system: ConstraintSystem, x, delta, backend: str = "highs") -> InnerResult:
    """Second-stage LP value for commitment ``x`` and realisation ``delta``."""
    req = system.second_stage_request(delta=delta, x=x, want_duals=True)
    res = solver.solve(req, backend)
    if res.status == "infeasible":
        return InnerResult(math.inf, None, None, False)
    if not res.optimal:
        raise solver.SolverError(f"inner LP {res.status}: {res.message}")
    return InnerResult(res.objective, res.x, res.duals, True)


def infeasibility(system: ConstraintSystem, x, delta, backend: str = "highs") -> InnerResult:
    """Least total row violation of the second stage (zero when feasible)."""
    rhs = system.rhs(delta) - system.G @ np.asarray(x, float)
    m, ny = system.E.shape
    eq = system.sense == "="
    n_eq = int(eq.sum())
    S_plus = sp.identity(m, format="csr")
    S_minus = sp.csr_matrix((np.ones(n_eq), (np.flatnonzero(eq), np.arange(n_eq))), shape=(m, n_eq))
    A = sp.hstack([system.E, S_plus, -S_minus]).tocsr()
    c = np.concatenate([np.zeros(ny), np.ones(m + n_eq)])
    lb = np.concatenate([np.full(ny, -np.inf), np.zeros(m + n_eq)])
    ub = np.full(ny + m + n_eq, np.inf)
    res = solver.solve(solver.SolveRequest(c=c, A=A, sense=system.sense, rhs=rhs, lb=lb, ub=ub,
                                           want_duals=True), backend)
    if not res.optimal:
        raise solver.SolverError(f"infeasibility LP {res.status}: {res.message}")
    return InnerResult(res.objective, res.x[:ny], res.duals, True)


@dataclass
class SubproblemResult:
    delta: np.ndarray
    value: float  # inner cost at delta, +inf when the commitment fails there
    restarts: int
    lp_solves: int
    feasible: bool


def _climb(system, x, unc, delta0, rel_tol, max_rounds, backend, counter, objective="cost"):
    """Alternating best response from ``delta0``; returns ``(delta, value, feasible)``."""
    fn = evaluate_inner if objective == "cost" else infeasibility
    delta = np.asarray(delta0, float)
    cur = fn(system, x, delta, backend)
    counter[0] += 1
    if not cur.feasible:
        return delta, math.inf, False
    M = system.M
    for _ in range(max_rounds):
        g = M.T @ cur.duals
        if not np.any(np.abs(g) > 0):
            break
        cand, _ = unc.maximize_linear(g)
        nxt = fn(system, x, cand, backend)
        counter[0] += 1
        if not nxt.feasible:
            return cand, math.inf, False
        if nxt.value <= cur.value + rel_tol * max(1.0, abs(cur.value)):
            break
        delta, cur = cand, nxt
    return delta, cur.value, True


def solve_subproblem(system: ConstraintSystem, x, unc: UncertaintyModel, starts=(), n_random: int = 4,
                     seed=0, rel_tol: float = 1e-9, max_rounds: int = 50,
                     backend: str = "highs") -> SubproblemResult:
    """Worst-case realisation for a fixed commitment.

    Climbs start from the forecast, from every realisation in ``starts`` and
    from ``n_random`` extreme points in random directions.  A second round of
    climbs on the total row violation looks for realisations the commitment
    cannot serve; if one is found it is returned with value ``+inf``.
    """
    x = np.asarray(x, float)
    zero = np.zeros(unc.size)
    counter = [0]
    if unc.trivial:
        r = evaluate_inner(system, x, zero, backend)
        return SubproblemResult(zero, r.value, 0, 1, r.feasible)
    rng = np.random.default_rng(seed)
    seeds = [zero] + [np.asarray(s, float) for s in starts]
    for _ in range(n_random):
        seeds.append(unc.maximize_linear(unc.random_direction(rng))[0])
    best = None
    for s in seeds:
        d, v, ok = _climb(system, x, unc, s, rel_tol, max_rounds, backend, counter)
        if not ok:
            return SubproblemResult(d, math.inf, len(seeds), counter[0], False)
        if best is None or v > best[1]:
            best = (d, v)
    # feasibility climbs: any positive violation means the commitment fails somewhere
    for s in seeds + [best[0]]:
        d, v, _ = _climb(system, x, unc, s, rel_tol, max_rounds, backend, counter, objective="violation")
        if v > 1e-6:
            return SubproblemResult(d, math.inf, len(seeds), counter[0], False)
    return SubproblemResult(best[0], best[1], len(seeds), counter[0], True)


# ---------------------------------------------------------------------------
# master problem
# ---------------------------------------------------------------------------

@dataclass
class MasterResult:
    x: np.ndarray
    alpha: float
    lower_bound: float
    objective: float
    ys: list
    wall_time: float


def solve_master(system: ConstraintSystem, scenarios, mip_gap: float = 1e-7, time_limit=None,
                 backend: str = "highs") -> MasterResult:
    """MILP over commitment, epigraph and one second-stage copy per scenario."""
    if not scenarios:
        raise CcgError("master needs at least one scenario")
    cat = system.catalog
    nx, ny = cat.nx, cat.ny
    K = len(scenarios)
    m = system.n_rows
    mx = system.Ax.shape[0]
    n = nx + 1 + K * ny
    blocks = [sp.hstack([system.Ax, sp.csr_matrix((mx, n - nx))])]
    rhs = [system.rhs_x]
    sense = [system.sense_x]
    for k, d in enumerate(scenarios):
        left = sp.csr_matrix((m, 1 + k * ny))
        right = sp.csr_matrix((m, (K - k - 1) * ny))
        blocks.append(sp.hstack([system.G, left, system.E, right]))
        rhs.append(system.rhs(d))
        sense.append(system.sense)
        # epigraph row: alpha - cy.y_k >= 0
        row = np.zeros(n)
        row[nx] = 1.0
        row[nx + 1 + k * ny: nx + 1 + (k + 1) * ny] = -system.cy
        blocks.append(sp.csr_matrix(row))
        rhs.append(np.zeros(1))
        sense.append(np.array([">="], dtype=object))
    A = sp.vstack(blocks).tocsr()
    c = np.concatenate([system.cx, [1.0], np.zeros(K * ny)])
    lb = np.concatenate([np.zeros(nx), [-np.inf], np.full(K * ny, -np.inf)])
    ub = np.concatenate([np.ones(nx), [np.inf], np.full(K * ny, np.inf)])
    integ = np.concatenate([np.ones(nx, int), np.zeros(1 + K * ny, int)])
    req = solver.SolveRequest(c=c, A=A, sense=np.concatenate(sense), rhs=np.concatenate(rhs), lb=lb, ub=ub,
                              integrality=integ, mip_gap=mip_gap, time_limit=time_limit)
    res = solver.solve(req, backend)
    if res.status == "infeasible":
        raise IncompatibleSetError("master infeasible: uncertainty set incompatible with case "
                                   "(no commitment serves every scenario found)")
    if res.x is None:
        raise solver.SolverError(f"master MILP {res.status}: {res.message}")
    x = res.x[:nx]
    ys = [res.x[nx + 1 + k * ny: nx + 1 + (k + 1) * ny] for k in range(K)]
    alpha = float(max(system.cy @ y for y in ys))
    obj = float(system.cx @ x + alpha)
    lb_ = obj if res.dual_bound is None else min(obj, float(res.dual_bound))
    return MasterResult(x, alpha, lb_, obj, ys, res.wall_time)


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

@dataclass
class TraceRow:
    iteration: int
    lower_bound: float
    upper_bound: float
    wall_time: float
    restarts: int
    master_objective: float
    subproblem_value: float


@dataclass
class RucSolution:
    commitment: np.ndarray  # stacked x
    worst_case: np.ndarray  # stacked delta for the returned commitment
    objective: float
    lower_bound: float
    upper_bound: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list)
    scenarios: list = field(default_factory=list)
    message: str = ""

    def on(self, catalog):
        return catalog.split_x(self.commitment)[0]

    @property
    def gap(self) -> float:
        return self.upper_bound - self.lower_bound


def solve_rscuc(system: ConstraintSystem, unc: UncertaintyModel, epsilon: float = 1.0, max_iter: int = 20,
                mip_gap: float = 1e-7, n_random: int = 16, verify_restarts: int = 32, seed=0,
                rel_tol: float = 1e-9, backend: str = "highs") -> RucSolution:
    """Robust commitment by column-and-constraint generation.

    Starts from the forecast scenario.  Each round solves the master, finds
    the worst case for its commitment, updates the bounds and adds the
    scenario.  Before declaring convergence the incumbent commitment is
    re-examined with ``verify_restarts`` extra random starts; a worse
    realisation found there is added and the loop continues.  If
    ``max_iter`` rounds pass first, the best commitment so far is returned
    with ``converged=False``.

    The worst value found for each distinct commitment is kept, so the upper
    bound only reflects realisations actually certified in the set.
    """
    if epsilon <= 0:
        raise CcgError("epsilon must be positive")
    t0 = time.perf_counter()
    scenarios = [np.zeros(unc.size)]
    LB = -math.inf
    seen: dict[bytes, list] = {}  # commitment -> [x, worst value, worst delta]
    trace = []
    converged = False
    message = ""
    rng_root = np.random.SeedSequence(int(seed))

    def upper():
        best = min(seen.values(), key=lambda e: float(system.cx @ e[0]) + e[1])
        return float(system.cx @ best[0]) + best[1], best

    def record(x, sub):
        key = np.round(x).astype(np.int8).tobytes()
        e = seen.get(key)
        if e is None:
            seen[key] = [x.copy(), sub.value, sub.delta.copy()]
        elif sub.value > e[1]:
            e[1], e[2] = sub.value, sub.delta.copy()

    def admit(delta):
        if not unc.contains(delta):
            raise CcgError("subproblem returned a realisation outside the uncertainty set")
        if any(np.allclose(delta, s, atol=1e-9, rtol=0) for s in scenarios):
            return False
        scenarios.append(delta)
        return True

    UB = math.inf
    for it in range(1, max_iter + 1):
        mr = solve_master(system, scenarios, mip_gap=mip_gap, backend=backend)
        LB = max(LB, mr.lower_bound)
        seeds = rng_root.spawn(2)
        sub = solve_subproblem(system, mr.x, unc, starts=scenarios[1:], n_random=n_random,
                               seed=seeds[0], rel_tol=rel_tol, backend=backend)
        record(mr.x, sub)
        added = admit(sub.delta)
        UB, best = upper()
        restarts = sub.restarts
        if UB - LB <= epsilon:
            # harder look at the incumbent before stopping
            chk = solve_subproblem(system, best[0], unc, starts=scenarios[1:], n_random=verify_restarts,
                                   seed=seeds[1], rel_tol=rel_tol, backend=backend)
            restarts += chk.restarts
            if chk.value > best[1] + rel_tol * max(1.0, abs(best[1])):
                record(best[0], chk)
                added |= admit(chk.delta)
                UB, best = upper()
        trace.append(TraceRow(it, LB, UB, time.perf_counter() - t0, restarts, mr.objective, sub.value))
        logger.info("ccg %d: LB %.6f UB %.6f", it, LB, UB)
        if UB - LB <= epsilon:
            converged = True
            break
        if not added:
            message = "worst case already in the master; bounds cannot close further"
            break
    else:
        message = f"gap {UB - LB:.6g} above epsilon after {max_iter} iterations"
    UB, best = upper()
    if not math.isfinite(UB):
        # every commitment tried so far fails some realisation; report the last one
        return RucSolution(mr.x, sub.delta, UB, LB, UB, False, len(trace), trace, scenarios,
                           message or "no commitment found yet that serves every realisation")
    return RucSolution(best[0], best[2], UB, LB, UB, converged, len(trace), trace, scenarios, message)


def trace_to_csv(solution: RucSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "LB", "UB", "wall_time_s", "oracle_restarts"])
        for r in solution.trace:
            w.writerow([r.iteration, repr(r.lower_bound), repr(r.upper_bound), f"{r.wall_time:.3f}", r.restarts])


def worst_case_document(system: ConstraintSystem, unc: UncertaintyModel, delta) -> dict:
    """Absolute trajectories of a realisation, with active budget hours."""
    case = system.case
    dw, dd = unc.split(delta)
    wind = case.wind_forecast() + dw if case.wind_farms else np.zeros((0, case.horizon))
    load = case.load_forecast() + dd if case.loads else np.zeros((0, case.horizon))
    pinned = []
    for j, s in enumerate(unc.wind_sets):
        if isinstance(s, Imeus):
            pinned.append(np.abs(dw[j]) <= 1e-6 * max(1.0, float(np.abs(s.forecast).max())))
        else:
            pinned.append(np.abs(dw[j]) <= 1e-9)
    B = np.any(np.abs(dd) > 1e-9, axis=0) if dd.size else np.zeros(case.horizon, bool)
    return {
        "wind": {w.name: wind[j].tolist() for j, w in enumerate(case.wind_farms)},
        "load": {d.name: load[k].tolist() for k, d in enumerate(case.loads)},
        "wind_at_forecast": {w.name: np.asarray(pinned[j]).astype(int).tolist()
                             for j, w in enumerate(case.wind_farms)},
        "load_deviating": B.astype(int).tolist(),
    }


def write_worst_case(system, unc, delta, path, value=None) -> None:
    doc = worst_case_document(system, unc, delta)
    if value is not None:
        doc["value"] = value
    Path(path).write_text(json.dumps(doc, indent=1))


def check_commitment(system: ConstraintSystem, x) -> None:
    bad = commitment_violations(system, x)
    if bad:
        raise CcgError("commitment violates logic rows: " + ", ".join(bad[:20]))
