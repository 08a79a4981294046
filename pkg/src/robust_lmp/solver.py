"""Backend-neutral LP/MILP interface.

Rows are stored in a single sparse matrix with a per-row sense (``">="``,
``"<="`` or ``"="``).  Duals are reported as the sensitivity of the optimal
objective to the row right-hand side, so for a minimisation the dual of a
``>=`` row is nonnegative.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

logger = logging.getLogger(__name__)

SENSES = (">=", "<=", "=")

DEFAULT_FEASIBILITY_TOL = 1e-7
DEFAULT_MIP_GAP = 1e-6


class SolverError(RuntimeError):
    """Raised for backend failures that are not a solve status."""


class ConfigurationError(SolverError):
    pass


@dataclass
class SolveRequest:
    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray | None = None
    maximize: bool = False
    want_duals: bool = False
    time_limit: float | None = None
    mip_gap: float = DEFAULT_MIP_GAP
    feasibility_tol: float = DEFAULT_FEASIBILITY_TOL
    var_names: list[str] | None = None
    row_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A = sp.csr_matrix(self.A, shape=(len(self.rhs), n)) if self.A is not None else sp.csr_matrix((0, n))
        self.sense = np.asarray(self.sense, dtype=object)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if self.integrality is not None:
            self.integrality = np.asarray(self.integrality, dtype=int)
        if self.A.shape[0] != self.rhs.size or self.sense.size != self.rhs.size:
            raise ValueError("row count mismatch between A, sense and rhs")
        bad = [s for s in set(self.sense.tolist()) if s not in SENSES]
        if bad:
            raise ValueError(f"unknown row sense {bad}")
        if self.want_duals and self.is_mip:
            raise ValueError("duals can only be requested for continuous problems")

    @property
    def is_mip(self) -> bool:
        return self.integrality is not None and bool(np.any(self.integrality))

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | limit | error
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    wall_time: float = 0.0
    message: str = ""
    dual_bound: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _split_rows(req: SolveRequest):
    ge = req.sense == ">="
    le = req.sense == "<="
    eq = req.sense == "="
    A = req.A
    A_ub = sp.vstack([-A[ge], A[le]]).tocsr() if (ge.any() or le.any()) else None
    b_ub = np.concatenate([-req.rhs[ge], req.rhs[le]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = req.rhs[eq] if eq.any() else None
    return ge, le, eq, A_ub, b_ub, A_eq, b_eq


def _status_from_scipy(code: int) -> str:
    return {0: "optimal", 1: "limit", 2: "infeasible", 3: "unbounded"}.get(code, "error")


def _solve_highs(req: SolveRequest) -> SolveResult:
    t0 = time.perf_counter()
    sign = -1.0 if req.maximize else 1.0
    c = sign * req.c
    bounds = np.column_stack([req.lb, req.ub])
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi) for lo, hi in bounds]

    if not req.is_mip:
        ge, le, eq, A_ub, b_ub, A_eq, b_eq = _split_rows(req)
        options = {"primal_feasibility_tolerance": req.feasibility_tol,
                   "dual_feasibility_tolerance": req.feasibility_tol}
        if req.time_limit:
            options["time_limit"] = req.time_limit
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method="highs", options=options)
        status = _status_from_scipy(res.status)
        out = SolveResult(status=status, wall_time=time.perf_counter() - t0, message=res.message)
        if res.x is not None and status == "optimal":
            out.x = np.asarray(res.x)
            out.objective = float(req.c @ out.x)
            duals = np.zeros(req.n_rows)
            n_ge = int(ge.sum())
            if A_ub is not None:
                m_ub = np.asarray(res.ineqlin.marginals)
                duals[ge] = -m_ub[:n_ge]
                duals[le] = m_ub[n_ge:]
            if A_eq is not None:
                duals[eq] = np.asarray(res.eqlin.marginals)
            out.duals = sign * duals
            out.reduced_costs = sign * (np.asarray(res.lower.marginals) + np.asarray(res.upper.marginals))
        return out

    lo = np.where(req.sense == "<=", -np.inf, req.rhs)
    hi = np.where(req.sense == ">=", np.inf, req.rhs)
    options = {"mip_rel_gap": req.mip_gap, "presolve": True}
    if req.time_limit:
        options["time_limit"] = req.time_limit
    constraints = LinearConstraint(req.A, lo, hi) if req.n_rows else None
    res = milp(c, integrality=req.integrality, bounds=Bounds(req.lb, req.ub),
               constraints=constraints, options=options)
    status = _status_from_scipy(res.status)
    if status == "limit" and res.x is None:
        status = "limit"
    out = SolveResult(status=status, wall_time=time.perf_counter() - t0, message=res.message)
    if res.x is not None:
        out.x = np.asarray(res.x)
        if req.integrality is not None:
            ints = req.integrality.astype(bool)
            out.x[ints] = np.round(out.x[ints])
        out.objective = float(req.c @ out.x)
        bound = getattr(res, "mip_dual_bound", None)
        out.dual_bound = None if bound is None else sign * float(bound)
    return out


_BACKENDS = {"highs": _solve_highs}


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def solve(req: SolveRequest, backend: str = "highs") -> SolveResult:
    """Solve ``req`` with the named backend.

    Optimal results are checked for primal feasibility (``req.feasibility_tol``
    scaled by row magnitude); a violation is reported in ``diagnostics`` rather
    than silently accepted.
    """
    try:
        fn = _BACKENDS[backend]
    except KeyError:
        raise ConfigurationError(f"solver backend {backend!r} unavailable; choose from {available_backends()}")
    res = fn(req)
    if res.optimal and res.x is not None:
        res.diagnostics["primal_residual"] = primal_residual(req, res.x)
    return res


def primal_residual(req: SolveRequest, x: np.ndarray) -> float:
    """Largest row or bound violation of ``x``."""
    ax = req.A @ x
    viol = np.zeros(req.n_rows)
    ge = req.sense == ">="
    le = req.sense == "<="
    eq = req.sense == "="
    viol[ge] = np.maximum(req.rhs[ge] - ax[ge], 0)
    viol[le] = np.maximum(ax[le] - req.rhs[le], 0)
    viol[eq] = np.abs(ax[eq] - req.rhs[eq])
    bviol = np.maximum(np.maximum(req.lb - x, x - req.ub), 0)
    return float(max(viol.max(initial=0.0), bviol.max(initial=0.0)))


# ---------------------------------------------------------------------------
# LP-format text (CPLEX dialect subset)
# ---------------------------------------------------------------------------

_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]]*$")


def _fmt(v: float) -> str:
    return repr(float(v))


def _term_str(coefs, names) -> str:
    parts = []
    for j, a in coefs:
        s = _fmt(abs(a))
        parts.append(("- " if a < 0 or (a == 0 and np.signbit(a)) else "+ ") + f"{s} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    return " ".join(parts)


def to_lp_string(req: SolveRequest) -> str:
    """Render ``req`` as LP-format text; names are generated if absent."""
    n = req.n_vars
    names = req.var_names or [f"x{j}" for j in range(n)]
    rnames = req.row_names or [f"r{i}" for i in range(req.n_rows)]
    for nm in list(names) + list(rnames):
        if not _NAME_OK.match(nm):
            raise ValueError(f"name {nm!r} is not LP-format safe")
    lines = ["Maximize" if req.maximize else "Minimize"]
    obj = [(j, req.c[j]) for j in range(n) if req.c[j] != 0]
    lines.append(" obj: " + (_term_str(obj, names) if obj else f"0 {names[0]}"))
    lines.append("Subject To")
    A = req.A.tocsr()
    op = {">=": ">=", "<=": "<=", "=": "="}
    for i in range(req.n_rows):
        sl = slice(A.indptr[i], A.indptr[i + 1])
        terms = list(zip(A.indices[sl].tolist(), A.data[sl].tolist()))
        body = _term_str(terms, names) if terms else f"0 {names[0]}"
        lines.append(f" {rnames[i]}: {body} {op[req.sense[i]]} {_fmt(req.rhs[i])}")
    lines.append("Bounds")
    for j in range(n):
        lo, hi = req.lb[j], req.ub[j]
        if np.isneginf(lo) and np.isposinf(hi):
            lines.append(f" {names[j]} free")
        else:
            los = "-inf" if np.isneginf(lo) else _fmt(lo)
            his = "+inf" if np.isposinf(hi) else _fmt(hi)
            lines.append(f" {los} <= {names[j]} <= {his}")
    if req.is_mip:
        lines.append("Generals")
        ints = [names[j] for j in range(n) if req.integrality[j]]
        for k in range(0, len(ints), 8):
            lines.append(" " + " ".join(ints[k:k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(req: SolveRequest, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_lp_string(req))


def _parse_terms(text: str, index: dict[str, int]):
    toks = text.split()
    out = []
    k = 0
    while k < len(toks):
        sgn = 1.0
        if toks[k] in "+-":
            sgn = -1.0 if toks[k] == "-" else 1.0
            k += 1
        coef = float(toks[k])
        name = toks[k + 1]
        k += 2
        out.append((index[name], sgn * coef))
    return out


def from_lp_string(text: str) -> SolveRequest:
    """Parse text written by :func:`to_lp_string` back into a request."""
    lines = [ln.rstrip() for ln in text.splitlines() if ln.strip()]
    maximize = lines[0].strip() == "Maximize"
    sec = {}
    cur = None
    for ln in lines[1:]:
        head = ln.strip()
        if head in ("Subject To", "Bounds", "Generals", "End"):
            cur = head
            sec.setdefault(cur, [])
            continue
        if cur is None:
            cur = "obj"
            sec.setdefault(cur, [])
        sec[cur].append(head)
    names = []
    for ln in sec.get("Bounds", []):
        names.append(ln.split()[0] if ln.endswith("free") else ln.split("<=")[1].strip())
    index = {nm: j for j, nm in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    obj_line = sec["obj"][0].split(":", 1)[1]
    for j, a in _parse_terms(obj_line, index):
        c[j] += a
    rows, cols, vals, sense, rhs, rnames = [], [], [], [], [], []
    for i, ln in enumerate(sec.get("Subject To", [])):
        nm, body = ln.split(":", 1)
        m = re.match(r"^(.*)\s(>=|<=|=)\s(\S+)$", body.strip())
        lhs, s, r = m.group(1), m.group(2), m.group(3)
        for j, a in _parse_terms(lhs, index):
            rows.append(i)
            cols.append(j)
            vals.append(a)
        sense.append(s)
        rhs.append(float(r))
        rnames.append(nm.strip())
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    for ln in sec.get("Bounds", []):
        if ln.endswith("free"):
            continue
        lo, nm, hi = [p.strip() for p in ln.split("<=")]
        lb[index[nm]] = float(lo)
        ub[index[nm]] = float(hi)
    integrality = None
    if "Generals" in sec:
        integrality = np.zeros(n, dtype=int)
        for ln in sec["Generals"]:
            for nm in ln.split():
                integrality[index[nm]] = 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n))
    return SolveRequest(c=c, A=A, sense=np.array(sense, dtype=object), rhs=np.array(rhs), lb=lb, ub=ub,
                        integrality=integrality, maximize=maximize, var_names=names, row_names=rnames)
