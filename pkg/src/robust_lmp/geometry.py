"""Linear optimisation over intersections of ellipsoids and polyhedra.

Two independent routes are provided:

* :func:`barrier_maximize` - primal log-barrier Newton method with a phase-I
  search for a strictly feasible start.  This is the default oracle.
* :func:`cutting_plane_maximize` - outer approximation by tangent cuts solved
  with the LP backend, kept as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import solver


class GeometryError(RuntimeError):
    pass


class InfeasibleSet(GeometryError):
    pass


@dataclass(frozen=True)
class QuadConstraint:
    """``(z[idx] - center)^T P (z[idx] - center) <= radius``."""

    idx: np.ndarray
    center: np.ndarray
    P: np.ndarray
    radius: float

    def value(self, z: np.ndarray) -> float:
        d = z[self.idx] - self.center
        return float(d @ self.P @ d - self.radius)


@dataclass
class BarrierResult:
    z: np.ndarray
    objective: float
    gap: float
    newton_steps: int


def _linear_rows(n, A, b, lb, ub):
    rows = [] if A is None else [np.atleast_2d(A)]
    rhs = [] if b is None else [np.atleast_1d(b)]
    if lb is not None:
        lb = np.broadcast_to(lb, (n,))
        m = np.isfinite(lb)
        rows.append(-np.eye(n)[m])
        rhs.append(-lb[m])
    if ub is not None:
        ub = np.broadcast_to(ub, (n,))
        m = np.isfinite(ub)
        rows.append(np.eye(n)[m])
        rhs.append(ub[m])
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs).astype(float)


class _QuadBatch:
    """Quadratic rows grouped by block size for vectorised evaluation."""

    def __init__(self, quads):
        groups = {}
        for q in quads:
            groups.setdefault(len(q.idx), []).append(q)
        self.groups = []
        for k, qs in groups.items():
            self.groups.append((np.array([q.idx for q in qs], dtype=int).reshape(len(qs), k),
                                np.array([q.center for q in qs], float).reshape(len(qs), k),
                                np.array([q.P for q in qs], float).reshape(len(qs), k, k),
                                np.array([q.radius for q in qs], float)))
        self.count = len(quads)

    def slacks(self, z, lift=0.0):
        out = []
        for idx, cen, P, r in self.groups:
            d = z[idx] - cen
            out.append(r + lift - np.einsum("gi,gij,gj->g", d, P, d))
        return np.concatenate(out) if out else np.zeros(0)

    def grad_hess(self, z, g, H, lift_col=None, lift=0.0):
        for idx, cen, P, r in self.groups:
            d = z[idx] - cen
            Pd = np.einsum("gij,gj->gi", P, d)
            s = r + lift - np.einsum("gi,gi->g", d, Pd)
            gq = 2.0 * Pd
            np.add.at(g, idx, gq / s[:, None])
            blk = 2.0 * P / s[:, None, None] + np.einsum("gi,gj->gij", gq, gq) / (s**2)[:, None, None]
            np.add.at(H, (idx[:, :, None], idx[:, None, :]), blk)
            if lift_col is not None:
                # extra coordinate enters each row with coefficient -1
                g[lift_col] -= np.sum(1.0 / s)
                cross = -gq / (s**2)[:, None]
                np.add.at(H[lift_col], idx, cross)
                np.add.at(H[:, lift_col], idx, cross)
                H[lift_col, lift_col] += np.sum(1.0 / s**2)


def _slacks(z, quads, A, b):
    sq = quads.slacks(z)
    sl = b - A @ z
    return sq, sl


def _barrier_value(z, obj_grad, quads, A, b, lift_col=None):
    lift = z[lift_col] if lift_col is not None else 0.0
    sq = quads.slacks(z, lift)
    sl = b - A @ z
    if (sq.size and sq.min() <= 0) or (sl.size and sl.min() <= 0):
        return np.inf
    return float(-obj_grad @ z - np.log(sq).sum() - np.log(sl).sum())


def _newton_center(z, obj_grad, quads, A, b, free, lift_col=None, max_steps=100, tol=1e-9,
                   stop_below=None):
    """Minimise ``-obj_grad.z - sum log(slacks)`` over ``z[free]``."""
    n = z.size
    steps = 0
    f0 = _barrier_value(z, obj_grad, quads, A, b, lift_col)
    for steps in range(1, max_steps + 1):
        g = -obj_grad.copy()
        H = np.zeros((n, n))
        lift = z[lift_col] if lift_col is not None else 0.0
        quads.grad_hess(z, g, H, lift_col, lift)
        if A.shape[0]:
            s = b - A @ z
            g += A.T @ (1.0 / s)
            H += (A.T * (1.0 / s**2)) @ A
        gf = g[free]
        Hf = H[np.ix_(free, free)]
        try:
            L = np.linalg.cholesky(Hf + 1e-14 * max(1.0, np.abs(Hf).max()) * np.eye(Hf.shape[0]))
            dz = -np.linalg.solve(L.T, np.linalg.solve(L, gf))
        except np.linalg.LinAlgError:
            dz = -np.linalg.lstsq(Hf, gf, rcond=None)[0]
        dec = float(-gf @ dz)
        if dec / 2 <= tol:
            break
        full = np.zeros(n)
        full[free] = dz
        step = 1.0
        while True:
            zn = z + step * full
            fn = _barrier_value(zn, obj_grad, quads, A, b, lift_col)
            if fn <= f0 - 0.25 * step * dec:
                break
            step *= 0.5
            if step < 1e-12:
                return z, steps
        stalled = f0 - fn <= 1e-15 * max(1.0, abs(f0))
        z, f0 = zn, fn
        if stalled:
            break
        if stop_below is not None and z[lift_col] < stop_below:
            break
    return z, steps


def _phase_one(z0, quads, A, b, free):
    """Find a strictly feasible point by minimising a common slack ``s``."""
    n = z0.size
    sq, sl = _slacks(z0, quads, A, b)
    if (sq.size == 0 or sq.min() > 0) and (sl.size == 0 or sl.min() > 0):
        return z0
    worst = max([0.0] + list(-sq) + list(-sl))
    A2 = np.hstack([A, -np.ones((A.shape[0], 1))]) if A.shape[0] else np.zeros((0, n + 1))
    c = np.zeros(n + 1)
    c[-1] = -1.0
    w = np.append(z0, worst + 1.0)
    free2 = np.append(free, True)
    scale = max(1.0, abs(worst))
    t = (quads.count + A2.shape[0]) / scale
    for _ in range(60):
        w, _ = _newton_center(w, t * c, quads, A2, b, free2, lift_col=n, stop_below=-1e-6 * scale)
        if w[-1] < -1e-9 * scale:
            return w[:-1]
        m = quads.count + A2.shape[0]
        if m / t < 1e-12 * scale:
            break
        t *= 10.0
    raise InfeasibleSet(f"no strictly feasible point (best common slack {w[-1]:.3e})")


def _spread(z, quads, A, b) -> float:
    """Rough distance scale of the feasible region around ``z``."""
    sq, sl = _slacks(z, quads, A, b)
    vals = []
    if sq.size:
        vals.append(np.sqrt(max(float(np.max([g[3].max() for g in quads.groups])), 0.0)))
    if sl.size:
        vals.append(float(np.median(sl)))
    return max(vals) if vals else 1.0


def barrier_maximize(c, quads, A=None, b=None, lb=None, ub=None, z0=None,
                     fixed: dict[int, float] | None = None, rel_tol: float = 1e-11) -> BarrierResult:
    """Maximise ``c.z`` subject to quadratic and linear inequality rows.

    Parameters
    ----------
    c : objective, length n.
    quads : list of :class:`QuadConstraint`.
    A, b : optional rows ``A z <= b``.
    lb, ub : optional variable bounds.
    z0 : starting guess (need not be feasible).
    fixed : ``{index: value}`` coordinates held constant.
    rel_tol : stopping rule on the barrier gap, relative to ``max(1, |c.z|)``.

    Raises
    ------
    InfeasibleSet
        when no strictly feasible point exists for the free coordinates.
    """
    c = np.asarray(c, float)
    n = c.size
    fixed = fixed or {}
    z = np.zeros(n) if z0 is None else np.array(z0, float)
    free = np.ones(n, bool)
    for k, v in fixed.items():
        z[k] = v
        free[k] = False
    lbf = None if lb is None else np.where(free, np.broadcast_to(lb, (n,)), -np.inf)
    ubf = None if ub is None else np.where(free, np.broadcast_to(ub, (n,)), np.inf)
    Am, bm = _linear_rows(n, A, b, lbf, ubf)
    quads = _QuadBatch(list(quads))
    if not free.any():
        sq, sl = _slacks(z, quads, Am, bm)
        if (sq.size and sq.min() < -1e-9) or (sl.size and sl.min() < -1e-9):
            raise InfeasibleSet("all coordinates fixed at an infeasible point")
        return BarrierResult(z, float(c @ z), 0.0, 0)
    z = _phase_one(z, quads, Am, bm, free)
    m = quads.count + Am.shape[0]
    # balance the linear term against the barrier at the start
    t = m / max(1e-12, float(np.abs(c[free]).sum()) * max(1.0, _spread(z, quads, Am, bm)))
    total = 0
    for _ in range(200):
        z, k = _newton_center(z, t * c, quads, Am, bm, free)
        total += k
        gap = m / t
        if gap <= rel_tol * max(1.0, abs(float(c @ z))):
            break
        t *= 16.0
    return BarrierResult(z, float(c @ z), m / t, total)


def cutting_plane_maximize(c, quads, lb, ub, A=None, b=None, fixed=None, tol: float = 1e-7,
                           max_cuts: int = 500) -> BarrierResult:
    """Outer-approximation maximisation with tangent cuts.

    Each iteration solves an LP over the bounds, the linear rows and the cuts
    so far.  If the LP point violates some ellipsoid, the tangent plane at its
    radial projection onto that ellipsoid's boundary is added.
    """
    c = np.asarray(c, float)
    n = c.size
    lb = np.broadcast_to(np.asarray(lb, float), (n,)).copy()
    ub = np.broadcast_to(np.asarray(ub, float), (n,)).copy()
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise GeometryError("cutting planes need finite bounds")
    for k, v in (fixed or {}).items():
        lb[k] = ub[k] = v
    rows = [] if A is None else list(np.atleast_2d(A))
    rhs = [] if b is None else list(np.atleast_1d(b))
    for it in range(max_cuts + 1):
        Am = np.array(rows) if rows else np.zeros((0, n))
        req = solver.SolveRequest(c=c, A=sp.csr_matrix(Am), sense=np.array(["<="] * len(rhs), dtype=object),
                                  rhs=np.array(rhs, float), lb=lb, ub=ub, maximize=True)
        res = solver.solve(req)
        if not res.optimal:
            raise InfeasibleSet(f"cutting-plane LP {res.status}")
        z = res.x
        worst, qk = 0.0, None
        for q in quads:
            v = q.value(z) / q.radius
            if v > worst:
                worst, qk = v, q
        if worst < tol:
            return BarrierResult(z, float(c @ z), worst, it)
        d = z[qk.idx] - qk.center
        ratio = np.sqrt(qk.radius / (d @ qk.P @ d))
        xb = qk.center + ratio * d
        g = 2.0 * qk.P @ (xb - qk.center)
        row = np.zeros(n)
        row[qk.idx] = g
        rows.append(row)
        rhs.append(float(g @ xb))
    raise GeometryError(f"cutting-plane loop exceeded {max_cuts} cuts (worst residual {worst:.3e})")
