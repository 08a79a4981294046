"""Uncertainty sets for wind and load.

The wind set is the intersection of overlapping low-dimensional ellipsoids,
one per sliding window of ``od`` consecutive hours, all calibrated on the
same conditional trajectory samples.  Loads use a budgeted one-sided box.
Baselines are a per-hour error box and a single full-horizon ellipsoid.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import InfeasibleSet, QuadConstraint, barrier_maximize

EXHAUSTIVE_PATTERNS = 64


class SetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# single ellipsoid
# ---------------------------------------------------------------------------

def _upper_chol_of_inverse(R: np.ndarray) -> np.ndarray:
    """Upper-triangular ``L`` with ``inv(R) = L.T @ L``."""
    Rinv = np.linalg.inv(R)
    Rinv = 0.5 * (Rinv + Rinv.T)
    return np.linalg.cholesky(Rinv).T


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    v = np.sort(np.asarray(values, float))
    k = max(1, math.ceil(q * v.size - 1e-12))
    return float(v[min(k, v.size) - 1])


def mahalanobis_sq(X: np.ndarray, mean: np.ndarray, P: np.ndarray) -> np.ndarray:
    D = np.atleast_2d(X) - mean
    return np.einsum("ij,jk,ik->i", D, P, D)


@dataclass(frozen=True)
class EllipsoidSubset:
    """Window ``[start, start + od)`` of the horizon (``start`` is 0-based)."""

    start: int
    mean: np.ndarray
    cov: np.ndarray
    radius: float
    L: np.ndarray

    @property
    def od(self) -> int:
        return self.mean.size

    @property
    def hours(self) -> slice:
        return slice(self.start, self.start + self.od)

    @property
    def precision(self) -> np.ndarray:
        return self.L.T @ self.L

    def c_value(self, x: np.ndarray) -> float:
        d = np.asarray(x)[self.hours] - self.mean
        return float(d @ np.linalg.solve(self.cov, d))

    def c_values_batch(self, X: np.ndarray) -> np.ndarray:
        """``C`` for each row of ``X`` (n × T) via the factor ``L``."""
        D = np.atleast_2d(X)[:, self.hours] - self.mean
        W = D @ self.L.T
        return np.einsum("ij,ij->i", W, W)

    def cone_norm(self, x: np.ndarray) -> float:
        d = np.asarray(x)[self.hours] - self.mean
        return float(np.linalg.norm(self.L @ d) / math.sqrt(self.radius))

    def quad(self) -> QuadConstraint:
        return QuadConstraint(np.arange(self.start, self.start + self.od), self.mean, self.precision, self.radius)


def _regularised_cov(samples: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.cov(samples, rowvar=False))
    d = cov.shape[0]
    tr = float(np.trace(cov))
    if not tr > 0:
        raise SetError("sample covariance is singular (all samples identical)")
    ridge = 1e-8 * tr / d
    w = np.linalg.eigvalsh(cov)
    if w.min() <= ridge:
        cov = cov + ridge * np.eye(d)
        if np.linalg.eigvalsh(cov).min() <= 0.5 * ridge:
            raise SetError("sample covariance is singular after ridge")
    return cov


def fit_ellipsoid(samples: np.ndarray, alpha: float, start: int = 0) -> EllipsoidSubset:
    """Moment-fitted ellipsoid whose radius covers ``alpha`` of the samples."""
    samples = np.atleast_2d(np.asarray(samples, float))
    n, d = samples.shape
    if n <= d:
        raise SetError(f"need more samples ({n}) than dimensions ({d})")
    if not 0 < alpha < 1:
        raise SetError("alpha must lie in (0, 1)")
    mean = samples.mean(axis=0)
    cov = _regularised_cov(samples)
    L = _upper_chol_of_inverse(cov)
    C = mahalanobis_sq(samples, mean, L.T @ L)
    return EllipsoidSubset(start, mean, cov, nearest_rank_quantile(C, alpha), L)


# ---------------------------------------------------------------------------
# intersection set
# ---------------------------------------------------------------------------

@dataclass
class LinearMaxResult:
    point: np.ndarray
    value: float
    pinned: np.ndarray
    candidates: int = 1


@dataclass
class Imeus:
    """Intersection of sliding-window ellipsoids with an optional budget.

    ``budget`` hours must sit at the forecast (``mode="pin"``) or at least at
    the forecast (``mode="inequality"``).  ``lower``/``upper`` are physical
    output limits applied when optimising over the set.
    """

    subsets: list[EllipsoidSubset]
    alpha: float
    forecast: np.ndarray
    budget: int = 0
    mode: str = "pin"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    full_mean: np.ndarray | None = None
    full_cov: np.ndarray | None = None
    _proj: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.forecast = np.asarray(self.forecast, float)
        T = self.horizon
        if not 0 <= self.budget <= T:
            raise SetError(f"budget must lie in [0, {T}]")
        if self.mode not in ("pin", "inequality"):
            raise SetError("budget mode must be 'pin' or 'inequality'")
        covered = np.zeros(T, bool)
        for s in self.subsets:
            covered[s.hours] = True
        if not covered.all():
            raise SetError("subsets do not cover the horizon")

    @property
    def horizon(self) -> int:
        return self.forecast.size

    @property
    def od(self) -> int:
        return self.subsets[0].od

    @property
    def center(self) -> np.ndarray:
        if self.full_mean is not None:
            return self.full_mean
        c = np.zeros(self.horizon)
        n = np.zeros(self.horizon)
        for s in self.subsets:
            c[s.hours] += s.mean
            n[s.hours] += 1
        return c / n

    def quads(self) -> list[QuadConstraint]:
        return [s.quad() for s in self.subsets]

    def c_values(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if x.shape != (self.horizon,):
            raise SetError(f"trajectory must have {self.horizon} values")
        return np.array([s.c_value(x) for s in self.subsets])

    def cone_norms(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if x.shape != (self.horizon,):
            raise SetError(f"trajectory must have {self.horizon} values")
        return np.array([s.cone_norm(x) for s in self.subsets])

    def radii(self) -> np.ndarray:
        return np.array([s.radius for s in self.subsets])

    def contains(self, x, tol: float = 1e-7, check_budget: bool = True) -> tuple[bool, np.ndarray]:
        """Membership and per-subset ``C`` values."""
        C = self.c_values(x)
        ok = bool(np.all(C <= self.radii() * (1 + tol) + tol))
        x = np.asarray(x, float)
        if self.lower is not None:
            ok &= bool(np.all(x >= self.lower - tol))
        if self.upper is not None:
            ok &= bool(np.all(x <= self.upper + tol))
        if check_budget and self.budget:
            ok &= self.pinned_count(x, tol) >= self.budget
        return ok, C

    def pinned_count(self, x, tol: float = 1e-6) -> int:
        x = np.asarray(x, float)
        scale = tol * max(1.0, float(np.abs(self.forecast).max()))
        if self.mode == "pin":
            return int(np.sum(np.abs(x - self.forecast) <= scale))
        return int(np.sum(x >= self.forecast - scale))

    def violated(self, x) -> list[int]:
        C = self.c_values(x)
        return [s.start for s, c in zip(self.subsets, C) if c > s.radius * (1 + 1e-9)]

    # -- projections ------------------------------------------------------
    def projection_bounds(self, physical: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Exact per-hour min and max over the ellipsoid intersection.

        The budget is ignored; ``physical=True`` also intersects with the
        output limits.
        """
        if not physical and self._proj is not None:
            return self._proj
        T = self.horizon
        lo = np.empty(T)
        hi = np.empty(T)
        closed = None if physical else self._closed_form_bounds()
        quads = self.quads()
        for t in range(T):
            if closed is not None and closed[2][t]:
                lo[t], hi[t] = closed[0][t], closed[1][t]
                continue
            e = np.zeros(T)
            e[t] = 1.0
            kw = dict(lb=self.lower, ub=self.upper) if physical else {}
            hi[t] = barrier_maximize(e, quads, z0=self.center, **kw).objective
            lo[t] = -barrier_maximize(-e, quads, z0=self.center, **kw).objective
        if not physical:
            self._proj = (lo, hi)
        return lo, hi

    def _closed_form_bounds(self):
        """Extreme points along covariance columns when windows share moments."""
        if self.full_mean is None or self.full_cov is None:
            return None
        m, S = self.full_mean, self.full_cov
        T = self.horizon
        lo = np.empty(T)
        hi = np.empty(T)
        exact = np.zeros(T, bool)
        for t in range(T):
            cover = [s for s in self.subsets if s.start <= t < s.start + s.od]
            r = min(s.radius for s in cover)
            d = S[:, t] * math.sqrt(r / S[t, t])
            x = m + d
            if all(s.c_values_batch(x)[0] <= s.radius * (1 + 1e-10) for s in self.subsets):
                exact[t] = True
                hi[t] = m[t] + d[t]
                lo[t] = m[t] - d[t]
        return lo, hi, exact

    def widths(self) -> np.ndarray:
        lo, hi = self.projection_bounds()
        return hi - lo

    # -- linear optimisation --------------------------------------------
    def maximize_linear(self, c) -> LinearMaxResult:
        """Maximise ``c.x`` over the set including physical limits and budget."""
        c = np.asarray(c, float)
        T = self.horizon
        quads = self.quads()
        if self.budget == 0:
            r = barrier_maximize(c, quads, lb=self.lower, ub=self.upper, z0=self.center)
            return LinearMaxResult(r.z, r.objective, np.zeros(T, bool))
        if self.budget == T:
            pins = np.ones(T, bool)
            val, x = self._solve_pattern(c, pins, quads)
            if x is None:
                raise SetError("budget pins every hour but the forecast lies outside the set")
            return LinearMaxResult(x, val, pins)
        cands = self._budget_candidates(c, quads)
        best = None
        for pins in cands:
            val, x = self._solve_pattern(c, pins, quads)
            if x is not None and (best is None or val > best.value + 1e-12 * max(1.0, abs(val))):
                best = LinearMaxResult(x, val, pins, len(cands))
        if best is None:
            raise SetError("no budget pattern admits a point of the set")
        return best

    def _solve_pattern(self, c, pins, quads):
        T = self.horizon
        f = self.forecast
        lb = np.full(T, -np.inf) if self.lower is None else self.lower.astype(float).copy()
        ub = np.full(T, np.inf) if self.upper is None else self.upper.astype(float).copy()
        fixed = None
        if self.mode == "pin":
            fixed = {int(t): float(f[t]) for t in np.flatnonzero(pins)}
            for t in fixed:
                if (self.lower is not None and f[t] < self.lower[t]) or (self.upper is not None and f[t] > self.upper[t]):
                    return -np.inf, None
            if len(fixed) == T:
                ok, _ = self.contains(f, check_budget=False)
                return (float(c @ f), f.copy()) if ok else (-np.inf, None)
        else:
            lb = np.where(pins, np.maximum(lb, f), lb)
        try:
            r = barrier_maximize(c, quads, lb=lb, ub=ub, z0=self.center, fixed=fixed)
        except InfeasibleSet:
            return -np.inf, None
        return r.objective, r.z

    def _budget_candidates(self, c, quads) -> list[np.ndarray]:
        """Every pin pattern when few exist, else rounded relaxation plus single swaps."""
        T, G = self.horizon, self.budget
        f = self.forecast
        if math.comb(T, G) <= EXHAUSTIVE_PATTERNS:
            out = []
            for idx in itertools.combinations(range(T), G):
                p = np.zeros(T, bool)
                p[list(idx)] = True
                out.append(p)
            return out
        lo, hi = self.projection_bounds()
        if self.lower is not None:
            lo = np.maximum(lo, self.lower)
        if self.upper is not None:
            hi = np.minimum(hi, self.upper)
        W = np.maximum(np.maximum(hi - f, f - lo), 0.0) + 1.0
        n = 2 * T
        cz = np.concatenate([c, np.zeros(T)])
        rows, rhs = [], []
        for t in range(T):
            if self.mode == "pin":
                r1 = np.zeros(n); r1[t] = 1.0; r1[T + t] = W[t]
                r2 = np.zeros(n); r2[t] = -1.0; r2[T + t] = W[t]
                rows += [r1, r2]; rhs += [f[t] + W[t], -f[t] + W[t]]
            else:
                r1 = np.zeros(n); r1[t] = -1.0; r1[T + t] = f[t]
                rows.append(r1); rhs.append(0.0)
        rb = np.zeros(n); rb[T:] = -1.0
        rows.append(rb); rhs.append(-G)
        lbz = np.concatenate([np.full(T, -np.inf) if self.lower is None else self.lower, np.zeros(T)])
        ubz = np.concatenate([np.full(T, np.inf) if self.upper is None else self.upper, np.ones(T)])
        z0 = np.concatenate([self.center, np.full(T, min(1.0, (G + 0.5) / T))])
        try:
            rel = barrier_maximize(cz, quads, A=np.array(rows), b=np.array(rhs), lb=lbz, ub=ubz, z0=z0)
            B = rel.z[T:]
        except InfeasibleSet:
            B = -np.abs(c)  # fall back to pinning the least valuable hours
        order = np.argsort(-B, kind="stable")
        base = np.zeros(T, bool)
        base[order[:G]] = True
        cands = [base]
        inside = order[:G]
        outside = order[G:]
        if G * (T - G) > 64:
            inside = inside[-4:]
            outside = outside[:4]
        for a in inside:
            for b_ in outside:
                p = base.copy()
                p[a] = False
                p[b_] = True
                cands.append(p)
        return cands

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": "imeus",
            "alpha": self.alpha,
            "od": self.od,
            "budget": self.budget,
            "budget_mode": self.mode,
            "forecast": self.forecast.tolist(),
            "lower": None if self.lower is None else np.asarray(self.lower).tolist(),
            "upper": None if self.upper is None else np.asarray(self.upper).tolist(),
            "full_mean": None if self.full_mean is None else self.full_mean.tolist(),
            "full_cov": None if self.full_cov is None else self.full_cov.ravel().tolist(),
            "subsets": [{"en": s.start + 1, "mu": s.mean.tolist(), "R": s.cov.ravel().tolist(),
                         "C_a": s.radius, "L": s.L.ravel().tolist()} for s in self.subsets],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Imeus":
        subs = []
        for s in doc["subsets"]:
            mu = np.asarray(s["mu"], float)
            k = mu.size
            subs.append(EllipsoidSubset(int(s["en"]) - 1, mu, np.asarray(s["R"], float).reshape(k, k),
                                        float(s["C_a"]), np.asarray(s["L"], float).reshape(k, k)))
        T = len(doc["forecast"])
        arr = lambda v: None if v is None else np.asarray(v, float)
        fc = arr(doc.get("full_cov"))
        return cls(subs, float(doc["alpha"]), np.asarray(doc["forecast"], float), int(doc.get("budget", 0)),
                   doc.get("budget_mode", "pin"), arr(doc.get("lower")), arr(doc.get("upper")),
                   arr(doc.get("full_mean")), None if fc is None else fc.reshape(T, T))


def fit_imeus(samples: np.ndarray, alpha: float, od: int, forecast=None, budget: int = 0,
              mode: str = "pin", capacity: float | None = None) -> Imeus:
    """Fit every window from one set of trajectory samples (n × T)."""
    samples = np.asarray(samples, float)
    n, T = samples.shape
    if not 1 <= od <= T:
        raise SetError(f"od must lie in [1, {T}]")
    mean = samples.mean(axis=0)
    cov = _regularised_cov(samples)
    subs = []
    for en in range(T - od + 1):
        sl = slice(en, en + od)
        S = cov[sl, sl]
        L = _upper_chol_of_inverse(S)
        C = mahalanobis_sq(samples[:, sl], mean[sl], L.T @ L)
        subs.append(EllipsoidSubset(en, mean[sl].copy(), S.copy(), nearest_rank_quantile(C, alpha), L))
    fc = mean.copy() if forecast is None else np.asarray(forecast, float)
    lower = upper = None
    if capacity is not None:
        lower = np.zeros(T)
        upper = np.full(T, float(capacity))
    return Imeus(subs, alpha, fc, budget, mode, lower, upper, mean, cov)


# ---------------------------------------------------------------------------
# box sets
# ---------------------------------------------------------------------------

@dataclass
class BoxSet:
    """Per-hour interval set.

    For loads, ``deviation`` and ``budget`` describe the one-sided budgeted
    form ``x_t = forecast_t + B_t * deviation_t`` with ``sum B_t <= budget``.
    For wind, the interval ``[lower, upper]`` may carry a pinning budget like
    :class:`Imeus`.
    """

    lower: np.ndarray
    upper: np.ndarray
    forecast: np.ndarray
    budget: int | None = None
    deviation: np.ndarray | None = None
    kind: str = "interval"  # interval | load
    mode: str = "pin"
    limits: tuple[float, float] | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, float)
        self.upper = np.asarray(self.upper, float)
        self.forecast = np.asarray(self.forecast, float)
        if np.any(self.lower > self.upper + 1e-12):
            raise SetError("box lower bound exceeds upper bound")
        if self.budget is not None and not 0 <= self.budget <= self.horizon:
            raise SetError(f"budget must lie in [0, {self.horizon}]")

    @property
    def horizon(self) -> int:
        return self.forecast.size

    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def projection_bounds(self, physical: bool = False):
        return self.lower.copy(), self.upper.copy()

    def contains(self, x, tol: float = 1e-7, check_budget: bool = True) -> tuple[bool, np.ndarray]:
        x = np.asarray(x, float)
        if x.shape != (self.horizon,):
            raise SetError(f"trajectory must have {self.horizon} values")
        ok = bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        if self.limits is not None:
            ok &= bool(np.all(x >= self.limits[0] - tol) and np.all(x <= self.limits[1] + tol))
        if check_budget and self.budget is not None:
            if self.kind == "load":
                dev = np.where(self.deviation > 0, (x - self.forecast) / np.where(self.deviation > 0, self.deviation, 1), 0.0)
                onoff = np.isclose(dev, 0, atol=1e-7) | np.isclose(dev, 1, atol=1e-7)
                ok &= bool(np.all(onoff) and np.sum(dev > 0.5) <= self.budget)
            else:
                scale = tol * max(1.0, float(np.abs(self.forecast).max()))
                if self.mode == "pin":
                    pinned = np.sum(np.abs(x - self.forecast) <= scale)
                else:
                    pinned = np.sum(x >= self.forecast - scale)
                ok &= bool(pinned >= self.budget)
        return ok, np.zeros(0)

    def maximize_linear(self, c) -> LinearMaxResult:
        """Exact maximiser by sorting per-hour gains."""
        c = np.asarray(c, float)
        T = self.horizon
        f = self.forecast
        if self.kind == "load":
            gain = c * self.deviation
            G = T if self.budget is None else self.budget
            order = np.argsort(-gain, kind="stable")
            on = np.zeros(T, bool)
            for t in order[:G]:
                if gain[t] > 0:
                    on[t] = True
            x = f + on * self.deviation
            return LinearMaxResult(x, float(c @ x), on)
        lower, upper = self.lower, self.upper
        if self.limits is not None:
            lower = np.clip(lower, *self.limits)
            upper = np.clip(upper, *self.limits)
        best_pt = np.where(c >= 0, upper, lower)
        if not self.budget:
            return LinearMaxResult(best_pt, float(c @ best_pt), np.zeros(T, bool))
        if self.mode == "pin":
            if np.any((f < lower - 1e-9) | (f > upper + 1e-9)):
                raise SetError("forecast outside the box; pinning is infeasible")
            gain = c * best_pt - c * f
            order = np.argsort(gain, kind="stable")
            pins = np.zeros(T, bool)
            pins[order[:self.budget]] = True
            x = np.where(pins, f, best_pt)
        else:
            lo_pin = np.maximum(lower, f)
            if np.any(lo_pin > upper + 1e-9):
                raise SetError("forecast above the box; inequality budget is infeasible")
            pinned_pt = np.where(c >= 0, upper, lo_pin)
            gain = c * best_pt - c * pinned_pt
            order = np.argsort(gain, kind="stable")
            pins = np.zeros(T, bool)
            pins[order[:self.budget]] = True
            x = np.where(pins, pinned_pt, best_pt)
        return LinearMaxResult(x, float(c @ x), pins)

    def to_dict(self) -> dict:
        return {"kind": "box", "box_kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist(),
                "forecast": self.forecast.tolist(), "budget": self.budget, "budget_mode": self.mode,
                "deviation": None if self.deviation is None else self.deviation.tolist(),
                "limits": None if self.limits is None else list(self.limits)}

    @classmethod
    def from_dict(cls, doc: dict) -> "BoxSet":
        dev = doc.get("deviation")
        return cls(np.asarray(doc["lower"]), np.asarray(doc["upper"]), np.asarray(doc["forecast"]),
                   doc.get("budget"), None if dev is None else np.asarray(dev, float),
                   doc.get("box_kind", "interval"), doc.get("budget_mode", "pin"),
                   None if doc.get("limits") is None else tuple(doc["limits"]))


def load_box_set(forecast, deviation, budget: int | None) -> BoxSet:
    """One-sided budgeted load set ``forecast + B * deviation``."""
    forecast = np.asarray(forecast, float)
    deviation = np.asarray(deviation, float)
    return BoxSet(forecast, forecast + deviation, forecast, budget, deviation, kind="load")


def error_box(forecast, errors_hist: np.ndarray, alpha: float, budget: int = 0,
              capacity: float | None = None) -> BoxSet:
    """Per-hour symmetric error interval covering ``alpha`` of past |errors|."""
    forecast = np.asarray(forecast, float)
    errors_hist = np.atleast_2d(errors_hist)
    q = np.array([nearest_rank_quantile(np.abs(errors_hist[:, t]), alpha) for t in range(forecast.size)])
    limits = None if capacity is None else (0.0, float(capacity))
    return BoxSet(forecast - q, forecast + q, forecast, budget, limits=limits)


def build_wind_set(samples, forecast, alpha: float, od: int, budget: int = 0, mode: str = "pin",
                   capacity: float | None = None) -> Imeus:
    """Wind set from conditional samples and the day's forecast."""
    T = np.asarray(forecast).size
    if not 0 <= budget <= T:
        raise SetError(f"budget must be an integer in [0, {T}]")
    return fit_imeus(samples, alpha, od, forecast, budget, mode, capacity)


def build_baseline_sets(samples, forecast, errors_hist, alpha: float, capacity: float | None = None):
    """Per-hour error box and the single full-horizon ellipsoid."""
    T = np.asarray(forecast).size
    box = error_box(forecast, errors_hist, alpha, capacity=capacity)
    ell = fit_imeus(samples, alpha, T, forecast, 0, "pin", capacity)
    return box, ell


def save_set(obj, path) -> None:
    Path(path).write_text(json.dumps(obj.to_dict()))


def load_set(path):
    doc = json.loads(Path(path).read_text())
    return set_from_dict(doc)


def set_from_dict(doc):
    if doc.get("kind") == "imeus":
        return Imeus.from_dict(doc)
    if doc.get("kind") == "box":
        return BoxSet.from_dict(doc)
    raise SetError(f"unknown set kind {doc.get('kind')!r}")


# ---------------------------------------------------------------------------
# quality indices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetQuality:
    od: int
    zeta: float
    eta: float
    eta_raw: float
    index: float
    k: float
    coverage: float = float("nan")
    width: float = float("nan")


def hours_covered(s, actual, semantics: str = "window") -> np.ndarray:
    """Boolean per hour: is the realised value inside the set?

    ``band``: the value lies within the set's exact per-hour projection.
    ``window``: every window containing the hour accepts the realised
    trajectory restricted to that window.
    """
    actual = np.asarray(actual, float)
    if semantics == "band" or isinstance(s, BoxSet):
        lo, hi = s.projection_bounds()
        return (actual >= lo - 1e-9) & (actual <= hi + 1e-9)
    if semantics != "window":
        raise SetError(f"unknown coverage semantics {semantics!r}")
    ok = np.ones(s.horizon, bool)
    for sub in s.subsets:
        if sub.c_values_batch(actual)[0] > sub.radius:
            ok[sub.hours] = False
    return ok


def integrity_index(sets, actuals, semantics: str = "window") -> float:
    """Average fraction of hours per day whose realisation the set covers."""
    actuals = np.atleast_2d(actuals)
    if len(sets) != actuals.shape[0]:
        raise SetError("one set per day required")
    return float(np.mean([hours_covered(s, a, semantics).mean() for s, a in zip(sets, actuals)]))


def box_of_samples(samples) -> tuple[np.ndarray, np.ndarray]:
    samples = np.asarray(samples, float)
    return samples.min(axis=0), samples.max(axis=0)


def inside_fraction(s: Imeus, lo, hi, n: int, rng) -> float:
    """Unbiased estimate of vol(set ∩ box) / vol(box).

    Hours are drawn one at a time, uniformly on the part of the box interval
    that keeps every window's leading-block quadratic form within its radius;
    the weight is the product of accepted fractions.  Once all hours are
    drawn every window is fully enforced, so the weights average to the
    volume ratio.  Leading-block forms are accumulated through the inverse
    Cholesky factor, so each hour costs O(od) per window.
    """
    T = s.horizon
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    width = hi - lo
    if np.any(width <= 0):
        raise SetError("reference box must have positive width in every hour")
    Linv = [np.linalg.inv(np.linalg.cholesky(sub.cov)) for sub in s.subsets]
    X = np.zeros((n, T))
    acc = np.zeros((len(s.subsets), n))
    logw = np.zeros(n)
    alive = np.ones(n, bool)
    for t in range(T):
        a = np.full(n, lo[t])
        b = np.full(n, hi[t])
        for e, sub in enumerate(s.subsets):
            if not sub.start <= t < sub.start + sub.od:
                continue
            k = t - sub.start
            row = Linv[e][k]
            pre = (X[:, sub.start:t] - sub.mean[:k]) @ row[:k] if k else np.zeros(n)
            room = sub.radius - acc[e]
            ok = room > 0
            r = np.sqrt(np.where(ok, room, 0.0))
            a = np.maximum(a, sub.mean[k] + (-r - pre) / row[k])
            b = np.minimum(b, sub.mean[k] + (r - pre) / row[k])
            alive &= ok
        length = np.where(alive, b - a, 0.0)
        alive &= length > 0
        logw += np.log(np.where(alive, length, 1.0) / width[t])
        X[:, t] = np.where(alive, a + rng.uniform(size=n) * np.maximum(b - a, 0.0), lo[t])
        for e, sub in enumerate(s.subsets):
            if sub.start <= t < sub.start + sub.od:
                k = t - sub.start
                w = (X[:, sub.start:t + 1] - sub.mean[:k + 1]) @ Linv[e][k, :k + 1]
                acc[e] += w * w
    if not alive.any():
        return 0.0
    lw = logw[alive]
    mx = lw.max()
    return float(np.exp(mx) * np.sum(np.exp(lw - mx)) / n)


def efficiency_index(sets, boxes, n_mc: int = 20000, seed=0) -> tuple[float, float]:
    """Raw and clamped efficiency index from expected inside counts.

    ``N_box`` uniform draws per day give an expected inside count
    ``N_box * p_d``; the index compares the logs of the day-averaged counts.
    Returns ``(clamped, raw)`` with clamping to [0, 1].
    """
    rng = np.random.default_rng(seed)
    p = np.array([inside_fraction(s, lo, hi, n_mc, rng) for s, (lo, hi) in zip(sets, boxes)])
    mean_ell = n_mc * p.mean()
    if not mean_ell > 0:
        raise SetError("no box sample falls inside the set; increase n_mc")
    raw = 1.0 - math.log10(mean_ell) / math.log10(n_mc)
    return float(min(1.0, max(0.0, raw))), float(raw)


def evaluate_sets(sets, actuals, semantics: str = "window") -> tuple[float, float]:
    """Held-out coverage ratio and mean per-hour width."""
    actuals = np.atleast_2d(actuals)
    cov = [hours_covered(s, a, semantics) for s, a in zip(sets, actuals)]
    width = [s.widths().mean() for s in sets]
    return float(np.mean(cov)), float(np.mean(width))


def optimize_od(samples_per_day, actuals, alpha: float = 0.9, k: float = 0.3, n_mc: int = 20000,
                seed=0, od_values=None, semantics: str = "window",
                eta_days: int | None = 20) -> tuple[int, list[SetQuality]]:
    """Exhaustive sweep over subset dimension; ties go to the smaller OD.

    The efficiency index is a day average of Monte-Carlo volume ratios and
    dominates the run time; ``eta_days`` limits it to an evenly spaced
    subset of days (``None`` uses every day).
    """
    if not 0 <= k <= 1:
        raise SetError("k must lie in [0, 1]")
    actuals = np.atleast_2d(actuals)
    T = actuals.shape[1]
    D = len(samples_per_day)
    od_values = list(range(2, T + 1)) if od_values is None else list(od_values)
    boxes = [box_of_samples(s) for s in samples_per_day]
    pick = np.arange(D) if eta_days is None or eta_days >= D else np.linspace(0, D - 1, eta_days).round().astype(int)
    table = []
    for od in od_values:
        sets = [fit_imeus(s, alpha, od) for s in samples_per_day]
        zeta = integrity_index(sets, actuals, semantics)
        eta, eta_raw = efficiency_index([sets[d] for d in pick], [boxes[d] for d in pick], n_mc,
                                        seed=np.random.SeedSequence([int(seed), od]))
        cov, width = evaluate_sets(sets, actuals, semantics)
        table.append(SetQuality(od, zeta, eta, eta_raw, k * zeta + (1 - k) * eta, k, cov, width))
    best = max(table, key=lambda q: (q.index, -q.od))
    return best.od, table


def sweep_to_csv(table, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["OD", "zeta", "eta", "I", "eta_raw", "coverage", "width"])
        for q in table:
            w.writerow([q.od, repr(q.zeta), repr(q.eta), repr(q.index), repr(q.eta_raw), repr(q.coverage), repr(q.width)])
