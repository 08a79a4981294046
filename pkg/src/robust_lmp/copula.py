"""Gaussian copula linking day-ahead wind forecasts and realised output.

The joint vector ``z = [z_x, z_y]`` of normal scores of realised output
``x_t`` and forecast ``y_t`` is modelled as standard multivariate normal.
Conditioning on a new forecast yields a Gaussian for ``z_x`` that is mapped
back through the empirical marginals of ``x_t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

MIN_SAMPLES = 30
EIG_FLOOR = 1e-8


class CopulaError(ValueError):
    pass


@dataclass(frozen=True)
class EmpiricalMarginal:
    """Empirical CDF with rank/(n+1) plotting positions.

    Between order statistics the CDF is linear; outside the sample range it
    is clamped to ``[1/(n+1), n/(n+1)]``.
    """

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size

    def cdf(self, x):
        n = self.n
        ranks = np.interp(x, self.values, np.arange(1, n + 1))
        return np.clip(ranks / (n + 1), 1.0 / (n + 1), n / (n + 1.0))

    def ppf(self, p):
        n = self.n
        return np.interp(np.asarray(p) * (n + 1), np.arange(1, n + 1), self.values)


def fit_marginals(samples: np.ndarray, min_samples: int = MIN_SAMPLES) -> list[EmpiricalMarginal]:
    """One marginal per column of a days × hours array."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    out = []
    for t in range(samples.shape[1]):
        col = samples[:, t]
        col = col[np.isfinite(col)]
        if col.size < min_samples:
            raise CopulaError(f"hour {t + 1}: {col.size} samples, need at least {min_samples}")
        out.append(EmpiricalMarginal(np.sort(col)))
    return out


def normal_scores(marginals: list[EmpiricalMarginal], data: np.ndarray) -> np.ndarray:
    data = np.atleast_2d(data)
    return np.column_stack([ndtri(m.cdf(data[:, t])) for t, m in enumerate(marginals)])


def nearest_correlation(R: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and rescale to unit diagonal."""
    R = 0.5 * (R + R.T)
    w, V = np.linalg.eigh(R)
    if w.min() >= floor:
        out = R.copy()
    else:
        out = (V * np.maximum(w, floor)) @ V.T
    d = np.sqrt(np.diag(out))
    out = out / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class ConditionalGaussian:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class CopulaModel:
    actual_marginals: tuple[EmpiricalMarginal, ...]
    forecast_marginals: tuple[EmpiricalMarginal, ...]
    R: np.ndarray
    capacity: float

    @property
    def horizon(self) -> int:
        return len(self.actual_marginals)

    @property
    def blocks(self):
        T = self.horizon
        R = self.R
        return R[:T, :T], R[:T, T:], R[T:, :T], R[T:, T:]

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "capacity": self.capacity,
            "actual_marginals": [m.values.tolist() for m in self.actual_marginals],
            "forecast_marginals": [m.values.tolist() for m in self.forecast_marginals],
            "R": self.R.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CopulaModel":
        T = int(doc["horizon"])
        R = np.asarray(doc["R"], dtype=float).reshape(2 * T, 2 * T)
        return cls(tuple(EmpiricalMarginal(np.asarray(v, float)) for v in doc["actual_marginals"]),
                   tuple(EmpiricalMarginal(np.asarray(v, float)) for v in doc["forecast_marginals"]),
                   R, float(doc["capacity"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "CopulaModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_copula(actual: np.ndarray, forecast: np.ndarray, capacity: float | None = None,
               shrinkage: float = 0.0) -> CopulaModel:
    """Fit marginals and the 2T × 2T normal-score correlation.

    Parameters
    ----------
    actual, forecast : days × T arrays
    capacity : upper clip for sampled output; defaults to the largest value seen.
    shrinkage : weight pulling the correlation toward identity (0 = none).
    """
    actual = np.asarray(actual, float)
    forecast = np.asarray(forecast, float)
    if actual.shape != forecast.shape:
        raise CopulaError("actual and forecast histories must have the same shape")
    mx = fit_marginals(actual)
    my = fit_marginals(forecast)
    Z = np.hstack([normal_scores(mx, actual), normal_scores(my, forecast)])
    R = np.corrcoef(Z, rowvar=False)
    if not np.all(np.isfinite(R)):
        raise CopulaError("correlation undefined: some hour has constant history")
    if shrinkage:
        R = (1 - shrinkage) * R + shrinkage * np.eye(R.shape[0])
    R = nearest_correlation(R)
    cap = float(capacity) if capacity is not None else float(max(actual.max(), forecast.max()))
    return CopulaModel(tuple(mx), tuple(my), R, cap)


def condition_on_forecast(model: CopulaModel, forecast) -> ConditionalGaussian:
    """Gaussian of ``z_x`` given the forecast's normal scores."""
    forecast = np.asarray(forecast, float)
    T = model.horizon
    if forecast.shape != (T,):
        raise CopulaError(f"forecast must have {T} values")
    zy = np.array([ndtri(m.cdf(forecast[t])) for t, m in enumerate(model.forecast_marginals)])
    Rxx, Rxy, Ryx, Ryy = model.blocks
    if np.linalg.cond(Ryy) > 1e12:
        raise CopulaError("forecast block of R is numerically singular; refit with shrinkage > 0")
    K = np.linalg.solve(Ryy, Ryx).T
    mean = K @ zy
    cov = Rxx - K @ Ryx
    return ConditionalGaussian(mean, 0.5 * (cov + cov.T))


def _chol_psd(S: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (S + S.T))
        return V * np.sqrt(np.maximum(w, EIG_FLOOR))


def sample_day_ahead(model: CopulaModel, forecast, n_samples: int, seed=None) -> np.ndarray:
    """``n_samples`` × T wind trajectories conditioned on ``forecast``."""
    cg = condition_on_forecast(model, forecast)
    L = _chol_psd(cg.cov)
    rng = np.random.default_rng(seed)
    z = cg.mean + rng.standard_normal((n_samples, model.horizon)) @ L.T
    u = ndtr(z)
    x = np.column_stack([m.ppf(u[:, t]) for t, m in enumerate(model.actual_marginals)])
    return np.clip(x, 0.0, model.capacity)

