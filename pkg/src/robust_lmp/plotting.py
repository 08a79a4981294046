"""Static figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes reproducible across runs
_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def plot_prices(prices, case, path) -> None:
    """Energy and uncertainty price per bus over the horizon."""
    hours = np.arange(1, case.horizon + 1)
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for m, b in enumerate(case.buses):
        axes[0].step(hours, prices.lmp[m], where="mid", label=b.name)
        axes[1].step(hours, prices.ulmp[m], where="mid", label=b.name)
    axes[0].set_ylabel("LMP ($/MWh)")
    axes[1].set_ylabel("ULMP ($/MWh)")
    axes[1].set_xlabel("hour")
    axes[0].legend(ncol=min(5, case.n_buses), fontsize=8)
    _save(fig, path)


def plot_trace(solution, path) -> None:
    """Lower and upper bounds per decomposition iteration."""
    it = [r.iteration for r in solution.trace]
    lb = [r.lower_bound for r in solution.trace]
    ub = [r.upper_bound if np.isfinite(r.upper_bound) else np.nan for r in solution.trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(it, lb, "o-", label="lower bound")
    ax.plot(it, ub, "s-", label="upper bound")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost ($)")
    ax.legend()
    _save(fig, path)


def plot_sweep(table, path) -> None:
    """Integrity, efficiency and combined index against subset dimension."""
    od = [q.od for q in table]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(od, [q.zeta for q in table], "o-", label="integrity")
    ax.plot(od, [q.eta for q in table], "s-", label="efficiency")
    ax.plot(od, [q.index for q in table], "^-", label="combined")
    ax.set_xlabel("subset dimension")
    ax.legend()
    _save(fig, path)


def plot_set(uset, path, actual=None, samples=None) -> None:
    """Per-hour projection band of a wind set around its forecast."""
    lo, hi = uset.projection_bounds()
    T = lo.size
    hours = np.arange(1, T + 1)
    fig, ax = plt.subplots(figsize=(8, 4))
    if samples is not None:
        ax.plot(hours, np.asarray(samples)[:50].T, color="0.8", lw=0.5)
    ax.fill_between(hours, lo, hi, alpha=0.3, label="set projection")
    ax.plot(hours, uset.forecast, "k-", label="forecast")
    if actual is not None:
        ax.plot(hours, actual, "r--", label="actual")
    ax.set_xlabel("hour")
    ax.set_ylabel("wind (MW)")
    ax.legend()
    _save(fig, path)


def plot_dispatch(result, path) -> None:
    """Stacked final output (dispatch plus redispatch) per unit."""
    case = result.system.case
    hours = np.arange(1, case.horizon + 1)
    final = result.dispatch + result.reserve
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.stackplot(hours, final, labels=[u.name for u in case.units])
    ax.set_xlabel("hour")
    ax.set_ylabel("output (MW)")
    ax.legend(fontsize=8, loc="upper left")
    _save(fig, path)
