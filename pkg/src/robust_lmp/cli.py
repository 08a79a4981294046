"""Command-line entry point.

Subcommands::

    fit        copula model from a wind history CSV
    build-set  uncertainty set for the case forecast, subset-dimension sweep
               and a per-method coverage/width table
    solve      robust commitment, robust dispatch, prices and settlement
    compare    solve over every (set method, model variant) pair
    validate   decomposition solver against exhaustive enumeration

Settings come from built-in defaults, then an optional JSON ``--config``
file, then explicit flags.  Exit codes: 0 success, 2 bad input, 3 no
convergence (or a failed validation), 4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, case as case_mod, ccg, copula, formulation, pipeline, pricing, sets, solver

logger = logging.getLogger("robust_lmp")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_SOLVER = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(str(resources.files("robust_lmp") / "data" / name))


@dataclass
class RunConfig:
    case: str = ""
    history: str = ""
    alpha: float = 0.9
    k: float = 0.3
    budget_wind: int = 0
    budget_load: int = 24
    epsilon: float = 1.0
    variant: str = "model1"
    method: str = "imeus"
    seed: int = 0
    output: str = "robust_lmp_out"
    od: int | None = None
    n_samples: int = 1000
    shrinkage: str | float = "auto"
    max_iter: int = 20
    sweep_days: int = 30
    eta_days: int = 10
    n_mc: int = 20000
    model: str = ""
    wind_set: str = ""
    methods: list = field(default_factory=lambda: ["imeus"])
    variants: list = field(default_factory=lambda: ["model1", "model2", "model3"])
    jobs: int = 1
    solver_backend: str = "highs"
    plots: bool = True

    def __post_init__(self):
        if not self.case:
            self.case = str(bundled("pjm5.json"))
        if not self.history:
            self.history = str(bundled("wind_history.csv"))

    def validate(self) -> None:
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 <= self.k <= 1:
            raise ConfigError("k must lie in [0, 1]")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.method not in pipeline.METHODS:
            raise ConfigError(f"method must be one of {pipeline.METHODS}")
        for m in self.methods:
            if m not in pipeline.METHODS:
                raise ConfigError(f"unknown method {m!r} in methods")
        for v in [self.variant, *self.variants]:
            formulation.ModelVariant.named(v)
        if self.budget_wind < 0 or self.budget_load < 0:
            raise ConfigError("budgets must be non-negative")
        if self.shrinkage != "auto":
            try:
                self.shrinkage = float(self.shrinkage)
            except ValueError as exc:
                raise ConfigError("shrinkage must be 'auto' or a number") from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def load_config_file(path) -> dict:
    """Read a JSON config; ``{"solver": {"backend": ...}}`` and ``"solver.backend"`` both work."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    out = {}
    for key, val in doc.items():
        if key == "solver" and isinstance(val, dict):
            for k2, v2 in val.items():
                out[f"solver_{k2}"] = v2
        else:
            out[key.replace(".", "_").replace("-", "_")] = val
    unknown = set(out) - set(FIELD_TYPES)
    if unknown:
        raise ConfigError(f"{p}: unknown keys {sorted(unknown)}")
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in FIELD_TYPES:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# files whose content depends on wall-clock time
VOLATILE = ("ccg_trace.csv", "timing.json")


def write_manifest(out: Path, cfg: RunConfig, command: str, inputs=()) -> None:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[str(p.relative_to(out))] = _sha256(p)
    doc = {"command": command, "version": __version__, "git": _git_describe(), "config": cfg.to_dict(),
           "seed": cfg.seed, "inputs": {str(i): _sha256(Path(i)) for i in inputs if i and Path(i).is_file()},
           "outputs": files, "volatile": [f for f in files if Path(f).name in VOLATILE]}
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _fit(cfg: RunConfig, actual, forecast, capacity):
    od = cfg.od or 6
    return pipeline.fit_history(actual, forecast, cfg.alpha, min(od, actual.shape[1]), cfg.shrinkage,
                                capacity=capacity, seed=cfg.seed)


def _history_and_capacity(cfg: RunConfig):
    hist = case_mod.read_history(cfg.history)
    cap = None
    if Path(cfg.case).exists():
        c = case_mod.load_case(cfg.case)
        if c.wind_farms:
            cap = max(w.capacity for w in c.wind_farms)
    return hist, cap


def cmd_fit(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    hist, cap = _history_and_capacity(cfg)
    fitted = _fit(cfg, hist["actual"], hist["forecast"], cap)
    fitted.model.save(out / "copula_model.json")
    _write_json(out / "calibration.json", {"shrinkage": fitted.shrinkage,
                                           "cross_validated_coverage": fitted.calibration})
    write_manifest(out, cfg, "fit", [cfg.history])
    print(f"copula model written to {out / 'copula_model.json'} (shrinkage {fitted.shrinkage:g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# build-set
# ---------------------------------------------------------------------------

def _build_sets(cfg: RunConfig, case, out: Path, method: str, plots: bool):
    """Wind sets for every farm of ``case``; writes sweep and method tables."""
    if not case.wind_farms:
        return [], {"method": method}
    hist, _ = _history_and_capacity(cfg)
    fc_hist, ac_hist = hist["forecast"], hist["actual"]
    T = case.horizon
    if fc_hist.shape[1] != T:
        raise ConfigError(f"history has {fc_hist.shape[1]} hours per day but the case horizon is {T}")
    cap = max(w.capacity for w in case.wind_farms) if case.wind_farms else None
    info = {"method": method}
    if cfg.model:
        model = copula.CopulaModel.load(cfg.model)
        sh = cfg.shrinkage if cfg.shrinkage != "auto" else None
        fitted = pipeline.FittedHistory(model, sh, [], ac_hist - fc_hist)
    else:
        fitted = _fit(cfg, ac_hist, fc_hist, cap)
    info["shrinkage"] = fitted.shrinkage
    od = cfg.od
    if method != "box":
        n_eval = min(cfg.sweep_days, fc_hist.shape[0] // 3)
        sh = fitted.shrinkage or 0.0
        eval_fit = pipeline.FittedHistory(
            copula.fit_copula(ac_hist[:-n_eval], fc_hist[:-n_eval], capacity=cap, shrinkage=sh), sh, [],
            ac_hist[:-n_eval] - fc_hist[:-n_eval])
        fe, ae = fc_hist[-n_eval:], ac_hist[-n_eval:]
        if od is None:
            samples = pipeline.sweep_samples(eval_fit, fe, cfg.n_samples, cfg.seed)
            od, table = sets.optimize_od(samples, ae, cfg.alpha, cfg.k, cfg.n_mc, cfg.seed, eta_days=cfg.eta_days)
            sets.sweep_to_csv(table, out / "od_sweep.csv")
            if plots:
                from . import plotting
                plotting.plot_sweep(table, out / "od_sweep.png")
        rows = pipeline.compare_methods(eval_fit, fe, ae, cfg.alpha, od, cfg.n_samples, cfg.seed)
        with open(out / "method_comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "alpha", "coverage", "average_width_mw"])
            for r in rows:
                w.writerow([r.method, f"{r.alpha:.6g}", f"{r.coverage:.6g}", f"{r.width:.6g}"])
    info["od"] = od
    wind_sets = []
    for j, farm in enumerate(case.wind_farms):
        s = pipeline.build_set(method, fitted, farm.forecast, cfg.alpha, od or T, cfg.budget_wind, cfg.n_samples,
                               seed=[cfg.seed, j], capacity=farm.capacity)
        sets.save_set(s, out / f"wind_set_{farm.name}.json")
        wind_sets.append(s)
        if plots:
            from . import plotting
            plotting.plot_set(s, out / f"wind_set_{farm.name}.png")
    return wind_sets, info


def cmd_build_set(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    case = case_mod.load_case(cfg.case)
    _, info = _build_sets(cfg, case, out, cfg.method, cfg.plots)
    _write_json(out / "set_info.json", info)
    write_manifest(out, cfg, "build-set", [cfg.case, cfg.history, cfg.model])
    print(f"{cfg.method} set(s) written to {out} (subset dimension {info['od']})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _load_wind_sets(cfg: RunConfig, case):
    paths = [p for p in cfg.wind_set.split(",") if p]
    if len(paths) != len(case.wind_farms):
        raise ConfigError(f"{len(case.wind_farms)} wind farm(s) but {len(paths)} set file(s) given")
    out = []
    for p, farm in zip(paths, case.wind_farms):
        if not Path(p).exists():
            raise FileNotFoundError(f"set file not found: {p}")
        s = sets.load_set(p)
        if not np.allclose(s.forecast, farm.forecast):
            raise ConfigError(f"{p} was built for a different forecast than farm {farm.name}")
        out.append(s)
    return out


def solve_case(cfg: RunConfig, case, wind_sets, out: Path, info=None) -> dict:
    """Run the full pipeline for prepared sets; returns the summary document."""
    out.mkdir(parents=True, exist_ok=True)
    backend = cfg.solver_backend
    system = formulation.build_ruc(case, cfg.variant)
    budget_load = min(cfg.budget_load, case.horizon)
    unc = ccg.UncertaintyModel.for_case(case, wind_sets, load_budget=budget_load)
    t0 = time.perf_counter()
    sol = ccg.solve_rscuc(system, unc, epsilon=cfg.epsilon, max_iter=cfg.max_iter, seed=cfg.seed, backend=backend)
    t1 = time.perf_counter()
    ccg.trace_to_csv(sol, out / "ccg_trace.csv")
    if not math.isfinite(sol.objective):
        # nothing robust-feasible yet: keep the trace and the offending realisation
        ccg.write_worst_case(system, unc, sol.worst_case, out / "worst_case.json")
        summary = {"variant": cfg.variant, "set": info or {}, "objective": None, "lower_bound": sol.lower_bound,
                   "upper_bound": None, "converged": False, "iterations": sol.iterations, "message": sol.message}
        _write_json(out / "summary.json", summary)
        return summary
    res = pricing.solve_rsced(system, sol.commitment, sol.worst_case, backend=backend)
    prices = pricing.price_report(res)
    report = pricing.settle(prices, res)
    kkt = pricing.kkt_crosscheck(res)
    cs = pricing.complementary_slackness(res)
    t2 = time.perf_counter()

    ccg.write_worst_case(system, unc, sol.worst_case, out / "worst_case.json", value=sol.objective)
    _write_json(out / "solution.json", {"commitment": sol.commitment, "worst_case": sol.worst_case})
    pricing.write_dispatch_csv(res, out / "dispatch.csv")
    pricing.write_prices_csv(prices, case, out / "prices.csv")
    pricing.write_settlement_csv(report, out / "settlement.csv")
    (out / "price_report.txt").write_text(pricing.price_text_report(prices, res))
    _write_json(out / "duals.json", res.duals.to_dict())

    x_part = res.commitment
    parts = formulation.objective_parts(system, x_part, np.concatenate([res.dispatch.ravel(), res.reserve.ravel()]))
    ramp_binding = sorted({system.rows.names[r] for r in np.flatnonzero(
        system.family_mask(formulation.RAMP_FAMILIES) & (np.abs(res.row_duals) > 1e-9))})
    s1, s2 = prices.uniform_spread()
    summary = {
        "variant": cfg.variant,
        "set": info or {},
        "objective": sol.objective,
        "lower_bound": sol.lower_bound,
        "upper_bound": sol.upper_bound,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "message": sol.message,
        "dispatch_cost": res.total_cost,
        "cost": parts,
        "redispatch_mw": float(np.abs(res.reserve).sum()),
        "settlement": report.totals(),
        "unit_profit": dict(zip([u.name for u in case.units], report.unit_profit.tolist())),
        "unit_operating_profit": dict(zip([u.name for u in case.units], report.operating_profit.tolist())),
        "losing_units": report.losing_units(),
        "checks": {"kkt_max_residual": kkt.max_residual, "kkt_flagged": kkt.flagged,
                   "complementary_slackness_max": float(cs.max()) if cs.size else 0.0,
                   "uncongested_lmp_spread": s1, "uncongested_ulmp_spread": s2,
                   "reconciliation_error": report.reconciliation_error()},
        "ramp_binding_rows": ramp_binding,
    }
    _write_json(out / "summary.json", summary)
    _write_json(out / "timing.json", {"rscuc_s": t1 - t0, "pricing_s": t2 - t1,
                                      "trace_wall_s": [r.wall_time for r in sol.trace]})
    if report.losing_units():
        logger.warning("units with negative net profit: %s", ", ".join(report.losing_units()))
    if cfg.plots:
        from . import plotting
        plotting.plot_prices(prices, case, out / "prices.png")
        plotting.plot_trace(sol, out / "ccg_trace.png")
        plotting.plot_dispatch(res, out / "dispatch.png")
    return summary


def cmd_solve(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    case = case_mod.load_case(cfg.case)
    if cfg.wind_set:
        wind_sets, info = _load_wind_sets(cfg, case), {"method": "file", "paths": cfg.wind_set}
    else:
        wind_sets, info = _build_sets(cfg, case, out, cfg.method, cfg.plots)
    summary = solve_case(cfg, case, wind_sets, out, info)
    write_manifest(out, cfg, "solve", [cfg.case, cfg.history, *cfg.wind_set.split(",")])
    status = "converged" if summary["converged"] else "NOT converged"
    obj = "none" if summary["objective"] is None else f"{summary['objective']:.2f}"
    print(f"objective {obj} ({status} after {summary['iterations']} iterations); outputs in {out}")
    return EXIT_OK if summary["converged"] else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _compare_job(args):
    cfg_dict, case_path, set_paths, out, info = args
    cfg = RunConfig(**cfg_dict)
    case = case_mod.load_case(case_path)
    wind_sets = [sets.load_set(p) for p in set_paths]
    try:
        summary = solve_case(cfg, case, wind_sets, Path(out), info)
    except ccg.IncompatibleSetError as exc:
        Path(out).mkdir(parents=True, exist_ok=True)
        summary = {"variant": cfg.variant, "set": info, "objective": None, "converged": False,
                   "iterations": 0, "message": str(exc)}
        _write_json(Path(out) / "summary.json", summary)
        summary["status"] = "incompatible"
        return summary
    summary["status"] = "converged" if summary["converged"] else "not_converged"
    return summary


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def _shared_scenario_check(cfg: RunConfig, case, out: Path, labels, results) -> None:
    """Every variant dispatched at the first variant's commitment and worst case, per set method."""
    rows = []
    for (m, v), s in zip(labels, results):
        if v != cfg.variants[0] or s["status"] != "converged":
            continue
        doc = json.loads((out / f"{m}_{v}" / "solution.json").read_text())
        outcomes = pricing.variant_comparison(case, doc["commitment"], doc["worst_case"], cfg.variants,
                                              reference=v, backend=cfg.solver_backend)
        for o in outcomes:
            worst = max(o.violations.items(), key=lambda kv: kv[1]) if o.violations else ("", 0.0)
            rows.append([m, o.variant, f"{o.energy_cost:.6f}", f"{o.reserve_cost:.6f}", len(o.violations),
                         worst[0], f"{worst[1]:.6f}"])
    with open(out / "shared_scenario.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "variant", "energy_cost", "reserve_cost_at_true_cost", "reference_ramp_violations",
                    "largest_violation_row", "largest_violation_mw"])
        w.writerows(rows)


def cmd_compare(cfg: RunConfig) -> int:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    case = case_mod.load_case(cfg.case)
    jobs = []
    for method in cfg.methods:
        set_dir = out / f"sets_{method}"
        set_dir.mkdir(exist_ok=True)
        _, info = _build_sets(cfg, case, set_dir, method, cfg.plots)
        paths = [str(set_dir / f"wind_set_{f.name}.json") for f in case.wind_farms]
        for variant in cfg.variants:
            d = dataclasses.replace(cfg, variant=variant, method=method).to_dict()
            jobs.append(((method, variant), (d, cfg.case, paths, str(out / f"{method}_{variant}"), info)))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            results = list(ex.map(_compare_job, [j[1] for j in jobs]))
    else:
        results = [_compare_job(j[1]) for j in jobs]
    labels = [j[0] for j in jobs]

    with open(out / "compare_costs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "variant", "status", "objective", "commitment_cost", "energy_cost", "reserve_cost",
                    "reserve_cost_at_true_cost", "redispatch_mw", "iterations"])
        for (m, v), s in zip(labels, results):
            c = s.get("cost", {})
            w.writerow([m, v, s["status"], _fmt(s["objective"]), _fmt(c.get("commitment")), _fmt(c.get("energy")),
                        _fmt(c.get("reserve")), _fmt(c.get("reserve_at_true_cost")), _fmt(s.get("redispatch_mw")),
                        s["iterations"]])
    keys = ["load_payments", "generator_credits", "wind_net_credits", "congestion_rent", "ulmp_cash_flow"]
    with open(out / "market_totals.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "variant", *keys])
        for (m, v), s in zip(labels, results):
            if "settlement" in s:
                w.writerow([m, v, *(_fmt(s["settlement"][k]) for k in keys)])
    with open(out / "unit_profits.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "variant", "unit", "operating_profit", "net_profit"])
        for (m, v), s in zip(labels, results):
            for u in case.units:
                if "unit_profit" in s:
                    w.writerow([m, v, u.name, _fmt(s["unit_operating_profit"][u.name]),
                                _fmt(s["unit_profit"][u.name])])
    _shared_scenario_check(cfg, case, out, labels, results)
    write_manifest(out, cfg, "compare", [cfg.case, cfg.history])
    bad = [f"{m}/{v} ({s['status']})" for (m, v), s in zip(labels, results) if s["status"] != "converged"]
    print(f"{len(jobs)} runs written to {out}" + (f"; unsuccessful: {', '.join(bad)}" if bad else ""))
    return EXIT_NOT_CONVERGED if bad else EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(cfg: RunConfig, tol: float = 1e-6) -> int:
    from . import oracle

    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = oracle.equivalence_suite(variant=cfg.variant, backend=cfg.solver_backend)
    with open(out / "validation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "horizon", "wind_budget", "enumeration", "decomposition", "rel_error", "pass"])
        for r in rows:
            w.writerow([r.seed, r.horizon, r.wind_budget, repr(r.oracle), repr(r.ccg), f"{r.rel_error:.3g}",
                        r.rel_error <= tol])
    write_manifest(out, cfg, "validate")
    n_ok = sum(r.rel_error <= tol for r in rows)
    print(f"{n_ok}/{len(rows)} instances agree within {tol:g} relative")
    return EXIT_OK if n_ok == len(rows) else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with run settings")
    p.add_argument("--case", help="case JSON (default: bundled 5-bus case)")
    p.add_argument("--history", help="wind history CSV (default: bundled synthetic history)")
    p.add_argument("--output", "-o", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, help="confidence level of the sets")
    p.add_argument("--solver-backend", dest="solver_backend", help="LP/MILP backend (solver.backend)")
    p.add_argument("--no-plots", dest="plots", action="store_const", const=False)
    p.add_argument("--log-level", default="WARNING")


def _add_set_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=float, help="integrity weight of the subset-dimension index")
    p.add_argument("--od", type=int, help="subset dimension (skips the sweep)")
    p.add_argument("--budget-wind", dest="budget_wind", type=int, help="hours pinned to the wind forecast")
    p.add_argument("--method", choices=pipeline.METHODS)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--shrinkage", help="copula shrinkage: 'auto' or a number")
    p.add_argument("--model", help="copula model JSON from 'fit' (skips refitting)")
    p.add_argument("--sweep-days", dest="sweep_days", type=int)


def _add_solve_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--budget-load", dest="budget_load", type=int, help="hours in which loads may deviate")
    p.add_argument("--epsilon", type=float, help="bound gap tolerance ($)")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--variant", choices=["model1", "model2", "model3"])
    p.add_argument("--wind-set", dest="wind_set", help="comma-separated set files, one per farm")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-lmp", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fit", help="fit the copula model")
    _add_common(p)
    p.add_argument("--od", type=int, help="subset dimension used when calibrating shrinkage")
    p.add_argument("--shrinkage")
    p = sub.add_parser("build-set", help="build uncertainty sets")
    _add_common(p)
    _add_set_flags(p)
    p = sub.add_parser("solve", help="robust commitment, dispatch, prices and settlement")
    _add_common(p)
    _add_set_flags(p)
    _add_solve_flags(p)
    p = sub.add_parser("compare", help="all method/variant combinations")
    _add_common(p)
    _add_set_flags(p)
    _add_solve_flags(p)
    p.add_argument("--methods", type=lambda s: s.split(","))
    p.add_argument("--variants", type=lambda s: s.split(","))
    p.add_argument("--jobs", type=int)
    p = sub.add_parser("validate", help="compare against exhaustive enumeration on tiny cases")
    _add_common(p)
    p.add_argument("--variant", choices=["model1", "model2", "model3"])
    return ap


COMMANDS = {"fit": cmd_fit, "build-set": cmd_build_set, "solve": cmd_solve, "compare": cmd_compare,
            "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (FileNotFoundError, ConfigError, case_mod.CaseError, copula.CopulaError, sets.SetError,
            pipeline.PipelineError, formulation.FormulationError, ccg.IncompatibleSetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (solver.SolverError, pricing.PricingError, ccg.CcgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
