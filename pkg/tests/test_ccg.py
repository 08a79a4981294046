import csv
import json
import math

import numpy as np
import pytest

from robust_lmp import ccg, formulation, oracle, solver
from robust_lmp.case import case_from_dict


def tiny(seed=2, T=3, wind_budget=1, load_budget=1):
    doc, wset = oracle.tiny_instance(seed, horizon=T, wind_budget=wind_budget)
    case = case_from_dict(doc, name=f"tiny{seed}")
    system = formulation.build_ruc(case, "model1")
    return case, system, ccg.UncertaintyModel.for_case(case, [wset], load_budget=load_budget)


def test_uncertainty_model_membership():
    case, system, unc = tiny(wind_budget=0)
    assert unc.contains(np.zeros(unc.size))
    rng = np.random.default_rng(0)
    for _ in range(5):
        d, v = unc.maximize_linear(rng.normal(size=unc.size))
        assert unc.contains(d)
    dw, dd = unc.split(np.arange(unc.size, dtype=float))
    assert dw.shape == (1, 3) and dd.shape == (1, 3)


def test_load_budget_semantics():
    case, system, unc = tiny(load_budget=1)
    dev = unc.load_deviation
    d = np.zeros(unc.size)
    _, dd = unc.split(d)
    F = unc.n_farms * unc.horizon
    d[F:] = dev.ravel()  # every hour deviating: over budget
    assert not unc.contains(d)
    d[F:] = 0.0
    d[F + 1] = dev[0, 1]
    assert unc.contains(d)
    d[F + 1] = 0.5 * dev[0, 1]  # partial deviations are not vertices of the budget set
    assert not unc.contains(d)
    g = np.zeros(unc.size)
    g[F:] = [1.0, 3.0, 2.0]
    best, _ = unc.maximize_linear(g)
    np.testing.assert_allclose(unc.split(best)[1][0], [0.0, dev[0, 1], 0.0])


def test_forecast_mismatch_rejected():
    doc, wset = oracle.tiny_instance(1)
    doc["wind_farms"][0]["forecast"] = [v + 1.0 for v in doc["wind_farms"][0]["forecast"]]
    case = case_from_dict(doc)
    with pytest.raises(ccg.CcgError, match="different forecast"):
        ccg.UncertaintyModel.for_case(case, [wset])


def test_subproblem_dominates_sampled_realisations():
    case, system, unc = tiny(seed=4, wind_budget=0, load_budget=1)
    x = formulation.commitment_vector(system, np.ones((case.n_units, case.horizon)))
    sub = ccg.solve_subproblem(system, x, unc, n_random=8, seed=1)
    assert unc.contains(sub.delta)
    rng = np.random.default_rng(2)
    for _ in range(15):
        d, _ = unc.maximize_linear(rng.normal(size=unc.size))
        r = ccg.evaluate_inner(system, x, d)
        assert (r.value if r.feasible else math.inf) <= sub.value + 1e-6


def test_zero_uncertainty_matches_deterministic_uc():
    case, system, _ = tiny(seed=6)
    unc = ccg.UncertaintyModel.for_case(case, None, load_budget=0)
    assert unc.trivial
    sol = ccg.solve_rscuc(system, unc, epsilon=1e-7, mip_gap=1e-9)
    req = system.full_request()
    req.mip_gap = 1e-9
    ref = solver.solve(req)
    assert sol.converged
    assert sol.objective == pytest.approx(ref.objective, rel=1e-7)


def test_bounds_monotone_and_consistent():
    case, system, unc = tiny(seed=3, T=4, wind_budget=2)
    sol = ccg.solve_rscuc(system, unc, epsilon=1e-4)
    assert sol.converged
    lbs = [r.lower_bound for r in sol.trace]
    ubs = [r.upper_bound for r in sol.trace]
    assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a + 1e-9 for a, b in zip(ubs, ubs[1:]))
    assert all(l <= u + 1e-6 for l, u in zip(lbs, ubs))
    assert sol.upper_bound - sol.lower_bound <= 1e-4
    assert unc.contains(sol.worst_case)
    # the returned worst case really costs what is reported
    r = ccg.evaluate_inner(system, sol.commitment, sol.worst_case)
    assert system.cx @ sol.commitment + r.value == pytest.approx(sol.objective, rel=1e-9)
    ccg.check_commitment(system, sol.commitment)


def test_incompatible_set_raises():
    doc, wset = oracle.tiny_instance(2)
    doc["loads"][0]["forecast"] = [500.0] * 3  # beyond total unit capacity
    case = case_from_dict(doc)
    system = formulation.build_ruc(case)
    unc = ccg.UncertaintyModel.for_case(case, [wset], load_budget=1)
    with pytest.raises(ccg.IncompatibleSetError):
        ccg.solve_rscuc(system, unc)


def test_iteration_cap_reports_non_convergence(bundled_case, pjm5_wind_set):
    system = formulation.build_ruc(bundled_case)
    unc = ccg.UncertaintyModel.for_case(bundled_case, [pjm5_wind_set], load_budget=24)
    sol = ccg.solve_rscuc(system, unc, max_iter=1)
    assert not sol.converged and sol.iterations == 1
    assert sol.message


def test_epsilon_validated():
    case, system, unc = tiny()
    with pytest.raises(ccg.CcgError):
        ccg.solve_rscuc(system, unc, epsilon=0.0)


def test_writers(tmp_path):
    case, system, unc = tiny(seed=1)
    sol = ccg.solve_rscuc(system, unc, epsilon=1e-4)
    ccg.trace_to_csv(sol, tmp_path / "trace.csv")
    rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
    assert list(rows[0]) == ["iteration", "LB", "UB", "wall_time_s", "oracle_restarts"]
    assert len(rows) == sol.iterations
    ccg.write_worst_case(system, unc, sol.worst_case, tmp_path / "wc.json", value=sol.objective)
    doc = json.loads((tmp_path / "wc.json").read_text())
    assert set(doc) >= {"wind", "load", "wind_at_forecast", "load_deviating"}
    assert len(doc["wind"]["w0"]) == case.horizon
