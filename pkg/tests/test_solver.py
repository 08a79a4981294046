import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_lmp import solver


def small_lp(want_duals=True):
    # min x + 2y  s.t. x + y >= 4, x <= 3, y <= 10
    return solver.SolveRequest(c=[1.0, 2.0], A=[[1.0, 1.0], [1.0, 0.0]], sense=[">=", "<="], rhs=[4.0, 3.0],
                               lb=[0.0, 0.0], ub=[np.inf, 10.0], want_duals=want_duals)


def test_lp_solution_and_dual_signs():
    res = solver.solve(small_lp())
    assert res.optimal
    np.testing.assert_allclose(res.x, [3.0, 1.0], atol=1e-9)
    assert res.objective == pytest.approx(5.0)
    # d obj / d rhs: raising the >= row costs 2 per unit, raising the <= cap saves 1
    np.testing.assert_allclose(res.duals, [2.0, -1.0], atol=1e-9)


def test_duals_match_finite_differences():
    base = solver.solve(small_lp()).objective
    for r, d in enumerate(solver.solve(small_lp()).duals):
        req = small_lp()
        req.rhs[r] += 1e-3
        assert (solver.solve(req).objective - base) / 1e-3 == pytest.approx(d, abs=1e-6)


def test_equality_rows_and_maximize():
    req = solver.SolveRequest(c=[1.0, 1.0], A=[[1.0, -1.0]], sense=["="], rhs=[1.0], lb=0, ub=5, maximize=True,
                              want_duals=True)
    res = solver.solve(req)
    assert res.objective == pytest.approx(9.0)
    np.testing.assert_allclose(res.x, [5.0, 4.0])


def test_infeasible_status():
    req = solver.SolveRequest(c=[1.0], A=[[1.0]], sense=[">="], rhs=[5.0], lb=0, ub=1)
    assert solver.solve(req).status == "infeasible"


def test_mip_rounds_integers():
    # knapsack: max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5
    req = solver.SolveRequest(c=[5.0, 4.0, 3.0], A=[[2.0, 3.0, 1.0]], sense=["<="], rhs=[5.0], lb=0, ub=1,
                              integrality=[1, 1, 1], maximize=True)
    res = solver.solve(req)
    assert res.optimal
    np.testing.assert_array_equal(res.x, [1.0, 1.0, 0.0])
    assert res.objective == pytest.approx(9.0)


def test_duals_rejected_for_mip():
    with pytest.raises(ValueError):
        solver.SolveRequest(c=[1.0], A=[[1.0]], sense=["<="], rhs=[1.0], lb=0, ub=1, integrality=[1],
                            want_duals=True)


def test_bad_sense_and_shape():
    with pytest.raises(ValueError):
        solver.SolveRequest(c=[1.0], A=[[1.0]], sense=["=>"], rhs=[1.0], lb=0, ub=1)
    with pytest.raises(ValueError):
        solver.SolveRequest(c=[1.0], A=[[1.0]], sense=["<=", "<="], rhs=[1.0], lb=0, ub=1)


def test_unknown_backend():
    assert "highs" in solver.available_backends()
    with pytest.raises(solver.ConfigurationError):
        solver.solve(small_lp(), backend="does-not-exist")


def test_lp_text_roundtrip(tmp_path):
    req = small_lp(want_duals=False)
    path = tmp_path / "m.lp"
    solver.write_lp(req, path)
    back = solver.from_lp_string(path.read_text())
    assert solver.solve(back).objective == pytest.approx(solver.solve(req).objective)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.5, 10.0), min_size=3, max_size=3), st.floats(1.0, 20.0))
def test_strong_duality_on_random_lps(costs, demand):
    # min c.x s.t. sum x >= demand, 0 <= x <= 10
    n = len(costs)
    req = solver.SolveRequest(c=costs, A=np.ones((1, n)), sense=[">="], rhs=[demand], lb=0, ub=10.0,
                              want_duals=True)
    res = solver.solve(req)
    assert res.optimal
    dual_obj = res.duals @ req.rhs + np.minimum(res.reduced_costs, 0) @ req.ub
    assert dual_obj == pytest.approx(res.objective, rel=1e-7, abs=1e-7)
    assert res.diagnostics["primal_residual"] <= 1e-7
