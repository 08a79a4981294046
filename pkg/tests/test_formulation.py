import numpy as np
import pytest

from robust_lmp import case as case_mod
from robust_lmp import formulation as F
from robust_lmp import synthetic


@pytest.fixture(scope="module")
def toy_case():
    return case_mod.case_from_dict(synthetic.ramp_toy_case_dict(), name="toy")


def test_variant_flags():
    assert F.ModelVariant.named("model1") == F.ModelVariant("model1", True, True, True)
    m2 = F.ModelVariant.named("model2")
    assert not m2.include_overall_ramp and not m2.include_reserve_cost and m2.include_ramping
    m3 = F.ModelVariant.named("model3")
    assert not m3.include_ramping and m3.include_reserve_cost
    with pytest.raises(F.FormulationError):
        F.ModelVariant.named("model9")


def test_model3_is_model1_without_ramp_rows(bundled_case):
    s1 = F.build_ruc(bundled_case, "model1")
    s3 = F.build_ruc(bundled_case, "model3")
    removed = set(s1.rows.names) - set(s3.rows.names)
    ramp_rows = {n for n, f in zip(s1.rows.names, s1.rows.family) if f in F.RAMP_FAMILIES}
    assert removed == ramp_rows
    assert set(s3.rows.names) <= set(s1.rows.names)
    np.testing.assert_array_equal(s1.cy, s3.cy)


def test_model2_drops_aggregate_ramps_and_reserve_cost(bundled_case):
    s1 = F.build_ruc(bundled_case, "model1")
    s2 = F.build_ruc(bundled_case, "model2")
    removed = {s1.rows.family[k] for k, n in enumerate(s1.rows.names) if n not in set(s2.rows.names)}
    assert removed == {"ramp_agg_up", "ramp_agg_dn"}
    cat = s2.catalog
    NT = cat.n_units * cat.horizon
    assert np.all(s2.cy[NT:] == 0) and np.all(s1.cy[NT:] > 0)


def test_dimensions_and_names(bundled_case):
    s = F.build_ruc(bundled_case)
    cat = s.catalog
    T, N = bundled_case.horizon, bundled_case.n_units
    assert cat.nx == 3 * N * T and cat.ny == 2 * N * T
    assert cat.nd == T * (len(bundled_case.wind_farms) + len(bundled_case.loads))
    assert s.G.shape == (s.n_rows, cat.nx) and s.E.shape == (s.n_rows, cat.ny) and s.M.shape == (s.n_rows, cat.nd)
    assert len(set(s.rows.names)) == s.n_rows
    assert "ramp_agg_up_i2_t18" in s.rows.names and "bal_r_t7" in s.rows.names


def test_commitment_vector_logic(toy_case):
    s = F.build_ruc(toy_case)
    on = np.array([[1, 1, 1], [0, 1, 0]])
    x = F.commitment_vector(s, on)
    assert F.commitment_violations(s, x) == []
    I, u, v = s.catalog.split_x(x)
    np.testing.assert_array_equal(u[1], [0, 1, 0])
    np.testing.assert_array_equal(v[1], [1, 0, 1])  # peaker starts on, so it stops at hour 1


def test_commitment_violations_detected(toy_case):
    s = F.build_ruc(toy_case)
    x = F.commitment_vector(s, np.ones((2, 3)))
    bad = x.copy()
    bad[s.catalog.start(0, 1)] = 1.0  # start-up while already on
    assert F.commitment_violations(s, bad)


def _toy_point(toy_case, P, D):
    s = F.build_ruc(toy_case, "model1")
    x = F.commitment_vector(s, np.ones((2, 3)))
    y = np.concatenate([np.asarray(P, float).ravel(), np.asarray(D, float).ravel()])
    return s, x, y


def test_aggregate_ramp_counterexample(toy_case):
    # basic output and redispatch each move within the 30 MW ramp, their sum does not
    P = [[50.0, 80.0, 110.0], [10.0, 40.0, 40.0]]
    D = [[-20.0, 20.0, 0.0], [20.0, -20.0, 0.0]]
    s1, x, y = _toy_point(toy_case, P, D)
    s2 = F.build_ruc(toy_case, "model2")
    v1 = F.row_violations(s1, x, y)
    v2 = F.row_violations(s2, x, y)
    assert v1 and all(n.startswith("ramp_agg") for n in v1)
    assert v1["ramp_agg_up_i0_t2"] == pytest.approx(40.0)  # 30 -> 100 against a 30 MW limit
    assert v2 == {}


def test_row_violations_family_filter(toy_case):
    s, x, y = _toy_point(toy_case, [[50.0, 80.0, 110.0], [10.0, 40.0, 40.0]], np.zeros((2, 3)))
    assert F.row_violations(s, x, y, families=F.RAMP_FAMILIES) == {}
    assert F.row_violations(s, x, y * 3, families=["pmax_b"])


def test_objective_parts(toy_case):
    s, x, y = _toy_point(toy_case, [[60.0, 90.0, 120.0], [0.0, 30.0, 30.0]], [[1.0, 0, 0], [0, 0, 2.0]])
    p = F.objective_parts(s, x, y)
    assert p["energy"] == pytest.approx(10 * 270 + 30 * 60)
    assert p["reserve"] == pytest.approx(10 * 1 + 30 * 2)
    assert p["total"] == pytest.approx(p["commitment"] + p["energy"] + p["reserve"])
    s2 = F.build_ruc(toy_case, "model2")
    p2 = F.objective_parts(s2, x, y)
    assert p2["reserve"] == 0.0 and p2["reserve_at_true_cost"] == pytest.approx(70.0)


def test_balance_rows_depend_on_uncertainty(bundled_case):
    s = F.build_ruc(bundled_case)
    cat = s.catalog
    delta = np.zeros(cat.nd)
    delta[cat.wind(0, 5)] = -10.0
    r = s.rhs(delta) - s.rhs()
    k = s.rows.names.index("bal_r_t6")
    assert r[k] == pytest.approx(10.0)
    assert r[s.rows.names.index("bal_b_t6")] == 0.0

