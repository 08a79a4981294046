import math

import numpy as np
import pytest

from robust_lmp import ccg, formulation, oracle
from robust_lmp.case import case_from_dict


def build(seed, T=3, wind_budget=2):
    doc, wset = oracle.tiny_instance(seed, horizon=T, wind_budget=wind_budget)
    case = case_from_dict(doc)
    system = formulation.build_ruc(case)
    return case, system, ccg.UncertaintyModel.for_case(case, [wset], load_budget=1)


def test_tiny_instance_is_deterministic():
    a, sa = oracle.tiny_instance(5)
    b, sb = oracle.tiny_instance(5)
    assert a == b
    np.testing.assert_array_equal(sa.forecast, sb.forecast)
    assert sa.contains(sa.forecast)[0]


@pytest.mark.parametrize("seed, wind_budget", [(1, 2), (2, 1)])
def test_enumeration_agrees_with_decomposition(seed, wind_budget):
    case, system, unc = build(seed, wind_budget=wind_budget)
    ref = oracle.enumerate_rscuc(system, unc)
    sol = ccg.solve_rscuc(system, unc, epsilon=1e-7 * abs(ref.objective), mip_gap=1e-9)
    assert sol.objective == pytest.approx(ref.objective, rel=1e-6)
    assert ref.commitments_checked > 1 and ref.lp_solves > 0


def test_enumeration_value_dominates_sampled_points():
    case, system, unc = build(4, wind_budget=2)
    ref = oracle.enumerate_rscuc(system, unc)
    x = ref.commitment
    rng = np.random.default_rng(0)
    for _ in range(10):
        d, _ = unc.maximize_linear(rng.normal(size=unc.size))
        r = ccg.evaluate_inner(system, x, d)
        if r.feasible:
            assert system.cx @ x + r.value <= ref.objective + 1e-6


def test_enumeration_refuses_large_instances(bundled_case):
    system = formulation.build_ruc(bundled_case)
    unc = ccg.UncertaintyModel.for_case(bundled_case, None, load_budget=1)
    with pytest.raises(oracle.OracleError):
        oracle.enumerate_rscuc(system, unc)


def test_suite_rows_shape():
    rows = oracle.equivalence_suite(instances=((1, 3, 2),))
    assert len(rows) == 1
    r = rows[0]
    assert r.feasible and math.isfinite(r.ccg) and r.rel_error <= 1e-6
