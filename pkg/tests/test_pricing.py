import copy
import csv

import numpy as np
import pytest

from robust_lmp import formulation as F
from robust_lmp import pricing
from robust_lmp.case import case_from_dict

from .conftest import two_bus_doc

EPS = 1e-3


def congested_doc():
    # hour 1 congests only once the load deviation lands; hour 2 congests at forecast
    doc = two_bus_doc(line_cap=100.0, load=(95.0, 120.0))
    doc["loads"][0]["max_deviation"] = {"fraction": 0.1}
    return doc


def dispatch(doc, delta):
    system = F.build_ruc(case_from_dict(doc))
    return pricing.solve_rsced(system, np.ones((2, 2)), delta)


@pytest.fixture(scope="module")
def congested():
    doc = congested_doc()
    delta = np.array([9.5, 0.0])
    res = dispatch(doc, delta)
    return doc, delta, res, pricing.price_report(res)


@pytest.mark.parametrize("t", [0, 1])
def test_lmp_matches_finite_difference(congested, t):
    doc, delta, res, prices = congested
    d2 = copy.deepcopy(doc)
    d2["loads"][0]["forecast"][t] += EPS
    fd = (dispatch(d2, delta).objective - res.objective) / EPS
    assert prices.lmp[1, t] == pytest.approx(fd, abs=1e-5)


@pytest.mark.parametrize("t", [0, 1])
def test_ulmp_matches_finite_difference(congested, t):
    doc, delta, res, prices = congested
    d2 = delta.copy()
    d2[t] += EPS
    fd = (dispatch(doc, d2).objective - res.objective) / EPS
    assert prices.ulmp[1, t] == pytest.approx(fd, abs=1e-5)


def test_congestion_separates_prices(congested):
    _, _, res, prices = congested
    assert prices.congestion.all()
    np.testing.assert_allclose(prices.lmp[:, 1], [10.0, 25.0], atol=1e-9)
    assert prices.lmp[0, 0] == pytest.approx(10.0)


def test_settlement_reconciles_with_congestion_rent(congested):
    _, _, res, prices = congested
    rep = pricing.settle(prices, res)
    t = rep.totals()
    assert t["congestion_rent"] > 0
    assert rep.reconciliation_error() <= 1e-6 * max(1.0, t["load_payments"])


def test_kkt_and_complementary_slackness(congested):
    _, _, res, _ = congested
    assert pricing.kkt_crosscheck(res).ok
    assert pricing.complementary_slackness(res).max() <= 1e-6
    assert res.dual_objective == pytest.approx(res.objective, rel=1e-9, abs=1e-6)


def test_uncongested_prices_are_uniform():
    res = dispatch(two_bus_doc(line_cap=1000.0), np.zeros(2))
    prices = pricing.price_report(res)
    assert not prices.congestion.any()
    assert prices.uniform_spread() == (0.0, 0.0)
    np.testing.assert_allclose(prices.lmp, 10.0)


def test_zero_uncertainty_has_no_uncertainty_cash_flow():
    res = dispatch(two_bus_doc(line_cap=100.0), None)
    rep = pricing.settle(pricing.price_report(res), res)
    np.testing.assert_allclose(res.reserve, 0.0, atol=1e-9)
    assert rep.totals()["ulmp_cash_flow"] == pytest.approx(0.0, abs=1e-9)


def test_tie_break_does_not_change_cost_or_prices(congested):
    doc, delta, res, prices = congested
    system = F.build_ruc(case_from_dict(doc))
    raw = pricing.solve_rsced(system, np.ones((2, 2)), delta, tie_break=False)
    assert raw.objective == pytest.approx(res.objective)
    np.testing.assert_allclose(pricing.price_report(raw).lmp, prices.lmp)
    assert np.abs(res.reserve).sum() <= np.abs(raw.reserve).sum() + 1e-9


def test_unit_side_prices_equal_bus_prices(pjm5_solved):
    system, _, _, res = pjm5_solved
    rep = pricing.kkt_crosscheck(res)
    assert rep.ok, rep.flagged[:5]
    assert rep.max_residual <= 1e-5


def test_ramp_toy_prices(ramp_toy):
    case, system, res = ramp_toy
    prices = pricing.price_report(res)
    np.testing.assert_allclose(prices.lmp[0], [-30.0, 30.0, 30.0], atol=1e-7)
    rep = pricing.settle(prices, res)
    assert rep.unit_profit[0] == pytest.approx(1800.0)


def test_infeasible_dispatch_reports_rows():
    doc = two_bus_doc(line_cap=10.0, load=(80.0, 120.0))
    doc["units"][1].update(p_max=20.0, initial_output=20.0)  # local unit too small, line too weak
    system = F.build_ruc(case_from_dict(doc))
    with pytest.raises(pricing.PricingError, match="infeasible"):
        pricing.solve_rsced(system, np.ones((2, 2)))


def test_variant_comparison_on_toy(ramp_toy):
    case, system, res = ramp_toy
    out = pricing.variant_comparison(case, res.commitment, None)
    assert [o.variant for o in out] == ["model1", "model2", "model3"]
    assert out[0].violations == {}
    assert out[2].energy_cost <= out[0].energy_cost + 1e-9  # fewer rows, never dearer


def test_writers(tmp_path, congested):
    doc, _, res, prices = congested
    case = res.system.case
    pricing.write_prices_csv(prices, case, tmp_path / "p.csv")
    rows = list(csv.DictReader(open(tmp_path / "p.csv")))
    assert len(rows) == case.n_buses * case.horizon
    pricing.write_settlement_csv(pricing.settle(prices, res), tmp_path / "s.csv")
    pricing.write_dispatch_csv(res, tmp_path / "d.csv")
    assert (tmp_path / "s.csv").stat().st_size > 0 and (tmp_path / "d.csv").stat().st_size > 0
    text = pricing.price_text_report(prices, res)
    assert "LMP" in text
