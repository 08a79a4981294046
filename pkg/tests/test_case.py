import json

import numpy as np
import pytest

from robust_lmp import case as case_mod
from robust_lmp import synthetic

from .conftest import two_bus_doc


def test_bundled_case_shape(bundled_case):
    c = bundled_case
    assert c.horizon == 24
    assert c.n_buses == 5 and len(c.lines) == 6 and c.n_units == 4
    assert len(c.wind_farms) == 1 and c.wind_farms[0].capacity == 300.0
    assert all(u.p_min == 0.0 for u in c.units)
    assert np.all(c.wind_forecast() >= 0) and np.all(c.wind_forecast() <= 300.0)


def test_gsf_slack_column_zero_and_kcl(bundled_case):
    c = bundled_case
    assert np.allclose(c.gsf[:, c.slack_bus], 0.0)
    # flows from an injection balanced at the slack satisfy nodal balance
    rng = np.random.default_rng(0)
    inj = rng.normal(size=c.n_buses)
    inj[c.slack_bus] = -(inj.sum() - inj[c.slack_bus])
    flows = case_mod.line_flows(c, inj)
    net = np.zeros(c.n_buses)
    for l in c.lines:
        net[l.from_bus] -= flows[l.id]
        net[l.to_bus] += flows[l.id]
    np.testing.assert_allclose(net + inj, 0.0, atol=1e-9)


def test_gsf_two_bus_is_unit_transfer():
    c = case_mod.case_from_dict(two_bus_doc())
    # injecting at bus 2 (withdrawing at the slack) pushes flow against the b1 -> b2 direction
    np.testing.assert_allclose(c.gsf, [[0.0, -1.0]])


def test_dict_roundtrip(bundled_case):
    doc = case_mod.case_to_dict(bundled_case)
    back = case_mod.case_from_dict(json.loads(json.dumps(doc)))
    np.testing.assert_allclose(back.gsf, bundled_case.gsf)
    np.testing.assert_allclose(back.load_forecast(), bundled_case.load_forecast())
    assert [u.name for u in back.units] == [u.name for u in bundled_case.units]


def test_load_deviation_fraction(bundled_case):
    dev = bundled_case.load_deviation()
    fc = bundled_case.load_forecast()
    np.testing.assert_allclose(dev[0], 0.10 * fc[0])
    np.testing.assert_allclose(dev[2], 0.0)


@pytest.mark.parametrize("mutate, msg", [
    (lambda d: d["units"][0].update(bus="Z"), "unknown bus"),
    (lambda d: d["units"][0].pop("p_max"), "p_max"),
    (lambda d: d["loads"][0].update(forecast=[1.0, 2.0]), "hourly values"),
    (lambda d: d["units"][0].update(p_min=300.0), "p_min"),
])
def test_invalid_documents(mutate, msg):
    doc = synthetic.pjm5_case_dict(np.full(24, 100.0))
    mutate(doc)
    with pytest.raises(case_mod.CaseError, match=msg):
        case_mod.case_from_dict(doc)


def test_missing_case_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        case_mod.load_case(tmp_path / "none.json")


def test_history_roundtrip(tmp_path):
    f, a = synthetic.wind_history(40, seed=3)
    p = tmp_path / "h.csv"
    case_mod.write_history(p, f, a)
    h = case_mod.read_history(p)
    np.testing.assert_allclose(h["forecast"], f, atol=1e-6)
    np.testing.assert_allclose(h["actual"], a, atol=1e-6)
    assert h["hours"].size == 24 and h["days"].size == 40


def test_history_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        case_mod.read_history(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("day,hour,forecast_mw\n1,1,3.0\n")
    with pytest.raises(case_mod.CaseError, match="missing columns"):
        case_mod.read_history(bad)
    gap = tmp_path / "gap.csv"
    gap.write_text("day,hour,forecast_mw,actual_mw\n1,1,1,1\n1,2,1,1\n2,1,1,1\n")
    with pytest.raises(case_mod.CaseError, match="every hour"):
        case_mod.read_history(gap)
