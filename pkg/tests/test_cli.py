import csv
import json

import pytest

from robust_lmp import cli, synthetic


@pytest.fixture()
def toy_case_file(tmp_path):
    p = tmp_path / "toy.json"
    p.write_text(json.dumps(synthetic.ramp_toy_case_dict()))
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_requires_subcommand():
    with pytest.raises(SystemExit) as e:
        cli.main([])
    assert e.value.code == 2


def test_defaults_point_at_bundled_data():
    cfg = cli.RunConfig()
    assert cfg.case.endswith("pjm5.json") and cfg.history.endswith("wind_history.csv")
    assert cfg.budget_wind == 0 and cfg.budget_load == 24 and cfg.alpha == 0.9


def test_config_file_layers(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"solver": {"backend": "highs"}, "alpha": 0.8, "budget-load": 12}))
    args = cli.build_parser().parse_args(["solve", "--config", str(p), "--alpha", "0.85"])
    cfg = cli.resolve_config(args)
    assert cfg.solver_backend == "highs" and cfg.budget_load == 12
    assert cfg.alpha == 0.85  # flags win over the file
    p.write_text(json.dumps({"solver.backend": "highs"}))
    assert cli.load_config_file(p) == {"solver_backend": "highs"}


@pytest.mark.parametrize("doc", ['{"nonsense": 1}', "{not json", '{"alpha": 1.5}', '{"variant": "model7"}'])
def test_bad_config_is_input_error(tmp_path, doc, capsys):
    p = tmp_path / "c.json"
    p.write_text(doc)
    assert run("fit", "--config", p, "-o", tmp_path / "o") == cli.EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_missing_inputs_are_input_errors(tmp_path):
    assert run("solve", "--case", tmp_path / "nope.json", "-o", tmp_path / "o") == cli.EXIT_INPUT
    assert run("fit", "--history", tmp_path / "nope.csv", "-o", tmp_path / "o") == cli.EXIT_INPUT
    assert run("fit", "--config", tmp_path / "nope.json") == cli.EXIT_INPUT


def test_unknown_backend_is_solver_error(tmp_path, toy_case_file):
    code = run("solve", "--case", toy_case_file, "--solver-backend", "nope", "-o", tmp_path / "o", "--no-plots")
    assert code == cli.EXIT_SOLVER


def test_solve_toy_outputs_and_determinism(tmp_path, toy_case_file):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run("solve", "--case", toy_case_file, "--budget-load", 0, "-o", out) == cli.EXIT_OK
        outs.append(out)
    a = outs[0]
    for f in ("ccg_trace.csv", "worst_case.json", "dispatch.csv", "prices.csv", "settlement.csv",
              "summary.json", "price_report.txt", "manifest.json", "prices.png", "ccg_trace.png"):
        assert (a / f).exists(), f
    summary = json.loads((a / "summary.json").read_text())
    assert summary["converged"]
    assert summary["checks"]["kkt_max_residual"] <= 1e-5
    prices = list(csv.DictReader(open(a / "prices.csv")))
    assert len(prices) == 3
    m1, m2 = (json.loads((o / "manifest.json").read_text()) for o in outs)
    assert m1["config"]["seed"] == 0 and m1["command"] == "solve"
    stable = {k: v for k, v in m1["outputs"].items() if k not in m1["volatile"]}
    assert stable and all(m2["outputs"][k] == v for k, v in stable.items())


def test_non_convergence_exit_code(tmp_path):
    out = tmp_path / "o"
    code = run("solve", "--od", 6, "--shrinkage", 0.01, "--max-iter", 1, "-o", out, "--no-plots")
    assert code == cli.EXIT_NOT_CONVERGED
    assert json.loads((out / "summary.json").read_text())["converged"] is False
    assert (out / "ccg_trace.csv").exists() and (out / "manifest.json").exists()


def test_fit_then_build_sets(tmp_path):
    fit_dir = tmp_path / "fit"
    assert run("fit", "--shrinkage", 0.01, "-o", fit_dir) == cli.EXIT_OK
    model = fit_dir / "copula_model.json"
    assert model.exists()
    box_dir = tmp_path / "box"
    assert run("build-set", "--method", "box", "-o", box_dir, "--no-plots") == cli.EXIT_OK
    assert json.loads((box_dir / "wind_set_W1.json").read_text())["kind"] == "box"
    im_dir = tmp_path / "imeus"
    code = run("build-set", "--model", model, "--shrinkage", 0.01, "--od", 6, "--sweep-days", 10,
               "--n-samples", 300, "-o", im_dir, "--no-plots")
    assert code == cli.EXIT_OK
    rows = list(csv.DictReader(open(im_dir / "method_comparison.csv")))
    assert [r["method"] for r in rows] == ["imeus", "ellipsoid", "box"]
    # a saved set feeds the solve step
    doc = json.loads((im_dir / "wind_set_W1.json").read_text())
    assert doc["kind"] == "imeus" and len(doc["subsets"]) == 19


def test_wind_set_count_checked(tmp_path):
    code = run("solve", "--wind-set", f"{tmp_path / 'a.json'},{tmp_path / 'b.json'}", "-o", tmp_path / "o")
    assert code == cli.EXIT_INPUT


def test_compare_on_toy(tmp_path, toy_case_file):
    out = tmp_path / "cmp"
    code = run("compare", "--case", toy_case_file, "--budget-load", 0, "--jobs", 1, "-o", out, "--no-plots")
    assert code == cli.EXIT_OK
    rows = list(csv.DictReader(open(out / "compare_costs.csv")))
    assert [r["variant"] for r in rows] == ["model1", "model2", "model3"]
    assert all(r["status"] == "converged" for r in rows)
    shared = list(csv.DictReader(open(out / "shared_scenario.csv")))
    assert len(shared) == 3
    assert (out / "unit_profits.csv").exists() and (out / "market_totals.csv").exists()
