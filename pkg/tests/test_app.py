import json

import pytest
from click.testing import CliRunner

import backend
from app import cli
from utils.errors import FitError

BAYESIANO = ["--leader", "35.77,36.40", "--runner-up", "35.07,35.63", "--confidence", "0.99", "--copula", "gaussian"]

BROKEN_SCENARIO = """{
  "id": "off-by-a-lot",
  "description": "distance check with a wrong expected value",
  "kind": "diagnostics",
  "units": "percent",
  "methods": [
    {"name": "clasico", "leader_interval": {"low": 35.68, "high": 36.53}, "runner_up_interval": {"low": 34.97, "high": 35.70}}
  ],
  "expected": [
    {"method": "clasico", "metric": "midpoint", "value": 0.5, "tolerance": 0.001, "provenance": "derived: deliberately wrong"}
  ]
}
"""


@pytest.fixture
def runner():
    return CliRunner()


def test_fit_reports_matched_quantiles(runner):
    result = runner.invoke(cli, ["fit", "--interval", "32,38", "--confidence", "0.95", "--format", "json"])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.output)
    assert doc["kind"] == "fit" and doc["units"] == "percent"
    assert abs(doc["fit"]["low_residual"]) <= 1e-6
    assert abs(doc["fit"]["high_residual"]) <= 1e-6


def test_fit_text_and_csv(runner):
    text = runner.invoke(cli, ["fit", "--interval", "35.77,36.40", "--confidence", "99"])
    assert text.exit_code == 0, text.output
    assert "alpha" in text.output and "coverage" in text.output
    csv = runner.invoke(cli, ["fit", "--interval", "0.3577,0.3640", "--confidence", "0.99", "--format", "csv"])
    assert csv.exit_code == 0
    assert csv.output.splitlines()[0].startswith("low,high,confidence,alpha,beta")


def test_fit_rejects_reversed_interval(runner):
    result = runner.invoke(cli, ["fit", "--interval", "38,32", "--confidence", "0.95"])
    assert result.exit_code == 1
    assert "low must be < high" in result.output


@pytest.mark.parametrize(
    "args",
    [
        ["fit", "--interval", "32;38", "--confidence", "0.95"],
        ["fit", "--interval", "32,38", "--confidence", "0"],
        ["fit", "--interval", "32,38", "--confidence", "0.95", "--units", "fraction"],
        ["fit", "--interval", "32,38"],
        ["winprob", *BAYESIANO, "--rho", "1.5"],
        ["winprob", *BAYESIANO, "--seed", "lucky"],
        ["winprob", *BAYESIANO, "--margin", "0"],
        ["winprob", *BAYESIANO, "--copula", "clayton"],
        ["fit", "--interval", "55,60", "--confidence", "0.95"],
    ],
)
def test_usage_errors_exit_1(runner, args):
    assert runner.invoke(cli, args).exit_code == 1


def test_fit_failure_exits_2(runner, monkeypatch):
    def fail(iv):
        raise FitError("stuck", best_point=(2.0, 2.0), objective=1.0)

    monkeypatch.setattr(backend, "cached_fit", fail)
    result = runner.invoke(cli, ["fit", "--interval", "32,38", "--confidence", "0.95"])
    assert result.exit_code == 2
    assert "stuck" in result.output


def test_bad_environment_exits_1(runner):
    result = runner.invoke(cli, ["list"], env={"QUICKCOUNT_WORKERS": "many"})
    assert result.exit_code == 1
    assert "QUICKCOUNT_WORKERS" in result.output


def test_winprob_constructed_example(runner):
    result = runner.invoke(cli, [
        "winprob", "--leader", "32,38", "--runner-up", "26.5,32.5", "--confidence", "0.95",
        "--copula", "frank", "--rho", "-0.5", "--samples", "200000", "--format", "json",
    ])
    assert result.exit_code == 0, result.output
    run = json.loads(result.output)["run"]
    assert run["overlap"] == "overlap"
    assert run["simulation"]["win_probability"] == pytest.approx(0.9854, abs=0.003)


def test_winprob_text_shows_overlap_next_to_probability(runner):
    result = runner.invoke(cli, ["winprob", *BAYESIANO, "--rho", "-0.6", "--samples", "50000"])
    assert result.exit_code == 0, result.output
    assert "interval overlap    disjoint" in result.output
    assert "P(leader wins)" in result.output


def test_winprob_json_is_byte_identical(runner):
    args = ["winprob", *BAYESIANO, "--rho", "-0.6", "--samples", "20000", "--seed", "7", "--format", "json"]
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert first.exit_code == 0, first.output
    assert first.output == second.output


def test_winprob_json_ignores_worker_count(runner):
    args = ["winprob", *BAYESIANO, "--rho", "0.3", "--samples", "150000", "--format", "json"]
    serial = runner.invoke(cli, ["--workers", "1", *args])
    threaded = runner.invoke(cli, ["--workers", "4", *args])
    assert serial.exit_code == 0, serial.output
    assert serial.output == threaded.output


def test_winprob_random_seed(runner):
    result = runner.invoke(cli, ["winprob", *BAYESIANO, "--samples", "1000", "--seed", "random", "--format", "json"])
    assert result.exit_code == 0, result.output
    assert 0 <= json.loads(result.output)["run"]["simulation"]["seed"] < 2**64


def test_winprob_dumps_samples(runner, tmp_path):
    path = tmp_path / "pairs.csv"
    result = runner.invoke(cli, [
        "winprob", *BAYESIANO, "--samples", "1000", "--dump-samples", str(path), "--dump-count", "10",
    ])
    assert result.exit_code == 0, result.output
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "x,y" and len(lines) == 11


def test_hausdorff_classical_pair(runner):
    result = runner.invoke(cli, ["hausdorff", "--first", "35.68,36.53", "--second", "34.97,35.70", "--format", "json"])
    assert result.exit_code == 0, result.output
    diag = json.loads(result.output)["diagnostics"]
    assert diag["hausdorff"] * 100 == pytest.approx(0.83)
    assert diag["lower_endpoint_distance"] * 100 == pytest.approx(0.71)
    assert diag["midpoint_distance"] * 100 == pytest.approx(0.77)
    assert diag["hausdorff_discrepancy"] is True


def test_hausdorff_text_notes(runner):
    result = runner.invoke(cli, ["hausdorff", "--first", "35.68,36.53", "--second", "34.97,35.70"])
    assert result.exit_code == 0
    assert "disagree" in result.output
    assert "lower endpoints     0.7100" in result.output


def test_hausdorff_identical_pair(runner):
    result = runner.invoke(cli, ["hausdorff", "--first", "35,36", "--second", "35,36"])
    assert result.exit_code == 0
    assert "hausdorff           0.0000" in result.output
    assert "note: the intervals overlap" in result.output


def test_hausdorff_between_methods(runner):
    result = runner.invoke(cli, ["hausdorff", "--first", "34.24,36.38", "--second", "35.07,35.63", "--format", "csv"])
    assert result.exit_code == 0
    header, row = result.output.splitlines()
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["lower_endpoint_distance"]) == pytest.approx(0.83)


def test_list(runner):
    result = runner.invoke(cli, ["list"])
    assert result.exit_code == 0
    for scenario_id in ("contraejemplo1", "contraejemplo3", "c4-traslape", "mx2006-hausdorff"):
        assert scenario_id in result.output


def test_reproduce_unknown_scenario(runner):
    result = runner.invoke(cli, ["reproduce", "--scenario", "nonexistent"])
    assert result.exit_code == 1
    assert "mx2006-bayesiano" in result.output


def test_reproduce_diagnostics(runner):
    result = runner.invoke(cli, ["reproduce", "--scenario", "mx2006-hausdorff"])
    assert result.exit_code == 0, result.output
    assert "note: robusto" in result.output
    assert "all checks passed" in result.output


def test_reproduce_json(runner):
    result = runner.invoke(cli, ["reproduce", "--scenario", "contraejemplo2", "--format", "json"])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)["report"]
    assert report["passed"] is True
    assert report["tier"] == "smoke"


def test_golden_failure_exits_3(runner, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(BROKEN_SCENARIO, encoding="utf-8")
    golden = runner.invoke(cli, ["reproduce", "--scenario", str(path), "--tier", "golden"])
    assert golden.exit_code == 3
    assert "FAIL" in golden.output
    smoke = runner.invoke(cli, ["reproduce", "--scenario", str(path)])
    assert smoke.exit_code == 0


def test_numeric_failure_inside_a_scenario_exits_2(runner, monkeypatch):
    def fail(*args, **kwargs):
        raise FitError("stuck", best_point=(2.0, 2.0), objective=1.0)

    monkeypatch.setattr(backend, "win_probability", fail)
    result = runner.invoke(cli, ["reproduce", "--scenario", "c4-traslape"])
    assert result.exit_code == 2
    assert "scenario c4-traslape" in result.output and "stuck" in result.output
