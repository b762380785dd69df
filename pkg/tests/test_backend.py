import math
import os

import numpy as np
import pytest

import backend
from utils.errors import CalibrationError, DomainError, ScenarioError
from utils.marginal_fit import Interval
from utils.report import write_samples_csv
from utils.scenarios import find_scenario, list_scenarios

golden = pytest.mark.skipif(os.environ.get("QUICKCOUNT_GOLDEN") != "1", reason="set QUICKCOUNT_GOLDEN=1")


def test_win_probability_pipeline():
    run = backend.win_probability(
        Interval(0.32, 0.38, 0.95), Interval(0.265, 0.325, 0.95), "frank", -0.5, n=200_000, seed=20060702
    )
    assert run.overlap.value == "overlap"
    assert run.result.win_probability == pytest.approx(0.9854, abs=0.003)
    out = run.as_dict()
    assert out["copula"]["family"] == "frank"
    assert out["copula_rho"] == pytest.approx(-0.5, abs=1e-4)
    assert abs(out["leader_fit"]["high_residual"]) <= 1e-6


def test_win_probability_rejects_unreachable_rho():
    with pytest.raises(CalibrationError):
        backend.win_probability(Interval(0.32, 0.38, 0.95), Interval(0.265, 0.325, 0.95), "gaussian", 1.5, n=10)


def test_fits_are_cached():
    iv = Interval(0.3577, 0.3640, 0.99)
    assert backend.cached_fit(iv) is backend.cached_fit(iv)


def test_check_comparisons():
    within = backend.Check({}, "win_probability", 0.981, 0.983, 0.003, "published: x")
    at_least = backend.Check({}, "win_probability", 0.99995, 0.9999, 0.0, "published: x", lower_bound=True)
    short = backend.Check({}, "win_probability", 0.9997, 0.9999, 0.0, "published: x", lower_bound=True)
    assert within.passed and at_least.passed and not short.passed
    assert within.as_dict()["comparison"] == "within"
    assert at_least.as_dict()["comparison"] == "at_least"


def test_diagnostics_scenario():
    report = backend.run_scenario(find_scenario("mx2006-hausdorff"))
    assert report.passed, [c.as_dict() for c in report.failures]
    assert report.n is None and report.seed is None
    assert len(report.checks) == 15
    assert any("robusto" in note and "1.0200" in note for note in report.notes)
    matrix = [row for row in report.rows if "matrix" in row]
    assert matrix[0]["values"][0][0] is None


def test_countermonotone_scenario_smoke():
    report = backend.run_scenario(find_scenario("contraejemplo1"), tier="smoke")
    assert report.passed, [c.as_dict() for c in report.failures]
    first = report.rows[0]
    assert first["win_probability"] == pytest.approx(0.9999, abs=1e-12)
    # F_X(1/2) = gamma > gamma/2, so X's interval straddles 1/2 and Y = 1 - X overlaps it
    assert {row["overlap"] for row in report.rows} == {"overlap"}


def test_g_delta_scenario_smoke():
    report = backend.run_scenario(find_scenario("contraejemplo2"), tier="smoke")
    assert report.passed, [c.as_dict() for c in report.failures]
    by_delta = {row["delta"]: row for row in report.rows}
    assert by_delta[0.6]["gamma_star"] == 0.0
    assert by_delta[0.6]["mc_win_probability"] == 1.0


def test_overlap_variants_smoke():
    report = backend.run_scenario(find_scenario("c4-traslape"), tier="smoke", seed=1)
    assert report.passed, [c.as_dict() for c in report.failures]
    wins = [row["win_probability"] for row in report.rows]
    assert abs(wins[0] - wins[1]) < 0.002
    assert any("across variants" in note for note in report.notes)


def test_same_seed_same_report():
    s = find_scenario("contraejemplo2")
    a = backend.run_scenario(s, seed=99).as_dict()
    b = backend.run_scenario(s, seed=99).as_dict()
    assert a == b


def test_seed_defaults_from_environment(monkeypatch):
    monkeypatch.setenv("QUICKCOUNT_SEED", "424242")
    report = backend.run_scenario(find_scenario("contraejemplo2"))
    assert report.seed == 424242


def test_errors_carry_the_scenario_point(monkeypatch):
    def broken(*args, **kwargs):
        raise DomainError("bad margin")

    monkeypatch.setattr(backend, "simulate_g_delta", broken)
    with pytest.raises(ScenarioError, match=r"scenario contraejemplo2 \(gamma=0.0001, delta=0.3\): bad margin") as err:
        backend.run_scenario(find_scenario("contraejemplo2"))
    assert isinstance(err.value.__cause__, DomainError)


def test_sample_dumps(tmp_path):
    s = find_scenario("c4-traslape")
    report = backend.run_scenario(s, tier="smoke", dump_count=5)
    written = backend.write_sample_dumps(report, str(tmp_path / "pairs.csv"), write_samples_csv)
    assert len(written) == 2
    for path in written:
        lines = open(path, encoding="utf-8").read().splitlines()
        assert lines[0] == "x,y"
        assert len(lines) == 6
        x, y = lines[1].split(",")
        assert len(x.split(".")[1]) == 6 and len(y.split(".")[1]) == 6


def test_single_point_dump_uses_the_given_path(tmp_path):
    report = backend.ScenarioReport("one", "", "winprob", "smoke", 1, 10, samples={"rho=0": np.array([[0.3, 0.2]])})
    path = str(tmp_path / "one.csv")
    assert backend.write_sample_dumps(report, path, write_samples_csv) == [path]
    assert open(path, encoding="utf-8").read() == "x,y\n0.300000,0.200000\n"


@pytest.mark.parametrize("scenario_id", ["contraejemplo3", "c4-traslape"])
def test_small_golden_scenarios_run_by_default(scenario_id):
    report = backend.run_scenario(find_scenario(scenario_id), tier="golden")
    assert report.n == 1_000_000
    assert report.passed, [c.as_dict() for c in report.failures]


@pytest.mark.parametrize("scenario_id", ["mx2006-bayesiano", "mx2006-clasico"])
def test_published_2006_values_at_smoke_size(scenario_id):
    report = backend.run_scenario(find_scenario(scenario_id), tier="smoke")
    assert report.checks
    for check in report.checks:
        p = check.expected
        slack = check.tolerance + 4 * math.sqrt(max(p * (1 - p), 1e-12) / report.n)
        if check.lower_bound:
            assert check.computed >= check.expected - slack, check.as_dict()
        else:
            assert check.deviation <= slack, check.as_dict()


@golden
@pytest.mark.golden
@pytest.mark.parametrize("scenario_id", [e.id for e in list_scenarios()])
def test_golden_tier(scenario_id):
    report = backend.run_scenario(find_scenario(scenario_id), tier="golden", workers=os.cpu_count() or 1)
    assert report.passed, [c.as_dict() for c in report.failures]
