import functools
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from utils import settings
from utils.beta_dist import beta_with_cdf_at_half
from utils.copulas import CopulaSpec, calibrate_to_spearman, spearman_rho
from utils.errors import QuickCountError, ScenarioError
from utils.intervals_diag import (
    DEFAULT_MIN_DISTANCE,
    IntervalPair,
    Overlap,
    classify_overlap,
    diagnose,
    split_distance_matrix,
)
from utils.joint_engine import (
    DEFAULT_MARGIN,
    GDeltaCoupling,
    JointModel,
    SimulationResult,
    simulate,
    simulate_countermonotone,
    simulate_g_delta,
    win_prob_countermonotone,
)
from utils.marginal_fit import FitReport, Interval, fit_marginal
from utils.scenarios import Scenario

logger = logging.getLogger(__name__)

# Pairs kept for scatter plots.
DEFAULT_DUMP_COUNT = 30000

# Analytic and simulated win probabilities must agree within this many standard errors.
AGREEMENT_SIGMAS = 4.0


@functools.lru_cache(maxsize=256)
def cached_fit(iv: Interval) -> FitReport:
    return fit_marginal(iv)


@dataclass(frozen=True)
class WinProbRun:
    """One pass of the pipeline: two fitted marginals, a calibrated copula, a simulation."""

    leader_fit: FitReport
    runner_up_fit: FitReport
    target_rho: float
    copula: CopulaSpec
    result: SimulationResult
    overlap: Overlap

    def as_dict(self) -> dict:
        return {
            "leader_fit": self.leader_fit.as_dict(),
            "runner_up_fit": self.runner_up_fit.as_dict(),
            "target_rho": self.target_rho,
            "copula": self.copula.as_dict(),
            "copula_rho": spearman_rho(self.copula),
            "overlap": self.overlap.value,
            "simulation": self.result.as_dict(),
        }


def build_model(leader_fit: FitReport, runner_up_fit: FitReport, copula: CopulaSpec) -> JointModel:
    return JointModel(
        leader=leader_fit.marginal,
        runner_up=runner_up_fit.marginal,
        copula=copula,
        leader_interval=leader_fit.interval,
        runner_up_interval=runner_up_fit.interval,
    )


def win_probability(
    leader: Interval,
    runner_up: Interval,
    family,
    rho: float,
    n: int,
    seed: int | None = None,
    margin_threshold: float = DEFAULT_MARGIN,
    workers: int | None = None,
    keep_samples: int = 0,
) -> WinProbRun:
    """
    Input 1: the leader's and the runner-up's published intervals.
    Input 2: a copula family and a Spearman rho for their dependence.
    Fit both marginals, calibrate the copula, simulate, and report alongside the
    overlap classification of the two intervals.
    """
    leader_fit = cached_fit(leader)
    runner_up_fit = cached_fit(runner_up)
    copula = calibrate_to_spearman(family, rho)
    model = build_model(leader_fit, runner_up_fit, copula)
    result = simulate(model, n, seed=seed, margin_threshold=margin_threshold, workers=workers, keep_samples=keep_samples)
    return WinProbRun(
        leader_fit=leader_fit,
        runner_up_fit=runner_up_fit,
        target_rho=float(rho),
        copula=copula,
        result=result,
        overlap=classify_overlap(IntervalPair(leader, runner_up)),
    )


# --- scenario runner ----------------------------------------------------------------


@dataclass
class Check:
    """One expected value compared with what was computed."""

    point: dict
    quantity: str
    computed: float
    expected: float
    tolerance: float
    provenance: str
    lower_bound: bool = False

    @property
    def deviation(self) -> float:
        return abs(self.computed - self.expected)

    @property
    def passed(self) -> bool:
        if self.lower_bound:
            return self.computed >= self.expected - self.tolerance
        return self.deviation <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "point": self.point,
            "quantity": self.quantity,
            "computed": self.computed,
            "expected": self.expected,
            "comparison": "at_least" if self.lower_bound else "within",
            "tolerance": self.tolerance,
            "deviation": self.deviation,
            "passed": self.passed,
            "provenance": self.provenance,
        }


@dataclass
class ScenarioReport:
    scenario_id: str
    description: str
    kind: str
    tier: str
    seed: int | None
    n: int | None
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    annotations: dict | None = None
    samples: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario_id,
            "description": self.description,
            "kind": self.kind,
            "tier": self.tier,
            "seed": self.seed,
            "n": self.n,
            "rows": self.rows,
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
            "notes": self.notes,
            "annotations": self.annotations,
        }


def _point_failed(exc: QuickCountError, s: Scenario, point: dict) -> ScenarioError:
    return ScenarioError(f"scenario {s.id} ({_point_label(point)}): {exc}")


def _point_label(point: dict) -> str:
    parts = []
    for key, value in point.items():
        if value is None:
            continue
        parts.append(f"{key}={value:g}" if isinstance(value, float) else f"{key}={value}")
    return ", ".join(parts)


def _checks_for_point(s: Scenario, point: dict, computed: dict) -> list:
    """Compare every expected record pinned to this point against the computed values."""
    out = []
    for rec in s.expected_for(**point):
        tol = rec.get("tolerance", 0.0)
        if rec.get("win_probability") is not None:
            out.append(Check(point, "win_probability", computed["win_probability"], rec.get("win_probability"), tol, rec.provenance))
        if rec.get("win_at_least") is not None:
            out.append(Check(point, "win_probability", computed["win_probability"], rec.get("win_at_least"), tol, rec.provenance, lower_bound=True))
        if rec.get("margin_probability") is not None:
            out.append(
                Check(point, "margin_probability", computed["margin_probability"], rec.get("margin_probability"),
                      rec.get("margin_tolerance", tol), rec.provenance)
            )
    return out


def _run_winprob(s: Scenario, report: ScenarioReport, seed, n: int, workers, dump_count: int) -> None:
    margin = s.margin_threshold if s.margin_threshold is not None else DEFAULT_MARGIN
    for confidence in s.confidences():
        for variant in s.variant_list():
            label = variant.label if variant is not None else None
            leader = s.leader_interval(confidence)
            runner_up = s.runner_up_interval(confidence, variant)
            for rho in s.rho_grid:
                point = {"confidence": confidence, "variant": label, "rho": rho}
                try:
                    run = win_probability(leader, runner_up, s.copula_family, rho, n, seed=seed,
                                          margin_threshold=margin, workers=workers, keep_samples=dump_count)
                except QuickCountError as exc:
                    raise _point_failed(exc, s, point) from exc
                r = run.result
                row = {
                    **point,
                    "leader_interval": leader.as_dict(),
                    "runner_up_interval": runner_up.as_dict(),
                    "overlap": run.overlap.value,
                    "copula": run.copula.as_dict(),
                    "win_probability": r.win_probability,
                    "win_std_error": r.win_std_error,
                    "margin_probability": r.margin_probability,
                    "empirical_spearman": r.empirical_spearman,
                    "leader_coverage": r.leader_coverage,
                    "runner_up_coverage": r.runner_up_coverage,
                    "leader_shapes": run.leader_fit.marginal.params.as_dict(),
                    "runner_up_shapes": run.runner_up_fit.marginal.params.as_dict(),
                }
                report.rows.append(row)
                report.checks.extend(_checks_for_point(s, point, row))
                if r.samples is not None:
                    report.samples[_point_label(point)] = r.samples
    if s.variants and len(s.rho_grid) >= 1:
        for confidence in s.confidences():
            for rho in s.rho_grid:
                wins = [row["win_probability"] for row in report.rows if row["confidence"] == confidence and row["rho"] == rho]
                spread = max(wins) - min(wins)
                report.notes.append(
                    f"confidence {confidence:g}, rho {rho:g}: win probability differs by {spread:.4f} across variants "
                    f"({', '.join(v.label for v in s.variants)})"
                )


def _analytic_check(point: dict, mc: SimulationResult, analytic: float, quantity: str) -> Check:
    se = math.sqrt(analytic * (1.0 - analytic) / mc.n)
    return Check(point, quantity, mc.win_probability, analytic, AGREEMENT_SIGMAS * se,
                 f"derived: Monte Carlo within {AGREEMENT_SIGMAS:g} standard errors of the closed form")


def _run_countermonotone(s: Scenario, report: ScenarioReport, seed, n: int, workers) -> None:
    for gamma in s.gamma_grid:
        point = {"gamma": gamma}
        x = beta_with_cdf_at_half(gamma, s.beta_shape or 2.0)
        analytic = win_prob_countermonotone(x)
        try:
            mc = simulate_countermonotone(x, n, seed=seed, workers=workers)
        except QuickCountError as exc:
            raise _point_failed(exc, s, point) from exc
        # Y = 1 - X, so Y's interval mirrors X's and the two overlap once X's straddles 1/2
        lo, hi = x.quantile(gamma / 2.0), x.quantile(1.0 - gamma / 2.0)
        x_iv = Interval(lo, hi, 1.0 - gamma)
        y_iv = Interval(1.0 - hi, 1.0 - lo, 1.0 - gamma)
        row = {
            **point,
            "x_shapes": x.params.as_dict(),
            "x_interval": x_iv.as_dict(),
            "y_interval": y_iv.as_dict(),
            "overlap": classify_overlap(IntervalPair(x_iv, y_iv)).value,
            "win_probability": analytic,
            "mc_win_probability": mc.win_probability,
            "mc_std_error": mc.win_std_error,
        }
        report.rows.append(row)
        report.checks.extend(_checks_for_point(s, point, row))
        report.checks.append(_analytic_check(point, mc, analytic, "mc_win_probability"))


def _run_g_delta(s: Scenario, report: ScenarioReport, seed, n: int, workers) -> None:
    for gamma in s.gamma_grid:
        x = beta_with_cdf_at_half(gamma, s.beta_shape or 2.0)
        for delta in s.delta_grid:
            point = {"gamma": gamma, "delta": delta}
            coupling = GDeltaCoupling(delta, x)
            analytic = coupling.win_probability()
            try:
                mc = simulate_g_delta(coupling, n, seed=seed, workers=workers)
            except QuickCountError as exc:
                raise _point_failed(exc, s, point) from exc
            row = {
                **point,
                "x_shapes": x.params.as_dict(),
                "gamma_star": coupling.gamma_star(),
                "win_probability": analytic,
                "mc_win_probability": mc.win_probability,
                "mc_std_error": mc.win_std_error,
            }
            report.rows.append(row)
            report.checks.extend(_checks_for_point(s, point, row))
            report.checks.append(_analytic_check(point, mc, analytic, "mc_win_probability"))


_METRIC_FIELDS = {"hausdorff": "hausdorff", "lower_endpoint": "lower_endpoint", "midpoint": "midpoint"}


def _run_diagnostics(s: Scenario, report: ScenarioReport) -> None:
    k = s.scale
    min_distance = s.margin_threshold if s.margin_threshold is not None else DEFAULT_MIN_DISTANCE
    names = [m.name for m in s.methods]
    for m in s.methods:
        pair = IntervalPair(Interval(*m.leader, 0.5), Interval(*m.runner_up, 0.5))
        d = diagnose(pair, min_distance)
        row = {
            "method": m.name,
            "overlap": d.overlap.value,
            "hausdorff": d.hausdorff * k,
            "lower_endpoint": d.lower_endpoint * k,
            "upper_endpoint": d.upper_endpoint * k,
            "midpoint": d.midpoint * k,
            "hausdorff_discrepancy": d.discrepancy,
            "separated": {v.metric.value: v.separated for v in d.verdicts},
        }
        report.rows.append(row)
        if d.discrepancy:
            report.notes.append(
                f"{m.name}: the Hausdorff formula max(|a1-a2|, |b1-b2|) gives {d.hausdorff * k:.4f} "
                f"while the lower-endpoint difference |a1-a2| is {d.lower_endpoint * k:.4f}"
            )
        for rec in s.expected:
            if rec.get("method") == m.name and rec.get("row") is None:
                metric = rec.get("metric")
                if metric not in _METRIC_FIELDS:
                    raise ScenarioError(f"unknown metric {metric!r} in expected record", path=s.path, field="expected")
                report.checks.append(Check({"method": m.name}, metric, row[metric], rec.get("value"), rec.get("tolerance", 0.0), rec.provenance))

    matrix_records = [rec for rec in s.expected if rec.get("row") is not None]
    matrices = {}
    for rec in matrix_records:
        metric = rec.get("metric", "lower_endpoint")
        if metric not in matrices:
            leaders = [Interval(*m.leader, 0.5) for m in s.methods]
            runners = [Interval(*m.runner_up, 0.5) for m in s.methods]
            matrices[metric] = split_distance_matrix(leaders, runners, metric) * k
        try:
            i, j = names.index(rec.get("row")), names.index(rec.get("column"))
        except ValueError:
            raise ScenarioError(f"matrix record names an unknown method: {rec.get('row')!r}/{rec.get('column')!r}",
                                path=s.path, field="expected") from None
        report.checks.append(
            Check({"row": rec.get("row"), "column": rec.get("column")}, f"{metric}_matrix",
                  float(matrices[metric][i, j]), rec.get("value"), rec.get("tolerance", 0.0), rec.provenance)
        )
    for metric, mat in matrices.items():
        report.rows.append({"matrix": metric, "methods": names, "values": [[None if np.isnan(v) else float(v) for v in r] for r in mat]})


def run_scenario(
    s: Scenario,
    seed: int | None = None,
    tier: str = "smoke",
    workers: int | None = None,
    dump_count: int = 0,
) -> ScenarioReport:
    """Run every point of the scenario and compare with its expected records.

    The same seed drives every simulated point, so points differ only by their
    parameters. `dump_count` keeps that many (x, y) pairs per point.
    """
    seed = settings.default_seed() if seed is None else seed
    n = s.samples_for(tier) if s.kind != "diagnostics" else None
    report = ScenarioReport(
        scenario_id=s.id,
        description=s.description,
        kind=s.kind,
        tier=tier,
        seed=seed if s.kind != "diagnostics" else None,
        n=n,
        annotations=s.annotations,
    )
    logger.info("running scenario %s (%s tier, n=%s)", s.id, tier, n)
    if s.kind == "winprob":
        _run_winprob(s, report, seed, n, workers, dump_count)
    elif s.kind == "countermonotone":
        _run_countermonotone(s, report, seed, n, workers)
    elif s.kind == "g_delta":
        _run_g_delta(s, report, seed, n, workers)
    else:
        _run_diagnostics(s, report)
    for check in report.failures:
        logger.warning("scenario %s: %s at %s = %.6g, expected %.6g (tolerance %.3g)",
                       s.id, check.quantity, _point_label(check.point), check.computed, check.expected, check.tolerance)
    return report


def write_sample_dumps(report: ScenarioReport, path: str, write) -> list:
    """Write each point's kept samples; several points get the point label in the file name."""
    if not report.samples:
        return []
    if len(report.samples) == 1:
        (pairs,) = report.samples.values()
        write(path, pairs)
        return [path]
    stem, ext = os.path.splitext(path)
    written = []
    for label, pairs in report.samples.items():
        slug = label.replace(", ", "_").replace("=", "").replace(" ", "")
        target = f"{stem}_{slug}{ext or '.csv'}"
        write(target, pairs)
        written.append(target)
    return written
