"""Rendering of results as aligned text, JSON and CSV.

JSON is the machine-readable form: keys sorted, plain decimals, non-finite
numbers written as null, so identical runs give byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
import math
from enum import Enum
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = "1"
TEXT_DECIMALS = 4
SAMPLE_DECIMALS = 6


def plain(obj: Any) -> Any:
    """Convert numpy scalars, tuples, enums and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def to_json(kind: str, payload: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, **payload}
    return json.dumps(plain(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def fmt(value: Any, decimals: int = TEXT_DECIMALS) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{decimals}f}" if math.isfinite(value) else "n/a"
    return str(value)


def table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    cells = [[fmt(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells)
    return "\n".join(lines)


def to_csv(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow([plain(v) if not isinstance(v, (dict, list)) else json.dumps(plain(v), sort_keys=True) for v in row])
    return buf.getvalue()


def write_samples_csv(path: str, pairs: np.ndarray) -> None:
    """Header `x,y`, one fixed 6-decimal pair per line."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("x,y\n")
        for x, y in pairs:
            f.write(f"{x:.{SAMPLE_DECIMALS}f},{y:.{SAMPLE_DECIMALS}f}\n")


def _interval_text(iv: dict, scale: float) -> str:
    return f"[{fmt(iv['low'] * scale)}, {fmt(iv['high'] * scale)}]"


# --- fit ------------------------------------------------------------------------------------


def fit_lines(fit: dict, scale: float = 1.0) -> list[str]:
    iv = fit["interval"]
    return [
        f"interval            {_interval_text(iv, scale)} at confidence {fmt(iv['confidence'])}",
        f"alpha               {fit['alpha']:.6g}",
        f"beta                {fit['beta']:.6g}",
        f"achieved quantiles  {fit['achieved_low_quantile'] * scale:.8f}, {fit['achieved_high_quantile'] * scale:.8f}",
        f"residuals           {fit['low_residual']:.3e}, {fit['high_residual']:.3e}",
        f"coverage            {fit['coverage']:.8f}",
        f"objective           {fit['objective_value']:.3e} after {fit['iterations']} iterations"
        + (" (restarted)" if fit["restarted"] else ""),
    ]


FIT_CSV_HEADERS = (
    "low", "high", "confidence", "alpha", "beta", "achieved_low_quantile",
    "achieved_high_quantile", "objective_value", "iterations",
)


def fit_csv_row(fit: dict) -> list:
    iv = fit["interval"]
    return [iv["low"], iv["high"], iv["confidence"], fit["alpha"], fit["beta"],
            fit["achieved_low_quantile"], fit["achieved_high_quantile"], fit["objective_value"], fit["iterations"]]


# --- win probability --------------------------------------------------------------------


def winprob_lines(run: dict, scale: float = 1.0) -> list[str]:
    sim = run["simulation"]
    lead, runner = run["leader_fit"]["interval"], run["runner_up_fit"]["interval"]
    copula = run["copula"]
    theta = "" if copula["theta"] is None else f" (parameter {copula['theta']:.6g})"
    return [
        f"leader              {_interval_text(lead, scale)}  alpha={run['leader_fit']['alpha']:.6g} beta={run['leader_fit']['beta']:.6g}",
        f"runner-up           {_interval_text(runner, scale)}  alpha={run['runner_up_fit']['alpha']:.6g} beta={run['runner_up_fit']['beta']:.6g}",
        f"interval overlap    {run['overlap']}",
        f"copula              {copula['family']}{theta}, Spearman rho {fmt(run['target_rho'])}",
        f"samples             {sim['n']} (seed {sim['seed']})",
        f"P(leader wins)      {fmt(sim['win_probability'])} +/- {sim['win_std_error']:.2e}",
        f"P(|X - Y| < {sim['margin_threshold']:g})  {fmt(sim['margin_probability'])}",
        f"empirical Spearman  {fmt(sim['empirical_spearman'])}",
        f"interval coverage   {fmt(sim['leader_coverage'])} / {fmt(sim['runner_up_coverage'])}",
    ]


WINPROB_CSV_HEADERS = (
    "n", "seed", "copula", "theta", "target_rho", "overlap", "win_probability",
    "win_std_error", "margin_threshold", "margin_probability", "empirical_spearman",
)


def winprob_csv_row(run: dict) -> list:
    sim = run["simulation"]
    return [sim["n"], sim["seed"], run["copula"]["family"], run["copula"]["theta"], run["target_rho"], run["overlap"],
            sim["win_probability"], sim["win_std_error"], sim["margin_threshold"], sim["margin_probability"],
            sim["empirical_spearman"]]


# --- diagnostics -----------------------------------------------------------------------


def diagnostics_lines(diag: dict, scale: float = 1.0) -> list[str]:
    lines = [
        f"first               {_interval_text(diag['first'], scale)}",
        f"second              {_interval_text(diag['second'], scale)}",
        f"overlap             {diag['overlap']}",
        f"hausdorff           {fmt(diag['hausdorff'] * scale)}",
        f"lower endpoints     {fmt(diag['lower_endpoint_distance'] * scale)}",
        f"upper endpoints     {fmt(diag['upper_endpoint_distance'] * scale)}",
        f"midpoints           {fmt(diag['midpoint_distance'] * scale)}",
    ]
    for verdict in diag["separation"]:
        lines.append(
            f"more than {fmt(verdict['min_distance'] * scale)} apart by {verdict['metric']}: {fmt(verdict['separated'])}"
        )
    if diag["hausdorff_discrepancy"]:
        lines.append(
            "note: the Hausdorff formula max(|a1-a2|, |b1-b2|) and the lower-endpoint difference |a1-a2| disagree here"
        )
    if diag["overlap"] != "disjoint":
        verb = "overlap" if diag["overlap"] == "overlap" else "touch"
        lines.append(f"note: the intervals {verb}; that alone says nothing about P(first > second)")
    return lines


# --- scenarios -------------------------------------------------------------------------


def _point_text(point: dict) -> str:
    return ", ".join(f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in point.items() if v is not None)


def scenario_lines(report: dict) -> list[str]:
    lines = [f"scenario {report['scenario']} ({report['kind']}, {report['tier']} tier)", report["description"]]
    if report["n"] is not None:
        lines.append(f"samples per point: {report['n']}, seed {report['seed']}")
    lines.append("")
    rows = report["rows"]
    if report["kind"] == "winprob":
        lines.append(table(
            ("confidence", "variant", "rho", "overlap", "P(win)", "std err", "P(margin)", "spearman"),
            [(r["confidence"], r["variant"] or "-", r["rho"], r["overlap"], r["win_probability"], r["win_std_error"],
              r["margin_probability"], r["empirical_spearman"]) for r in rows],
        ))
    elif report["kind"] in ("countermonotone", "g_delta"):
        lines.append(table(
            ("gamma", "delta", "P(win) exact", "P(win) simulated", "std err", "overlap / gamma*"),
            [(r["gamma"], r.get("delta"), r["win_probability"], r["mc_win_probability"], r["mc_std_error"],
              r.get("overlap", r.get("gamma_star"))) for r in rows],
        ))
    else:
        methods = [r for r in rows if "method" in r]
        lines.append(table(
            ("method", "overlap", "hausdorff", "lower ends", "upper ends", "midpoints"),
            [(r["method"], r["overlap"], r["hausdorff"], r["lower_endpoint"], r["upper_endpoint"], r["midpoint"]) for r in methods],
        ))
        for r in rows:
            if "matrix" in r:
                lines.append("")
                lines.append(f"{r['matrix']} distances between methods (leader above the diagonal, runner-up below)")
                lines.append(table(("", *r["methods"]), [(name, *vals) for name, vals in zip(r["methods"], r["values"])]))
    if report["checks"]:
        lines.append("")
        lines.append(table(
            ("point", "quantity", "computed", "expected", "deviation", "tolerance", "result"),
            [(_point_text(c["point"]), c["quantity"], c["computed"],
              (">= " + fmt(c["expected"])) if c["comparison"] == "at_least" else c["expected"],
              c["deviation"], c["tolerance"], "pass" if c["passed"] else "FAIL") for c in report["checks"]],
        ))
    for note in report["notes"]:
        lines.append(f"note: {note}")
    if report.get("annotations"):
        for name, values in sorted(report["annotations"].items()):
            lines.append(f"annotation {name}: " + ", ".join(f"{k} {v}" for k, v in sorted(values.items())))
    lines.append("")
    lines.append("all checks passed" if report["passed"] else f"{sum(not c['passed'] for c in report['checks'])} check(s) failed")
    return lines


SCENARIO_CSV_HEADERS = ("point", "quantity", "computed", "expected", "comparison", "deviation", "tolerance", "passed", "provenance")


def scenario_csv_rows(report: dict) -> list:
    return [[_point_text(c["point"]), c["quantity"], c["computed"], c["expected"], c["comparison"], c["deviation"],
             c["tolerance"], c["passed"], c["provenance"]] for c in report["checks"]]
