from dotenv import load_dotenv
load_dotenv()

import logging
import sys

import click
import numpy as np

import backend
from utils import report, settings
from utils.copulas import CopulaFamily
from utils.errors import (
    CalibrationError,
    DomainError,
    FitError,
    GoldenToleranceError,
    QuickCountError,
    ScenarioError,
    SimplexViolationError,
)
from utils.intervals_diag import DEFAULT_MIN_DISTANCE, IntervalPair, diagnose
from utils.joint_engine import DEFAULT_MARGIN
from utils.marginal_fit import Interval
from utils.scenarios import TIERS, find_scenario, list_scenarios

EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_GOLDEN = 3

_NUMERIC_ERRORS = (FitError, CalibrationError, SimplexViolationError)

FORMATS = click.Choice(["text", "json", "csv"])
UNITS = click.Choice(["auto", "percent", "fraction"])


def _exit_code(exc: QuickCountError) -> int:
    # a scenario point that failed numerically keeps the code of its cause
    if isinstance(exc, ScenarioError) and isinstance(exc.__cause__, QuickCountError):
        return _exit_code(exc.__cause__)
    if isinstance(exc, GoldenToleranceError):
        return EXIT_GOLDEN
    if isinstance(exc, _NUMERIC_ERRORS):
        return EXIT_NUMERIC
    return EXIT_USAGE


class QuickCountGroup(click.Group):
    """Click group with the exit-code contract 0 ok, 1 usage, 2 numeric failure, 3 golden tolerance."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args=args, prog_name=prog_name, complete_var=complete_var, standalone_mode=False, **extra)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        except QuickCountError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))
        sys.exit(rv if isinstance(rv, int) else 0)


# --- argument parsing ---------------------------------------------------------------


def _pair(text: str, option: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise click.BadParameter(f"expected LOW,HIGH, got {text!r}", param_hint=option)
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise click.BadParameter(f"expected two numbers, got {text!r}", param_hint=option) from None


def _scale(units: str, *pairs: tuple[float, float]) -> float:
    """100 for percent input, 1 for fractions; auto treats any value above 1 as percent."""
    if units == "percent":
        return 100.0
    if units == "fraction":
        return 1.0
    return 100.0 if any(v > 1.0 for pair in pairs for v in pair) else 1.0


def _confidence(value: float) -> float:
    c = value / 100.0 if value > 1.0 else value
    if not 0.0 < c < 1.0:
        raise click.BadParameter(f"confidence must lie in (0, 1) or (1, 100) as a percentage, got {value}", param_hint="--confidence")
    return c


def _interval(pair: tuple[float, float], scale: float, confidence: float, option: str) -> Interval:
    try:
        return Interval(pair[0] / scale, pair[1] / scale, confidence)
    except DomainError as exc:
        raise click.BadParameter(str(exc), param_hint=option) from None


def _seed(text: str | None) -> int:
    if text is None:
        return settings.default_seed()
    if text.strip().lower() == "random":
        return int(np.random.SeedSequence().entropy % 2**64)
    try:
        seed = int(text)
    except ValueError:
        raise click.BadParameter(f"expected an integer or 'random', got {text!r}", param_hint="--seed") from None
    if not 0 <= seed < 2**64:
        raise click.BadParameter("seed must lie in [0, 2**64)", param_hint="--seed")
    return seed


def _emit(fmt: str, kind: str, payload: dict, text_lines: list[str], csv_headers, csv_rows) -> None:
    if fmt == "json":
        click.echo(report.to_json(kind, payload), nl=False)
    elif fmt == "csv":
        click.echo(report.to_csv(csv_headers, csv_rows), nl=False)
    else:
        click.echo("\n".join(text_lines))


# --- commands ---------------------------------------------------------------------------


@click.group(cls=QuickCountGroup)
@click.option("-v", "--verbose", count=True, help="-v for INFO, -vv for DEBUG logging on stderr.")
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Threads for chunked simulation (default QUICKCOUNT_WORKERS or 1).")
@click.pass_context
def cli(ctx, verbose, workers):
    """Win probabilities for the two leading candidates from their published intervals."""
    level = {0: settings.log_level(), 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    ctx.obj = {"workers": workers if workers is not None else settings.default_workers()}


@cli.command()
@click.option("--interval", "interval_text", required=True, help="LOW,HIGH of the published interval.")
@click.option("--confidence", type=float, required=True, help="Confidence level, e.g. 0.95 or 95.")
@click.option("--units", type=UNITS, default="auto", show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def fit(interval_text, confidence, units, fmt):
    """Fit a scaled Beta marginal whose tail quantiles are the interval ends."""
    pair = _pair(interval_text, "--interval")
    scale = _scale(units, pair)
    iv = _interval(pair, scale, _confidence(confidence), "--interval")
    result = backend.cached_fit(iv).as_dict()
    _emit(fmt, "fit", {"fit": result, "units": "percent" if scale == 100.0 else "fraction"},
          report.fit_lines(result, scale), report.FIT_CSV_HEADERS, [report.fit_csv_row(result)])


@cli.command()
@click.option("--leader", "leader_text", required=True, help="LOW,HIGH of the leader's interval.")
@click.option("--runner-up", "runner_up_text", required=True, help="LOW,HIGH of the runner-up's interval.")
@click.option("--confidence", type=float, required=True, help="Confidence level shared by both intervals.")
@click.option("--copula", type=click.Choice([f.value for f in CopulaFamily]), default="gaussian", show_default=True)
@click.option("--rho", type=click.FloatRange(-1.0, 1.0), default=0.0, show_default=True, help="Spearman rho.")
@click.option("--samples", type=click.IntRange(min=1), default=None, help="Sample count (default QUICKCOUNT_SAMPLES).")
@click.option("--seed", "seed_text", default=None, help="Integer seed, or 'random' (default QUICKCOUNT_SEED).")
@click.option("--margin", type=float, default=DEFAULT_MARGIN, show_default=True,
              help="Threshold for P(|X - Y| < margin), always a fraction.")
@click.option("--units", type=UNITS, default="auto", show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
@click.option("--dump-samples", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Write simulated (x, y) pairs to this CSV file.")
@click.option("--dump-count", type=click.IntRange(min=1), default=backend.DEFAULT_DUMP_COUNT, show_default=True)
@click.pass_context
def winprob(ctx, leader_text, runner_up_text, confidence, copula, rho, samples, seed_text, margin, units, fmt,
            dump_samples, dump_count):
    """Fit both marginals, couple them with a copula and simulate P(leader > runner-up)."""
    lead_pair, run_pair = _pair(leader_text, "--leader"), _pair(runner_up_text, "--runner-up")
    scale = _scale(units, lead_pair, run_pair)
    conf = _confidence(confidence)
    leader = _interval(lead_pair, scale, conf, "--leader")
    runner_up = _interval(run_pair, scale, conf, "--runner-up")
    if not margin > 0:
        raise click.BadParameter("margin must be positive", param_hint="--margin")
    run = backend.win_probability(
        leader, runner_up, copula, rho,
        n=samples if samples is not None else settings.default_samples(),
        seed=_seed(seed_text),
        margin_threshold=margin,
        workers=ctx.obj["workers"],
        keep_samples=dump_count if dump_samples else 0,
    )
    if dump_samples and run.result.samples is not None:
        report.write_samples_csv(dump_samples, run.result.samples)
    payload = run.as_dict()
    _emit(fmt, "winprob", {"run": payload, "units": "percent" if scale == 100.0 else "fraction"},
          report.winprob_lines(payload, scale), report.WINPROB_CSV_HEADERS, [report.winprob_csv_row(payload)])


@cli.command()
@click.option("--first", "first_text", required=True, help="LOW,HIGH of the first interval.")
@click.option("--second", "second_text", required=True, help="LOW,HIGH of the second interval.")
@click.option("--min-distance", type=float, default=DEFAULT_MIN_DISTANCE, show_default=True,
              help="Separation asked for before naming a winner, always a fraction.")
@click.option("--units", type=UNITS, default="auto", show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def hausdorff(first_text, second_text, min_distance, units, fmt):
    """Overlap classification and distances between two intervals."""
    first, second = _pair(first_text, "--first"), _pair(second_text, "--second")
    scale = _scale(units, first, second)
    pair = IntervalPair(_interval(first, scale, 0.5, "--first"), _interval(second, scale, 0.5, "--second"))
    diag = diagnose(pair, min_distance).as_dict()
    for key in ("first", "second"):
        diag[key].pop("confidence")
    metrics = ("hausdorff", "lower_endpoint_distance", "upper_endpoint_distance", "midpoint_distance")
    _emit(fmt, "hausdorff", {"diagnostics": diag, "units": "percent" if scale == 100.0 else "fraction"},
          report.diagnostics_lines(diag, scale),
          ("overlap", *metrics, "hausdorff_discrepancy"),
          [(diag["overlap"], *(diag[m] * scale for m in metrics), diag["hausdorff_discrepancy"])])


@cli.command()
@click.option("--scenario", "scenario_id", required=True, help="Catalog id, or a path to a scenario file.")
@click.option("--tier", type=click.Choice(TIERS), default="smoke", show_default=True)
@click.option("--seed", "seed_text", default=None, help="Integer seed, or 'random' (default QUICKCOUNT_SEED).")
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
@click.option("--dump-samples", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Write simulated (x, y) pairs to this CSV file, one file per point.")
@click.option("--dump-count", type=click.IntRange(min=1), default=backend.DEFAULT_DUMP_COUNT, show_default=True)
@click.pass_context
def reproduce(ctx, scenario_id, tier, seed_text, fmt, dump_samples, dump_count):
    """Run a bundled scenario and compare with its expected values."""
    scenario = find_scenario(scenario_id)
    result = backend.run_scenario(
        scenario,
        seed=_seed(seed_text),
        tier=tier,
        workers=ctx.obj["workers"],
        dump_count=dump_count if dump_samples else 0,
    )
    if dump_samples:
        for path in backend.write_sample_dumps(result, dump_samples, report.write_samples_csv):
            click.echo(f"wrote {path}", err=True)
    payload = result.as_dict()
    _emit(fmt, "scenario", {"report": payload}, report.scenario_lines(payload),
          report.SCENARIO_CSV_HEADERS, report.scenario_csv_rows(payload))
    if tier == "golden" and not result.passed:
        raise GoldenToleranceError(
            f"{len(result.failures)} golden check(s) of scenario {scenario.id} out of tolerance",
            failures=len(result.failures),
        )


@cli.command(name="list")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def list_command(fmt):
    """List the bundled scenarios."""
    entries = list_scenarios()
    if fmt == "json":
        payload = {"scenarios": [{"id": e.id, "kind": e.kind, "description": e.description} for e in entries]}
        click.echo(report.to_json("catalog", payload), nl=False)
        return
    click.echo(report.table(("id", "kind", "description"), [(e.id, e.kind, e.description) for e in entries]))


def main():
    cli()


if __name__ == "__main__":
    main()
