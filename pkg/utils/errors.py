"""Exception hierarchy shared by the library, the scenario runner and the CLI.

Each class also derives from the builtin the rest of the code would otherwise
raise (ValueError for bad input, RuntimeError for a computation that did not
converge) so callers catching builtins keep working.
"""

from __future__ import annotations


class QuickCountError(Exception):
    """Base class for every error raised by this project."""


class DomainError(QuickCountError, ValueError):
    """An argument lies outside the domain of the function."""


class ConfigError(QuickCountError, ValueError):
    """An environment setting could not be parsed."""


class FitError(QuickCountError, RuntimeError):
    """Quantile matching did not reach the objective threshold."""

    def __init__(self, message: str, *, best_point=None, objective: float | None = None, residuals=None):
        super().__init__(message)
        self.best_point = best_point
        self.objective = objective
        self.residuals = residuals


class CalibrationError(QuickCountError, ValueError):
    """No parameter of the family reaches the requested Spearman rho."""


class SimplexViolationError(QuickCountError, RuntimeError):
    """A simulated pair fell outside {0 <= y <= 1, 0 <= x <= 1 - y}."""

    def __init__(self, message: str, *, pair: tuple[float, float] | None = None, count: int = 0):
        super().__init__(message)
        self.pair = pair
        self.count = count


class ScenarioError(QuickCountError, ValueError):
    """A scenario file is malformed, unknown, or failed while running."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None, field: str | None = None):
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        full = f"{', '.join(where)}: {message}" if where else message
        super().__init__(full)
        self.path = path
        self.line = line
        self.field = field


class GoldenToleranceError(QuickCountError, RuntimeError):
    """A golden-tier scenario value fell outside its tolerance."""

    def __init__(self, message: str, *, failures: int = 0):
        super().__init__(message)
        self.failures = failures
