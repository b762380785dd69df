"""Fit a scaled Beta marginal to a published interval by quantile matching.

The interval [low, high] at confidence 1 - gamma is read as the equal-tailed
probability interval of X = B/2, i.e. F_X(low) = gamma/2 and
F_X(high) = 1 - gamma/2. The two equations are solved by minimizing

    h(alpha, beta) = (Q_B(1 - gamma/2) - 2 high)^2 + (Q_B(gamma/2) - 2 low)^2

with Nelder-Mead, then polished with a root finder on the two residuals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from utils.beta_dist import MAX_SHAPE, BetaParams, ScaledBetaMarginal, scaled_cdf, scaled_quantile
from utils.errors import DomainError, FitError

logger = logging.getLogger(__name__)

MIN_WIDTH = 1e-5
MIN_SHAPE = 1.01
OBJECTIVE_TOL = 1e-10
QUANTILE_TOL = 1e-6
MAX_ITER = 500
RESTART_POINT = (18.0, 18.0)


@dataclass(frozen=True)
class Interval:
    """Published interval estimate of a vote share (fractions, not percent)."""

    low: float
    high: float
    confidence: float

    def __post_init__(self):
        for name in ("low", "high", "confidence"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"interval {name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.low <= 1.0 or not 0.0 <= self.high <= 1.0:
            raise DomainError(f"interval endpoints must lie in [0, 1], got [{self.low}, {self.high}]")
        if not self.low < self.high:
            raise DomainError(f"low must be < high, got [{self.low}, {self.high}]")
        if not 0.0 < self.confidence < 1.0:
            raise DomainError(f"confidence must lie in (0, 1), got {self.confidence}")

    @property
    def gamma(self) -> float:
        return 1.0 - self.confidence

    @property
    def width(self) -> float:
        return self.high - self.low

    @property
    def midpoint(self) -> float:
        """Point estimate at the centre of the interval."""
        return (self.low + self.high) / 2.0

    @property
    def margin_of_error(self) -> float:
        return (self.high - self.low) / 2.0

    def contains(self, x: float) -> bool:
        return self.low <= x <= self.high

    def with_confidence(self, confidence: float) -> "Interval":
        return Interval(self.low, self.high, confidence)

    def as_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "confidence": self.confidence}


def constructed_leader(upper: float, margin: float, confidence: float) -> Interval:
    """Interval [upper - 2 margin, upper]."""
    return Interval(upper - 2.0 * margin, upper, confidence)


def overlapping_runner_up(leader: Interval, overlap: float, margin: float | None = None) -> Interval:
    """Runner-up interval whose upper end sits `overlap` above the leader's lower end.

    A negative overlap leaves a gap of that size between the two intervals.
    """
    margin = leader.margin_of_error if margin is None else margin
    upper = leader.low + overlap
    return Interval(upper - 2.0 * margin, upper, leader.confidence)


@dataclass(frozen=True)
class FitReport:
    interval: Interval
    marginal: ScaledBetaMarginal
    achieved_low_quantile: float
    achieved_high_quantile: float
    objective_value: float
    iterations: int
    restarted: bool = False

    @property
    def low_residual(self) -> float:
        return self.achieved_low_quantile - self.interval.low

    @property
    def high_residual(self) -> float:
        return self.achieved_high_quantile - self.interval.high

    @property
    def coverage(self) -> float:
        """Probability the fitted marginal assigns to the input interval."""
        return scaled_cdf(self.interval.high, self.marginal) - scaled_cdf(self.interval.low, self.marginal)

    def as_dict(self) -> dict:
        return {
            "interval": self.interval.as_dict(),
            "alpha": self.marginal.params.alpha,
            "beta": self.marginal.params.beta,
            "achieved_low_quantile": self.achieved_low_quantile,
            "achieved_high_quantile": self.achieved_high_quantile,
            "low_residual": self.low_residual,
            "high_residual": self.high_residual,
            "coverage": self.coverage,
            "objective_value": self.objective_value,
            "iterations": self.iterations,
            "restarted": self.restarted,
        }


def moment_start(iv: Interval) -> tuple[float, float]:
    """Shapes whose mean and spread match the interval, read as a normal interval."""
    z = float(special.ndtri(1.0 - iv.gamma / 2.0))
    mu = iv.low + iv.high
    sigma = (iv.high - iv.low) / z
    kappa = mu * (1.0 - mu) / (sigma * sigma) - 1.0
    if not math.isfinite(kappa) or kappa <= 0:
        return RESTART_POINT
    alpha = min(max(mu * kappa, MIN_SHAPE), MAX_SHAPE)
    beta = min(max((1.0 - mu) * kappa, MIN_SHAPE), MAX_SHAPE)
    return alpha, beta


def _shapes(t: np.ndarray) -> tuple[float, float]:
    # alpha = 1 + exp(t0) keeps both shapes above 1 without bounds
    return 1.0 + math.exp(min(t[0], 700.0)), 1.0 + math.exp(min(t[1], 700.0))


def _residuals(t: np.ndarray, iv: Interval) -> np.ndarray:
    a, b = _shapes(t)
    if a > MAX_SHAPE or b > MAX_SHAPE:
        return np.array([1.0, 1.0])
    g = iv.gamma
    hi = special.betaincinv(a, b, 1.0 - g / 2.0) - 2.0 * iv.high
    lo = special.betaincinv(a, b, g / 2.0) - 2.0 * iv.low
    out = np.array([hi, lo], dtype=float)
    if not np.all(np.isfinite(out)):
        return np.array([1.0, 1.0])
    return out


def quantile_objective(alpha: float, beta: float, iv: Interval) -> float:
    """h(alpha, beta) evaluated in the original shape parameters."""
    t = np.array([math.log(alpha - 1.0), math.log(beta - 1.0)])
    r = _residuals(t, iv)
    return float(r @ r)


def _minimize_from(start: tuple[float, float], iv: Interval) -> tuple[np.ndarray, float, int]:
    t0 = np.array([math.log(max(start[0], MIN_SHAPE) - 1.0), math.log(max(start[1], MIN_SHAPE) - 1.0)])

    def objective(t):
        r = _residuals(t, iv)
        return float(r @ r)

    res = optimize.minimize(
        objective,
        t0,
        method="Nelder-Mead",
        options={"maxiter": MAX_ITER, "xatol": 1e-12, "fatol": 1e-24},
    )
    best_t, best_f = np.asarray(res.x, dtype=float), float(res.fun)
    nit = int(res.nit)
    logger.debug("Nelder-Mead from %s: f=%.3e after %d iterations", start, best_f, nit)

    polish = optimize.root(lambda t: _residuals(t, iv), best_t, method="hybr", options={"xtol": 1e-14})
    polish_f = objective(polish.x)
    if math.isfinite(polish_f) and polish_f < best_f:
        best_t, best_f = np.asarray(polish.x, dtype=float), polish_f
        nit += int(getattr(polish, "nfev", 0))
    return best_t, best_f, nit


def fit_marginal(iv: Interval) -> FitReport:
    """Scaled Beta marginal whose gamma/2 and 1 - gamma/2 quantiles are the interval ends."""
    if iv.high > 0.5:
        raise DomainError(f"interval upper end {iv.high} exceeds 1/2; scaled Beta marginals live on [0, 1/2]")
    if iv.width < MIN_WIDTH:
        raise DomainError(f"interval width {iv.width:g} is below the minimum {MIN_WIDTH:g}")

    start = moment_start(iv)
    best_t, best_f, iterations = _minimize_from(start, iv)
    restarted = False
    if not best_f < OBJECTIVE_TOL:
        logger.warning("fit for [%s, %s] stalled at f=%.3e; restarting from %s", iv.low, iv.high, best_f, RESTART_POINT)
        t2, f2, it2 = _minimize_from(RESTART_POINT, iv)
        iterations += it2
        restarted = True
        if f2 < best_f:
            best_t, best_f = t2, f2

    alpha, beta = _shapes(best_t)
    if not best_f < OBJECTIVE_TOL or alpha > MAX_SHAPE or beta > MAX_SHAPE:
        raise FitError(
            f"quantile matching for [{iv.low}, {iv.high}] at confidence {iv.confidence} "
            f"stopped at objective {best_f:.3e}",
            best_point=(alpha, beta),
            objective=best_f,
            residuals=tuple(float(r) / 2.0 for r in _residuals(best_t, iv)),
        )

    marginal = ScaledBetaMarginal(BetaParams(alpha, beta))
    low_q = scaled_quantile(iv.gamma / 2.0, marginal)
    high_q = scaled_quantile(1.0 - iv.gamma / 2.0, marginal)
    if abs(low_q - iv.low) > QUANTILE_TOL or abs(high_q - iv.high) > QUANTILE_TOL:
        raise FitError(
            f"fitted quantiles ({low_q:.8f}, {high_q:.8f}) miss [{iv.low}, {iv.high}] by more than {QUANTILE_TOL:g}",
            best_point=(alpha, beta),
            objective=best_f,
            residuals=(low_q - iv.low, high_q - iv.high),
        )
    logger.info("fitted [%s, %s] @ %s: alpha=%.6g beta=%.6g (f=%.2e)", iv.low, iv.high, iv.confidence, alpha, beta, best_f)
    return FitReport(
        interval=iv,
        marginal=marginal,
        achieved_low_quantile=low_q,
        achieved_high_quantile=high_q,
        objective_value=best_f,
        iterations=iterations,
        restarted=restarted,
    )
