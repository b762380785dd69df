"""Beta distribution primitives and the Beta marginals used for vote shares.

A leader's share X is modelled as B/2 with B ~ Beta(alpha, beta), so X lives on
[0, 1/2] and F_X(x) = F_B(2x). `UnitBetaMarginal` keeps the full [0, 1] support
for the extreme-dependence constructions, where one candidate may pass 1/2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import ClassVar, Protocol

import numpy as np
from scipy import optimize, special, stats

from utils.errors import DomainError

logger = logging.getLogger(__name__)

# Fitted 99% intervals from real quick counts already need shapes in the tens of thousands.
MAX_SHAPE = 1e7

_QUANTILE_TOL = 1e-12


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            raw = getattr(self, name)
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise DomainError(f"Beta shape {name} must be a number, got {raw!r}") from None
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"Beta shape {name} must be a positive finite number, got {raw!r}")
            object.__setattr__(self, name, value)
            if value > MAX_SHAPE:
                raise DomainError(f"Beta shape {name}={value:g} exceeds the supported maximum {MAX_SHAPE:g}")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


def _check_unit(x: float, name: str = "x") -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")
    return x


def _check_open_unit(u: float) -> float:
    u = float(u)
    if not 0.0 < u < 1.0:
        raise DomainError(f"probability level must lie in (0, 1), got {u!r}")
    return u


def beta_pdf(x: float, p: BetaParams) -> float:
    x = _check_unit(x)
    return float(stats.beta.pdf(x, p.alpha, p.beta))


def beta_cdf(x: float, p: BetaParams) -> float:
    """Regularized incomplete beta function I_x(alpha, beta)."""
    x = _check_unit(x)
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    return float(special.betainc(p.alpha, p.beta, x))


def beta_quantile(u: float, p: BetaParams) -> float:
    """Inverse of beta_cdf, polished with Newton steps on the density.

    Falls back to bracketing on [0, 1] when the library inverse returns a
    non-finite value.
    """
    u = _check_open_unit(u)
    a, b = p.alpha, p.beta
    q = float(special.betaincinv(a, b, u))
    if not math.isfinite(q) or not 0.0 <= q <= 1.0:
        logger.debug("betaincinv failed for u=%s a=%s b=%s, bracketing instead", u, a, b)
        q = optimize.brentq(lambda t: special.betainc(a, b, t) - u, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(4):
        err = float(special.betainc(a, b, q)) - u
        if abs(err) <= _QUANTILE_TOL:
            break
        dens = float(stats.beta.pdf(q, a, b))
        if not math.isfinite(dens) or dens <= 0.0:
            break
        step = q - err / dens
        if not 0.0 < step < 1.0:
            break
        q = step
    return q


def beta_quantile_array(u: np.ndarray, p: BetaParams) -> np.ndarray:
    """Vectorized quantile for simulation; u may touch 0 or 1 (maps to the support ends)."""
    return special.betaincinv(p.alpha, p.beta, np.asarray(u, dtype=float))


def beta_cdf_array(x: np.ndarray, p: BetaParams) -> np.ndarray:
    return special.betainc(p.alpha, p.beta, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))


class Marginal(Protocol):
    """What the joint engine needs from a vote-share law."""

    upper: float

    def cdf(self, x: float) -> float: ...

    def quantile(self, u: float) -> float: ...

    def cdf_array(self, x: np.ndarray) -> np.ndarray: ...

    def quantile_array(self, u: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ScaledBetaMarginal:
    """X = B/2 with B ~ Beta(alpha, beta); support exactly [0, 1/2]."""

    params: BetaParams
    scale: ClassVar[float] = 0.5
    upper: ClassVar[float] = 0.5

    def cdf(self, x: float) -> float:
        return scaled_cdf(x, self)

    def quantile(self, u: float) -> float:
        return scaled_quantile(u, self)

    def pdf(self, x: float) -> float:
        return scaled_pdf(x, self)

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        return beta_cdf_array(2.0 * np.asarray(x, dtype=float), self.params)

    def quantile_array(self, u: np.ndarray) -> np.ndarray:
        return beta_quantile_array(u, self.params) / 2.0

    def as_dict(self) -> dict:
        return {"family": "scaled_beta", "scale": self.scale, **self.params.as_dict()}


def _check_scaled(x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= 0.5:
        raise DomainError(f"vote share must lie in [0, 1/2] for a scaled Beta marginal, got {x!r}")
    return x


def scaled_cdf(x: float, m: ScaledBetaMarginal) -> float:
    return beta_cdf(2.0 * _check_scaled(x), m.params)


def scaled_quantile(u: float, m: ScaledBetaMarginal) -> float:
    return beta_quantile(u, m.params) / 2.0


def scaled_pdf(x: float, m: ScaledBetaMarginal) -> float:
    return 2.0 * beta_pdf(2.0 * _check_scaled(x), m.params)


@dataclass(frozen=True)
class UnitBetaMarginal:
    """Beta law on the whole [0, 1]; Beta(1, 1) is the uniform share."""

    params: BetaParams
    upper: ClassVar[float] = 1.0

    @classmethod
    def uniform(cls) -> "UnitBetaMarginal":
        return cls(BetaParams(1.0, 1.0))

    def cdf(self, x: float) -> float:
        return beta_cdf(x, self.params)

    def quantile(self, u: float) -> float:
        return beta_quantile(u, self.params)

    def pdf(self, x: float) -> float:
        return beta_pdf(x, self.params)

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        return beta_cdf_array(x, self.params)

    def quantile_array(self, u: np.ndarray) -> np.ndarray:
        return beta_quantile_array(u, self.params)

    def reflected(self) -> "UnitBetaMarginal":
        """Law of 1 - X."""
        return UnitBetaMarginal(BetaParams(self.params.beta, self.params.alpha))

    def as_dict(self) -> dict:
        return {"family": "unit_beta", "scale": 1.0, **self.params.as_dict()}


def beta_with_cdf_at_half(gamma: float, beta_shape: float = 2.0) -> UnitBetaMarginal:
    """Unit Beta(alpha, beta_shape) whose CDF at 1/2 equals gamma.

    I_{1/2}(alpha, b) decreases in alpha, so alpha is bracketed on a log scale.
    """
    gamma = _check_open_unit(gamma)
    if beta_shape <= 0:
        raise DomainError(f"beta_shape must be positive, got {beta_shape!r}")

    def gap(log_alpha: float) -> float:
        return float(special.betainc(math.exp(log_alpha), beta_shape, 0.5)) - gamma

    lo, hi = math.log(1e-4), math.log(1e6)
    if gap(lo) * gap(hi) > 0:
        raise DomainError(f"no Beta(alpha, {beta_shape}) has F(1/2) = {gamma}")
    log_alpha = optimize.brentq(gap, lo, hi, xtol=1e-14, maxiter=500)
    return UnitBetaMarginal(BetaParams(math.exp(log_alpha), float(beta_shape)))
