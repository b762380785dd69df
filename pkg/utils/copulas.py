"""Bivariate copulas: Frank, Gaussian, the Frechet-Hoeffding bounds W and M, and
independence, with sampling and Spearman-rho calibration.

All specs are immutable. Sampling takes a numpy Generator owned by the caller.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from utils.errors import CalibrationError, DomainError

logger = logging.getLogger(__name__)

FRANK_THETA_BOUND = 50.0
_FRANK_ZERO = 1e-9


class CopulaFamily(str, Enum):
    FRANK = "frank"
    GAUSSIAN = "gaussian"
    LOWER_W = "lower_w"
    UPPER_M = "upper_m"
    INDEPENDENCE = "independence"

    @classmethod
    def parse(cls, name: "str | CopulaFamily") -> "CopulaFamily":
        if isinstance(name, CopulaFamily):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "normal": cls.GAUSSIAN,
            "w": cls.LOWER_W,
            "lowerw": cls.LOWER_W,
            "countermonotone": cls.LOWER_W,
            "m": cls.UPPER_M,
            "upperm": cls.UPPER_M,
            "comonotone": cls.UPPER_M,
            "pi": cls.INDEPENDENCE,
            "product": cls.INDEPENDENCE,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise DomainError(f"unknown copula family {name!r}; expected one of {valid}") from None

    @property
    def parametric(self) -> bool:
        return self in (CopulaFamily.FRANK, CopulaFamily.GAUSSIAN)


@dataclass(frozen=True)
class CopulaSpec:
    family: CopulaFamily
    theta: float | None = None

    def __post_init__(self):
        family = CopulaFamily.parse(self.family)
        object.__setattr__(self, "family", family)
        if family is CopulaFamily.FRANK:
            if self.theta is None or not math.isfinite(self.theta) or self.theta == 0.0:
                raise DomainError(f"Frank theta must be finite and nonzero, got {self.theta!r}")
            object.__setattr__(self, "theta", float(self.theta))
        elif family is CopulaFamily.GAUSSIAN:
            if self.theta is None or not -1.0 < self.theta < 1.0:
                raise DomainError(f"Gaussian rho must lie strictly inside (-1, 1), got {self.theta!r}")
            object.__setattr__(self, "theta", float(self.theta))
        elif self.theta is not None:
            raise DomainError(f"{family.value} copula takes no parameter, got {self.theta!r}")

    @classmethod
    def frank(cls, theta: float) -> "CopulaSpec":
        return cls(CopulaFamily.FRANK, theta)

    @classmethod
    def gaussian(cls, rho: float) -> "CopulaSpec":
        return cls(CopulaFamily.GAUSSIAN, rho)

    @classmethod
    def lower_w(cls) -> "CopulaSpec":
        return cls(CopulaFamily.LOWER_W)

    @classmethod
    def upper_m(cls) -> "CopulaSpec":
        return cls(CopulaFamily.UPPER_M)

    @classmethod
    def independence(cls) -> "CopulaSpec":
        return cls(CopulaFamily.INDEPENDENCE)

    def label(self) -> str:
        if self.theta is None:
            return self.family.value
        return f"{self.family.value}({self.theta:.6g})"

    def as_dict(self) -> dict:
        return {"family": self.family.value, "theta": self.theta}


def lower_bound(u, v):
    """W(u, v) = max(u + v - 1, 0), exact on the edges u = 1 and v = 1."""
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    out = np.maximum(u + v - 1.0, 0.0)
    out = np.where(u == 1.0, v, out)
    return np.where(v == 1.0, u, out)


def upper_bound(u, v):
    """M(u, v) = min(u, v)."""
    return np.minimum(np.asarray(u, dtype=float), np.asarray(v, dtype=float))


# Beyond this |theta| the log1p form loses the 1 + ratio term near (1, 1).
_FRANK_LOG1P_LIMIT = 1.0


def _frank_cdf(u, v, theta: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(theta) <= _FRANK_LOG1P_LIMIT:
        num = np.expm1(-theta * u) * np.expm1(-theta * v)
        return -np.log1p(num / math.expm1(-theta)) / theta
    if theta < 0:
        # C_{-t}(u, v) = u - C_t(u, 1 - v)
        return u - _frank_cdf(u, 1.0 - v, -theta)
    # 1 + ratio written as a sum of two non-negative terms over -expm1(-theta)
    spread = -np.expm1(-theta * v) * np.exp(-theta * u) - np.expm1(-theta * (1.0 - v)) * np.exp(-theta * v)
    return -(np.log(spread) - math.log(-math.expm1(-theta))) / theta


def _gaussian_cdf(u: np.ndarray, v: np.ndarray, rho: float) -> np.ndarray:
    u, v = np.broadcast_arrays(u, v)
    out = np.zeros(u.shape, dtype=float)
    # boundary cells are overwritten by the caller
    interior = (u > 0) & (u < 1) & (v > 0) & (v < 1)
    if np.any(interior):
        points = np.column_stack([special.ndtri(u[interior]), special.ndtri(v[interior])])
        cov = [[1.0, rho], [rho, 1.0]]
        out[interior] = stats.multivariate_normal.cdf(points, mean=[0.0, 0.0], cov=cov, abseps=1e-12, releps=1e-12)
    return out


def copula_cdf_array(u, v, c: CopulaSpec) -> np.ndarray:
    """Vectorized C(u, v). Boundary values are exact; interior values are clipped
    into the Frechet-Hoeffding band to absorb rounding."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < 0) | (u > 1) | (v < 0) | (v > 1)):
        raise DomainError("copula arguments must lie in the unit square")
    u, v = np.broadcast_arrays(u, v)
    lo, hi = lower_bound(u, v), upper_bound(u, v)
    family = c.family
    if family is CopulaFamily.INDEPENDENCE:
        out = u * v
    elif family is CopulaFamily.LOWER_W:
        out = lo
    elif family is CopulaFamily.UPPER_M:
        out = hi
    elif family is CopulaFamily.FRANK:
        out = _frank_cdf(u, v, c.theta)
    else:
        out = _gaussian_cdf(u, v, c.theta)
    out = np.clip(out, lo, hi)
    # grounded and uniform margins hold exactly on the boundary
    out = np.where((u == 0) | (v == 0), 0.0, out)
    out = np.where(u == 1, v, out)
    out = np.where(v == 1, u, out)
    return out


def copula_cdf(u: float, v: float, c: CopulaSpec) -> float:
    """C(u, v); the joint CDF of the shares is C(F_X(x), F_Y(y))."""
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise DomainError(f"copula arguments must lie in the unit square, got ({u!r}, {v!r})")
    return float(copula_cdf_array(u, v, c))


def sample_pairs(c: CopulaSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """n draws (u, v) from the copula by exact methods."""
    family = c.family
    u = rng.random(n)
    if family is CopulaFamily.INDEPENDENCE:
        return u, rng.random(n)
    if family is CopulaFamily.LOWER_W:
        return u, 1.0 - u
    if family is CopulaFamily.UPPER_M:
        return u, u.copy()
    if family is CopulaFamily.GAUSSIAN:
        rho = c.theta
        z1 = special.ndtri(u)
        z2 = rho * z1 + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
        return u, special.ndtr(z2)
    # Frank: invert the conditional distribution dC/du at a fresh uniform t
    theta = c.theta
    t = rng.random(n)
    if abs(theta) <= _FRANK_LOG1P_LIMIT:
        ratio = t * math.expm1(-theta) / (t + (1.0 - t) * np.exp(-theta * u))
        v = -np.log1p(ratio) / theta
    else:
        # log of t e^-theta + (1 - t) e^(-theta u) over t + (1 - t) e^(-theta u)
        with np.errstate(divide="ignore"):
            log_t, log_s = np.log(t), np.log1p(-t)
        v = -(np.logaddexp(log_t - theta, log_s - theta * u) - np.logaddexp(log_t, log_s - theta * u)) / theta
    return u, np.clip(v, 0.0, 1.0)


def sample_pair(c: CopulaSpec, rng: np.random.Generator) -> tuple[float, float]:
    u, v = sample_pairs(c, 1, rng)
    return float(u[0]), float(v[0])


def _frank_cdf_scalar(u: float, v: float, theta: float) -> float:
    """math-only twin of _frank_cdf for the quadrature integrand."""
    if abs(theta) <= _FRANK_LOG1P_LIMIT:
        return -math.log1p(math.expm1(-theta * u) * math.expm1(-theta * v) / math.expm1(-theta)) / theta
    if theta < 0:
        return u - _frank_cdf_scalar(u, 1.0 - v, -theta)
    spread = -math.expm1(-theta * v) * math.exp(-theta * u) - math.expm1(-theta * (1.0 - v)) * math.exp(-theta * v)
    return -(math.log(spread) - math.log(-math.expm1(-theta))) / theta


@lru_cache(maxsize=512)
def _frank_rho(theta: float) -> float:
    if abs(theta) < _FRANK_ZERO:
        return 0.0
    value, _err = integrate.dblquad(
        lambda v, u: _frank_cdf_scalar(u, v, theta) - u * v,
        0.0, 1.0, 0.0, 1.0,
        epsabs=1e-10, epsrel=1e-10,
    )
    return max(-1.0, min(1.0, 12.0 * value))


def spearman_rho(c: CopulaSpec) -> float:
    """Population Spearman rho, 12 * integral of C(u, v) over the unit square - 3."""
    family = c.family
    if family is CopulaFamily.INDEPENDENCE:
        return 0.0
    if family is CopulaFamily.UPPER_M:
        return 1.0
    if family is CopulaFamily.LOWER_W:
        return -1.0
    if family is CopulaFamily.GAUSSIAN:
        return 6.0 / math.pi * math.asin(c.theta / 2.0)
    return _frank_rho(c.theta)


def spearman_rho_numeric(c: CopulaSpec, order: int = 200) -> float:
    """Same quantity by a Gauss-Legendre product rule over copula_cdf_array."""
    nodes, weights = special.roots_legendre(order)
    x = (nodes + 1.0) / 2.0
    w = weights / 2.0
    uu, vv = np.meshgrid(x, x, indexing="ij")
    grid = copula_cdf_array(uu, vv, c)
    return float(12.0 * (w @ grid @ w) - 3.0)


def calibrate_to_spearman(family: "str | CopulaFamily", target_rho: float) -> CopulaSpec:
    """Copula of `family` whose Spearman rho equals target_rho.

    A target of exactly +1 or -1 returns the bound M or W. A Frank target of 0
    returns independence, the limit of the family at theta -> 0.
    """
    family = CopulaFamily.parse(family)
    target = float(target_rho)
    if not math.isfinite(target) or abs(target) > 1.0:
        raise CalibrationError(f"Spearman rho must lie in [-1, 1], got {target_rho!r}")
    if target == 1.0:
        return CopulaSpec.upper_m()
    if target == -1.0:
        return CopulaSpec.lower_w()

    if family is CopulaFamily.GAUSSIAN:
        rho = 2.0 * math.sin(math.pi * target / 6.0)
        spec = CopulaSpec.gaussian(rho)
    elif family is CopulaFamily.FRANK:
        if target == 0.0:
            return CopulaSpec.independence()
        lo_rho, hi_rho = _frank_rho(-FRANK_THETA_BOUND), _frank_rho(FRANK_THETA_BOUND)
        if not lo_rho < target < hi_rho:
            raise CalibrationError(
                f"Spearman rho {target} is outside the range [{lo_rho:.4f}, {hi_rho:.4f}] "
                f"reachable by Frank copulas with |theta| <= {FRANK_THETA_BOUND:g}"
            )
        # rho is odd and increasing in theta; search the half line with the target's sign
        bracket = (_FRANK_ZERO, FRANK_THETA_BOUND) if target > 0 else (-FRANK_THETA_BOUND, -_FRANK_ZERO)
        theta = optimize.brentq(lambda th: _frank_rho(th) - target, *bracket, xtol=1e-10, rtol=1e-12, maxiter=60)
        spec = CopulaSpec.frank(theta)
    else:
        spec = CopulaSpec(family)
        if spearman_rho(spec) != target:
            raise CalibrationError(f"{family.value} copula has fixed Spearman rho {spearman_rho(spec)}, cannot reach {target}")
        return spec
    logger.info("calibrated %s to Spearman rho %s: %s", family.value, target, spec.label())
    return spec
