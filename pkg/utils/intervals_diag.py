"""Diagnostics on a pair of published intervals: overlap classification and the
distances used to argue whether a winner can be named.

Everything works in fractions; the CLI converts percent input at the boundary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from utils.errors import DomainError
from utils.marginal_fit import Interval

logger = logging.getLogger(__name__)

# Minimum separation, in vote share, the 2006 quick-count rules asked for before naming a winner.
DEFAULT_MIN_DISTANCE = 0.006
_DISCREPANCY_TOL = 1e-12


class Overlap(str, Enum):
    OVERLAP = "overlap"
    TOUCHING = "touching"
    DISJOINT = "disjoint"


class DistanceMetric(str, Enum):
    HAUSDORFF = "hausdorff"
    LOWER_ENDPOINT = "lower_endpoint"
    MIDPOINT = "midpoint"

    @classmethod
    def parse(cls, name: "str | DistanceMetric") -> "DistanceMetric":
        if isinstance(name, DistanceMetric):
            return name
        try:
            return cls(str(name).strip().lower().replace("-", "_"))
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise DomainError(f"unknown distance metric {name!r}; expected one of {valid}") from None


@dataclass(frozen=True)
class IntervalPair:
    first: Interval
    second: Interval

    def swapped(self) -> "IntervalPair":
        return IntervalPair(self.second, self.first)


def classify_overlap(p: IntervalPair) -> Overlap:
    lo = max(p.first.low, p.second.low)
    hi = min(p.first.high, p.second.high)
    if lo < hi:
        return Overlap.OVERLAP
    if lo == hi:
        return Overlap.TOUCHING
    return Overlap.DISJOINT


def hausdorff(p: IntervalPair) -> float:
    """max(|a1 - a2|, |b1 - b2|), the Hausdorff distance between closed intervals."""
    return max(abs(p.first.low - p.second.low), abs(p.first.high - p.second.high))


def lower_endpoint_distance(p: IntervalPair) -> float:
    return abs(p.first.low - p.second.low)


def upper_endpoint_distance(p: IntervalPair) -> float:
    return abs(p.first.high - p.second.high)


def midpoint_distance(p: IntervalPair) -> float:
    return abs(p.first.midpoint - p.second.midpoint)


_METRICS = {
    DistanceMetric.HAUSDORFF: hausdorff,
    DistanceMetric.LOWER_ENDPOINT: lower_endpoint_distance,
    DistanceMetric.MIDPOINT: midpoint_distance,
}


def distance(p: IntervalPair, metric: "str | DistanceMetric") -> float:
    return _METRICS[DistanceMetric.parse(metric)](p)


def hausdorff_discrepancy(p: IntervalPair) -> bool:
    """True when the upper-endpoint gap dominates, so the Hausdorff formula and
    the lower-endpoint difference report different numbers."""
    return hausdorff(p) - lower_endpoint_distance(p) > _DISCREPANCY_TOL


@dataclass(frozen=True)
class SeparationVerdict:
    metric: DistanceMetric
    distance: float
    min_distance: float

    @property
    def separated(self) -> bool:
        return self.distance > self.min_distance

    def as_dict(self) -> dict:
        return {
            "metric": self.metric.value,
            "distance": self.distance,
            "min_distance": self.min_distance,
            "separated": self.separated,
        }


def separation_verdict(p: IntervalPair, min_distance: float = DEFAULT_MIN_DISTANCE) -> list[SeparationVerdict]:
    """Whether the 'intervals more than min_distance apart' rule names a winner,
    once per distance definition."""
    if not min_distance >= 0:
        raise DomainError(f"min_distance must be non-negative, got {min_distance!r}")
    return [SeparationVerdict(metric, fn(p), float(min_distance)) for metric, fn in _METRICS.items()]


@dataclass(frozen=True)
class PairDiagnostics:
    pair: IntervalPair
    overlap: Overlap
    hausdorff: float
    lower_endpoint: float
    upper_endpoint: float
    midpoint: float
    discrepancy: bool
    verdicts: tuple[SeparationVerdict, ...]

    def as_dict(self) -> dict:
        return {
            "first": self.pair.first.as_dict(),
            "second": self.pair.second.as_dict(),
            "overlap": self.overlap.value,
            "hausdorff": self.hausdorff,
            "lower_endpoint_distance": self.lower_endpoint,
            "upper_endpoint_distance": self.upper_endpoint,
            "midpoint_distance": self.midpoint,
            "hausdorff_discrepancy": self.discrepancy,
            "separation": [v.as_dict() for v in self.verdicts],
        }


def diagnose(p: IntervalPair, min_distance: float = DEFAULT_MIN_DISTANCE) -> PairDiagnostics:
    diag = PairDiagnostics(
        pair=p,
        overlap=classify_overlap(p),
        hausdorff=hausdorff(p),
        lower_endpoint=lower_endpoint_distance(p),
        upper_endpoint=upper_endpoint_distance(p),
        midpoint=midpoint_distance(p),
        discrepancy=hausdorff_discrepancy(p),
        verdicts=tuple(separation_verdict(p, min_distance)),
    )
    if diag.discrepancy:
        logger.warning(
            "Hausdorff distance %.6g differs from the lower-endpoint difference %.6g for [%s, %s] vs [%s, %s]",
            diag.hausdorff, diag.lower_endpoint, p.first.low, p.first.high, p.second.low, p.second.high,
        )
    return diag


def distance_matrix(intervals: Sequence[Interval], metric: "str | DistanceMetric" = DistanceMetric.LOWER_ENDPOINT) -> np.ndarray:
    """Symmetric matrix of pairwise distances; the diagonal is zero."""
    fn = _METRICS[DistanceMetric.parse(metric)]
    k = len(intervals)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = fn(IntervalPair(intervals[i], intervals[j]))
    return out


def split_distance_matrix(
    upper: Sequence[Interval],
    lower: Sequence[Interval],
    metric: "str | DistanceMetric" = DistanceMetric.LOWER_ENDPOINT,
) -> np.ndarray:
    """One candidate's method-to-method distances above the diagonal, another's
    below it. Both sequences list the same methods in the same order; the
    diagonal is NaN."""
    if len(upper) != len(lower):
        raise DomainError(f"need the same number of intervals per candidate, got {len(upper)} and {len(lower)}")
    top = distance_matrix(upper, metric)
    bottom = distance_matrix(lower, metric)
    out = np.triu(top, 1) + np.tril(bottom, -1)
    np.fill_diagonal(out, np.nan)
    return out
