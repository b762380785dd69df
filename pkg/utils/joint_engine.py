"""Joint model of the two leading vote shares and its Monte Carlo evaluation.

Sampling is split into fixed-size chunks. Chunk k draws from its own Philox
stream, SeedSequence(seed, spawn_key=(k,)), and per-chunk tallies are merged in
chunk order, so a result depends only on (seed, n) and never on the number of
worker threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from utils.beta_dist import Marginal
from utils.copulas import CopulaSpec, sample_pairs
from utils.errors import DomainError, SimplexViolationError
from utils.marginal_fit import Interval
from utils import settings

logger = logging.getLogger(__name__)

CHUNK_SIZE = 65536
DEFAULT_MARGIN = 0.006
SIMPLEX_TOL = 1e-12
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class JointModel:
    """Leader X, runner-up Y and the copula coupling their grades.

    The optional intervals are the published estimates the marginals were fitted
    to; when present the simulation reports how often samples land inside them.
    """

    leader: Marginal
    runner_up: Marginal
    copula: CopulaSpec
    leader_interval: Interval | None = None
    runner_up_interval: Interval | None = None

    def describe(self) -> dict:
        out = {
            "leader": self.leader.as_dict(),
            "runner_up": self.runner_up.as_dict(),
            "copula": self.copula.as_dict(),
        }
        if self.leader_interval is not None:
            out["leader_interval"] = self.leader_interval.as_dict()
        if self.runner_up_interval is not None:
            out["runner_up_interval"] = self.runner_up_interval.as_dict()
        return out


@dataclass(frozen=True)
class SimulationResult:
    n: int
    seed: int
    win_probability: float
    win_std_error: float
    margin_probability: float
    margin_threshold: float
    empirical_spearman: float
    samples_in_simplex: int
    leader_coverage: float | None = None
    runner_up_coverage: float | None = None
    samples: np.ndarray | None = field(default=None, compare=False, repr=False)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "win_probability": self.win_probability,
            "win_std_error": self.win_std_error,
            "margin_probability": self.margin_probability,
            "margin_threshold": self.margin_threshold,
            "empirical_spearman": self.empirical_spearman,
            "samples_in_simplex": self.samples_in_simplex,
            "leader_coverage": self.leader_coverage,
            "runner_up_coverage": self.runner_up_coverage,
        }


@dataclass
class _Tally:
    n: int = 0
    wins: int = 0
    within_margin: int = 0
    in_simplex: int = 0
    leader_inside: int = 0
    runner_up_inside: int = 0
    sum_u: float = 0.0
    sum_v: float = 0.0
    sum_uu: float = 0.0
    sum_vv: float = 0.0
    sum_uv: float = 0.0
    first_violation: tuple[float, float] | None = None
    samples: np.ndarray | None = None

    def merge(self, other: "_Tally") -> None:
        self.n += other.n
        self.wins += other.wins
        self.within_margin += other.within_margin
        self.in_simplex += other.in_simplex
        self.leader_inside += other.leader_inside
        self.runner_up_inside += other.runner_up_inside
        self.sum_u += other.sum_u
        self.sum_v += other.sum_v
        self.sum_uu += other.sum_uu
        self.sum_vv += other.sum_vv
        self.sum_uv += other.sum_uv
        if self.first_violation is None:
            self.first_violation = other.first_violation

    def spearman(self) -> float:
        """Pearson correlation of the copula grades (u, v), accumulated in one pass.

        The grades are uniform under the model, so this estimates the Spearman rho
        of the pairs. It is not a rank correlation of the sample itself.
        """
        if self.n < 2:
            return float("nan")
        mu, mv = self.sum_u / self.n, self.sum_v / self.n
        cov = self.sum_uv / self.n - mu * mv
        var_u = self.sum_uu / self.n - mu * mu
        var_v = self.sum_vv / self.n - mv * mv
        if var_u <= 0 or var_v <= 0:
            return float("nan")
        return max(-1.0, min(1.0, cov / math.sqrt(var_u * var_v)))


# A draw returns (x, y, u, v): shares and their grades.
ChunkDraw = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


def chunk_generator(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk_index,))))


def _in_simplex(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (y >= -SIMPLEX_TOL) & (y <= 1.0 + SIMPLEX_TOL) & (x >= -SIMPLEX_TOL) & (x <= 1.0 - y + SIMPLEX_TOL)


def _run_chunk(
    draw: ChunkDraw,
    seed: int,
    index: int,
    size: int,
    margin: float,
    intervals: tuple[Interval | None, Interval | None],
    keep: int,
) -> _Tally:
    x, y, u, v = draw(chunk_generator(seed, index), size)
    ok = _in_simplex(x, y)
    tally = _Tally(
        n=size,
        wins=int(np.count_nonzero(x > y)),
        within_margin=int(np.count_nonzero(np.abs(x - y) < margin)),
        in_simplex=int(np.count_nonzero(ok)),
        sum_u=float(u.sum()),
        sum_v=float(v.sum()),
        sum_uu=float(u @ u),
        sum_vv=float(v @ v),
        sum_uv=float(u @ v),
    )
    lead_iv, run_iv = intervals
    if lead_iv is not None:
        tally.leader_inside = int(np.count_nonzero((x >= lead_iv.low) & (x <= lead_iv.high)))
    if run_iv is not None:
        tally.runner_up_inside = int(np.count_nonzero((y >= run_iv.low) & (y <= run_iv.high)))
    if tally.in_simplex < size:
        bad = int(np.flatnonzero(~ok)[0])
        tally.first_violation = (float(x[bad]), float(y[bad]))
    if keep > 0:
        tally.samples = np.column_stack([x[:keep], y[:keep]])
    return tally


def _check_run_args(n: int, seed: int | None, margin_threshold: float, workers: int | None) -> tuple[int, int]:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"sample count must be a positive integer, got {n!r}")
    seed = settings.default_seed() if seed is None else seed
    if isinstance(seed, bool) or int(seed) != seed or not 0 <= seed <= MAX_SEED:
        raise DomainError(f"seed must be an integer in [0, 2**64 - 1], got {seed!r}")
    if not margin_threshold > 0:
        raise DomainError(f"margin threshold must be positive, got {margin_threshold!r}")
    workers = settings.default_workers() if workers is None else workers
    if workers < 1:
        raise DomainError(f"worker count must be >= 1, got {workers!r}")
    return int(seed), int(workers)


def run_chunks(
    draw: ChunkDraw,
    n: int,
    seed: int | None = None,
    margin_threshold: float = DEFAULT_MARGIN,
    workers: int | None = None,
    keep_samples: int = 0,
    intervals: tuple[Interval | None, Interval | None] = (None, None),
) -> SimulationResult:
    """Drive `draw` over ceil(n / CHUNK_SIZE) chunks and summarize the pairs."""
    seed, workers = _check_run_args(n, seed, margin_threshold, workers)
    n = int(n)
    sizes = [min(CHUNK_SIZE, n - start) for start in range(0, n, CHUNK_SIZE)]
    keeps = []
    left = max(int(keep_samples), 0)
    for size in sizes:
        keeps.append(min(size, left))
        left -= keeps[-1]

    def job(index: int) -> _Tally:
        return _run_chunk(draw, seed, index, sizes[index], margin_threshold, intervals, keeps[index])

    logger.debug("simulating n=%d in %d chunks on %d worker(s)", n, len(sizes), workers)
    if workers == 1 or len(sizes) == 1:
        tallies = [job(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(job, range(len(sizes))))

    total = _Tally()
    kept = []
    for tally in tallies:
        total.merge(tally)
        if tally.samples is not None:
            kept.append(tally.samples)

    if total.in_simplex != total.n:
        count = total.n - total.in_simplex
        raise SimplexViolationError(
            f"{count} simulated pair(s) fell outside the simplex; first offender (x, y) = {total.first_violation}",
            pair=total.first_violation,
            count=count,
        )

    p = total.wins / total.n
    lead_iv, run_iv = intervals
    result = SimulationResult(
        n=total.n,
        seed=seed,
        win_probability=p,
        win_std_error=math.sqrt(p * (1.0 - p) / total.n),
        margin_probability=total.within_margin / total.n,
        margin_threshold=float(margin_threshold),
        empirical_spearman=total.spearman(),
        samples_in_simplex=total.in_simplex,
        leader_coverage=total.leader_inside / total.n if lead_iv is not None else None,
        runner_up_coverage=total.runner_up_inside / total.n if run_iv is not None else None,
        samples=np.concatenate(kept) if kept else None,
    )
    logger.info(
        "n=%d seed=%d: P(X>Y)=%.6f (se %.2e), P(|X-Y|<%g)=%.6f, spearman=%.4f",
        result.n, seed, result.win_probability, result.win_std_error,
        margin_threshold, result.margin_probability, result.empirical_spearman,
    )
    return result


def simulate(
    model: JointModel,
    n: int,
    seed: int | None = None,
    margin_threshold: float = DEFAULT_MARGIN,
    workers: int | None = None,
    keep_samples: int = 0,
) -> SimulationResult:
    """Monte Carlo estimate of P(X > Y) and P(|X - Y| < margin_threshold).

    Ties x == y count as losses for the leader. `keep_samples` retains the first
    pairs (in chunk order) on the result for dumping.
    """

    def draw(rng: np.random.Generator, size: int):
        u, v = sample_pairs(model.copula, size, rng)
        x = model.leader.quantile_array(u)
        y = model.runner_up.quantile_array(v)
        return x, y, u, v

    return run_chunks(
        draw,
        n,
        seed=seed,
        margin_threshold=margin_threshold,
        workers=workers,
        keep_samples=keep_samples,
        intervals=(model.leader_interval, model.runner_up_interval),
    )


def _as_cdf(fx) -> Callable[[float], float]:
    """Accept a plain CDF callable or a marginal; marginals are read with clipping
    so a share-scale law evaluates to 1 past its support."""
    if hasattr(fx, "cdf_array"):
        return lambda x: float(fx.cdf_array(np.asarray(float(x))))
    if callable(fx):
        return lambda x: float(fx(x))
    raise DomainError(f"expected a CDF callable or a marginal, got {type(fx).__name__}")


def win_prob_countermonotone(fx) -> float:
    """P(X > Y) when Y = 1 - X, i.e. P(X > 1/2) = 1 - F_X(1/2)."""
    return 1.0 - _as_cdf(fx)(0.5)


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")
    return delta


@dataclass(frozen=True)
class GDeltaCoupling:
    """Y = g_delta(X): rises with slope (1 - delta)/delta on [0, delta], then 1 - x."""

    delta: float
    x_marginal: Marginal

    def __post_init__(self):
        object.__setattr__(self, "delta", _check_delta(self.delta))

    def apply(self, x):
        return g_delta_apply_array(x, self.delta)

    def induced_cdf(self, y: float) -> float:
        return g_delta_induced_cdf(y, self.delta, self.x_marginal)

    def win_probability(self) -> float:
        return win_prob_g_delta(self.delta, self.x_marginal)

    def gamma_star(self) -> float:
        return gamma_star(self.delta, self.x_marginal)

    def as_dict(self) -> dict:
        return {"delta": self.delta, "x_marginal": self.x_marginal.as_dict()}


def g_delta_apply_array(x, delta: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(x <= delta, (1.0 - delta) / delta * x, 1.0 - x)


def g_delta_apply(x: float, delta: float) -> float:
    delta = _check_delta(delta)
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x!r}")
    if x <= delta:
        return (1.0 - delta) / delta * x
    return 1.0 - x


def g_delta_induced_cdf(y: float, delta: float, fx) -> float:
    """F_Y(y) = F_X(delta y / (1 - delta)) + 1 - F_X(1 - y) for Y = g_delta(X)."""
    delta = _check_delta(delta)
    y = float(y)
    if not 0.0 <= y <= 1.0 - delta:
        raise DomainError(f"y must lie in [0, 1 - delta] = [0, {1.0 - delta}], got {y!r}")
    cdf = _as_cdf(fx)
    value = cdf(delta * y / (1.0 - delta)) + 1.0 - cdf(1.0 - y)
    return min(1.0, max(0.0, value))


def _induced_cdf_array(y: np.ndarray, delta: float, fx: Marginal) -> np.ndarray:
    value = fx.cdf_array(delta * y / (1.0 - delta)) + 1.0 - fx.cdf_array(1.0 - y)
    return np.clip(value, 0.0, 1.0)


def win_prob_g_delta(delta: float, fx) -> float:
    """1 for delta >= 1/2, otherwise P(X > 1/2) = 1 - F_X(1/2)."""
    delta = _check_delta(delta)
    if delta >= 0.5:
        return 1.0
    return 1.0 - _as_cdf(fx)(0.5)


def gamma_star(delta: float, fx) -> float:
    """1 - F_Y(1/2) for Y = g_delta(X); zero once 1/2 lies past Y's support."""
    delta = _check_delta(delta)
    if 0.5 > 1.0 - delta:
        return 0.0
    return 1.0 - g_delta_induced_cdf(0.5, delta, fx)


def simulate_g_delta(
    coupling: GDeltaCoupling,
    n: int,
    seed: int | None = None,
    margin_threshold: float = DEFAULT_MARGIN,
    workers: int | None = None,
    keep_samples: int = 0,
) -> SimulationResult:
    """Push X ~ x_marginal through g_delta and tally the pairs like `simulate`."""
    delta, fx = coupling.delta, coupling.x_marginal

    def draw(rng: np.random.Generator, size: int):
        u = rng.random(size)
        x = fx.quantile_array(u)
        y = g_delta_apply_array(x, delta)
        return x, y, u, _induced_cdf_array(y, delta, fx)

    return run_chunks(draw, n, seed=seed, margin_threshold=margin_threshold, workers=workers, keep_samples=keep_samples)


def simulate_countermonotone(
    fx: Marginal,
    n: int,
    seed: int | None = None,
    margin_threshold: float = DEFAULT_MARGIN,
    workers: int | None = None,
    keep_samples: int = 0,
) -> SimulationResult:
    """Lower-bound coupling Y = 1 - X. y is taken from x, not from a reflected
    quantile at 1 - u, so every pair keeps x + y = 1 up to one rounding."""

    def draw(rng: np.random.Generator, size: int):
        u = rng.random(size)
        x = fx.quantile_array(u)
        return x, 1.0 - x, u, 1.0 - u

    return run_chunks(draw, n, seed=seed, margin_threshold=margin_threshold, workers=workers, keep_samples=keep_samples)
