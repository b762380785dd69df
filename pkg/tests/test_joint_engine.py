import math

import numpy as np
import pytest
from scipy import stats

from utils.beta_dist import BetaParams, UnitBetaMarginal, beta_with_cdf_at_half
from utils.copulas import CopulaSpec, calibrate_to_spearman, spearman_rho
from utils.errors import DomainError, SimplexViolationError
from utils.joint_engine import (
    CHUNK_SIZE,
    GDeltaCoupling,
    JointModel,
    g_delta_apply,
    g_delta_apply_array,
    g_delta_induced_cdf,
    gamma_star,
    run_chunks,
    simulate,
    simulate_countermonotone,
    simulate_g_delta,
    win_prob_countermonotone,
    win_prob_g_delta,
)
from utils.marginal_fit import Interval, fit_marginal

LEADER = Interval(0.32, 0.38, 0.95)
RUNNER_UP = Interval(0.265, 0.325, 0.95)


def _model(copula, runner_up=RUNNER_UP):
    return JointModel(
        leader=fit_marginal(LEADER).marginal,
        runner_up=fit_marginal(runner_up).marginal,
        copula=copula,
        leader_interval=LEADER,
        runner_up_interval=runner_up,
    )


def test_same_seed_same_result():
    model = _model(calibrate_to_spearman("frank", -0.5))
    a = simulate(model, 100_000, seed=666)
    b = simulate(model, 100_000, seed=666)
    assert a == b


def test_worker_count_does_not_change_result():
    model = _model(calibrate_to_spearman("gaussian", 0.3))
    n = 3 * CHUNK_SIZE + 17
    serial = simulate(model, n, seed=777, workers=1, keep_samples=CHUNK_SIZE + 5)
    threaded = simulate(model, n, seed=777, workers=4, keep_samples=CHUNK_SIZE + 5)
    assert serial == threaded
    assert np.array_equal(serial.samples, threaded.samples)


def test_different_seeds_differ():
    model = _model(CopulaSpec.independence())
    assert simulate(model, 50_000, seed=1).win_probability != simulate(model, 50_000, seed=2).win_probability


def test_result_fields():
    model = _model(calibrate_to_spearman("frank", 0.0))
    r = simulate(model, 200_000, seed=20060702)
    assert r.samples_in_simplex == r.n == 200_000
    assert r.win_std_error == pytest.approx(math.sqrt(r.win_probability * (1 - r.win_probability) / r.n))
    assert r.win_probability == pytest.approx(0.9944, abs=0.003)
    assert 0.0 <= r.margin_probability <= 1.0
    assert r.leader_coverage == pytest.approx(0.95, abs=0.005)
    assert r.runner_up_coverage == pytest.approx(0.95, abs=0.005)
    assert r.samples is None


def test_kept_samples_lie_in_the_simplex():
    r = simulate(_model(calibrate_to_spearman("frank", 0.9)), 10_000, seed=3, keep_samples=1000)
    x, y = r.samples[:, 0], r.samples[:, 1]
    assert r.samples.shape == (1000, 2)
    assert np.all((y >= 0) & (y <= 1) & (x >= 0) & (x <= 1 - y))


def test_win_probability_rises_with_dependence():
    wins = [simulate(_model(calibrate_to_spearman("frank", rho)), 200_000, seed=11).win_probability
            for rho in (-0.9, -0.5, 0.0, 0.6, 0.9)]
    assert wins == sorted(wins)
    assert wins[0] == pytest.approx(0.9713, abs=0.003)
    assert wins[1] == pytest.approx(0.9854, abs=0.003)


@pytest.mark.parametrize("family, rho", [("frank", -0.5), ("gaussian", -0.6), ("gaussian", 0.9)])
def test_empirical_spearman_matches_copula(family, rho):
    copula = calibrate_to_spearman(family, rho)
    r = simulate(_model(copula), 200_000, seed=5)
    assert r.empirical_spearman == pytest.approx(spearman_rho(copula), abs=0.01)


def test_empirical_spearman_agrees_with_rank_correlation_of_the_pairs():
    r = simulate(_model(calibrate_to_spearman("gaussian", -0.6)), 50_000, seed=8, keep_samples=50_000)
    ranked = stats.spearmanr(r.samples[:, 0], r.samples[:, 1]).correlation
    assert r.empirical_spearman == pytest.approx(ranked, abs=0.01)


def test_tiny_overlap_shift_barely_moves_win_probability():
    copula = calibrate_to_spearman("frank", -0.5)
    overlap = Interval(0.2601, 0.3201, 0.95)
    gap = Interval(0.2599, 0.3199, 0.95)
    a = simulate(_model(copula, overlap), 200_000, seed=9).win_probability
    b = simulate(_model(copula, gap), 200_000, seed=9).win_probability
    assert abs(a - b) < 0.002


def test_margin_counts_use_the_threshold():
    model = _model(calibrate_to_spearman("gaussian", -0.6))
    narrow = simulate(model, 50_000, seed=4, margin_threshold=0.001)
    wide = simulate(model, 50_000, seed=4, margin_threshold=0.05)
    assert narrow.margin_probability < wide.margin_probability
    assert narrow.win_probability == wide.win_probability


@pytest.mark.parametrize("kwargs", [{"n": 0}, {"n": 2.5}, {"seed": -1}, {"seed": 2**64}, {"margin_threshold": 0.0}, {"workers": 0}])
def test_run_arguments_are_checked(kwargs):
    args = {"n": 100, "seed": 1, **kwargs}
    with pytest.raises(DomainError):
        simulate(_model(CopulaSpec.independence()), **args)


def test_pairs_outside_the_simplex_abort():
    def draw(rng, size):
        u = rng.random(size)
        return np.full(size, 0.8), np.full(size, 0.5), u, u

    with pytest.raises(SimplexViolationError) as err:
        run_chunks(draw, 1000, seed=1)
    assert err.value.count == 1000
    assert err.value.pair == (0.8, 0.5)


def test_ties_are_not_wins():
    def draw(rng, size):
        u = rng.random(size)
        return np.full(size, 0.3), np.full(size, 0.3), u, u

    assert run_chunks(draw, 100, seed=1).win_probability == 0.0


def test_countermonotone_uniform():
    assert win_prob_countermonotone(UnitBetaMarginal.uniform()) == pytest.approx(0.5)
    assert win_prob_countermonotone(lambda x: x) == pytest.approx(0.5)


@pytest.mark.parametrize("gamma", [0.0001, 0.3])
def test_countermonotone_win_is_one_minus_gamma(gamma):
    assert win_prob_countermonotone(beta_with_cdf_at_half(gamma)) == pytest.approx(1 - gamma, abs=1e-12)


def test_countermonotone_agrees_with_simulation_across_marginals():
    rng = np.random.default_rng(2024)
    for i in range(20):
        fx = UnitBetaMarginal(BetaParams(*rng.uniform(0.8, 12.0, size=2)))
        exact = win_prob_countermonotone(fx)
        mc = simulate_countermonotone(fx, 100_000, seed=i)
        se = math.sqrt(max(exact * (1 - exact), 1e-12) / mc.n)
        assert abs(mc.win_probability - exact) <= 4 * se + 1e-12


def test_g_delta_map():
    assert g_delta_apply(0.4, 0.4) == pytest.approx(0.6)
    assert g_delta_apply(0.4 + 1e-12, 0.4) == pytest.approx(0.6)
    assert g_delta_apply(1.0, 0.4) == 0.0
    assert g_delta_apply(0.3, 0.4) == pytest.approx(0.45)
    assert np.allclose(g_delta_apply_array([0.0, 0.3, 1.0], 0.4), [0.0, 0.45, 0.0])


@pytest.mark.parametrize("args", [(1.2, 0.4), (0.5, 0.0), (0.5, 1.0)])
def test_g_delta_domain(args):
    with pytest.raises(DomainError):
        g_delta_apply(*args)


@pytest.mark.parametrize("delta", [0.2, 0.5, 0.7])
def test_uniform_x_gives_uniform_y(delta):
    fx = UnitBetaMarginal.uniform()
    for y in np.linspace(0.0, 1.0 - delta, 7):
        assert g_delta_induced_cdf(y, delta, fx) == pytest.approx(y / (1 - delta), abs=1e-12)
    assert g_delta_induced_cdf(1 - delta, delta, fx) == pytest.approx(1.0)
    assert g_delta_induced_cdf(0.0, delta, fx) == 0.0


def test_g_delta_pushes_uniform_onto_uniform_sample():
    rng = np.random.default_rng(8)
    y = g_delta_apply_array(rng.random(100_000), 0.3)
    assert stats.kstest(y, "uniform", args=(0.0, 0.7)).statistic <= 0.01


def test_induced_cdf_domain():
    with pytest.raises(DomainError):
        g_delta_induced_cdf(0.8, 0.3, UnitBetaMarginal.uniform())


def test_g_delta_win_probability():
    assert win_prob_g_delta(0.6, UnitBetaMarginal.uniform()) == 1.0
    assert win_prob_g_delta(0.5, beta_with_cdf_at_half(0.3)) == 1.0
    assert win_prob_g_delta(0.3, UnitBetaMarginal.uniform()) == pytest.approx(0.5)
    assert win_prob_g_delta(0.3, beta_with_cdf_at_half(0.0001)) == pytest.approx(0.9999, abs=1e-12)


@pytest.mark.parametrize("gamma, delta", [(0.0001, 0.3), (0.3, 0.2), (0.3, 0.6), (0.5, 0.45)])
def test_g_delta_agrees_with_simulation(gamma, delta):
    coupling = GDeltaCoupling(delta, beta_with_cdf_at_half(gamma))
    exact = coupling.win_probability()
    mc = simulate_g_delta(coupling, 100_000, seed=21)
    se = math.sqrt(max(exact * (1 - exact), 1e-12) / mc.n)
    assert abs(mc.win_probability - exact) <= 4 * se + 1e-12
    assert mc.samples_in_simplex == mc.n


def test_gamma_star():
    fx = UnitBetaMarginal.uniform()
    assert gamma_star(0.6, fx) == 0.0
    assert gamma_star(0.3, fx) == pytest.approx(1 - 0.5 / 0.7)
    assert GDeltaCoupling(0.3, fx).gamma_star() == pytest.approx(gamma_star(0.3, fx))
