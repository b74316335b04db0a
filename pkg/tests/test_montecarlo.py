import math

import numpy as np
import pytest

from sssampling import ising, states
from sssampling.heuristic import ExactSampler, Heuristic, SaSchedule, SimulatedAnnealing
from sssampling.montecarlo import (
    McmcState,
    acceptance_probability,
    boltzmann_fit,
    estimate_expectation,
    estimate_logz,
    mcmc_step,
    weigh,
    weight_diagnostics,
)
from sssampling.sampler import DrawResult, SamplerParams, StateSpaceSampler, draw

from test_sampler import full_tree


def result(text, log_q):
    return DrawResult(states.from_string(text), log_q, 0)


def test_weigh_single_spin():
    model = ising.IsingModel(m=1, h=[0.5], topology="independent")
    (s,) = weigh([result("+", math.log(0.25))], model, 2.0)
    assert s.log_pi_tilde == pytest.approx(-1.0)
    assert s.log_w == pytest.approx(-1.0 - math.log(0.25))


def test_weigh_rejects_impossible_proposals():
    model = ising.IsingModel(m=1, h=[0.5], topology="independent")
    with pytest.raises(ValueError):
        weigh([result("+", -math.inf)], model, 1.0)


def test_exact_proposal_gives_constant_weights():
    model = ising.IsingModel(m=1, h=[0.5], topology="independent")
    log_z = ising.exact_logz_independent(model, 1.0)
    draws = [result("+", -0.5 - log_z), result("-", 0.5 - log_z), result("-", 0.5 - log_z)]
    samples = weigh(draws, model, 1.0)
    est = estimate_logz(samples)
    assert est.log_z == pytest.approx(log_z, abs=1e-12)
    assert est.relative_se < 1e-12
    diag = weight_diagnostics(samples)
    assert diag["variance"] == pytest.approx(0.0, abs=1e-24) and diag["ess"] == pytest.approx(3.0)
    assert estimate_expectation(samples, lambda y: y[0]) == pytest.approx(-1 / 3)


def test_logz_of_hand_weights():
    model = ising.IsingModel(m=1, h=[0.0], topology="independent")
    samples = weigh([result("+", -math.log(2.0)), result("+", -math.log(4.0))], model, 1.0)
    est = estimate_logz(samples)
    assert est.log_z == pytest.approx(math.log(3.0))
    assert math.exp(est.log_se) == pytest.approx(math.sqrt(2.0) / math.sqrt(2.0))
    assert est.relative_se == pytest.approx(1 / 3)
    single = estimate_logz(samples[:1])
    assert single.log_se == math.inf
    with pytest.raises(ValueError):
        estimate_logz([])
    with pytest.raises(ValueError):
        weight_diagnostics(samples[:1])


def test_diagnostics_of_one_dominant_weight():
    model = ising.IsingModel(m=1, h=[0.0], topology="independent")
    draws = [result("+", 0.0)] * 99 + [result("+", -200.0)]
    diag = weight_diagnostics(weigh(draws, model, 1.0))
    assert diag["variance"] == pytest.approx(99.0, rel=1e-9)
    assert diag["ess"] == pytest.approx(1.0, rel=1e-9)


def test_weight_variance_matches_enumeration():
    model = ising.generate_problem("chain", 8, 2)
    enum = ising.enumerate_distribution(model, 0.3)
    pop_idx = np.random.default_rng(0).choice(len(enum.probabilities), size=500, p=enum.probabilities)
    # every state keeps a real count, so weights stay bounded and the sample variance settles
    counts = np.bincount(pop_idx, minlength=len(enum.probabilities)) + 2
    # full_tree splits spins in index order with + on the left, the enumeration's row order
    tree, leaves = full_tree(8, counts)
    q = np.exp([leaf.logq for leaf in leaves])
    exact = float(np.sum(enum.probabilities**2 / q) - 1.0)
    rng = np.random.default_rng(1)
    draws = [draw(tree, model, None, SamplerParams(), rng) for _ in range(20_000)]
    diag = weight_diagnostics(weigh(draws, model, 0.3))
    assert diag["variance"] == pytest.approx(exact, rel=0.05)


def test_chain_energy_expectation():
    model = ising.generate_problem("chain", 8, 5)
    enum = ising.enumerate_distribution(model, 1.0)
    exact = float(enum.probabilities @ ising.energy(model, enum.states))
    sss = StateSpaceSampler(model, ExactSampler(1.0), SamplerParams(n=300, theta=0.05, max_tree_size=31, seed=3))
    samples = weigh(sss.draws(1500), model, 1.0)
    e = np.array([ising.energy(model, s.state) for s in samples])
    est = estimate_expectation(samples, lambda y: ising.energy(model, y))
    lw = np.array([s.log_w for s in samples])
    w = np.exp(lw - lw.max())
    w /= w.sum()
    se = math.sqrt(np.sum(w**2 * (e - est) ** 2))
    assert abs(est - exact) <= 3 * se + 1e-9


def test_logz_error_bars_cover_on_small_dense_models():
    covered = 0
    runs = 12
    heur = SimulatedAnnealing(SaSchedule(0.05, 0.5, 5))
    for seed in range(runs):
        model = ising.random_model(10, 100 + seed)
        log_z = float(np.log(np.sum(np.exp(-0.5 * ising.energy(model, ising.all_states(10))))))
        params = SamplerParams(n=200, theta=0.05, beta=0.5, max_tree_size=63, seed=seed)
        sss = StateSpaceSampler(model, heur, params)
        est = estimate_logz(weigh(sss.draws(200), model, 0.5))
        # relative error bar in Z is an absolute bar in log Z, to first order
        covered += abs(est.log_z - log_z) <= 3 * est.relative_se
    assert covered >= runs - 2


def test_acceptance_probability():
    assert acceptance_probability(-1.0, -1.0 + math.log(0.5), 0.0, 0.0) == pytest.approx(0.5)
    assert acceptance_probability(-3.0, -1.0, -1.0, -2.0) == 1.0
    assert acceptance_probability(0.0, 0.0, -5.0, -5.0 + math.log(4.0)) == pytest.approx(0.25)


def test_mcmc_with_exact_heuristic_almost_always_accepts():
    model = ising.generate_problem("chain", 6, 4)
    params = SamplerParams(n=2000, seed=3)
    rng = np.random.default_rng(3)
    chain = McmcState.start(model, states.from_string("++++++"), 1.0)
    for _ in range(150):
        chain = mcmc_step(chain, model, ExactSampler(1.0), params, rng)
    assert chain.steps == 150
    assert chain.requests == 150 * 2 * model.m
    assert chain.acceptance_rate >= 0.9
    assert chain.log_pi == pytest.approx(-ising.energy(model, chain.state))


def test_mcmc_refuses_state_dependent_heuristics():
    class Tracking(Heuristic):
        state_dependent = True

        def populate(self, model, constraint, n, rng):
            raise AssertionError("never called")

    model = ising.generate_problem("chain", 3, 0)
    chain = McmcState.start(model, states.from_string("+++"), 1.0)
    with pytest.raises(NotImplementedError):
        mcmc_step(chain, model, Tracking(), SamplerParams(n=5), np.random.default_rng(0))


def test_mcmc_start_validates_state():
    model = ising.generate_problem("chain", 3, 0)
    with pytest.raises(ValueError):
        McmcState.start(model, states.from_string("+.+"), 1.0)
    assert McmcState.start(model, states.from_string("+-+"), 1.0).acceptance_rate == 0.0


def test_boltzmann_fit_on_exact_scores():
    model = ising.generate_problem("chain", 6, 1)
    enum = ising.enumerate_distribution(model, 0.7)
    log_z = ising.exact_logz_chain(model, 0.7)
    e = ising.energy(model, enum.states)
    fit = boltzmann_fit(e, np.log(enum.probabilities), 0.7, log_z)
    assert fit.slope == -0.7 and fit.intercept == -log_z
    assert fit.fitted_slope == pytest.approx(-0.7) and fit.fitted_intercept == pytest.approx(-log_z)
    assert abs(fit.residual_mean) < 1e-10 and fit.residual_sd < 1e-10
    shifted = boltzmann_fit(e, np.log(enum.probabilities) + 0.3, 0.7, log_z)
    assert shifted.residual_mean == pytest.approx(0.3) and shifted.residual_sd < 1e-10
    with pytest.raises(ValueError):
        boltzmann_fit([1.0], [0.0], 1.0, 0.0)
