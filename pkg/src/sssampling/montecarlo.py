"""Importance-sampling estimates from scored draws, and MCMC by sequential constraining.

A draw with proposal log-probability ``log_q`` gets the unnormalised
log-weight ``-beta * E(y) - log_q``. The weights give self-normalised
expectations and an unbiased estimate of the partition function.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from . import states
from .branching import BranchRule
from .heuristic import Heuristic, HeuristicRequest, request_seed, run_constrained
from .ising import IsingModel, energy
from .sampler import DrawResult, SamplerParams, binary_estimate


@dataclass(frozen=True)
class WeightedSample:
    state: np.ndarray
    log_q: float
    log_pi_tilde: float
    log_w: float


def weigh(draws: Sequence[DrawResult], model: IsingModel, beta: float) -> list[WeightedSample]:
    out = []
    for d in draws:
        log_pi = -beta * energy(model, d.state)
        log_w = log_pi - d.log_q
        if not np.isfinite(log_w):
            raise ValueError(f"non-finite importance weight for state {states.to_string(d.state)}")
        out.append(WeightedSample(d.state, d.log_q, log_pi, log_w))
    return out


def _log_weights(samples) -> np.ndarray:
    if len(samples) == 0:
        raise ValueError("need at least one sample")
    return np.array([s.log_w for s in samples])


def estimate_expectation(samples: Sequence[WeightedSample], h: Callable[[np.ndarray], float]) -> float:
    """Self-normalised importance estimate of the mean of ``h``."""
    lw = _log_weights(samples)
    w = np.exp(lw - lw.max())
    values = np.array([h(s.state) for s in samples], dtype=float)
    return float(w @ values / w.sum())


class LogZEstimate(NamedTuple):
    """Mean weight and the standard error of that mean, both as logs."""

    log_z: float
    log_se: float

    @property
    def relative_se(self) -> float:
        return float(np.exp(self.log_se - self.log_z))


def estimate_logz(samples: Sequence[WeightedSample]) -> LogZEstimate:
    """Log of the mean unnormalised weight.

    The mean itself is unbiased for Z; its log is not. The error bar is the
    sample standard deviation of the weights over sqrt(n).
    """
    lw = _log_weights(samples)
    n = len(lw)
    log_z = float(logsumexp(lw) - np.log(n))
    if n < 2:
        return LogZEstimate(log_z, float("inf"))
    shift = lw.max()
    w = np.exp(lw - shift)
    sd = w.std(ddof=1)
    with np.errstate(divide="ignore"):
        log_se = float(np.log(sd) - 0.5 * np.log(n) + shift)
    return LogZEstimate(log_z, log_se)


def weight_diagnostics(samples: Sequence[WeightedSample]) -> dict:
    """Normalised weight variance ``Var[w] / mean(w)**2`` and the Kish effective sample size."""
    lw = _log_weights(samples)
    if len(lw) < 2:
        raise ValueError("need at least two samples")
    w = np.exp(lw - lw.max())
    variance = float(w.var() / w.mean() ** 2)
    return {"variance": variance, "ess": len(lw) / (1.0 + variance)}


@dataclass(frozen=True)
class McmcState:
    state: np.ndarray
    log_pi: float
    steps: int = 0
    accepted: int = 0
    requests: int = 0

    @classmethod
    def start(cls, model: IsingModel, state, beta: float) -> "McmcState":
        state = states.check_spins(state, model.m)
        return cls(state.copy(), -beta * energy(model, state))

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0


def acceptance_probability(log_pi_x: float, log_pi_y: float, log_q_x: float, log_q_y: float) -> float:
    """``min(1, pi(y) q(x) / (pi(x) q(y)))`` from logs."""
    log_ratio = (log_pi_y - log_pi_x) + (log_q_x - log_q_y)
    return float(np.exp(min(0.0, log_ratio)))


def mcmc_step(
    chain: McmcState,
    model: IsingModel,
    heuristic: Heuristic,
    params: SamplerParams,
    rng: np.random.Generator,
    rule: BranchRule | None = None,
) -> McmcState:
    """One Metropolis-Hastings move with a sequential-constraining proposal.

    The proposal is built spin by spin from fresh populations clamped to the
    proposal's prefix. The reverse probability of the current state is
    scored along the same variable order from fresh populations clamped to
    the current state's prefix.
    """
    if heuristic.state_dependent:
        raise NotImplementedError("heuristics that condition on the chain state are not supported")
    rule = rule or BranchRule(model, params.branch_rule)
    x = chain.state
    counter = chain.requests

    def population(constraint):
        nonlocal counter
        seed = request_seed(params.seed, counter)
        counter += 1
        return run_constrained(heuristic, model, HeuristicRequest(constraint, params.n, seed))

    y = states.unconstrained(model.m)
    order = []
    log_q_y = 0.0
    for _ in range(model.m):
        var = rule.choose(y, rng)
        order.append(var)
        p_plus = binary_estimate(population(y), var, model, params)
        value = 1 if rng.random() < p_plus else -1
        log_q_y += float(np.log(p_plus if value > 0 else 1.0 - p_plus))
        y[var] = value

    prefix = states.unconstrained(model.m)
    log_q_x = 0.0
    for var in order:
        p_plus = binary_estimate(population(prefix), var, model, params)
        log_q_x += float(np.log(p_plus if x[var] > 0 else 1.0 - p_plus))
        prefix[var] = x[var]

    log_pi_y = -params.beta * energy(model, y)
    accept = rng.random() < acceptance_probability(chain.log_pi, log_pi_y, log_q_x, log_q_y)
    if accept:
        return McmcState(y, log_pi_y, chain.steps + 1, chain.accepted + 1, counter)
    return replace(chain, steps=chain.steps + 1, requests=counter)


@dataclass(frozen=True)
class BoltzmannFit:
    """How far scored draws sit from the line ``log q = -beta * E - log Z``.

    ``residual_sd`` is the spread of ``log q`` about that line; it does not
    depend on ``log_z``, which only shifts the residual mean.
    """

    slope: float
    intercept: float
    fitted_slope: float
    fitted_intercept: float
    residual_mean: float
    residual_sd: float


def boltzmann_fit(energies, log_q, beta: float, log_z: float) -> BoltzmannFit:
    energies = np.asarray(energies, dtype=float)
    log_q = np.asarray(log_q, dtype=float)
    if len(energies) != len(log_q) or len(energies) < 2:
        raise ValueError("need at least two (energy, log_q) pairs")
    resid = log_q - (-beta * energies - log_z)
    if np.ptp(energies) > 0:
        fitted_slope, fitted_intercept = np.polyfit(energies, log_q, 1)
    else:
        fitted_slope, fitted_intercept = float("nan"), float(log_q.mean())
    return BoltzmannFit(
        -beta, -log_z, float(fitted_slope), float(fitted_intercept), float(resid.mean()), float(resid.std(ddof=1))
    )
