"""Constrained stochastic heuristics.

A heuristic receives a clamping condition (a partial state) and returns a
population of full states that agree with it on every assigned spin. The
population members need not be independent; callers must not assume they
are.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import states
from .ising import (
    IsingModel,
    _splitmix64,
    chain_couplings,
    chain_forward_messages,
    is_chain,
    plus_probability,
)

_MASK64 = 0xFFFFFFFFFFFFFFFF


def request_seed(master_seed: int, counter: int) -> int:
    """Seed for the ``counter``-th heuristic request of a run.

    ``splitmix64(splitmix64(master) ^ counter)``, so request seeds depend only
    on the master seed and the request's position, never on scheduling.
    """
    return _splitmix64(_splitmix64(int(master_seed) & _MASK64) ^ (int(counter) & _MASK64))


@dataclass(frozen=True)
class SaSchedule:
    """Linear inverse-temperature ramp for simulated annealing.

    With ``n_steps == 1`` the single step runs at ``beta_end``.
    """

    beta_start: float = 0.1
    beta_end: float = 1.0
    n_steps: int = 100
    sweeps_per_step: int = 1
    order: str = "random"

    def __post_init__(self):
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start must not exceed beta_end")
        if self.n_steps < 0 or self.sweeps_per_step < 0:
            raise ValueError("step and sweep counts must be non-negative")
        if self.order not in ("random", "sequential"):
            raise ValueError(f"unknown sweep order {self.order!r}")

    def betas(self) -> np.ndarray:
        if self.n_steps == 0:
            return np.zeros(0)
        if self.n_steps == 1:
            return np.array([self.beta_end])
        return np.linspace(self.beta_start, self.beta_end, self.n_steps)


@dataclass(frozen=True)
class HeuristicRequest:
    constraint: np.ndarray
    population_size: int
    seed: int

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population size must be at least 1")


class Heuristic:
    """Base class for constrained proposal processes.

    Subclasses implement :meth:`populate`. ``state_dependent`` heuristics
    condition on a current chain state and are only usable where that
    conditioning is defined.
    """

    name = "heuristic"
    state_dependent = False

    def populate(self, model: IsingModel, constraint: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


def run_constrained(heuristic: Heuristic, model: IsingModel, request: HeuristicRequest) -> np.ndarray:
    """Run ``heuristic`` under ``request`` and return an ``(N, m)`` int8 population."""
    constraint = np.asarray(request.constraint, dtype=np.int8)
    if constraint.shape != (model.m,):
        raise ValueError(f"constraint has shape {constraint.shape}, model has {model.m} spins")
    rng = np.random.default_rng(request.seed)
    pop = np.asarray(heuristic.populate(model, constraint, request.population_size, rng), dtype=np.int8)
    if pop.ndim != 2 or pop.shape[1] != model.m or len(pop) < 1:
        raise RuntimeError(f"{heuristic.name} returned a population of shape {pop.shape}")
    if not states.matches(constraint, pop).all():
        raise RuntimeError(f"{heuristic.name} violated its clamping condition")
    return pop


class SimulatedAnnealing(Heuristic):
    """Heat-bath simulated annealing with hard clamping.

    Free spins start uniformly at random, clamped spins at their clamp value;
    only free spins are ever updated. The population is simulated in
    lockstep, sharing each sweep's visiting order.
    """

    name = "sa"

    def __init__(self, schedule: SaSchedule):
        self.schedule = schedule

    def describe(self) -> dict:
        return {"name": self.name, **dataclasses.asdict(self.schedule)}

    def populate(self, model, constraint, n, rng):
        free = states.free_variables(constraint)
        # spins x population keeps each spin's row contiguous
        y = np.repeat(constraint.astype(float)[:, None], n, axis=1)
        y[free] = np.where(rng.random((len(free), n)) < 0.5, 1.0, -1.0)
        if len(free):
            _anneal(model, y, free, self.schedule, rng)
        return y.T.astype(np.int8)


def _anneal(model: IsingModel, y: np.ndarray, free: np.ndarray, schedule: SaSchedule, rng) -> None:
    dense = model.max_degree > 16
    jmat = model.coupling_matrix if dense else None
    nbrs = model.neighbours
    h = model.h
    n = y.shape[1]
    for beta in schedule.betas():
        for _ in range(schedule.sweeps_per_step):
            order = free if schedule.order == "sequential" else rng.permutation(free)
            u = rng.random((len(order), n))
            for k, i in enumerate(order):
                if dense:
                    lam = h[i] + jmat[:, i] @ y
                else:
                    idx, J = nbrs[i]
                    lam = h[i] + J @ y[idx] if len(idx) else np.full(n, h[i])
                y[i] = np.where(u[k] < plus_probability(lam, beta), 1.0, -1.0)


def sa_sample(model: IsingModel, constraint, schedule: SaSchedule, beta_target: float, seed: int) -> np.ndarray:
    """One annealed state ending at ``beta_target``."""
    sched = dataclasses.replace(schedule, beta_end=beta_target, beta_start=min(schedule.beta_start, beta_target))
    req = HeuristicRequest(np.asarray(constraint, dtype=np.int8), 1, seed)
    return run_constrained(SimulatedAnnealing(sched), model, req)[0]


class ExactSampler(Heuristic):
    """Exact conditional Boltzmann sampler for independent and chain models."""

    name = "exact"

    def __init__(self, beta: float):
        self.beta = float(beta)

    def describe(self) -> dict:
        return {"name": self.name, "beta": self.beta}

    def populate(self, model, constraint, n, rng):
        if not model.couplings:
            return _sample_independent(model, constraint, n, self.beta, rng)
        if model.topology in ("chain", "independent") and is_chain(model):
            return _sample_chain(model, constraint, n, self.beta, rng)
        raise ValueError(f"exact sampling is only available for independent and chain models, not {model.topology}")


def _sample_independent(model, constraint, n, beta, rng):
    p_plus = plus_probability(model.h, beta)
    out = np.where(rng.random((n, model.m)) < p_plus, 1, -1).astype(np.int8)
    fixed = constraint != 0
    out[:, fixed] = constraint[fixed]
    return out


def _sample_chain(model, constraint, n, beta, rng):
    """Forward filtering, backward sampling with clamps as hard evidence."""
    a = chain_forward_messages(model, beta, clamp=constraint)
    bonds = chain_couplings(model)
    out = np.empty((n, model.m), dtype=np.int8)
    u = rng.random((model.m, n))
    last = a[-1]
    p_last = np.exp(last[0] - np.logaddexp(last[0], last[1]))
    out[:, -1] = np.where(u[-1] < p_last, 1, -1)
    for i in range(model.m - 2, -1, -1):
        nxt = out[:, i + 1].astype(float)
        lp = a[i, 0] - beta * bonds[i] * nxt
        lm = a[i, 1] + beta * bonds[i] * nxt
        p = np.exp(lp - np.logaddexp(lp, lm))
        out[:, i] = np.where(u[i] < p, 1, -1)
    return out


def exact_sample(model: IsingModel, constraint, beta: float, seed: int) -> np.ndarray:
    req = HeuristicRequest(np.asarray(constraint, dtype=np.int8), 1, seed)
    return run_constrained(ExactSampler(beta), model, req)[0]


def make_heuristic(name: str, beta: float, schedule: SaSchedule | None = None) -> Heuristic:
    if name == "exact":
        return ExactSampler(beta)
    if name == "sa":
        sched = schedule or SaSchedule(beta_end=beta)
        return SimulatedAnnealing(sched)
    raise ValueError(f"unknown heuristic {name!r}; expected 'sa' or 'exact'")
