"""Importance sampling and MCMC from constrained stochastic heuristics over Ising spins."""

from .branching import BranchRule, bisection_order
from .estimator import bayes_estimate, posterior_kl_loss, robust_alphas, worst_case_kl
from .heuristic import ExactSampler, SaSchedule, SimulatedAnnealing, make_heuristic
from .ising import IsingModel, energy, enumerate_distribution, exact_logz_chain, exact_logz_independent, generate_problem
from .montecarlo import McmcState, estimate_expectation, estimate_logz, mcmc_step, weigh, weight_diagnostics
from .sampler import DrawResult, SamplerParams, StateSpaceSampler, draw, scp_basic
from .sstree import SubcubeTree, extend_tree

__version__ = "0.1.0"

__all__ = [
    "BranchRule",
    "DrawResult",
    "ExactSampler",
    "IsingModel",
    "McmcState",
    "SaSchedule",
    "SamplerParams",
    "SimulatedAnnealing",
    "StateSpaceSampler",
    "SubcubeTree",
    "bayes_estimate",
    "bisection_order",
    "draw",
    "energy",
    "enumerate_distribution",
    "estimate_expectation",
    "estimate_logz",
    "exact_logz_chain",
    "exact_logz_independent",
    "extend_tree",
    "generate_problem",
    "make_heuristic",
    "mcmc_step",
    "posterior_kl_loss",
    "robust_alphas",
    "scp_basic",
    "weigh",
    "weight_diagnostics",
    "worst_case_kl",
]
