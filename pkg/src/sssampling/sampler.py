"""Drawing scored states from a heuristic.

:func:`draw` walks a cached subcube tree from the root, extending it with
fresh heuristic populations wherever the walk reaches an incomplete leaf.
:func:`scp_basic` is the uncached reference: one fresh population per spin.
Both return the drawn state with the log of its proposal probability.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import states
from .branching import RULES, BranchRule
from .estimator import robust_alphas
from .heuristic import Heuristic, HeuristicRequest, request_seed, run_constrained
from .ising import IsingModel, local_fields, plus_probability
from .sstree import ESTIMATORS, RB_FORMS, SubcubeTree, TreeNode, extend_tree


@dataclass(frozen=True)
class SamplerParams:
    n: int = 2000
    theta: float = 0.05
    max_tree_size: int = 10**5
    count_threshold: int = 0
    beta: float = 1.0
    estimator: str = "count"
    branch_rule: str = "neighbour"
    seed: int = 0
    fresh_tree: bool = False
    rb_form: str = "branch"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("population size must be at least 1")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.max_tree_size < 3:
            raise ValueError("max tree size must be at least 3")
        if self.count_threshold < 0:
            raise ValueError("count threshold must be non-negative")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        if self.branch_rule not in RULES:
            raise ValueError(f"unknown branch rule {self.branch_rule!r}; expected one of {RULES}")
        if self.rb_form not in RB_FORMS:
            raise ValueError(f"unknown RB form {self.rb_form!r}; expected one of {RB_FORMS}")

    def replace(self, **changes) -> "SamplerParams":
        return dataclasses.replace(self, **changes)


@dataclass
class DrawResult:
    state: np.ndarray
    log_q: float
    refresh_calls: int
    fallback: bool = False


def sample_child(node: TreeNode, rng: np.random.Generator) -> TreeNode:
    if node.is_leaf:
        raise ValueError("leaves have no children to sample")
    p_left = np.exp(node.left.logq - node.logq)
    return node.left if rng.random() < p_left else node.right


def draw(
    tree: SubcubeTree,
    model: IsingModel,
    heuristic: Heuristic,
    params: SamplerParams,
    rng: np.random.Generator,
    rule: BranchRule | None = None,
) -> DrawResult:
    """One state from the tree, refreshing incomplete leaves on the way.

    If a refresh cannot split its leaf at all, the leaf's remaining spins are
    filled one at a time from that refresh's population, each scored by a
    smoothed binomial estimate, and the result is flagged.
    """
    rule = rule or BranchRule(model, params.branch_rule)
    node = tree.root
    state = tree.root_state.copy()
    calls = 0
    while True:
        if not node.is_leaf:
            child = sample_child(node, rng)
            state[node.var] = 1 if child is node.left else -1
            node = child
            continue
        if states.is_full(state):
            return DrawResult(state, node.logq, calls)
        if tree.frozen:
            raise RuntimeError("walk reached an incomplete leaf of a frozen tree")
        ext = extend_tree(tree, node, model, heuristic, params, rng, rule)
        calls += 1
        if node.is_leaf:
            state, log_q = _complete(ext.population, state, node.logq, model, params, rng, rule)
            return DrawResult(state, log_q, calls, fallback=True)


def _complete(pop, state, log_q, model, params, rng, rule):
    state = state.copy()
    rows = pop
    while not states.is_full(state):
        var = rule.choose(state, rng)
        p_plus = binary_estimate(rows, var, model, params)
        value = 1 if rng.random() < p_plus else -1
        log_q += float(np.log(p_plus if value > 0 else 1.0 - p_plus))
        state[var] = value
        rows = rows[rows[:, var] == value]
    return state, log_q


def binary_estimate(rows, var, model, params) -> float:
    """Smoothed probability that ``var`` is +1 given a matching population."""
    n_plus = int(np.sum(rows[:, var] > 0))
    alphas = robust_alphas([n_plus, len(rows) - n_plus])
    if params.estimator == "rb" and len(rows):
        mass = float(np.sum(plus_probability(local_fields(model, rows, var), params.beta)))
    else:
        mass = float(n_plus)
    return (mass + alphas[0]) / (len(rows) + 1.0)


def walk_log_q(tree: SubcubeTree, state) -> float:
    """Re-sum the log branch probabilities along ``state``'s path."""
    return tree.find_leaf(state)[1]


def scp_basic(
    model: IsingModel,
    heuristic: Heuristic,
    params: SamplerParams,
    rng: np.random.Generator,
    rule: BranchRule | None = None,
    counter: int = 0,
) -> DrawResult:
    """One state by sequential constraining, with a fresh population per spin.

    Request seeds are ``request_seed(params.seed, counter + k)`` for the k-th
    population.
    """
    rule = rule or BranchRule(model, params.branch_rule)
    state = states.unconstrained(model.m)
    log_q = 0.0
    for k in range(model.m):
        var = rule.choose(state, rng)
        seed = request_seed(params.seed, counter + k)
        pop = run_constrained(heuristic, model, HeuristicRequest(state, params.n, seed))
        p_plus = binary_estimate(pop, var, model, params)
        value = 1 if rng.random() < p_plus else -1
        log_q += float(np.log(p_plus if value > 0 else 1.0 - p_plus))
        state[var] = value
    return DrawResult(state, log_q, model.m)


class StateSpaceSampler:
    """A tree that persists across draws, with its own random stream.

    With ``params.fresh_tree`` every draw starts from a bare root; request
    seeds still never repeat.
    """

    def __init__(self, model: IsingModel, heuristic: Heuristic, params: SamplerParams, rng=None):
        self.model = model
        self.heuristic = heuristic
        self.params = params
        self.rng = rng if rng is not None else np.random.default_rng(params.seed)
        self.rule = BranchRule(model, params.branch_rule)
        self.tree = SubcubeTree(model.m, params.max_tree_size)

    def draw(self) -> DrawResult:
        if self.params.fresh_tree and self.tree.size > 1:
            requests = self.tree.requests
            self.tree = SubcubeTree(self.model.m, self.params.max_tree_size)
            self.tree.requests = requests
        return draw(self.tree, self.model, self.heuristic, self.params, self.rng, self.rule)

    def draws(self, count: int) -> list[DrawResult]:
        return [self.draw() for _ in range(count)]
