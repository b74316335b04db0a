"""Subcube trees: cached, memory-bounded models of a heuristic's distribution.

Every node stands for the subcube of states agreeing with the spins fixed on
its path from the root; its children split that subcube on one more spin
(left is +1, right is -1). Leaves partition the root subcube. Each node
stores the log-probability of reaching it from the root.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from . import states
from .branching import BranchRule
from .estimator import PartitionLoss, robust_alphas
from .heuristic import Heuristic, HeuristicRequest, request_seed, run_constrained
from .ising import IsingModel, local_fields, plus_probability

ESTIMATORS = ("count", "rb")
RB_FORMS = ("leaf", "branch")


class TreeNode:
    __slots__ = ("parent", "left", "right", "var", "count", "alpha", "logq", "refresh", "n")

    def __init__(self, parent=None, count=0, logq=0.0):
        self.parent = parent
        self.left = None
        self.right = None
        self.var = None
        self.count = count
        self.alpha = 0.0
        self.logq = logq
        self.refresh = False
        # population size drawn here, if this node is a refresh point
        self.n = 0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def is_subleaf(self) -> bool:
        return self.left is not None and self.left.is_leaf and self.right.is_leaf

    def children(self):
        return () if self.left is None else (self.left, self.right)

    def __repr__(self):
        kind = "leaf" if self.is_leaf else f"v={self.var}"
        return f"TreeNode({kind}, count={self.count}, logq={self.logq:.4f})"


class RetractionQueue:
    """Subleaves keyed by log-probability, lowest first.

    Each node is held at most once; removal is lazy. Keys are the values at
    insertion time.
    """

    def __init__(self):
        self._heap = []
        self._live = {}
        self._seq = itertools.count()

    def push(self, node: TreeNode) -> None:
        if node in self._live:
            return
        tag = next(self._seq)
        self._live[node] = tag
        heapq.heappush(self._heap, (node.logq, tag, node))

    def discard(self, node: TreeNode) -> None:
        self._live.pop(node, None)

    def pop_min(self) -> TreeNode | None:
        while self._heap:
            _, tag, node = heapq.heappop(self._heap)
            if self._live.get(node) == tag:
                del self._live[node]
                return node
        return None

    def __contains__(self, node) -> bool:
        return node in self._live

    def __len__(self) -> int:
        return len(self._live)

    def members(self) -> list[TreeNode]:
        return list(self._live)


class SubcubeTree:
    """A subcube tree over an ``m``-spin model with a node budget.

    ``root_state`` fixes spins shared by the whole tree (all free by default).
    A frozen tree is never extended.
    """

    def __init__(self, m: int, max_size: int = 10**5, root_state=None, frozen: bool = False):
        if max_size < 3:
            raise ValueError("max tree size must be at least 3")
        self.m = int(m)
        self.root_state = states.unconstrained(m) if root_state is None else np.asarray(root_state, dtype=np.int8).copy()
        if self.root_state.shape != (self.m,):
            raise ValueError("root state has the wrong length")
        self.root = TreeNode()
        self.size = 1
        self.max_size = int(max_size)
        self.queue = RetractionQueue()
        self.frozen = frozen
        self.requests = 0

    def partial_state(self, node: TreeNode) -> np.ndarray:
        sigma = self.root_state.copy()
        while node.parent is not None:
            parent = node.parent
            sigma[parent.var] = 1 if node is parent.left else -1
            node = parent
        return sigma

    def branch(self, node: TreeNode, var: int, n_plus: int, n_minus: int) -> None:
        if not node.is_leaf:
            raise ValueError("only leaves can be branched")
        node.var = int(var)
        node.left = TreeNode(node, n_plus)
        node.right = TreeNode(node, n_minus)
        self.size += 2

    def prune(self, node: TreeNode) -> None:
        """Delete the two leaf children of a subleaf, pooling their counts."""
        if not node.is_subleaf:
            raise ValueError("only subleaves can be pruned")
        node.count = node.left.count + node.right.count
        node.alpha = node.left.alpha + node.right.alpha
        node.left = node.right = node.var = None
        self.size -= 2

    def nodes(self, start: TreeNode | None = None):
        stack = [start or self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def leaves(self, start: TreeNode | None = None):
        return (node for node in self.nodes(start) if node.is_leaf)

    def find_leaf(self, state) -> tuple[TreeNode, float]:
        """Leaf containing ``state`` and the summed log branch probabilities on its path."""
        node, total = self.root, 0.0
        while not node.is_leaf:
            child = node.left if state[node.var] > 0 else node.right
            total += child.logq - node.logq
            node = child
        return node, total + self.root.logq

    def dump(self) -> str:
        """Indented text rendering: partial state, branch variable, count, alpha, logQ."""
        lines = []

        def visit(node, depth):
            var = "-" if node.var is None else str(node.var)
            mark = " *" if node.refresh else ""
            lines.append(
                f"{'  ' * depth}{states.to_string(self.partial_state(node))} v={var} "
                f"n={node.count} alpha={node.alpha:.6g} logQ={node.logq:.6f}{mark}"
            )
            for child in node.children():
                visit(child, depth + 1)

        visit(self.root, 0)
        return "\n".join(lines)


@dataclass
class Extension:
    """What one refresh did: the population drawn and the accepted partition."""

    population: np.ndarray
    counts: np.ndarray
    alphas: np.ndarray
    kl: float
    branches: int


def set_tree_ps(node: TreeNode, n: int, logq_r: float) -> None:
    """Count-based log-probabilities over the subtree under ``node``."""
    log_denom = np.log1p(n)
    for child in _post_order(node):
        if child.is_leaf:
            with np.errstate(divide="ignore"):
                child.logq = float(np.log(child.count + child.alpha) - log_denom + logq_r)
        else:
            child.logq = float(np.logaddexp(child.left.logq, child.right.logq))


def _post_order(node: TreeNode):
    out, stack = [], [node]
    while stack:
        cur = stack.pop()
        out.append(cur)
        stack.extend(cur.children())
    return reversed(out)


def update_retraction_queue(subtree_root: TreeNode, tree: SubcubeTree) -> None:
    stack = [subtree_root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        if node.is_subleaf:
            tree.queue.push(node)
        else:
            stack.extend(node.children())


def retract_worst_subleaf(tree: SubcubeTree, protected: TreeNode | None = None, room: int = 0) -> bool:
    """Make sure ``room`` more nodes fit, deleting the least probable subleaf's children if needed.

    Returns False when the budget is exceeded and no subleaf is queued.
    """
    if tree.size + room <= tree.max_size:
        return True
    node = tree.queue.pop_min()
    if node is None:
        return False
    tree.prune(node)
    parent = node.parent
    if parent is not None and parent is not protected and parent.is_subleaf:
        tree.queue.push(parent)
    return True


def extend_tree(
    tree: SubcubeTree,
    leaf: TreeNode,
    model: IsingModel,
    heuristic: Heuristic,
    params,
    rng: np.random.Generator,
    rule: BranchRule | None = None,
) -> Extension:
    """Refresh at ``leaf``: draw a constrained population and grow a subtree from it.

    The most populated eligible leaf is split first. Growth stops at the
    first split that would raise the worst-case posterior KL loss above
    ``params.theta``, when the frontier empties, or when no room can be made.
    """
    if not leaf.is_leaf:
        raise ValueError("extension must start at a leaf")
    sigma = tree.partial_state(leaf)
    if states.is_full(sigma):
        raise ValueError("cannot extend a leaf that is a single state")
    rule = rule or BranchRule(model, params.branch_rule)
    parent = leaf.parent
    # the leaf is on the current draw path, so its parent must survive
    if parent is not None:
        tree.queue.discard(parent)

    seed = request_seed(params.seed, tree.requests)
    tree.requests += 1
    pop = run_constrained(heuristic, model, HeuristicRequest(sigma, params.n, seed))
    n = len(pop)
    leaf.refresh = True
    leaf.n = n
    leaf.count = n

    members = {leaf: np.arange(n)}
    partial = {leaf: sigma}
    partition = PartitionLoss(n)
    kl = 0.0
    order = itertools.count()
    frontier = [(-n, next(order), leaf)]
    branches = 0
    while frontier:
        if not retract_worst_subleaf(tree, protected=parent, room=2):
            break
        _, _, node = heapq.heappop(frontier)
        var = rule.choose(partial[node], rng)
        idx = members[node]
        col = pop[idx, var]
        plus, minus = idx[col > 0], idx[col < 0]
        loss = partition.trial(len(idx), len(plus))
        if loss > params.theta:
            break
        partition.split(len(idx), len(plus))
        tree.branch(node, var, len(plus), len(minus))
        branches += 1
        kl = loss
        for child, rows, value in ((node.left, plus, 1), (node.right, minus, -1)):
            child_state = partial[node].copy()
            child_state[var] = value
            members[child] = rows
            partial[child] = child_state
            if len(rows) > params.count_threshold and not states.is_full(child_state):
                heapq.heappush(frontier, (-len(rows), next(order), child))

    cells = list(tree.leaves(leaf))
    counts = [cell.count for cell in cells]
    alphas = robust_alphas(counts)
    for cell, a in zip(cells, alphas):
        cell.alpha = float(a)
    if params.estimator == "rb":
        _set_rb_ps(leaf, n, leaf.logq, pop, members, model, params)
    else:
        set_tree_ps(leaf, n, leaf.logq)
    update_retraction_queue(leaf, tree)
    if leaf.is_leaf and parent is not None and parent.is_subleaf:
        tree.queue.push(parent)
    return Extension(pop, np.asarray(counts, dtype=float), alphas, kl, branches)


def _set_rb_ps(root, n, logq_r, pop, members, model, params) -> None:
    """Rao-Blackwellised log-probabilities over a freshly grown subtree.

    At each split the 0/1 indicators of the branch spin are replaced by the
    members' exact heat-bath probabilities of that spin being +1.
    ``leaf`` form carries the smoothed mass down the tree and applies the
    pseudocounts once at the leaves; ``branch`` form smooths every split
    separately with the pseudocount mass below each child.
    """
    plus_share = {}
    for node in _post_order(root):
        if not node.is_leaf:
            rows = pop[members[node]]
            if len(rows):
                p = plus_probability(local_fields(model, rows, node.var), params.beta)
                plus_share[node] = float(np.sum(p)) / len(rows)
            else:
                plus_share[node] = 0.5
    if params.rb_form == "branch":
        alpha_below = {}
        for node in _post_order(root):
            alpha_below[node] = node.alpha if node.is_leaf else alpha_below[node.left] + alpha_below[node.right]
        root.logq = logq_r
        stack = [root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            size = len(members[node])
            s_plus = plus_share[node] * size
            denom = size + alpha_below[node]
            for child, mass in ((node.left, s_plus), (node.right, size - s_plus)):
                child.logq = node.logq + float(np.log((mass + alpha_below[child]) / denom))
                stack.append(child)
        return
    mass = {root: float(n)}
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            continue
        share = plus_share[node]
        mass[node.left] = mass[node] * share
        mass[node.right] = mass[node] * (1.0 - share)
        stack.extend(node.children())
    log_denom = np.log1p(n)
    for node in _post_order(root):
        if node.is_leaf:
            with np.errstate(divide="ignore"):
                node.logq = float(np.log(mass[node] + node.alpha) - log_denom + logq_r)
        else:
            node.logq = float(np.logaddexp(node.left.logq, node.right.logq))
