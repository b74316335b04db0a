"""Rules for picking the next variable to branch on.

No rule ever looks at sample values: choosing splits greedily from the data
would bias the probability estimates. Rules see only which spins are
already assigned.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .ising import IsingModel, is_chain

RULES = ("fixed", "random", "neighbour", "bisection")


def bisection_order(dims) -> list[int]:
    """Recursive separator ordering of a box-shaped lattice.

    Each region is cut by the middle slice across its longest axis (ties go
    to the lowest axis); the slice's sites come first, then the two halves are
    processed breadth first, so all separators of one level precede the
    next. Sites are indexed ``x + Lx * (y + Ly * z)``.
    """
    dims = tuple(int(d) for d in dims) + (1,) * (3 - len(dims))
    lx, ly, _ = dims
    order: list[int] = []
    regions = deque([tuple((0, d) for d in dims)])
    while regions:
        box = regions.popleft()
        extents = [hi - lo for lo, hi in box]
        if min(extents) <= 0:
            continue
        axis = int(np.argmax(extents))
        lo, hi = box[axis]
        cut = lo + extents[axis] // 2
        ranges = [range(a, b) for a, b in box]
        ranges[axis] = range(cut, cut + 1)
        for z in ranges[2]:
            for y in ranges[1]:
                for x in ranges[0]:
                    order.append(x + lx * (y + ly * z))
        left = list(box)
        left[axis] = (lo, cut)
        right = list(box)
        right[axis] = (cut + 1, hi)
        regions.append(tuple(left))
        regions.append(tuple(right))
    return order


class BranchRule:
    """Chooses a free variable of a partial state.

    ``fixed`` takes the first free variable of ``order`` (default 0..m-1);
    ``random`` picks uniformly; ``neighbour`` picks uniformly among free
    variables adjacent to an assigned one, or uniformly if none is assigned;
    ``bisection`` follows :func:`bisection_order` for chain and grid models.
    """

    def __init__(self, model: IsingModel, rule: str = "neighbour", order=None):
        if rule not in RULES:
            raise ValueError(f"unknown branch rule {rule!r}; expected one of {RULES}")
        self.rule = rule
        self.m = model.m
        if rule == "bisection" and order is None:
            if model.topology == "grid3d":
                order = bisection_order(model.dims)
            elif is_chain(model):
                order = bisection_order((model.m, 1, 1))
            else:
                raise ValueError("bisection ordering needs a chain or grid model")
        self.order = np.arange(model.m) if order is None else np.asarray(order, dtype=np.intp)
        if sorted(self.order.tolist()) != list(range(model.m)):
            raise ValueError("variable order must be a permutation of all spins")
        if rule == "neighbour":
            adj = np.zeros((model.m, model.m), dtype=bool)
            i, j, _ = model.edges
            adj[i, j] = adj[j, i] = True
            self._adj = adj

    def choose(self, partial, rng: np.random.Generator) -> int:
        partial = np.asarray(partial)
        free = partial == 0
        if not free.any():
            raise ValueError("partial state has no free variables")
        if self.rule in ("fixed", "bisection"):
            return int(self.order[np.argmax(free[self.order])])
        candidates = np.flatnonzero(free)
        if self.rule == "neighbour" and not free.all():
            near = free & self._adj[~free].any(axis=0)
            if near.any():
                candidates = np.flatnonzero(near)
        return int(candidates[rng.integers(len(candidates))])
