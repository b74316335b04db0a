"""Ising models: energies, single-site conditionals, generators and exact oracles.

Spins take values in {+1, -1}. The energy convention is

    E(y) = sum_i h_i y_i + sum_{(i,j)} J_ij y_i y_j

and the target is pi(y) proportional to exp(-beta * E(y)), so the heat-bath
conditional of spin i is exp(-beta y_i lam_i) / (2 cosh(beta lam_i)) with
lam_i = h_i + sum_j J_ij y_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

TOPOLOGIES = ("independent", "chain", "complete", "grid3d")
FAMILIES = ("independent", "chain", "sk", "grid3d")

#: Largest model the enumeration oracle will touch.
MAX_ENUMERATE = 24

#: Name of the Gaussian variate algorithm used by the problem generators.
GAUSS_ALGORITHM = "philox4x64-boxmuller-v1"


class SizeGuardError(ValueError):
    """Raised when an exact oracle is asked to enumerate too many states."""


@dataclass(frozen=True, eq=False)
class IsingModel:
    """An Ising model over ``m`` spins.

    ``couplings`` holds ``(i, j, J_ij)`` triples with ``i < j``. ``dims`` is
    only meaningful for the ``grid3d`` topology and stores ``(Lx, Ly, Lz)``.
    """

    m: int
    h: np.ndarray
    couplings: tuple[tuple[int, int, float], ...] = ()
    topology: str = "complete"
    dims: tuple[int, int, int] | None = None
    periodic: bool = False

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError(f"model needs at least one spin, got m={self.m}")
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if h.shape != (self.m,):
            raise ValueError(f"h has length {h.shape[0]}, expected {self.m}")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        seen = set()
        clean = []
        for i, j, J in self.couplings:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-coupling on spin {i}")
            if i > j:
                i, j = j, i
            if i < 0 or j >= self.m:
                raise ValueError(f"coupling ({i}, {j}) out of range for m={self.m}")
            if (i, j) in seen:
                raise ValueError(f"duplicate coupling ({i}, {j})")
            seen.add((i, j))
            clean.append((i, j, float(J)))
        object.__setattr__(self, "couplings", tuple(clean))
        if self.topology == "grid3d":
            if self.dims is None or int(np.prod(self.dims)) != self.m:
                raise ValueError("grid3d topology needs dims with Lx*Ly*Lz == m")
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    def __eq__(self, other):
        if not isinstance(other, IsingModel):
            return NotImplemented
        return (
            self.m == other.m
            and np.array_equal(self.h, other.h)
            and self.couplings == other.couplings
            and self.topology == other.topology
            and self.dims == other.dims
            and self.periodic == other.periodic
        )

    __hash__ = None

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.couplings:
            empty = np.zeros(0, dtype=np.intp)
            return empty, empty.copy(), np.zeros(0)
        arr = np.array(self.couplings, dtype=float)
        return arr[:, 0].astype(np.intp), arr[:, 1].astype(np.intp), arr[:, 2]

    @cached_property
    def neighbours(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-spin ``(indices, couplings)`` arrays."""
        nb: list[list[int]] = [[] for _ in range(self.m)]
        js: list[list[float]] = [[] for _ in range(self.m)]
        for i, j, J in self.couplings:
            nb[i].append(j)
            js[i].append(J)
            nb[j].append(i)
            js[j].append(J)
        return [(np.array(a, dtype=np.intp), np.array(b, dtype=float)) for a, b in zip(nb, js)]

    @cached_property
    def coupling_matrix(self) -> np.ndarray:
        """Symmetric dense ``m x m`` coupling matrix, Fortran ordered."""
        mat = np.zeros((self.m, self.m), order="F")
        i, j, J = self.edges
        mat[i, j] = J
        mat[j, i] = J
        return mat

    @property
    def max_degree(self) -> int:
        return max((len(nb) for nb, _ in self.neighbours), default=0)


def _check_state(model: IsingModel, y) -> np.ndarray:
    y = np.asarray(y)
    if y.shape[-1] != model.m:
        raise ValueError(f"state has {y.shape[-1]} spins, model has {model.m}")
    return y


def energy(model: IsingModel, y) -> float | np.ndarray:
    """Energy of one state, or of each row of a batch of states."""
    y = _check_state(model, y).astype(float)
    i, j, J = model.edges
    e = y @ model.h
    if len(J):
        e = e + (y[..., i] * y[..., j]) @ J
    return float(e) if np.ndim(e) == 0 else e


def local_fields(model: IsingModel, y, i: int) -> float | np.ndarray:
    """lam_i = h_i + sum_j J_ij y_j for a state or a batch of states."""
    y = _check_state(model, y)
    idx, J = model.neighbours[i]
    if len(idx):
        lam = model.h[i] + y[..., idx].astype(float) @ J
    else:
        lam = np.full(y.shape[:-1], model.h[i])
    return float(lam) if np.ndim(lam) == 0 else lam


def plus_probability(lam, beta: float):
    """Heat-bath probability of ``+1`` given local field ``lam``."""
    # 1 / (1 + exp(2 beta lam)), overflow safe
    return 0.5 * (1.0 - np.tanh(beta * np.asarray(lam, dtype=float)))


def local_conditional(model: IsingModel, y, i: int, beta: float):
    """Probability that spin ``i`` takes the value it has in ``y``, given the rest.

    Works on a single state or on a batch of states (rows).
    """
    if not 0 <= i < model.m:
        raise ValueError(f"spin index {i} out of range")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    y = _check_state(model, y)
    p_plus = plus_probability(local_fields(model, y, i), beta)
    out = np.where(y[..., i] > 0, p_plus, 1.0 - p_plus)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# generators


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def gaussian_stream(seed: int, n: int) -> np.ndarray:
    """``n`` standard normal variates from the versioned generator.

    Philox4x64 keyed by ``splitmix64(seed)`` yields raw 64-bit words; each
    pair becomes two uniforms ``(w >> 11) * 2**-53`` and one Box-Muller
    normal ``sqrt(-2 log(1 - u1)) * cos(2 pi u2)``.
    """
    key = _splitmix64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    bitgen = np.random.Philox(key=key)
    raw = bitgen.random_raw(2 * n).astype(np.uint64)
    u = (raw >> np.uint64(11)).astype(float) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def grid_index(x: int, y: int, z: int, dims: Sequence[int]) -> int:
    lx, ly, _ = dims
    return x + lx * (y + ly * z)


def grid_edges(dims: Sequence[int], periodic: bool) -> list[tuple[int, int]]:
    """Nearest-neighbour edges of a cubic lattice, each listed once as ``(i<j)``."""
    dims = tuple(int(d) for d in dims)
    edges = set()
    for x, y, z in product(*(range(d) for d in dims)):
        here = grid_index(x, y, z, dims)
        for axis in range(3):
            step = [x, y, z]
            step[axis] += 1
            if step[axis] >= dims[axis]:
                if not periodic or dims[axis] < 3:
                    # length-1 and length-2 rings would create self/duplicate bonds
                    continue
                step[axis] = 0
            there = grid_index(*step, dims)
            edges.add((min(here, there), max(here, there)))
    return sorted(edges)


def generate_problem(family: str, size, seed: int, periodic: bool = True) -> IsingModel:
    """Reproducible random instance of one of the four problem families.

    ``size`` is the spin count for ``independent``, ``chain`` and ``sk`` and
    ``(Lx, Ly, Lz)`` for ``grid3d``. ``periodic`` only affects ``grid3d``.
    """
    family = family.lower()
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "grid3d":
        dims = tuple(int(d) for d in (size if isinstance(size, Iterable) else (size,) * 3))
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f"grid3d needs three positive dimensions, got {size!r}")
        m = dims[0] * dims[1] * dims[2]
    else:
        m = int(size)
        if m <= 0:
            raise ValueError(f"size must be positive, got {size!r}")

    if family == "independent":
        return IsingModel(m=m, h=gaussian_stream(seed, m), topology="independent")
    h = np.zeros(m)
    if family == "chain":
        J = gaussian_stream(seed, m - 1)
        couplings = tuple((i, i + 1, J[i]) for i in range(m - 1))
        return IsingModel(m=m, h=h, couplings=couplings, topology="chain")
    if family == "sk":
        pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
        J = gaussian_stream(seed, len(pairs)) / math.sqrt(m)
        couplings = tuple((i, j, J[k]) for k, (i, j) in enumerate(pairs))
        return IsingModel(m=m, h=h, couplings=couplings, topology="complete")
    pairs = grid_edges(dims, periodic=periodic)
    J = gaussian_stream(seed, len(pairs))
    couplings = tuple((i, j, J[k]) for k, (i, j) in enumerate(pairs))
    return IsingModel(m=m, h=h, couplings=couplings, topology="grid3d", dims=dims, periodic=periodic)


def random_model(m: int, seed: int, density: float = 1.0, scale: float = 1.0) -> IsingModel:
    """Small dense model with random fields and couplings, mostly for tests."""
    rng = np.random.default_rng(seed)
    h = scale * rng.standard_normal(m)
    couplings = []
    for i in range(m):
        for j in range(i + 1, m):
            if rng.random() < density:
                couplings.append((i, j, scale * rng.standard_normal()))
    return IsingModel(m=m, h=h, couplings=tuple(couplings), topology="complete")


# --------------------------------------------------------------------------
# exact oracles


def exact_logz_independent(model: IsingModel, beta: float) -> float:
    if model.couplings:
        raise ValueError("closed form only applies to models without couplings")
    x = np.abs(beta * model.h)
    # log(2 cosh x) = x + log(1 + exp(-2x))
    return float(np.sum(x + np.log1p(np.exp(-2.0 * x))))


def is_chain(model: IsingModel) -> bool:
    return all(j == i + 1 for i, j, _ in model.couplings)


def chain_couplings(model: IsingModel) -> np.ndarray:
    """Bond strengths ``J[i]`` between spins ``i`` and ``i+1`` (zero if absent)."""
    if not is_chain(model):
        raise ValueError("model is not chain structured")
    bonds = np.zeros(max(model.m - 1, 0))
    for i, _, J in model.couplings:
        bonds[i] = J
    return bonds


def chain_forward_messages(model: IsingModel, beta: float, clamp=None) -> np.ndarray:
    """Log forward messages ``a[i, s]`` for s in (+1, -1), with optional hard clamps.

    ``a[i, s]`` is the log of the summed Boltzmann weight of spins ``0..i``
    with spin ``i`` fixed to ``s``.
    """
    bonds = chain_couplings(model)
    spins = np.array([1.0, -1.0])
    a = np.empty((model.m, 2))
    a[0] = -beta * model.h[0] * spins
    if clamp is not None and clamp[0] != 0:
        a[0][spins != clamp[0]] = -np.inf
    for i in range(1, model.m):
        # pair[s_prev, s] = -beta J s_prev s
        pair = -beta * bonds[i - 1] * np.outer(spins, spins)
        a[i] = logsumexp(a[i - 1][:, None] + pair, axis=0) - beta * model.h[i] * spins
        if clamp is not None and clamp[i] != 0:
            a[i][spins != clamp[i]] = -np.inf
    return a


def exact_logz_chain(model: IsingModel, beta: float) -> float:
    """log Z by sequential elimination along the chain, O(m)."""
    if model.topology not in ("chain", "independent") or not is_chain(model):
        raise ValueError("transfer-matrix oracle needs a chain-structured model")
    return float(logsumexp(chain_forward_messages(model, beta)[-1]))


def all_states(m: int) -> np.ndarray:
    """All ``2**m`` states as rows, ``+1`` first in lexicographic order."""
    bits = (np.arange(2**m)[:, None] >> np.arange(m - 1, -1, -1)) & 1
    return (1 - 2 * bits).astype(np.int8)


@dataclass
class Enumeration:
    states: np.ndarray
    probabilities: np.ndarray
    log_z: float
    energies: np.ndarray = field(repr=False)

    def index_of(self, y) -> int:
        """Row of ``y`` in :attr:`states`."""
        bits = (1 - np.asarray(y)) // 2
        return int(bits @ (1 << np.arange(len(bits) - 1, -1, -1)))


def enumerate_distribution(model: IsingModel, beta: float) -> Enumeration:
    if model.m > MAX_ENUMERATE:
        raise SizeGuardError(f"refusing to enumerate 2^{model.m} states (limit m <= {MAX_ENUMERATE})")
    states = all_states(model.m)
    energies = energy(model, states)
    logw = -beta * np.atleast_1d(energies)
    log_z = float(logsumexp(logw))
    return Enumeration(states, np.exp(logw - log_z), log_z, np.atleast_1d(energies))
