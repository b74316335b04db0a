"""Robust Bayesian estimation of cell probabilities from heuristic populations.

Cells are the elements of a partition (tree leaves, or the two values of a
single spin). Priors are Dirichlet with pseudocounts summing to one; the
robust choice puts all of that unit mass, evenly, on the least populated
cells. All losses are in nats.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from . import states
from .ising import IsingModel, local_fields, plus_probability

# Bernoulli-number coefficients of the asymptotic digamma series in 1/x**2
_DIGAMMA_SERIES = (1.0 / 12, -1.0 / 120, 1.0 / 252, -1.0 / 240, 1.0 / 132, -691.0 / 32760)


def digamma(x):
    """Digamma for positive real arguments.

    Shifts every argument up to at least 10 with psi(x) = psi(x + 1) - 1/x,
    then sums ln x - 1/(2x) and six terms of the asymptotic series.
    """
    x = np.array(x, dtype=float, copy=True)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x <= 0):
        raise ValueError("digamma is only implemented for positive arguments")
    shift = np.zeros_like(x)
    low = x < 10.0
    while np.any(low):
        shift[low] -= 1.0 / x[low]
        x[low] += 1.0
        low = x < 10.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for coef in reversed(_DIGAMMA_SERIES):
        series = (series + coef) * inv2
    out = shift + np.log(x) - 0.5 / x - series
    return float(out[0]) if scalar else out


def count(pattern, samples) -> int:
    """Number of samples agreeing with every assigned spin of ``pattern``."""
    samples = np.atleast_2d(samples)
    if np.shape(pattern)[-1] != samples.shape[1]:
        raise ValueError("pattern and samples disagree on the number of spins")
    return int(states.matches(pattern, samples).sum())


def _counts(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=float).reshape(-1)
    if len(c) == 0:
        raise ValueError("need at least one cell")
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    return c


def histogram_mle(counts) -> np.ndarray:
    """Plain relative frequencies. Reference only: zero counts get zero mass."""
    c = _counts(counts)
    return c / c.sum()


def robust_alphas(counts) -> np.ndarray:
    """Unit pseudocount shared evenly by the minimum-count cells."""
    c = _counts(counts)
    lowest = c == c.min()
    return lowest / lowest.sum()


def bayes_estimate(counts, alphas) -> np.ndarray:
    """Posterior-mean cell probabilities ``(# + alpha) / (N + sum(alpha))``."""
    c = _counts(counts)
    a = np.asarray(alphas, dtype=float)
    return (c + a) / (c.sum() + a.sum())


def _kl_terms(weight, n_total, log_est):
    """weight/(1+N) * [psi(weight+1) - psi(N+2) - log_est], zero where weight is 0."""
    out = np.zeros_like(weight)
    live = weight > 0
    if np.any(live):
        w = weight[live]
        with np.errstate(invalid="ignore"):
            out[live] = w / (1.0 + n_total) * (digamma(w + 1.0) - digamma(n_total + 2.0) - log_est[live])
    return out


def _log_estimate(c, a, n_total):
    with np.errstate(divide="ignore"):
        return np.log(a + c) - np.log1p(n_total)


def posterior_kl_loss(alpha_prime, alpha, counts) -> float:
    """Posterior expected KL loss of the estimate built on prior ``alpha``
    when the truth is Dirichlet(``alpha_prime``) a priori.

    Returns ``inf`` when a cell the adversary can populate has zero estimated
    probability.
    """
    c = _counts(counts)
    ap = np.asarray(alpha_prime, dtype=float)
    a = np.asarray(alpha, dtype=float)
    n_total = c.sum()
    weight = ap + c
    log_est = _log_estimate(c, a, n_total)
    if np.any((weight > 0) & ~np.isfinite(log_est)):
        return float("inf")
    return float(_kl_terms(weight, n_total, log_est).sum())


def vertex_losses(counts, alphas) -> np.ndarray:
    """Posterior KL loss for each vertex prior ``e_k``, all cells at once."""
    c = _counts(counts)
    a = np.asarray(alphas, dtype=float)
    n_total = c.sum()
    log_est = _log_estimate(c, a, n_total)
    if np.any(~np.isfinite(log_est)):
        raise ValueError("some cell has zero estimated probability")
    base = _kl_terms(c, n_total, log_est)
    bumped = _kl_terms(c + 1.0, n_total, log_est)
    return base.sum() - base + bumped


def worst_case_kl(counts, alphas=None) -> float:
    """Worst-case posterior KL loss over unit-mass priors.

    For the robust alphas the supremum is attained at a vertex prior sitting
    on a minimum-count cell or on a second-lowest-count cell, so only those
    two candidates are evaluated.
    """
    c = _counts(counts)
    a = robust_alphas(c) if alphas is None else np.asarray(alphas, dtype=float)
    if len(c) == 1:
        return posterior_kl_loss([1.0], a, c)
    lowest = c.min()
    candidates = [int(np.argmax(c == lowest))]
    above = c > lowest
    if np.any(above):
        second = c[above].min()
        candidates.append(int(np.argmax(c == second)))
    n_total = c.sum()
    log_est = _log_estimate(c, a, n_total)
    base = _kl_terms(c, n_total, log_est)
    total = base.sum()
    best = -np.inf
    for k in candidates:
        bump = np.array([c[k] + 1.0])
        if not np.isfinite(log_est[k]):
            return float("inf")
        val = total - base[k] + _kl_terms(bump, n_total, log_est[k : k + 1])[0]
        best = max(best, val)
    return float(best)


def branch_plus_mass(model: IsingModel, beta: float, samples: np.ndarray, variable: int) -> float:
    """Sum over samples of the heat-bath probability that ``variable`` is +1."""
    if len(samples) == 0:
        return 0.0
    lam = local_fields(model, samples, variable)
    return float(np.sum(plus_probability(lam, beta)))


def rao_blackwell_estimate(model: IsingModel, beta: float, population, parent, branch_variable: int, child_alphas, parent_mass=None) -> tuple[float, float]:
    """Smoothed Rao-Blackwellised probabilities of the two children of ``parent``.

    ``parent`` is the partial state of the node being split on
    ``branch_variable``. Each population member matching it contributes its
    exact single-site conditional instead of a 0/1 count. ``parent_mass``
    replaces ``#(parent)`` in the denominator when the parent's own mass is a
    smoothed quantity rather than a raw count.
    """
    population = np.atleast_2d(population)
    inside = population[states.matches(parent, population)]
    a_plus, a_minus = (float(v) for v in child_alphas)
    n_parent = len(inside)
    if n_parent == 0 and a_plus + a_minus == 0:
        raise ValueError("empty parent with zero pseudocounts has no estimate")
    s_plus = branch_plus_mass(model, beta, inside, branch_variable)
    s_minus = n_parent - s_plus
    if parent_mass is None:
        mass = n_parent
        num_plus, num_minus = s_plus, s_minus
    else:
        mass = float(parent_mass)
        scale = mass / n_parent if n_parent else 0.0
        num_plus, num_minus = s_plus * scale, s_minus * scale
    denom = mass + a_plus + a_minus
    return (num_plus + a_plus) / denom, (num_minus + a_minus) / denom


@functools.lru_cache(maxsize=8)
def _digamma_table(n_total: int) -> np.ndarray:
    """psi(k) for k = 0..n_total+2 (entry 0 unused)."""
    table = np.empty(n_total + 3)
    table[0] = np.nan
    table[1:] = digamma(np.arange(1, n_total + 3, dtype=float))
    return table


class PartitionLoss:
    """Worst-case KL loss of a partition that only ever gets finer.

    Tracks a histogram of cell counts for a fixed total ``n_total`` so that
    the loss after splitting one cell costs O(1) table lookups plus a scan for
    the second-lowest count. Agrees with :func:`worst_case_kl` under robust
    alphas.
    """

    def __init__(self, n_total: int):
        n_total = int(n_total)
        if n_total < 0:
            raise ValueError("total count must be non-negative")
        self.n_total = n_total
        self._psi = _digamma_table(n_total)
        self._log_n1 = math.log1p(n_total)
        self._psi_end = self._psi[n_total + 2]
        c = np.arange(n_total + 1, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = c / (1.0 + n_total) * (self._psi[1 : n_total + 2] - self._psi_end - np.log(c) + self._log_n1)
        t0[0] = 0.0
        self._t0 = t0
        self.hist = np.zeros(n_total + 1, dtype=np.int64)
        self.hist[n_total] = 1
        self._base = float(t0[n_total])

    def _term(self, c: int, alpha: float, weight: float) -> float:
        if weight == 0:
            return 0.0
        return weight / (1.0 + self.n_total) * (self._psi[int(weight) + 1] - self._psi_end - math.log(c + alpha) + self._log_n1)

    def loss(self) -> float:
        hist = self.hist
        present = np.flatnonzero(hist)
        low = int(present[0])
        n_low = int(hist[low])
        alpha = 1.0 / n_low
        total = self._base + n_low * (self._term(low, alpha, low) - self._t0[low])
        best = total - self._term(low, alpha, low) + self._term(low, alpha, low + 1)
        if len(present) > 1:
            second = int(present[1])
            best = max(best, total - self._t0[second] + self._term(second, 0.0, second + 1))
        return float(best)

    def split(self, whole: int, part: int) -> None:
        rest = whole - part
        if part < 0 or rest < 0 or self.hist[whole] == 0:
            raise ValueError("split does not match the current partition")
        self.hist[whole] -= 1
        self.hist[part] += 1
        self.hist[rest] += 1
        self._base += self._t0[part] + self._t0[rest] - self._t0[whole]

    def unsplit(self, whole: int, part: int) -> None:
        rest = whole - part
        self.hist[part] -= 1
        self.hist[rest] -= 1
        self.hist[whole] += 1
        self._base -= self._t0[part] + self._t0[rest] - self._t0[whole]

    def trial(self, whole: int, part: int) -> float:
        """Loss if a cell of count ``whole`` were split into ``part`` and the rest."""
        self.split(whole, part)
        try:
            return self.loss()
        finally:
            self.unsplit(whole, part)
