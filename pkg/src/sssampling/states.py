"""Spin states and partial states.

Full states are ``int8`` arrays over {+1, -1}. Partial states use the same
encoding plus ``0`` for an unassigned spin, so a partial state with no zeros
is a full state and ``state[i] == 0`` marks a free variable.
"""

from __future__ import annotations

import numpy as np

FREE = 0
_CHARS = {1: "+", -1: "-", 0: "."}
_VALUES = {"+": 1, "-": -1, ".": 0, "_": 0, "?": 0}


def unconstrained(m: int) -> np.ndarray:
    return np.zeros(m, dtype=np.int8)


def free_variables(partial) -> np.ndarray:
    return np.flatnonzero(np.asarray(partial) == FREE)


def is_full(partial) -> bool:
    return not np.any(np.asarray(partial) == FREE)


def matches(partial, samples) -> np.ndarray:
    """Boolean mask of the sample rows that agree with every assigned spin."""
    partial = np.asarray(partial)
    samples = np.atleast_2d(samples)
    assigned = np.flatnonzero(partial != FREE)
    if len(assigned) == 0:
        return np.ones(len(samples), dtype=bool)
    return np.all(samples[:, assigned] == partial[assigned], axis=1)


def to_string(state) -> str:
    return "".join(_CHARS[int(v)] for v in state)


def from_string(text: str) -> np.ndarray:
    try:
        return np.array([_VALUES[c] for c in text.strip()], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"bad spin character {exc.args[0]!r} in {text!r}") from None


def check_spins(y, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int8)
    if y.shape != (m,):
        raise ValueError(f"state has shape {y.shape}, expected ({m},)")
    if not np.all(np.abs(y) == 1):
        raise ValueError("full states may only contain +1 and -1")
    return y
