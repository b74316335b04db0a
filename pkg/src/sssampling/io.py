"""Text formats: problem files, run configs and sample tables.

Problem files are line oriented::

    # topology grid3d 6 6 6 periodic
    ising 216
    h 0 0.0
    J 0 1 -0.37

Indices are 0-based, values are written with ``repr`` so they read back
bit-exactly, and ``#`` starts a comment. A ``# topology`` comment, if
present, records the lattice layout; without it the layout is inferred.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import states
from .ising import GAUSS_ALGORITHM, IsingModel, is_chain


class FormatError(ValueError):
    """A malformed problem, config or sample file. Carries the line number."""

    def __init__(self, message: str, line: int | None = None, source: str = ""):
        where = f"{source}:{line}: " if line is not None else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


def _lines(source) -> tuple[list[str], str]:
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        path = Path(source)
        return path.read_text().splitlines(), str(path)
    if hasattr(source, "read"):
        return source.read().splitlines(), getattr(source, "name", "<stream>")
    return str(source).splitlines(), "<text>"


# --------------------------------------------------------------------------
# problems


def format_problem(model: IsingModel, comments=()) -> str:
    out = io.StringIO()
    for text in comments:
        out.write(f"# {text}\n")
    if model.topology == "grid3d":
        lx, ly, lz = model.dims
        out.write(f"# topology grid3d {lx} {ly} {lz} {'periodic' if model.periodic else 'open'}\n")
    else:
        out.write(f"# topology {model.topology}\n")
    out.write(f"ising {model.m}\n")
    for i, v in enumerate(model.h):
        out.write(f"h {i} {float(v)!r}\n")
    for i, j, J in model.couplings:
        out.write(f"J {i} {j} {float(J)!r}\n")
    return out.getvalue()


def write_problem(model: IsingModel, path, comments=()) -> None:
    Path(path).write_text(format_problem(model, comments))


def generator_comment(family: str, size, seed: int) -> str:
    return f"generated family={family} size={size} seed={seed} gauss={GAUSS_ALGORITHM}"


def read_problem(source) -> IsingModel:
    """Parse a problem from a path, an open file or a string holding the text."""
    lines, name = _lines(source)
    m = None
    h = None
    couplings = []
    layout = None
    for k, raw in enumerate(lines, start=1):
        text = raw.strip()
        if text.startswith("#"):
            words = text[1:].split()
            if words[:1] == ["topology"]:
                layout = (words[1:], k)
            continue
        if not text:
            continue
        words = text.split()
        try:
            if words[0] == "ising":
                if m is not None:
                    raise FormatError("repeated header", k, name)
                m = int(words[1])
                if m <= 0 or len(words) != 2:
                    raise ValueError
                h = np.zeros(m)
            elif m is None:
                raise FormatError("expected 'ising <m>' before any data", k, name)
            elif words[0] == "h" and len(words) == 3:
                i = int(words[1])
                if not 0 <= i < m:
                    raise FormatError(f"spin index {i} out of range", k, name)
                h[i] = float(words[2])
            elif words[0] == "J" and len(words) == 4:
                couplings.append((int(words[1]), int(words[2]), float(words[3])))
            else:
                raise FormatError(f"unrecognised line {text!r}", k, name)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"cannot parse {text!r}", k, name) from None
    if m is None:
        raise FormatError("missing 'ising <m>' header", None, name)
    kwargs = _layout(layout, m, couplings, name)
    try:
        return IsingModel(m=m, h=h, couplings=tuple(couplings), **kwargs)
    except ValueError as exc:
        raise FormatError(str(exc), None, name) from None


def _layout(layout, m, couplings, name) -> dict:
    if layout is None:
        probe = IsingModel(m=m, h=np.zeros(m), couplings=tuple(couplings))
        if not couplings:
            return {"topology": "independent"}
        return {"topology": "chain" if is_chain(probe) else "complete"}
    words, k = layout
    if not words:
        raise FormatError("empty topology comment", k, name)
    if words[0] == "grid3d":
        if len(words) != 5 or words[4] not in ("periodic", "open"):
            raise FormatError("expected 'topology grid3d Lx Ly Lz periodic|open'", k, name)
        return {"topology": "grid3d", "dims": tuple(int(w) for w in words[1:4]), "periodic": words[4] == "periodic"}
    return {"topology": words[0]}


# --------------------------------------------------------------------------
# run configs

_SAMPLER_KEYS = {
    "n": int,
    "theta": float,
    "max_tree_size": int,
    "count_threshold": int,
    "beta": float,
    "estimator": str,
    "branch_rule": str,
    "seed": int,
    "fresh_tree": "bool",
    "rb_form": str,
}
_SCHEDULE_KEYS = {
    "heuristic.beta_start": float,
    "heuristic.beta_end": float,
    "heuristic.n_steps": int,
    "heuristic.sweeps_per_step": int,
    "heuristic.order": str,
}
_RUN_KEYS = {
    "problem": str,
    "problem.family": str,
    "problem.size": str,
    "problem.seed": int,
    "problem.periodic": "bool",
    "heuristic": str,
    "mode": str,
    "draws": int,
    "steps": int,
    "trees": int,
    "initial": str,
    "out": str,
}
CONFIG_KEYS = {**_SAMPLER_KEYS, **_SCHEDULE_KEYS, **_RUN_KEYS}
MODES = ("sss", "scp-basic", "mcmc")


def _convert(kind, value: str):
    if kind == "bool":
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return kind(value)


@dataclass
class RunConfig:
    """Flat ``key = value`` settings for one experiment.

    Keys not given fall back to library defaults when the run is built.
    """

    values: dict = field(default_factory=dict)
    source: str = "<config>"

    @classmethod
    def parse(cls, source) -> "RunConfig":
        lines, name = _lines(source)
        values = {}
        for k, raw in enumerate(lines, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise FormatError(f"expected 'key = value', got {text!r}", k, name)
            key, value = (part.strip() for part in text.split("=", 1))
            if key not in CONFIG_KEYS:
                raise FormatError(f"unknown key {key!r}", k, name)
            try:
                values[key] = _convert(CONFIG_KEYS[key], value)
            except ValueError as exc:
                raise FormatError(f"bad value for {key}: {exc}", k, name) from None
        config = cls(values, name)
        config.validate()
        return config

    def set(self, key: str, value) -> None:
        if key not in CONFIG_KEYS:
            raise FormatError(f"unknown key {key!r}", None, self.source)
        try:
            self.values[key] = _convert(CONFIG_KEYS[key], str(value))
        except ValueError as exc:
            raise FormatError(f"bad value for {key}: {exc}", None, self.source) from None

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def validate(self) -> None:
        mode = self.values.get("mode", "sss")
        if mode not in MODES:
            raise FormatError(f"mode must be one of {MODES}, got {mode!r}", None, self.source)
        if "problem" in self.values and "problem.family" in self.values:
            raise FormatError("give either 'problem' or 'problem.family', not both", None, self.source)
        if "problem" not in self.values and "problem.family" not in self.values:
            raise FormatError("no problem: set 'problem' to a file or 'problem.family'", None, self.source)
        if "problem.family" in self.values and "problem.size" not in self.values:
            raise FormatError("'problem.family' needs 'problem.size'", None, self.source)
        for key in ("draws", "steps"):
            if self.values.get(key, 0) < 0:
                raise FormatError(f"{key} must be non-negative", None, self.source)
        if self.values.get("trees", 1) < 1:
            raise FormatError("trees must be at least 1", None, self.source)

    def canonical(self) -> str:
        return "".join(f"{k}={self.values[k]!r}\n" for k in sorted(self.values) if k != "out")

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def sampler_kwargs(self) -> dict:
        return {k: self.values[k] for k in _SAMPLER_KEYS if k in self.values}

    def schedule_kwargs(self) -> dict:
        return {k.split(".", 1)[1]: self.values[k] for k in _SCHEDULE_KEYS if k in self.values}


# --------------------------------------------------------------------------
# sample tables


@dataclass
class SampleTable:
    header: dict
    columns: list[str]
    rows: list[list[str]]
    summary: dict

    def column(self, name: str) -> list[str]:
        k = self.columns.index(name)
        return [row[k] for row in self.rows]

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(v) for v in self.column(name)])

    def states(self, name: str = "state") -> np.ndarray:
        return np.array([states.from_string(v) for v in self.column(name)], dtype=np.int8)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def format_table(header: dict, columns, rows, summary: dict) -> str:
    out = io.StringIO()
    out.write("# " + ", ".join(f"{k}={_fmt(v)}" for k, v in header.items()) + "\n")
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) for v in row) + "\n")
    for k, v in summary.items():
        out.write(f"#summary {k}={_fmt(v)}\n")
    return out.getvalue()


def read_table(source) -> SampleTable:
    lines, name = _lines(source)
    header, summary, rows = {}, {}, []
    columns = None
    for k, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        if text.startswith("#summary"):
            key, _, value = text[len("#summary") :].strip().partition("=")
            summary[key] = value
        elif text.startswith("#"):
            for item in text[1:].split(","):
                key, sep, value = item.strip().partition("=")
                if sep:
                    header[key] = value
        elif columns is None:
            columns = text.split(",")
        else:
            row = text.split(",")
            if len(row) != len(columns):
                raise FormatError(f"expected {len(columns)} fields, got {len(row)}", k, name)
            rows.append(row)
    if columns is None:
        raise FormatError("missing column header", None, name)
    return SampleTable(header, columns, rows, summary)


def summary_float(table: SampleTable, key: str) -> float:
    value = table.summary.get(key, "nan")
    try:
        return float(value)
    except ValueError:
        return math.nan
