import numpy as np
import pytest
from hypothesis import settings

from sssampling import states
from sssampling.heuristic import Heuristic

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


class ScriptedHeuristic(Heuristic):
    """Hands out prepared populations in request order, checking each constraint."""

    name = "scripted"

    def __init__(self, script):
        self.script = [(states.from_string(c), [states.from_string(s) for s in pop]) for c, pop in script]
        self.calls = 0

    def populate(self, model, constraint, n, rng):
        expected, pop = self.script[self.calls]
        assert np.array_equal(constraint, expected), states.to_string(constraint)
        self.calls += 1
        return np.array(pop, dtype=np.int8)


class ScriptedRule:
    """Branch rule given as a function of the partial state."""

    def __init__(self, fn):
        self.fn = fn

    def choose(self, partial, rng):
        return self.fn(np.asarray(partial))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion: int, ok: bool, detail: str) -> None:
    """Record one acceptance verdict; all verdicts are printed at the end of the run."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", help="also run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; run with --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
