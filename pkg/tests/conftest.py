import functools

import pytest

from bagplan import corpus
from bagplan.abstraction import abstract
from bagplan.solver import solve


@functools.lru_cache(maxsize=None)
def abstraction_of(name):
    return abstract(corpus.load(name))


@functools.lru_cache(maxsize=None)
def solution_of(name):
    res = abstraction_of(name)
    return solve(res.problem, max_seconds=120)


@pytest.fixture(scope="session")
def example1():
    return corpus.load("example1")


@pytest.fixture(scope="session")
def gripper_sim():
    return corpus.load("gripper-sim-prob1-1")


@functools.lru_cache(maxsize=None)
def program_of(name):
    from bagplan.refinement import refine
    res = abstraction_of(name)
    sol = solution_of(name)
    assert sol.solved, (name, sol.outcome)
    return refine(sol.policy, res.problem, res.mapping)


# one line per acceptance check, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
