"""Bundled PDDL instances."""

from __future__ import annotations

from importlib import resources

from .bqnp import BqnpProblem, Op
from .pddl import TypedTask, parse_domain, parse_problem

__all__ = ["INSTANCES", "corpus_path", "domain_text", "problem_text", "load", "loop_problem"]

# instance name -> (domain file, problem file)
INSTANCES: dict[str, tuple[str, str]] = {
    "example1": ("gripper-hlwb-domain", "example1"),
    "gripper-sim-prob1-1": ("gripper-sim-domain", "gripper-sim-prob1-1"),
    "gripper-sim-prob1-2": ("gripper-sim-domain", "gripper-sim-prob1-2"),
    "gripper-sim-swap": ("gripper-sim-domain", "gripper-sim-swap"),
    "gripper-hl-prob1-1": ("gripper-hl-domain", "gripper-hl-prob1-1"),
    "gripper-hl-prob1-2": ("gripper-hl-domain", "gripper-hl-prob1-2"),
    "gripper-hl-prob2-1": ("gripper-hl-domain", "gripper-hl-prob2-1"),
    "gripper-hlwb-prob1-1": ("gripper-hlwb-domain", "gripper-hlwb-prob1-1"),
    "tyreworld-prob1-1": ("tyreworld-domain", "tyreworld-prob1-1"),
    "ferry-prob1-1": ("ferry-domain", "ferry-prob1-1"),
    "push-prob1-1": ("push-domain", "push-prob1-1"),
    "logistics-prob1-1": ("logistics-domain", "logistics-prob1-1"),
    "transport-prob1-1": ("transport-domain", "transport-prob1-1"),
    "elevators-prob1-1": ("elevators-domain", "elevators-prob1-1"),
    "zenotravel-prob1-1": ("zenotravel-domain", "zenotravel-prob1-1"),
}


def corpus_path(stem: str):
    return resources.files(__package__).joinpath("corpus").joinpath(f"{stem}.pddl")


def domain_text(name: str) -> str:
    return corpus_path(INSTANCES[name][0]).read_text()


def problem_text(name: str) -> str:
    return corpus_path(INSTANCES[name][1]).read_text()


def load(name: str) -> TypedTask:
    """Parse a bundled instance, e.g. ``load("gripper-sim-prob1-1")``."""
    if name not in INSTANCES:
        raise KeyError(f"unknown instance {name!r}; known: {', '.join(sorted(INSTANCES))}")
    return parse_problem(problem_text(name), parse_domain(domain_text(name)))


def loop_problem(init_b: bool = True) -> BqnpProblem:
    """Three-action loop on one counter X with flags A and B.

    a: X>0, A, B -> dec X, !A;  b: X>0, !A, B -> dec X, !B;  c: X>0, !A, !B -> inc X, A, B.
    A round a, b, c lowers X by one, yet X is both raised and lowered inside the
    cycle. ``init_b=False`` gives the initial state {X>0, A, !B}, where no action applies.
    """
    X, A, B = 0, 1, 2
    ops = (
        Op("a", "a", ((X, True), (A, True), (B, True)), ((X, "dec"), (A, "clear"))),
        Op("b", "b", ((X, True), (A, False), (B, True)), ((X, "dec"), (B, "clear"))),
        Op("c", "c", ((X, True), (A, False), (B, False)), ((X, "inc"), (A, "set"), (B, "set"))),
    )
    return BqnpProblem(("X",), ("A", "B"), (True, True, init_b), ((X, False),), ops)
