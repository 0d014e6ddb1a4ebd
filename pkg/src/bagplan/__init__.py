"""Generalized planning over baggable types via bounded qualitative numeric planning.

Typical use::

    from bagplan import corpus, abstract, solve, refine, execute, ground
    task = corpus.load("gripper-sim-prob1-1")
    res = abstract(task)
    sol = solve(res.problem)
    program = refine(sol.policy, res.problem, res.mapping)
    run = execute(program, ground(task))
"""

__version__ = "0.1.0"

from . import corpus
from .abstraction import (AbstractionResult, InitViolationError, NotProperError,
                          RefinementMapping, abstract)
from .bags import BagStructure, analyze_bags
from .bqnp import BqnpProblem, Op, Policy, QTransitionGraph, build_graph, simulate
from .mutex import InvariantError, MutexInvariant, infer_mutex_groups, verify_mutex_invariant
from .pddl import (Atom, Domain, GroundTask, PDDLError, TypedTask, ground, parse_domain,
                   parse_problem)
from .refinement import (FamilyError, FamilySpec, GuardedProgram, SoundnessError, execute,
                         explore, generate_family, refine, validate)
from .solver import (Outcome, SolveResult, TerminationVerdict, sieve, solve, termination_test,
                     verify_policy)

__all__ = [
    "corpus", "abstract", "AbstractionResult", "RefinementMapping", "NotProperError",
    "InitViolationError", "BagStructure", "analyze_bags", "BqnpProblem", "Op", "Policy",
    "QTransitionGraph", "build_graph", "simulate", "InvariantError", "MutexInvariant",
    "infer_mutex_groups", "verify_mutex_invariant", "Atom", "Domain", "GroundTask", "PDDLError",
    "TypedTask", "ground", "parse_domain", "parse_problem", "FamilyError", "FamilySpec",
    "GuardedProgram", "SoundnessError", "execute", "explore", "generate_family", "refine",
    "validate", "Outcome", "SolveResult", "TerminationVerdict", "sieve", "solve",
    "termination_test", "verify_policy",
]
