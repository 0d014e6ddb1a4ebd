import itertools

import pytest

from bagplan import corpus
from bagplan.pddl import (Atom, PDDLSyntaxError, PDDLValidationError, UnsupportedFeatureError,
                          apply, applicable, dump_domain, dump_problem, ground, parse_domain,
                          parse_problem)

TINY_DOMAIN = """
(define (domain tiny)
  (:requirements :strips :typing)
  (:types box room)
  (:predicates (in ?b - box ?r - room) (open ?r - room))
  (:action carry
    :parameters (?b - box ?from - room ?to - room)
    :precondition (and (in ?b ?from) (open ?to))
    :effect (and (in ?b ?to) (not (in ?b ?from)))))
"""


def test_example1_domain_shape(example1):
    dom = example1.domain
    names = {p.name for p in dom.predicates}
    assert names == {"at", "white", "black", "carry", "free", "he", "le", "at-robby"}
    assert sorted(a.name for a in dom.actions) == ["charge", "drop", "move", "pick"]


def test_example1_problem_sizes(example1):
    assert len(example1.objects) == 12
    assert len(example1.objects_of("ball")) == 8
    assert len(example1.objects_of("gripper")) == 2
    assert len(example1.objects_of("room")) == 2
    assert len(example1.init) == 21
    assert len(example1.goal) == 8


def test_domain_without_actions():
    dom = parse_domain("(define (domain d) (:types t) (:predicates (p ?x - t)))")
    assert dom.actions == ()


def test_conditional_effects_rejected():
    text = TINY_DOMAIN.replace("(and (in ?b ?to) (not (in ?b ?from)))",
                               "(when (open ?from) (in ?b ?to))")
    with pytest.raises(UnsupportedFeatureError):
        parse_domain(text)


def test_unbalanced_parentheses():
    with pytest.raises(PDDLSyntaxError):
        parse_domain(TINY_DOMAIN + "(")


def test_empty_goal_is_allowed():
    dom = parse_domain(TINY_DOMAIN)
    task = parse_problem("(define (problem p) (:domain tiny) (:objects b - box r - room)"
                         " (:init (in b r)) (:goal (and)))", dom)
    assert task.goal == frozenset()


def test_goal_type_mismatch(example1):
    text = corpus.problem_text("example1").replace("(at b1 r2)", "(at b1 b2)")
    with pytest.raises(PDDLValidationError):
        parse_problem(text, example1.domain)


def test_pick_grounding_matches_enumeration(example1):
    g = ground(example1)
    picks = [a for a in g.actions if a.schema == "pick"]
    expected = set(itertools.product(example1.objects_of("ball"), example1.objects_of("gripper"),
                                     example1.objects_of("room")))
    assert {a.args for a in picks} == expected
    assert len(picks) == 32


def test_gripper_sim_ground_actions(gripper_sim):
    assert len(ground(gripper_sim).actions) == 44


def test_zero_objects_means_zero_actions():
    dom = parse_domain(TINY_DOMAIN)
    task = parse_problem("(define (problem p) (:domain tiny) (:objects r1 r2 - room)"
                         " (:init (open r2)) (:goal (and)))", dom)
    assert [a for a in ground(task).actions if a.schema == "carry"] == []


def test_apply_and_applicable(gripper_sim):
    g = ground(gripper_sim)
    pick = next(a for a in g.actions if a.schema == "pick" and applicable(a, g.init))
    assert applicable(pick, g.init)
    after = apply(pick, g.init)
    assert pick.add <= after and not (pick.delete & after)
    with pytest.raises(ValueError):
        apply(pick, after)


def test_dump_round_trip(example1):
    dom = parse_domain(dump_domain(example1.domain))
    again = parse_problem(dump_problem(example1), dom)
    assert again.init == example1.init
    assert again.goal == example1.goal
    assert dict(again.objects) == dict(example1.objects)


def test_atom_substitute():
    assert Atom("at", ("?b", "r1")).substitute({"?b": "b3"}) == Atom("at", ("b3", "r1"))
