from bagplan import corpus
from bagplan.bags import (analyze_bags, attribute_values, baggable_types, check_atomic,
                          compute_subtypes, enumerate_avs, enumerate_eavs)
from bagplan.mutex import MutexInvariant, PredicateGroup, infer_mutex_groups
from bagplan.pddl import Atom, parse_domain, parse_problem

ZAP = """
  (:action zap
    :parameters (?b - ball ?g - gripper)
    :precondition (and (white ?b) (he ?g))
    :effect (and (black ?b) (le ?g) (not (white ?b)) (not (he ?g))))"""


def _example1_with(extra_action):
    text = corpus.domain_text("example1").rstrip()
    assert text.endswith(")")
    dom = parse_domain(text[:-1] + extra_action + ")")
    return parse_problem(corpus.problem_text("example1"), dom)


def _bags(task):
    return analyze_bags(task, infer_mutex_groups(task))


def A(*parts):
    return Atom(parts[0], tuple(parts[1:]))


def test_baggable_example1(example1):
    assert baggable_types(example1, infer_mutex_groups(example1)) == ("ball", "gripper")


def test_ungrouped_predicate_excludes_type(example1):
    inv = infer_mutex_groups(example1)
    only_location = {**inv.groups, "ball": inv.of("ball")[:1]}
    assert "ball" not in baggable_types(example1, MutexInvariant(only_location))


def test_no_groups_no_baggable(example1):
    assert baggable_types(example1, MutexInvariant({})) == ()


def test_subtypes_example1(example1):
    bags = _bags(example1)
    st = {s.name: (s.type, s.members) for s in bags.all_subtypes}
    assert st == {"st1": ("gripper", ("g1", "g2")),
                  "st2": ("ball", ("b1", "b2", "b3", "b4")),
                  "st3": ("ball", ("b5", "b6", "b7", "b8"))}


def test_subtypes_empty_goal(example1):
    task = example1.with_objects(example1.objects, example1.init, ())
    subs = compute_subtypes(task, "ball")
    assert len(subs) == 1 and len(subs[0]) == 8


def test_subtypes_distinct_goals(example1):
    rooms = example1.objects_of("room")
    goal = [A("at", "b1", rooms[0]), A("at", "b2", rooms[1])]
    objs = [(o, t) for o, t in example1.objects if o not in {"b3", "b4", "b5", "b6", "b7", "b8"}]
    init = [a for a in example1.init if not set(a.args) & {"b3", "b4", "b5", "b6", "b7", "b8"}]
    subs = compute_subtypes(example1.with_objects(objs, init, goal), "ball")
    assert [s.members for s in subs] == [("b1",), ("b2",)]


def test_attribute_values_location_group(example1):
    inv = infer_mutex_groups(example1)
    m1 = next(g for g in inv.of("ball") if "at" in g.predicates)
    vals = {v.atom for v in attribute_values(example1, m1, ("ball", "gripper"))}
    assert vals == {A("at", "?ball", "r1"), A("at", "?ball", "r2"), A("carry", "?ball", "?gripper")}


def test_attribute_values_color_group(example1):
    inv = infer_mutex_groups(example1)
    m2 = next(g for g in inv.of("ball") if "white" in g.predicates)
    vals = {v.atom for v in attribute_values(example1, m2, ("ball", "gripper"))}
    assert vals == {A("white", "?ball"), A("black", "?ball")}


def test_attribute_values_empty_parameter_type(example1):
    task = example1.with_objects([(o, t) for o, t in example1.objects if t != "room"],
                                 [a for a in example1.init if a.predicate not in {"at", "at-robby"}],
                                 ())
    group = PredicateGroup("ball", (("at", 0), ("carry", 0)))
    vals = {v.atom for v in attribute_values(task, group, ("ball", "gripper"))}
    assert vals == {A("carry", "?ball", "?gripper")}


def test_avs_counts(example1):
    inv = infer_mutex_groups(example1)
    assert len(enumerate_avs(example1, "ball", inv, ("ball", "gripper"))) == 6
    assert len(enumerate_avs(example1, "gripper", inv, ("ball", "gripper"))) == 4


def test_single_value_group(example1):
    inv = MutexInvariant({"ball": (PredicateGroup("ball", (("white", 0),)),)})
    assert len(enumerate_avs(example1, "ball", inv, ("ball",))) == 1


def test_eavs_join(example1):
    bags = _bags(example1)
    keys = {frozenset(e.atoms) for e in bags.eavs}
    assert frozenset({A("carry", "?ball", "?gripper"), A("white", "?ball"), A("he", "?gripper")}) in keys
    # carry-based eavs are always joined, never partial
    assert frozenset({A("carry", "?ball", "?gripper"), A("white", "?ball")}) not in keys


def test_eavs_without_join(example1):
    bags = _bags(example1)
    single = [e for e in bags.eavs if A("at", "?ball", "r1") in e.atoms and A("white", "?ball") in e.atoms]
    assert len(single) == 1 and single[0].types == ("ball",)


def test_eavs_counts_example1(example1):
    bags = _bags(example1)
    # 4 free balls + 2 free-gripper states + 4 carry joins (color x energy)
    by_types = {}
    for e in bags.eavs:
        by_types[e.types] = by_types.get(e.types, 0) + 1
    assert by_types == {("ball",): 4, ("gripper",): 2, ("ball", "gripper"): 4}


def test_one_baggable_type_eavs_equal_avs():
    task = corpus.load("ferry-prob1-1")
    bags = _bags(task)
    assert bags.baggable == ("car",)
    assert {e.atoms for e in bags.eavs} == {tuple(sorted(a.atoms)) for a in bags.avs["car"]}


def test_pick_and_drop_atomic(example1):
    bags = _bags(example1)
    assert bags.proper
    assert all(v.atomic for v in bags.atomicity)


def test_single_baggable_schema_atomic(example1):
    bags = _bags(example1)
    charge = example1.domain.action("charge")
    assert check_atomic(charge, bags.eavs, bags.baggable).atomic


def test_unbridged_change_not_atomic():
    task = _example1_with(ZAP)
    bags = _bags(task)
    assert not bags.proper
    bad = next(v for v in bags.atomicity if not v.atomic)
    assert bad.schema == "zap"
    assert not any("carry" in p for p in bad.pair)
    assert sorted(p.split()[1] for p in bad.pair) == ["?ball)", "?gripper)"]
