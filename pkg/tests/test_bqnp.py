import itertools

import pytest

from bagplan import corpus
from bagplan.abstraction import abstract
from bagplan.bqnp import (BqnpProblem, MalformedOpError, Op, Policy, applicable, apply_concrete,
                          build_graph, graph_to_dot, qsuccessors, simulate)
from bagplan.pddl import Atom
from bagplan.solver import solve

from conftest import abstraction_of, solution_of


def A(*parts):
    return Atom(parts[0], tuple(parts[1:]))


@pytest.fixture(scope="module")
def pick():
    """Colour-example pick op (st3 white ball at r1, free high-energy gripper) and its variables."""
    res = abstract(corpus.load("example1"), prune=False)
    p, m = res.problem, res.mapping

    def var(sts, *atoms):
        c = next(c for c in m.counters if dict(c.sts) == sts and set(c.atoms) == set(atoms))
        return p.var_index(c.id)

    ball = var({"ball": "st3"}, A("at", "?ball", "r1"), A("white", "?ball"))
    free = var({"gripper": "st1"}, A("free", "?gripper"), A("he", "?gripper"))
    carry = var({"ball": "st3", "gripper": "st1"},
                A("carry", "?ball", "?gripper"), A("white", "?ball"), A("le", "?gripper"))
    r1 = p.var_index(next(i for i, a in m.booleans if a == A("at-robby", "r1")))
    op = next(o for o in p.ops if o.name.startswith("pick")
              and set(o.pre_map) == {ball, free, r1})
    return p, op, ball, free, carry, r1


def _state(p, true_vars):
    return tuple(v in true_vars for v in range(p.n_vars))


def test_pick_applicable(pick):
    p, op, ball, free, carry, r1 = pick
    assert applicable(_state(p, {ball, free, r1}), op)
    assert not applicable(_state(p, {free, r1}), op)


def test_empty_pre_always_applicable():
    op = Op("o", "o", (), ((0, "inc"),))
    assert applicable((False,), op) and applicable((True,), op)


def test_pick_successors(pick):
    p, op, ball, free, carry, r1 = pick
    succ = qsuccessors(_state(p, {ball, free, r1}), op)
    assert len(succ) == 4
    assert {(s[ball], s[free]) for s in succ} == set(itertools.product([True, False], repeat=2))
    assert all(s[carry] and s[r1] for s in succ)


def test_boolean_only_successor():
    op = Op("o", "o", ((1, True),), ((1, "clear"),))
    p = BqnpProblem(("N",), ("B",), (False, True), (), (op,))
    assert qsuccessors(p.init, op) == [(False, False)]


def test_inc_from_zero():
    op = Op("o", "o", (), ((0, "inc"),))
    assert qsuccessors((False,), op) == [(True,)]


def test_dec_requires_positive_pre():
    with pytest.raises(MalformedOpError):
        BqnpProblem(("N",), (), (True,), (), (Op("o", "o", (), ((0, "dec"),)),))


def test_loop_graph_structure():
    p = corpus.loop_problem()
    res = solve(p)
    g = build_graph(p, res.policy)
    assert g.closed
    # X>0,A,B -a-> {X>0,!A,B | X=0,!A,B}; X>0,!A,B -b-> {X>0,!A,!B | X=0,!A,!B}; c back
    assert len(g.nodes) == 5
    assert sorted(p.ops[a].id for _, a, _ in g.edges) == ["a", "a", "b", "b", "c"]
    assert len(g.goal_nodes()) == 2


def test_single_node_graph():
    p = BqnpProblem(("N",), (), (False,), ((0, False),), ())
    g = build_graph(p, Policy())
    assert g.nodes == ((False,),) and g.edges == () and g.closed


def _naive_reachable(p):
    seen = {p.init}
    while True:
        new = {s for q in seen for op in p.ops if applicable(q, op) for s in qsuccessors(q, op)}
        if new <= seen:
            return seen
        seen |= new


def test_full_graph_gripper_sim():
    p = abstraction_of("gripper-sim-prob1-1").problem
    g = build_graph(p)
    assert set(g.nodes) == _naive_reachable(p)
    assert len(g.nodes) <= 2 ** p.n_vars


def test_loop_simulation():
    p = corpus.loop_problem()
    pol = solve(p).policy
    run = simulate(p, pol, (3, 1, 1))
    assert run.verdict == "goal"
    assert run.trajectory[-1][0] == 0
    # each full a, b, c round lowers X by one
    xs = [s[0] for s in run.trajectory]
    assert xs[:4] == [3, 2, 1, 2]


def test_simulate_at_goal():
    p = corpus.loop_problem()
    run = simulate(p, solve(p).policy, (0, 1, 1))
    assert run.verdict == "goal" and run.steps == 0


def test_push_simulation():
    res = abstraction_of("push-prob1-1")
    p, m = res.problem, res.mapping
    pol = solution_of("push-prob1-1").policy
    values = []
    for v in range(p.n_vars):
        if not p.is_numeric(v):
            values.append(int(p.init[v]))
            continue
        c = m.counter(p.var_id(v))
        st = c.sts_map["ball"]
        in_s = A("at", "?ball", "s") in c.atoms
        values.append({"st1": 2, "st2": 3}[st] if in_s else 0)
    run = simulate(p, pol, tuple(values))
    assert run.verdict == "goal" and run.steps == 5


def test_apply_concrete_rejects_inapplicable():
    p = corpus.loop_problem()
    with pytest.raises(ValueError):
        apply_concrete((0, 1, 1), p.ops[0])


def test_problem_round_trip():
    p = abstraction_of("ferry-prob1-1").problem
    q = BqnpProblem.loads(p.dumps())
    assert q.init == p.init and q.goal == p.goal and q.ops == p.ops
    pol = solution_of("ferry-prob1-1").policy
    assert Policy.loads(pol.dumps(p), q) == pol


def test_from_json_rejects_undeclared():
    data = corpus.loop_problem().to_json()
    data["goal"] = [{"var": "Y", "rel": "=0"}]
    with pytest.raises(ValueError):
        BqnpProblem.from_json(data)


def test_qnp_text_format():
    text = corpus.loop_problem().to_qnp("loop")
    lines = text.splitlines()
    assert lines[0] == "loop"
    assert lines[1] == "3 X 1 A 0 B 0"
    assert lines[4] == "3"


def test_dot_export():
    p = corpus.loop_problem()
    dot = graph_to_dot(build_graph(p, solve(p).policy))
    assert dot.startswith("digraph") and dot.count("->") == 5
