import pytest

from bagplan import corpus
from bagplan.bqnp import BqnpProblem, Op, Policy, QTransitionGraph, build_graph
from bagplan.solver import (Outcome, replay_certificate, safe_states, sieve, solve,
                            termination_test, verify_policy)

from conftest import abstraction_of, solution_of

INC = Op("inc", "inc", (), ((0, "inc"),))
DEC = Op("dec", "dec", ((0, True),), ((0, "dec"),))
NOP = Op("nop", "nop", (), ((1, "set"),))


def _graph(n_nodes, edges):
    """Hand-made graph over one counter; edge labels come from INC, DEC, NOP.

    The termination test only looks at node indices and edge labels, so the
    node qstates are placeholders.
    """
    p = BqnpProblem(("X",), ("F",), (True, False), ((0, False),), (INC, DEC, NOP))
    return QTransitionGraph(p, tuple((True, False) for _ in range(n_nodes)), tuple(edges))


def test_sieve_keeps_loop_cycle():
    p = corpus.loop_problem()
    g = build_graph(p, solve(p).policy)
    acyclic, remaining, removals = sieve(g)
    assert not acyclic and removals == ()
    assert len(remaining) == len(g.edges)


def test_sieve_acyclic():
    g = _graph(2, [(0, 0, 1)])
    acyclic, remaining, removals = sieve(g)
    assert acyclic and removals == () and remaining == ((0, 0, 1),)


def test_sieve_removes_dec_self_loop():
    g = _graph(1, [(0, 1, 0)])
    acyclic, remaining, removals = sieve(g)
    assert acyclic and remaining == ()
    assert removals[0].var == 0 and removals[0].edges == ((0, 1, 0),)


def test_loop_terminates():
    p = corpus.loop_problem()
    g = build_graph(p, solve(p).policy)
    v = termination_test(g)
    assert v.terminating and not v.sieve_terminating
    assert len(v.loops) == 1 and (v.loops[0].decs, v.loops[0].incs) == (2, 1)
    assert replay_certificate(g, v)


def test_two_interleaved_cycles_unknown():
    # 0 -> 1 -> 0 and 1 -> 2 -> 1 share node 1; X goes both ways in each
    g = _graph(3, [(0, 0, 1), (1, 1, 0), (1, 0, 2), (2, 1, 1)])
    v = termination_test(g)
    assert not v.terminating
    assert "simple loop" in v.reason


def test_balanced_loop_unknown():
    g = _graph(2, [(0, 0, 1), (1, 1, 0)])
    v = termination_test(g)
    assert not v.terminating and v.failed_scc == (0, 1)


def test_boolean_only_cycle_unknown():
    g = _graph(2, [(0, 2, 1), (1, 2, 0)])
    assert not termination_test(g).terminating


def test_replay_rejects_forged_certificate():
    g = _graph(2, [(0, 0, 1), (1, 1, 0)])
    v = termination_test(g)
    assert not replay_certificate(g, v)
    forged = type(v)(True, False, (), v.loops, None, "forged")
    assert not replay_certificate(g, forged)


def test_solve_loop_problem():
    res = solve(corpus.loop_problem())
    assert res.outcome is Outcome.SOLVED
    assert [corpus.loop_problem().ops[a].id for _, a in sorted(res.policy.rules.items(), reverse=True)] \
        == ["a", "b", "c"]


def test_solve_init_is_goal():
    p = BqnpProblem(("X",), (), (False,), ((0, False),), (INC,))
    res = solve(p)
    assert res.solved and len(res.policy) == 0


def test_solve_dead_initial_state():
    assert solve(corpus.loop_problem(init_b=False)).outcome is Outcome.UNSOLVABLE


def test_inconsistent_goal_unsolvable():
    p = BqnpProblem(("X",), (), (True,), ((0, False), (0, True)), (DEC,))
    assert solve(p).outcome is Outcome.UNSOLVABLE


def test_unknown_when_only_balanced_loops():
    # a lowers X and clears F, c raises X and sets F: the only policy loops a, c
    # and nets zero on X per round, so no certificate exists
    ops = (Op("a", "a", ((0, True), (1, True)), ((0, "dec"), (1, "clear"))),
           Op("c", "c", ((0, True), (1, False)), ((0, "inc"), (1, "set"))))
    p = BqnpProblem(("X",), ("F",), (True, True), ((0, False),), ops)
    res = solve(p)
    assert res.outcome is Outcome.UNKNOWN


def test_node_budget():
    res = solve(abstraction_of("gripper-hl-prob1-1").problem, max_nodes=3)
    assert res.outcome in (Outcome.TIMEOUT, Outcome.MEMOUT)


def test_gripper_sim_solved_and_verified():
    res = solution_of("gripper-sim-prob1-1")
    p = abstraction_of("gripper-sim-prob1-1").problem
    assert res.solved
    assert verify_policy(p, res.policy).ok
    assert replay_certificate(res.graph, res.verdict)


def test_loop_policy_verified():
    p = corpus.loop_problem()
    check = verify_policy(p, solve(p).policy)
    assert check.ok and check.verdict.loops[0].var == 0


def test_dropped_entry_not_closed():
    p = abstraction_of("gripper-sim-prob1-1").problem
    pol = solution_of("gripper-sim-prob1-1").policy
    for q in pol.rules:
        check = verify_policy(p, pol.without(q))
        assert check.status == "not-closed" and check.qstate == q


def test_safe_states_contain_goal_and_init():
    p = corpus.loop_problem()
    safe, _, dist = safe_states(p)
    assert p.init in safe
    assert all(dist[q] == 0 for q in safe if p.is_goal(q))


def test_certificate_json():
    res = solution_of("ferry-prob1-1")
    data = res.verdict.to_json(res.graph)
    assert data["verdict"] == "Terminating"
    assert data["nodes"] and "reason" in data
