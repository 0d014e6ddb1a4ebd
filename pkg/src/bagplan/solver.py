"""Policy termination (SIEVE plus the simple-loop test) and a policy search for BQNP.

A policy solves a BQNP problem when the qstate graph it induces is closed,
contains a goal node and terminates. Termination is decided soundly but not
completely: SIEVE removes edges that decrement a variable no edge of the same
strongly connected component increments, and every component that survives
must be a simple loop along which some variable is decremented more often than
it is incremented.
"""

from __future__ import annotations

import enum
import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx

from .bqnp import BqnpProblem, Policy, QState, QTransitionGraph, applicable, build_graph, qsuccessors

log = logging.getLogger(__name__)

__all__ = [
    "Edge", "SieveRemoval", "LoopWitness", "TerminationVerdict", "sieve", "termination_test",
    "replay_certificate", "Outcome", "SolveResult", "solve", "PolicyCheck", "verify_policy",
    "safe_states",
]

Edge = tuple[int, int, int]  # (source node, op index, target node)


@dataclass(frozen=True)
class SieveRemoval:
    var: int
    scc: tuple[int, ...]
    edges: tuple[Edge, ...]


@dataclass(frozen=True)
class LoopWitness:
    scc: tuple[int, ...]
    var: int
    decs: int
    incs: int


@dataclass(frozen=True)
class TerminationVerdict:
    terminating: bool
    sieve_terminating: bool
    removals: tuple[SieveRemoval, ...] = ()
    loops: tuple[LoopWitness, ...] = ()
    failed_scc: tuple[int, ...] | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.terminating

    def to_json(self, graph: QTransitionGraph) -> dict:
        p = graph.problem

        def node(i: int) -> str:
            return p.format_qstate(graph.nodes[i])

        def edge(e: Edge) -> dict:
            return {"src": e[0], "op": p.ops[e[1]].id, "dst": e[2]}

        return {
            "verdict": "Terminating" if self.terminating else "Unknown",
            "sieve_terminating": self.sieve_terminating,
            "nodes": {str(i): node(i) for i in range(len(graph.nodes))},
            "removed": [{"var": p.var_id(r.var), "scc": list(r.scc),
                         "edges": [edge(e) for e in r.edges]} for r in self.removals],
            "loops": [{"scc": list(w.scc), "var": p.var_id(w.var), "decs": w.decs, "incs": w.incs}
                      for w in self.loops],
            "failed_scc": None if self.failed_scc is None else list(self.failed_scc),
            "reason": self.reason,
        }

    def dumps(self, graph: QTransitionGraph) -> str:
        return json.dumps(self.to_json(graph), indent=2) + "\n"


def _effects(graph: QTransitionGraph, e: Edge) -> dict[int, str]:
    return graph.label(e)


def _cyclic_components(n: int, edges: Iterable[Edge]) -> list[tuple[int, ...]]:
    """SCCs that contain a cycle, in topological order of the condensation."""
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    g.add_edges_from((s, d) for s, _, d in edges)
    cond = nx.condensation(g)
    out = []
    for c in nx.topological_sort(cond):
        members = tuple(sorted(cond.nodes[c]["members"]))
        if len(members) > 1 or g.has_edge(members[0], members[0]):
            out.append(members)
    return out


def _inner(edges: Iterable[Edge], scc: Sequence[int]) -> list[Edge]:
    s = set(scc)
    return [e for e in edges if e[0] in s and e[2] in s]


def sieve(graph: QTransitionGraph) -> tuple[bool, tuple[Edge, ...], tuple[SieveRemoval, ...]]:
    """Return ``(acyclic, remaining edges, removals)``."""
    edges = set(graph.edges)
    removals = []
    numeric = range(graph.problem.n_numeric)
    while True:
        sccs = _cyclic_components(len(graph.nodes), edges)
        if not sccs:
            return True, tuple(sorted(edges)), tuple(removals)
        step = None
        for scc in sccs:
            inner = _inner(edges, scc)
            labels = [_effects(graph, e) for e in inner]
            for v in numeric:
                decs = [e for e, lab in zip(inner, labels) if lab.get(v) == "dec"]
                if decs and not any(lab.get(v) == "inc" for lab in labels):
                    step = SieveRemoval(v, scc, tuple(sorted(decs)))
                    break
            if step:
                break
        if step is None:
            return False, tuple(sorted(edges)), tuple(removals)
        edges -= set(step.edges)
        removals.append(step)


def _is_simple_loop(scc: Sequence[int], inner: Sequence[Edge]) -> bool:
    if len(inner) != len(scc):
        return False
    sources = [e[0] for e in inner]
    return sorted(sources) == sorted(scc)


def termination_test(graph: QTransitionGraph) -> TerminationVerdict:
    acyclic, remaining, removals = sieve(graph)
    if acyclic:
        return TerminationVerdict(True, True, removals, reason="SIEVE leaves an acyclic graph")
    loops = []
    for scc in _cyclic_components(len(graph.nodes), remaining):
        inner = _inner(remaining, scc)
        if not _is_simple_loop(scc, inner):
            return TerminationVerdict(False, False, removals, tuple(loops), scc,
                                      "a remaining component is not a simple loop")
        labels = [_effects(graph, e) for e in inner]
        for v in range(graph.problem.n_numeric):
            decs = sum(lab.get(v) == "dec" for lab in labels)
            incs = sum(lab.get(v) == "inc" for lab in labels)
            if decs > incs:
                loops.append(LoopWitness(scc, v, decs, incs))
                break
        else:
            return TerminationVerdict(False, False, removals, tuple(loops), scc,
                                      "no variable decreases along a remaining loop")
    return TerminationVerdict(True, False, removals, tuple(loops),
                              reason="every remaining loop decreases a variable")


# --------------------------------------------------------------------------
# independent certificate checker (plain reachability, no networkx)

def _reach(n: int, edges: Iterable[Edge], start: int) -> set[int]:
    succ: dict[int, list[int]] = {}
    for s, _, d in edges:
        succ.setdefault(s, []).append(d)
    seen, stack = set(), [start]
    while stack:
        x = stack.pop()
        for y in succ.get(x, ()):
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return seen


def _naive_cyclic_sccs(n: int, edges: Sequence[Edge]) -> list[frozenset[int]]:
    reach = {i: _reach(n, edges, i) for i in range(n)}
    out, done = [], set()
    for i in range(n):
        if i in done or i not in reach[i]:
            continue
        comp = frozenset(j for j in range(n) if j in reach[i] and i in reach[j])
        done |= comp
        out.append(comp)
    return out


def replay_certificate(graph: QTransitionGraph, verdict: TerminationVerdict) -> bool:
    """Check a Terminating verdict step by step without reusing the solver's code paths."""
    if not verdict.terminating:
        return False
    n = len(graph.nodes)
    ops = graph.problem.ops
    edges = list(graph.edges)

    def eff(e: Edge, v: int) -> str | None:
        return dict(ops[e[1]].eff).get(v)

    for r in verdict.removals:
        comps = _naive_cyclic_sccs(n, edges)
        if frozenset(r.scc) not in comps:
            return False
        inner = [e for e in edges if e[0] in r.scc and e[2] in r.scc]
        if any(eff(e, r.var) == "inc" for e in inner):
            return False
        expected = sorted(e for e in inner if eff(e, r.var) == "dec")
        if not expected or expected != sorted(r.edges):
            return False
        edges = [e for e in edges if e not in set(r.edges)]
    comps = _naive_cyclic_sccs(n, edges)
    witnesses = {frozenset(w.scc): w for w in verdict.loops}
    if set(witnesses) != set(comps):
        return False
    for comp, w in witnesses.items():
        inner = [e for e in edges if e[0] in comp and e[2] in comp]
        out_deg: dict[int, int] = {}
        for e in inner:
            out_deg[e[0]] = out_deg.get(e[0], 0) + 1
        if len(inner) != len(comp) or any(out_deg.get(x) != 1 for x in comp):
            return False
        decs = sum(eff(e, w.var) == "dec" for e in inner)
        incs = sum(eff(e, w.var) == "inc" for e in inner)
        if (decs, incs) != (w.decs, w.incs) or decs <= incs:
            return False
    return True


# --------------------------------------------------------------------------
# search

class Outcome(enum.Enum):
    SOLVED = "solved"
    UNSOLVABLE = "unsolvable"
    UNKNOWN = "unknown"
    TIMEOUT = "timeout"
    MEMOUT = "memout"


@dataclass(frozen=True)
class SolveResult:
    outcome: Outcome
    policy: Policy | None = None
    verdict: TerminationVerdict | None = None
    graph: QTransitionGraph | None = None
    nodes: int = 0
    seconds: float = 0.0
    reason: str = ""

    @property
    def solved(self) -> bool:
        return self.outcome is Outcome.SOLVED


def safe_states(problem: BqnpProblem, max_states: int = 200_000,
                roots: Sequence[QState] | None = None):
    """Qstates that may still reach a goal, with the actions that keep inside them.

    Returns ``(safe, actions, distance)`` or ``None`` when the reachable qstate
    space exceeds ``max_states``. Any solution policy only visits safe states
    and only uses safe actions, so restricting the search to them loses nothing.
    """
    try:
        full = build_graph(problem, max_nodes=max_states, roots=roots)
    except MemoryError:
        return None
    succ: dict[tuple[int, int], list[int]] = {}
    by_node: dict[int, list[int]] = {}
    for s, a, d in full.edges:
        if (s, a) not in succ:
            by_node.setdefault(s, []).append(a)
        succ.setdefault((s, a), []).append(d)
    goal = {i for i, q in enumerate(full.nodes) if problem.is_goal(q)}
    alive = set(range(len(full.nodes)))
    while True:
        acts = {i: [a for a in by_node.get(i, ()) if all(d in alive for d in succ[(i, a)])]
                for i in alive if i not in goal}
        keep = goal | {i for i, a in acts.items() if a}
        # backward reachability to a goal through safe actions
        pred: dict[int, set[int]] = {}
        for i, a_list in acts.items():
            if i not in keep:
                continue
            for a in a_list:
                for d in succ[(i, a)]:
                    pred.setdefault(d, set()).add(i)
        dist = {g: 0 for g in goal}
        queue = deque(goal)
        while queue:
            x = queue.popleft()
            for y in pred.get(x, ()):
                if y in keep and y not in dist:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        new_alive = set(dist)
        if new_alive == alive:
            break
        alive = new_alive
    q_of = full.nodes
    safe = {q_of[i] for i in alive}
    actions = {q_of[i]: sorted(a) for i, a in acts.items() if i in alive}
    distance = {q_of[i]: d for i, d in dist.items()}
    return safe, actions, distance


def _induced(problem: BqnpProblem, rules: dict[QState, int], roots: Sequence[QState]):
    """BFS over the partial policy: ``(order, edges, open states)``."""
    index = {q: i for i, q in enumerate(roots)}
    order = list(roots)
    edges = []
    open_states = []
    queue = deque(roots)
    while queue:
        q = queue.popleft()
        if problem.is_goal(q):
            continue
        a = rules.get(q)
        if a is None:
            open_states.append(q)
            continue
        for s in qsuccessors(q, problem.ops[a]):
            if s not in index:
                index[s] = len(order)
                order.append(s)
                queue.append(s)
            edges.append((index[q], a, index[s]))
    return order, edges, open_states


def _has_undecremented_cycle(problem: BqnpProblem, edges: Sequence[Edge]) -> bool:
    """A cycle none of whose edges decrements a counter can be followed forever."""
    g = nx.DiGraph()
    for s, a, d in edges:
        if not any(e == "dec" for _, e in problem.ops[a].eff):
            g.add_edge(s, d)
    return not nx.is_directed_acyclic_graph(g)


def solve(problem: BqnpProblem, max_nodes: int = 100_000, max_seconds: float | None = 60.0,
          max_states: int = 200_000, roots: Sequence[QState] | None = None) -> SolveResult:
    """Depth-first AND/OR search for a closed, goal-reaching, terminating policy.

    The first open qstate in breadth-first order is expanded; its applicable
    actions are tried by estimated goal distance, then by ascending id. With
    ``roots`` the policy must solve the problem from every listed qstate.
    """
    roots = list(dict.fromkeys(roots)) if roots else [problem.init]
    t0 = time.perf_counter()

    def done(outcome, policy=None, verdict=None, graph=None, reason="", nodes=0):
        return SolveResult(outcome, policy, verdict, graph, nodes, time.perf_counter() - t0, reason)

    if not problem.goal_consistent:
        return done(Outcome.UNSOLVABLE, reason="goal assigns a variable both ways")
    if all(problem.is_goal(q) for q in roots):
        policy = Policy({})
        graph = build_graph(problem, policy, roots=roots)
        return done(Outcome.SOLVED, policy, termination_test(graph), graph, "initial state is a goal")

    pruning = safe_states(problem, max_states, roots)
    if pruning is not None:
        safe, safe_actions, dist = pruning
        if any(q not in safe for q in roots):
            return done(Outcome.UNSOLVABLE, reason="no goal is reachable from the initial qstate")
    else:
        log.info("qstate space too large for safe-state pruning")
        safe, safe_actions, dist = None, None, {}

    def candidates(q: QState) -> list[int]:
        if safe_actions is not None:
            acts = safe_actions.get(q, [])
        else:
            acts = [i for i, op in enumerate(problem.ops) if applicable(q, op)]

        def key(a: int):
            ds = [dist.get(s, 1 << 30) for s in qsuccessors(q, problem.ops[a])]
            return (min(ds), max(ds), a)
        return sorted(acts, key=key)

    nodes = 0
    termination_failures = 0
    # each frame: (rules, qstate being decided, remaining actions)
    stack: list[tuple[dict, QState, list[int]]] = []

    def push(rules: dict) -> SolveResult | None:
        nonlocal termination_failures
        order, edges, open_states = _induced(problem, rules, roots)
        if _has_undecremented_cycle(problem, edges):
            termination_failures += 1
            return None
        graph = QTransitionGraph(problem, tuple(order), tuple(sorted(edges)))
        # the test is monotone: a completion's graph contains this one, so an
        # Unknown verdict here is final for the whole subtree
        verdict = termination_test(graph)
        if not verdict.terminating:
            termination_failures += 1
            return None
        if not open_states:
            if not graph.goal_nodes():
                return None
            return done(Outcome.SOLVED, Policy(dict(rules)), verdict, graph, nodes=nodes)
        q = open_states[0]
        stack.append((rules, q, candidates(q)))
        return None

    found = push({})
    while found is None and stack:
        if nodes >= max_nodes:
            return done(Outcome.TIMEOUT, reason=f"node budget {max_nodes} exhausted", nodes=nodes)
        if max_seconds is not None and time.perf_counter() - t0 > max_seconds:
            return done(Outcome.TIMEOUT, reason=f"time budget {max_seconds}s exhausted", nodes=nodes)
        rules, q, remaining = stack[-1]
        if not remaining:
            stack.pop()
            continue
        a = remaining.pop(0)
        nodes += 1
        found = push({**rules, q: a})
    if found is not None:
        return found
    if safe is not None or termination_failures:
        # with safe states known, a closed goal-reaching policy exists from init
        return done(Outcome.UNKNOWN, nodes=nodes,
                    reason=f"{termination_failures} candidates failed the termination test")
    return done(Outcome.UNSOLVABLE, nodes=nodes, reason="no closed goal-reaching policy exists")


# --------------------------------------------------------------------------
# standalone policy audit

@dataclass(frozen=True)
class PolicyCheck:
    status: str  # solution | not-closed | no-goal | termination-unknown
    qstate: QState | None = None
    verdict: TerminationVerdict | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "solution"


def verify_policy(problem: BqnpProblem, policy: Policy,
                  roots: Sequence[QState] | None = None) -> PolicyCheck:
    graph = build_graph(problem, policy, roots=roots)
    if graph.open_nodes:
        q = graph.nodes[graph.open_nodes[0]]
        a = policy.get(q)
        why = "no action mapped" if a is None else f"{problem.ops[a].id} not applicable"
        return PolicyCheck("not-closed", q, detail=f"{problem.format_qstate(q)}: {why}")
    if not graph.goal_nodes():
        return PolicyCheck("no-goal", detail="the induced graph has no goal qstate")
    verdict = termination_test(graph)
    if not verdict.terminating:
        return PolicyCheck("termination-unknown", verdict=verdict, detail=verdict.reason)
    if not replay_certificate(graph, verdict):
        return PolicyCheck("termination-unknown", verdict=verdict,
                           detail="certificate rejected by the independent checker")
    return PolicyCheck("solution", verdict=verdict)
