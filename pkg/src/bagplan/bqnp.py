"""Bounded qualitative numeric planning: problems, qualitative states, graphs, simulation.

Variables share one index space: numeric variables first, then boolean ones.
A qualitative state is a tuple of booleans (``True`` means ``N > 0`` for a
numeric variable and *true* for a boolean one). A concrete state is a tuple of
non-negative integers in the same layout, booleans stored as 0/1.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

__all__ = [
    "QState", "ConcreteState", "Op", "BqnpProblem", "Policy", "QTransitionGraph",
    "MalformedOpError", "SimulationResult", "applicable", "qsuccessors", "qstate_of",
    "apply_concrete", "build_graph", "simulate", "graph_to_dot",
]

QState = tuple[bool, ...]
ConcreteState = tuple[int, ...]

NUMERIC_EFFECTS = ("inc", "dec")
BOOLEAN_EFFECTS = ("set", "clear")


class MalformedOpError(ValueError):
    pass


@dataclass(frozen=True)
class Op:
    id: str
    name: str
    pre: tuple[tuple[int, bool], ...]
    eff: tuple[tuple[int, str], ...]

    @property
    def pre_map(self) -> dict[int, bool]:
        return dict(self.pre)

    @property
    def eff_map(self) -> dict[int, str]:
        return dict(self.eff)


@dataclass(frozen=True)
class BqnpProblem:
    numeric: tuple[str, ...]
    boolean: tuple[str, ...]
    init: QState
    goal: tuple[tuple[int, bool], ...]
    ops: tuple[Op, ...]
    numeric_names: tuple[str, ...] = ()
    boolean_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = self.n_vars
        if len(self.init) != n:
            raise ValueError("init must assign every variable")
        for op in self.ops:
            pre = op.pre_map
            seen = set()
            for v, e in op.eff:
                if not 0 <= v < n:
                    raise MalformedOpError(f"{op.id}: effect on undeclared variable {v}")
                if v in seen:
                    raise MalformedOpError(f"{op.id}: variable {self.var_id(v)} affected twice")
                seen.add(v)
                numeric = self.is_numeric(v)
                if numeric and e not in NUMERIC_EFFECTS or not numeric and e not in BOOLEAN_EFFECTS:
                    raise MalformedOpError(f"{op.id}: effect {e} on {self.var_id(v)}")
                if e == "dec" and pre.get(v) is not True:
                    raise MalformedOpError(f"{op.id}: dec({self.var_id(v)}) without {self.var_id(v)}>0")
            for v, _ in op.pre:
                if not 0 <= v < n:
                    raise MalformedOpError(f"{op.id}: precondition on undeclared variable {v}")

    @property
    def n_numeric(self) -> int:
        return len(self.numeric)

    @property
    def n_vars(self) -> int:
        return len(self.numeric) + len(self.boolean)

    def is_numeric(self, v: int) -> bool:
        return v < len(self.numeric)

    def var_id(self, v: int) -> str:
        return self.numeric[v] if v < len(self.numeric) else self.boolean[v - len(self.numeric)]

    def var_index(self, var_id: str) -> int:
        ids = self.numeric + self.boolean
        return ids.index(var_id)

    def op(self, op_id: str) -> Op:
        for o in self.ops:
            if o.id == op_id:
                return o
        raise KeyError(op_id)

    @property
    def goal_consistent(self) -> bool:
        seen: dict[int, bool] = {}
        for v, val in self.goal:
            if seen.setdefault(v, val) != val:
                return False
        return True

    def is_goal(self, q: QState) -> bool:
        return self.goal_consistent and all(q[v] == val for v, val in self.goal)

    def literal(self, v: int, value: bool) -> dict:
        if self.is_numeric(v):
            return {"var": self.var_id(v), "rel": ">0" if value else "=0"}
        return {"var": self.var_id(v), "rel": "true" if value else "false"}

    def qliterals(self, q: QState) -> list[dict]:
        return [self.literal(v, val) for v, val in enumerate(q)]

    def format_qstate(self, q: QState) -> str:
        parts = []
        for v, val in enumerate(q):
            if self.is_numeric(v):
                parts.append(f"{self.var_id(v)}{'>0' if val else '=0'}")
            else:
                parts.append(("" if val else "!") + self.var_id(v))
        return "{" + ", ".join(parts) + "}"

    # -- serialization ---------------------------------------------------

    def to_json(self) -> dict:
        numeric_names = self.numeric_names or self.numeric
        boolean_names = self.boolean_names or self.boolean
        return {
            "numeric": [{"id": i, "name": n} for i, n in zip(self.numeric, numeric_names)],
            "boolean": [{"id": i, "name": n} for i, n in zip(self.boolean, boolean_names)],
            "init": self.qliterals(self.init),
            "goal": [self.literal(v, val) for v, val in self.goal],
            "ops": [{"id": o.id, "name": o.name,
                     "pre": [self.literal(v, val) for v, val in o.pre],
                     "eff": [{"var": self.var_id(v), "op": e} for v, e in o.eff]}
                    for o in self.ops],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, data: Mapping) -> "BqnpProblem":
        numeric = tuple(v["id"] for v in data["numeric"])
        boolean = tuple(v["id"] for v in data["boolean"])
        index = {vid: i for i, vid in enumerate(numeric + boolean)}

        def lit(d) -> tuple[int, bool]:
            if d["var"] not in index:
                raise ValueError(f"undeclared variable {d['var']}")
            rel = d["rel"]
            if rel not in (">0", "=0", "true", "false"):
                raise ValueError(f"bad relation {rel}")
            return index[d["var"]], rel in (">0", "true")

        init = [None] * len(index)
        for d in data["init"]:
            v, val = lit(d)
            if init[v] is not None and init[v] != val:
                raise ValueError(f"init assigns {d['var']} twice")
            init[v] = val
        if any(x is None for x in init):
            raise ValueError("init must assign every variable")
        ops = tuple(Op(o["id"], o.get("name", o["id"]),
                       tuple(sorted(lit(d) for d in o["pre"])),
                       tuple(sorted((index[e["var"]], e["op"]) for e in o["eff"])))
                    for o in data["ops"])
        return cls(numeric, boolean, tuple(init), tuple(lit(d) for d in data["goal"]), ops,
                   tuple(v.get("name", v["id"]) for v in data["numeric"]),
                   tuple(v.get("name", v["id"]) for v in data["boolean"]))

    @classmethod
    def loads(cls, text: str) -> "BqnpProblem":
        return cls.from_json(json.loads(text))

    def to_qnp(self, name: str = "bqnp") -> str:
        """Flat text format: name, variables, init, goal, then each action."""
        def lits(pairs) -> str:
            return " ".join(f"{self.var_id(v)} {int(val)}" for v, val in pairs)
        feats = " ".join(f"{self.var_id(v)} {int(self.is_numeric(v))}" for v in range(self.n_vars))
        lines = [name, f"{self.n_vars} {feats}",
                 f"{self.n_vars} {lits(enumerate(self.init))}",
                 f"{len(self.goal)} {lits(self.goal)}", str(len(self.ops))]
        for o in self.ops:
            lines.append(o.id)
            lines.append(f"{len(o.pre)} {lits(o.pre)}")
            effs = " ".join(f"{self.var_id(v)} {0 if e in ('dec', 'clear') else 1}" for v, e in o.eff)
            lines.append(f"{len(o.eff)} {effs}".rstrip())
        return "\n".join(lines) + "\n"


def applicable(q: QState, op: Op) -> bool:
    return all(q[v] == val for v, val in op.pre)


def qsuccessors(q: QState, op: Op) -> list[QState]:
    """Qualitative images of executing ``op`` in ``q``; ``dec`` on a positive counter branches."""
    pre = op.pre_map
    base = list(q)
    branch_vars = []
    for v, e in op.eff:
        if e == "inc" or e == "set":
            base[v] = True
        elif e == "clear":
            base[v] = False
        elif e == "dec":
            if pre.get(v) is not True:
                raise MalformedOpError(f"{op.id}: dec without >0 precondition")
            branch_vars.append(v)
    out = []
    n = len(branch_vars)
    for mask in range(1 << n):
        s = list(base)
        for i, v in enumerate(branch_vars):
            # bit set: the counter reaches 0
            s[v] = not (mask >> i) & 1
        out.append(tuple(s))
    return sorted(set(out), reverse=True)


def qstate_of(s: ConcreteState) -> QState:
    return tuple(x > 0 for x in s)


def apply_concrete(s: ConcreteState, op: Op) -> ConcreteState:
    if not applicable(qstate_of(s), op):
        raise ValueError(f"{op.id} not applicable")
    out = list(s)
    for v, e in op.eff:
        if e == "inc":
            out[v] += 1
        elif e == "dec":
            out[v] -= 1
        elif e == "set":
            out[v] = 1
        else:
            out[v] = 0
    if any(x < 0 for x in out):
        raise AssertionError("negative counter")
    return tuple(out)


@dataclass(frozen=True)
class Policy:
    rules: dict[QState, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rules)

    def get(self, q: QState) -> int | None:
        return self.rules.get(q)

    def without(self, q: QState) -> "Policy":
        return Policy({k: v for k, v in self.rules.items() if k != q})

    def to_json(self, problem: BqnpProblem) -> list[dict]:
        return [{"qstate": problem.qliterals(q), "action": problem.ops[a].id}
                for q, a in sorted(self.rules.items(), reverse=True)]

    def dumps(self, problem: BqnpProblem) -> str:
        return json.dumps(self.to_json(problem), indent=2) + "\n"

    @classmethod
    def from_json(cls, data: Sequence[Mapping], problem: BqnpProblem) -> "Policy":
        op_index = {o.id: i for i, o in enumerate(problem.ops)}
        rules = {}
        for entry in data:
            q = [None] * problem.n_vars
            for d in entry["qstate"]:
                q[problem.var_index(d["var"])] = d["rel"] in (">0", "true")
            if any(x is None for x in q):
                raise ValueError("policy qstate must assign every variable")
            rules[tuple(q)] = op_index[entry["action"]]
        return cls(rules)

    @classmethod
    def loads(cls, text: str, problem: BqnpProblem) -> "Policy":
        return cls.from_json(json.loads(text), problem)


@dataclass(frozen=True)
class QTransitionGraph:
    """Reachable qstates and labelled edges ``(src, op, dst)`` over node indices."""

    problem: BqnpProblem
    nodes: tuple[QState, ...]
    edges: tuple[tuple[int, int, int], ...]
    open_nodes: tuple[int, ...] = ()

    def label(self, edge: tuple[int, int, int]) -> dict[int, str]:
        """Per numeric variable: 'inc' or 'dec' (omitted when unchanged)."""
        return {v: e for v, e in self.problem.ops[edge[1]].eff if e in NUMERIC_EFFECTS}

    @property
    def closed(self) -> bool:
        return not self.open_nodes

    def goal_nodes(self) -> list[int]:
        return [i for i, q in enumerate(self.nodes) if self.problem.is_goal(q)]

    def index(self, q: QState) -> int:
        return self.nodes.index(q)


def build_graph(problem: BqnpProblem, policy: Policy | None = None,
                max_nodes: int | None = None,
                roots: Sequence[QState] | None = None) -> QTransitionGraph:
    """Breadth-first closure from the initial qstate (or from ``roots``).

    With a policy, only the mapped action is followed and goal qstates are not
    expanded; reachable non-goal qstates without an applicable mapped action
    are reported in ``open_nodes``. Without a policy every applicable action of
    every reachable qstate is followed.
    """
    roots = list(dict.fromkeys(roots)) if roots else [problem.init]
    index: dict[QState, int] = {q: i for i, q in enumerate(roots)}
    nodes = list(roots)
    edges: list[tuple[int, int, int]] = []
    open_nodes = []
    queue = deque(roots)
    while queue:
        q = queue.popleft()
        i = index[q]
        if policy is not None:
            if problem.is_goal(q):
                continue
            a = policy.get(q)
            if a is None or not applicable(q, problem.ops[a]):
                open_nodes.append(i)
                continue
            choices = [a]
        else:
            choices = [k for k, op in enumerate(problem.ops) if applicable(q, op)]
        for a in choices:
            for s in qsuccessors(q, problem.ops[a]):
                if s not in index:
                    if max_nodes is not None and len(nodes) >= max_nodes:
                        raise MemoryError("qstate graph exceeds node budget")
                    index[s] = len(nodes)
                    nodes.append(s)
                    queue.append(s)
                edges.append((i, a, index[s]))
    return QTransitionGraph(problem, tuple(nodes), tuple(sorted(edges)), tuple(sorted(open_nodes)))


def graph_to_dot(graph: QTransitionGraph) -> str:
    p = graph.problem
    lines = ["digraph qstates {"]
    for i, q in enumerate(graph.nodes):
        shape = "doublecircle" if p.is_goal(q) else "ellipse"
        lines.append(f'  n{i} [label="{p.format_qstate(q)}", shape={shape}];')
    for src, a, dst in graph.edges:
        lines.append(f'  n{src} -> n{dst} [label="{p.ops[a].id}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SimulationResult:
    verdict: str  # goal | stuck | limit
    trajectory: tuple[ConcreteState, ...]
    actions: tuple[int, ...]

    @property
    def steps(self) -> int:
        return len(self.actions)


def simulate(problem: BqnpProblem, policy: Policy, s0: ConcreteState,
             step_limit: int = 10**6) -> SimulationResult:
    s = tuple(s0)
    traj = [s]
    acts: list[int] = []
    while True:
        q = qstate_of(s)
        if problem.is_goal(q):
            return SimulationResult("goal", tuple(traj), tuple(acts))
        if len(acts) >= step_limit:
            return SimulationResult("limit", tuple(traj), tuple(acts))
        a = policy.get(q)
        if a is None or not applicable(q, problem.ops[a]):
            return SimulationResult("stuck", tuple(traj), tuple(acts))
        s = apply_concrete(s, problem.ops[a])
        traj.append(s)
        acts.append(a)


def concrete_states_for(problem: BqnpProblem, q: QState, values: Iterable[int]) -> ConcreteState:
    """Concrete state with the given positive values plugged into ``q``'s positive counters."""
    it = iter(values)
    return tuple((next(it) if val else 0) if problem.is_numeric(v) else int(val)
                 for v, val in enumerate(q))
