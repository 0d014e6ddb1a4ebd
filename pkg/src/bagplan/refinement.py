"""Turn an abstract policy into a guarded program and run it on concrete instances.

Each rule of a :class:`GuardedProgram` fires when the counters and boolean atoms
of the current state evaluate to its qstate; it then picks any object tuple
from the bags named by the abstract action and executes the schema on it.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .abstraction import (Concretization, CounterDef, RefinementMapping, StateIndex, count_bag,
                          iter_bindings, subtype_members)
from .bags import goal_signature, type_var
from .bqnp import BqnpProblem, ConcreteState, Policy, QState
from .pddl import Atom, GroundAction, GroundTask, TypedTask

__all__ = [
    "SoundnessError", "FamilyError", "Rule", "GuardedProgram", "refine", "CounterTracker",
    "abstract_values", "guard_state", "abstract_qstate", "tuple_choices", "ExecutionResult", "execute",
    "ExplorationResult", "explore", "FamilySpec", "generate_family", "ValidationResult",
    "validate", "format_plan", "parse_plan",
]


class SoundnessError(RuntimeError):
    """A guard held but its selection formula had no satisfying tuple (or vice versa)."""


class FamilyError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    guard: QState
    op: str
    template: Concretization


@dataclass(frozen=True)
class GuardedProgram:
    problem: BqnpProblem
    mapping: RefinementMapping
    rules: tuple[Rule, ...]
    _by_guard: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self._by_guard.update({r.guard: r for r in self.rules})

    def __len__(self) -> int:
        return len(self.rules)

    def match(self, q: QState) -> Rule | None:
        return self._by_guard.get(q)

    def describe(self) -> list[str]:
        """One readable line per rule."""
        p, out = self.problem, []
        for r in self.rules:
            t = r.template
            sel = " & ".join(f"{st}({type_var(ty)})" for c in t.blocks
                             for ty, st in self.mapping.counter(c).sts)
            atoms = sorted({str(a) for c in t.blocks for a in self.mapping.counter(c).atoms}
                           | {str(a) for a in t.pre})
            args = " ".join(v for _, v in t.binding)
            out.append(f"if {p.format_qstate(r.guard)}: choose {sel or '()'} with "
                       f"{' & '.join(atoms) or 'true'}; ({t.schema} {args})")
        return out

    def to_json(self) -> dict:
        return {"rules": [{"guard": self.problem.qliterals(r.guard), "op": r.op,
                           "schema": r.template.schema, "binding": dict(r.template.binding),
                           "blocks": list(r.template.blocks),
                           "pre": [str(a) for a in r.template.pre]} for r in self.rules]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


def refine(policy: Policy, problem: BqnpProblem, mapping: RefinementMapping) -> GuardedProgram:
    rules = []
    for q, a in sorted(policy.rules.items(), reverse=True):
        op = problem.ops[a]
        try:
            template = mapping.rule(op.id)
        except KeyError:
            raise KeyError(f"abstract action {op.id} has no concretization") from None
        for cid in template.blocks:
            mapping.counter(cid)
        rules.append(Rule(q, op.id, template))
    return GuardedProgram(problem, mapping, tuple(rules))


# --------------------------------------------------------------------------
# evaluating the abstraction on a concrete state

def _members_for(mapping: RefinementMapping, task: TypedTask) -> dict[str, tuple[str, ...]]:
    return subtype_members(mapping.subtypes, task)


def abstract_values(mapping: RefinementMapping, atoms: Iterable[Atom],
                    members: Mapping[str, Sequence[str]]) -> ConcreteState:
    """Counter values followed by 0/1 boolean values."""
    state = StateIndex(atoms)
    nums = [count_bag(c, state, members) for c in mapping.counters]
    return tuple(nums) + tuple(int(a in state) for _, a in mapping.booleans)


def guard_state(values: ConcreteState) -> QState:
    return tuple(v > 0 for v in values)


def abstract_qstate(mapping: RefinementMapping, task: TypedTask) -> QState:
    """The qstate of ``task``'s initial state; used as a solver root for family members."""
    return guard_state(abstract_values(mapping, task.init, _members_for(mapping, task)))


class CounterTracker:
    """Counter values kept up to date by recounting only bags an action can touch."""

    def __init__(self, mapping: RefinementMapping, atoms: Iterable[Atom],
                 members: Mapping[str, Sequence[str]]):
        self.mapping = mapping
        self.members = members
        self.atoms = set(atoms)
        self.values = list(abstract_values(mapping, self.atoms, members))
        self._preds = [frozenset(a.predicate for a in c.atoms) for c in mapping.counters]
        self._bool_pos = {a: len(mapping.counters) + j for j, (_, a) in enumerate(mapping.booleans)}

    def update(self, removed: Iterable[Atom], added: Iterable[Atom]) -> None:
        removed, added = set(removed), set(added)
        self.atoms -= removed
        self.atoms |= added
        touched = {a.predicate for a in removed | added}
        state = None
        for i, c in enumerate(self.mapping.counters):
            if self._preds[i] & touched:
                if state is None:
                    state = StateIndex(self.atoms)
                self.values[i] = count_bag(c, state, self.members)
        for a in removed | added:
            if a in self._bool_pos:
                self.values[self._bool_pos[a]] = int(a in self.atoms)

    def snapshot(self) -> ConcreteState:
        return tuple(self.values)


def tuple_choices(template: Concretization, mapping: RefinementMapping, atoms,
                  members: Mapping[str, Sequence[str]]) -> list[dict[str, str]]:
    """All bindings of the template's baggable parameters, sorted canonically."""
    state = atoms if isinstance(atoms, StateIndex) else StateIndex(atoms)
    patterns: list[Atom] = list(template.pre)
    domains: dict[str, Sequence[str]] = {}
    for cid in template.blocks:
        c = mapping.counter(cid)
        patterns.extend(c.atoms)
        for t, st in c.sts:
            domains[type_var(t)] = members[st]
    found = {tuple(sorted(b.items())) for b in iter_bindings(patterns, state, domains)}
    return [dict(b) for b in sorted(found)]


def _ground_args(template: Concretization, binding: Mapping[str, str]) -> tuple[str, ...]:
    return tuple(binding.get(v, v) for _, v in template.binding)


def _apply_schema(task: TypedTask, schema_name: str, args: Sequence[str], atoms: frozenset[Atom]):
    schema = task.domain.action(schema_name)
    b = {v: a for (v, _), a in zip(schema.params, args)}
    pre = {a.substitute(b) for a in schema.pre}
    if not pre <= atoms:
        raise SoundnessError(f"({schema_name} {' '.join(args)}) is not applicable")
    add = {a.substitute(b) for a in schema.add}
    dele = {a.substitute(b) for a in schema.delete}
    return (atoms - dele) | add, dele - add, add - atoms


# --------------------------------------------------------------------------
# execution

Chooser = Callable[[list[dict[str, str]]], dict[str, str]]


def _make_chooser(chooser: str | Chooser, seed: int | None) -> Chooser:
    if callable(chooser):
        return chooser
    if chooser == "first":
        return lambda options: options[0]
    if chooser == "random":
        rng = random.Random(seed)
        return lambda options: rng.choice(options)
    raise ValueError(f"unknown tuple chooser {chooser!r}")


@dataclass(frozen=True)
class ExecutionResult:
    verdict: str  # goal | stuck | limit
    plan: tuple[GroundAction, ...]
    abstract_trace: tuple[str, ...] = ()
    detail: str = ""

    @property
    def reached_goal(self) -> bool:
        return self.verdict == "goal"


def execute(program: GuardedProgram, gtask: GroundTask, chooser: str | Chooser = "first",
            seed: int | None = None, step_limit: int = 100_000,
            incremental_threshold: int = 10_000) -> ExecutionResult:
    """Run the program from the task's initial state.

    Counters are recounted from scratch each step unless the initial state
    holds more than ``incremental_threshold`` counted tuples, in which case a
    :class:`CounterTracker` recounts only the bags each action can touch.
    """
    task = gtask.task
    choose = _make_chooser(chooser, seed)
    members = _members_for(program.mapping, task)
    atoms = frozenset(task.init)
    goal = task.goal
    values = abstract_values(program.mapping, atoms, members)
    tracker = None
    if sum(values[:len(program.mapping.counters)]) > incremental_threshold:
        tracker = CounterTracker(program.mapping, atoms, members)
    plan: list[GroundAction] = []
    trace: list[str] = []
    while True:
        if goal <= atoms:
            return ExecutionResult("goal", tuple(plan), tuple(trace))
        if len(plan) >= step_limit:
            return ExecutionResult("limit", tuple(plan), tuple(trace))
        q = guard_state(values)
        rule = program.match(q)
        if rule is None:
            return ExecutionResult("stuck", tuple(plan), tuple(trace),
                                   f"no rule for {program.problem.format_qstate(q)}")
        options = tuple_choices(rule.template, program.mapping, atoms, members)
        if not options:
            raise SoundnessError(f"guard of {rule.op} holds but no tuple satisfies it")
        binding = choose(options)
        args = _ground_args(rule.template, binding)
        action = gtask.lookup(rule.template.schema, args)
        atoms, removed, added = _apply_schema(task, rule.template.schema, args, atoms)
        plan.append(action)
        trace.append(rule.op)
        if tracker is not None:
            tracker.update(removed, added)
            values = tracker.snapshot()
        else:
            values = abstract_values(program.mapping, atoms, members)


# --------------------------------------------------------------------------
# every tuple choice at once

@dataclass(frozen=True)
class ExplorationResult:
    states: int
    goal_states: int
    stuck: tuple[str, ...]
    cyclic: bool
    complete: bool

    @property
    def all_branches_reach_goal(self) -> bool:
        return self.complete and not self.stuck and not self.cyclic


def explore(program: GuardedProgram, gtask: GroundTask, max_states: int = 100_000) -> ExplorationResult:
    """Follow every tuple choice of every rule; report stuck states and cycles."""
    task = gtask.task
    members = _members_for(program.mapping, task)
    goal = task.goal
    succ: dict[frozenset, list[frozenset]] = {}
    stuck: list[str] = []
    goals = 0
    todo = [frozenset(task.init)]
    complete = True
    while todo:
        s = todo.pop()
        if s in succ:
            continue
        if len(succ) >= max_states:
            complete = False
            break
        succ[s] = []
        if goal <= s:
            goals += 1
            continue
        rule = program.match(guard_state(abstract_values(program.mapping, s, members)))
        if rule is None:
            stuck.append(" ".join(sorted(map(str, s))))
            continue
        options = tuple_choices(rule.template, program.mapping, s, members)
        if not options:
            raise SoundnessError(f"guard of {rule.op} holds but no tuple satisfies it")
        for b in options:
            nxt = _apply_schema(task, rule.template.schema, _ground_args(rule.template, b), s)[0]
            succ[s].append(nxt)
            if nxt not in succ:
                todo.append(nxt)
    return ExplorationResult(len(succ), goals, tuple(stuck), _has_cycle(succ), complete)


def _has_cycle(succ: Mapping) -> bool:
    color: dict = {}
    for root in succ:
        if root in color:
            continue
        stack = [(root, iter(succ.get(root, ())))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color.get(nxt) == 1:
                return True
            elif nxt not in color:
                color[nxt] = 1
                stack.append((nxt, iter(succ.get(nxt, ()))))
    return False


# --------------------------------------------------------------------------
# instance families

@dataclass(frozen=True)
class FamilySpec:
    base: TypedTask
    sizes: Mapping[str, int]
    name: str | None = None

    def __post_init__(self):
        for st, n in self.sizes.items():
            if n < 0:
                raise FamilyError(f"{st}: negative size {n}")


def generate_family(spec: FamilySpec, subtypes) -> TypedTask:
    """Resize subtypes of ``spec.base`` by cloning or removing members.

    Only members whose initial atoms mention no other baggable object can be
    cloned or removed; resizing that would need a linked member raises
    :class:`FamilyError`. Non-baggable objects are kept.
    """
    base = spec.base
    subtypes = {s.name: s for s in subtypes}
    unknown = set(spec.sizes) - set(subtypes)
    if unknown:
        raise FamilyError(f"unknown subtypes {sorted(unknown)}")
    baggable_objs = {o for s in subtypes.values() for o in s.members}
    current = subtype_members(subtypes.values(), base)

    def linked(e: str) -> bool:
        return any(e in a.args and any(x in baggable_objs and x != e for x in a.args)
                   for a in base.init)

    objects = dict(base.objects)
    init, goal = set(base.init), set(base.goal)
    taken = set(objects)
    for name in sorted(spec.sizes):
        st = subtypes[name]
        have = list(current[name])
        target = spec.sizes[name]
        free = [e for e in have if not linked(e)]
        if target < len(have):
            drop = len(have) - target
            if drop > len(free):
                raise FamilyError(f"{name}: only {len(free)} of {len(have)} members can be removed "
                                  f"(the rest share initial atoms with other baggable objects)")
            for e in free[len(free) - drop:]:
                del objects[e]
                init = {a for a in init if e not in a.args}
                goal = {a for a in goal if e not in a.args}
        elif target > len(have):
            if not free:
                raise FamilyError(f"{name}: no member without baggable partners to clone")
            for k in range(target - len(have)):
                tmpl = free[k % len(free)]
                i = 1
                while f"{tmpl}-{i}" in taken:
                    i += 1
                e = f"{tmpl}-{i}"
                taken.add(e)
                objects[e] = st.type
                sub = {tmpl: e}
                init |= {Atom(a.predicate, tuple(sub.get(x, x) for x in a.args))
                         for a in base.init if tmpl in a.args}
                goal |= {Atom(a.predicate, tuple(sub.get(x, x) for x in a.args))
                         for a in base.goal if tmpl in a.args}
    label = spec.name or base.name + "-" + "-".join(f"{k}{v}" for k, v in sorted(spec.sizes.items()))
    return base.with_objects(objects.items(), init, goal, label)


# --------------------------------------------------------------------------
# plans

@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    steps: int
    failed_step: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.valid


def validate(plan: Sequence[GroundAction], gtask: GroundTask) -> ValidationResult:
    """Replay ``plan`` from the initial state under STRIPS semantics."""
    state = gtask.init
    for i, a in enumerate(plan):
        missing = a.pre - state
        if missing:
            atoms = ", ".join(sorted(str(gtask.atoms[j]) for j in missing))
            return ValidationResult(False, i, i, f"step {i} {a.name}: unmet {atoms}")
        state = (state - a.delete) | a.add
    if not gtask.goal <= state:
        atoms = ", ".join(sorted(str(gtask.atoms[j]) for j in gtask.goal - state))
        return ValidationResult(False, len(plan), None, f"goal not reached: {atoms}")
    return ValidationResult(True, len(plan))


def format_plan(plan: Iterable[GroundAction]) -> str:
    return "".join(a.name + "\n" for a in plan)


def parse_plan(text: str, gtask: GroundTask) -> list[GroundAction]:
    plan = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split(";", 1)[0].strip().lower()
        if not line:
            continue
        if not (line.startswith("(") and line.endswith(")")):
            raise ValueError(f"line {n}: expected '(action arg ...)'")
        name, *args = line[1:-1].split()
        try:
            plan.append(gtask.lookup(name, args))
        except KeyError:
            raise ValueError(f"line {n}: unknown ground action {line}") from None
    return plan
