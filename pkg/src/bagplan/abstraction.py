"""Build the BQNP abstraction of a planning instance over baggable types.

Every numeric variable counts one *bag*: the tuples of objects that satisfy a
subtype assignment and an extended AVS. Every abstract action picks one tuple
from one bag per block of the schema's baggable parameters.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Sequence

from .bags import BagStructure, ExtendedAvs, Subtype, analyze_bags, pattern_types, type_var
from .bqnp import BqnpProblem, Op
from .mutex import InvariantError, MutexInvariant, check_init, infer_mutex_groups, \
    verify_mutex_invariant
from .pddl import ActionSchema, Atom, GroundTask, TypedTask, ground

__all__ = [
    "CounterDef", "Concretization", "RefinementMapping", "NotProperError", "InitViolationError",
    "AbstractionResult", "StateIndex", "iter_bindings", "count_bag", "subtype_members",
    "build_numeric_variables", "build_boolean_variables", "abstract_init", "abstract_goal",
    "build_abstract_actions", "prune_facts", "abstract",
]


class NotProperError(Exception):
    pass


class InitViolationError(Exception):
    pass


@dataclass(frozen=True)
class CounterDef:
    """``#x. st_1(x_1) & ... & eavs(x)`` for one numeric variable."""

    id: str
    name: str
    sts: tuple[tuple[str, str], ...]  # (type, subtype name), sorted by type
    atoms: tuple[Atom, ...]

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.sts)

    @property
    def sts_map(self) -> dict[str, str]:
        return dict(self.sts)


@dataclass(frozen=True)
class Concretization:
    """Pick any tuple from the bags of ``blocks`` that satisfies ``pre``, then run the schema."""

    op: str
    schema: str
    binding: tuple[tuple[str, str], ...]  # schema parameter -> object or ?type
    blocks: tuple[str, ...]  # counter ids
    pre: tuple[Atom, ...]  # precondition over objects and ?type variables

    @property
    def binding_map(self) -> dict[str, str]:
        return dict(self.binding)


@dataclass(frozen=True)
class RefinementMapping:
    baggable: tuple[str, ...]
    subtypes: tuple[Subtype, ...]
    counters: tuple[CounterDef, ...]
    booleans: tuple[tuple[str, Atom], ...]
    rules: tuple[Concretization, ...]
    frozen: tuple[tuple[Atom, bool], ...] = ()

    def counter(self, cid: str) -> CounterDef:
        for c in self.counters:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def rule(self, op_id: str) -> Concretization:
        for r in self.rules:
            if r.op == op_id:
                return r
        raise KeyError(op_id)

    def to_json(self) -> dict:
        return {
            "baggable": list(self.baggable),
            "subtypes": [{"name": s.name, "type": s.type, "members": list(s.members),
                          "goal_signature": sorted([p, list(a)] for p, a in s.signature)}
                         for s in self.subtypes],
            "numeric": [{"id": c.id, "name": c.name, "subtypes": {t: st for t, st in c.sts},
                         "eavs_atoms": [str(a) for a in c.atoms],
                         "formula": _formula(c)} for c in self.counters],
            "boolean": [{"id": i, "atom": str(a)} for i, a in self.booleans],
            "rules": [{"op": r.op, "schema": r.schema, "binding": dict(r.binding),
                       "blocks": list(r.blocks), "pre": [str(a) for a in r.pre]}
                      for r in self.rules],
            "frozen": [{"atom": str(a), "value": v} for a, v in self.frozen],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, data: Mapping) -> "RefinementMapping":
        subtypes = tuple(Subtype(s["name"], s["type"], tuple(s["members"]),
                                 frozenset((p, tuple(a)) for p, a in s["goal_signature"]))
                         for s in data["subtypes"])
        counters = tuple(CounterDef(c["id"], c["name"], tuple(sorted(c["subtypes"].items())),
                                    tuple(_parse_atom(a) for a in c["eavs_atoms"]))
                         for c in data["numeric"])
        booleans = tuple((b["id"], _parse_atom(b["atom"])) for b in data["boolean"])
        rules = tuple(Concretization(r["op"], r["schema"], tuple(r["binding"].items()),
                                     tuple(r["blocks"]), tuple(_parse_atom(a) for a in r["pre"]))
                      for r in data["rules"])
        frozen = tuple((_parse_atom(f["atom"]), f["value"]) for f in data.get("frozen", []))
        return cls(tuple(data["baggable"]), subtypes, counters, booleans, rules, frozen)

    @classmethod
    def loads(cls, text: str) -> "RefinementMapping":
        return cls.from_json(json.loads(text))


def _parse_atom(text: str) -> Atom:
    parts = text.strip("()").split()
    return Atom(parts[0], tuple(parts[1:]))


def _formula(c: CounterDef) -> str:
    xs = ", ".join(type_var(t) for t in c.types)
    sts = " & ".join(f"{st}({type_var(t)})" for t, st in c.sts)
    return f"#({xs}). {sts} & " + " & ".join(map(str, c.atoms))


# --------------------------------------------------------------------------
# counting bags in a state

class StateIndex:
    """Atoms of a state grouped by predicate for pattern joins."""

    def __init__(self, atoms: Iterable[Atom]):
        self.atoms = frozenset(atoms)
        self.by_pred: dict[str, list[tuple[str, ...]]] = {}
        for a in sorted(self.atoms):
            self.by_pred.setdefault(a.predicate, []).append(a.args)

    def __contains__(self, atom: Atom) -> bool:
        return atom in self.atoms


def iter_bindings(patterns: Sequence[Atom], state: StateIndex,
                  domains: Mapping[str, Iterable[str]],
                  binding: dict[str, str] | None = None) -> Iterator[dict[str, str]]:
    """All bindings of the ``?type`` variables making every pattern true in ``state``.

    ``domains`` restricts each variable to a set of objects (its subtype).
    """
    doms = {k: set(v) for k, v in domains.items()}
    order = sorted(patterns, key=lambda a: len(state.by_pred.get(a.predicate, ())))

    def rec(i: int, b: dict[str, str]) -> Iterator[dict[str, str]]:
        if i == len(order):
            yield dict(b)
            return
        pat = order[i]
        for args in state.by_pred.get(pat.predicate, ()):
            new = dict(b)
            ok = True
            for pa, a in zip(pat.args, args):
                if pa.startswith("?"):
                    if pa in new:
                        if new[pa] != a:
                            ok = False
                            break
                    elif pa in doms and a not in doms[pa]:
                        ok = False
                        break
                    else:
                        new[pa] = a
                elif pa != a:
                    ok = False
                    break
            if ok:
                yield from rec(i + 1, new)

    yield from rec(0, dict(binding or {}))


def subtype_members(subtypes: Iterable[Subtype], task: TypedTask) -> dict[str, tuple[str, ...]]:
    """Members of each base subtype in ``task``, matched by goal signature."""
    from .bags import goal_signature
    subtypes = list(subtypes)
    out: dict[str, list[str]] = {s.name: [] for s in subtypes}
    by_type: dict[str, list[Subtype]] = {}
    for s in subtypes:
        by_type.setdefault(s.type, []).append(s)
    for t, sts in by_type.items():
        for e in task.objects_of(t):
            sig = goal_signature(task, e)
            match = [s for s in sts if s.signature == sig]
            if not match:
                raise ValueError(f"object {e} matches no subtype of {t}")
            out[match[0].name].append(e)
    return {k: tuple(v) for k, v in out.items()}


def count_bag(counter: CounterDef, state: StateIndex,
              members: Mapping[str, Sequence[str]]) -> int:
    domains = {type_var(t): members[st] for t, st in counter.sts}
    return sum(1 for _ in iter_bindings(counter.atoms, state, domains))


# --------------------------------------------------------------------------
# variables

def _pattern_of(atom: Atom, task: TypedTask, baggable: Sequence[str]) -> Atom:
    types = task.domain.predicate(atom.predicate).types
    return Atom(atom.predicate, tuple(type_var(t) if t in baggable else a
                                      for a, t in zip(atom.args, types)))


def build_numeric_variables(bags: BagStructure) -> tuple[CounterDef, ...]:
    """One counter per (extended AVS, subtype assignment of its types)."""
    out = []
    for e in bags.eavs:
        for combo in itertools.product(*(bags.subtypes[t] for t in e.types)):
            sts = tuple((t, st.name) for t, st in zip(e.types, combo))
            idx = len(out) + 1
            name = f"N{idx}__{'_'.join(st for _, st in sts)}__" + "&".join(
                f"{a.predicate}({','.join(a.args)})" for a in e.atoms)
            out.append(CounterDef(f"N{idx}", name, sts, e.atoms))
    return tuple(out)


def build_boolean_variables(task: TypedTask, baggable: Sequence[str]) -> tuple[tuple[str, Atom], ...]:
    """Ground atoms of predicates with only non-baggable arguments."""
    out = []
    for p in task.domain.predicates:
        if any(t in baggable for t in p.types):
            continue
        for args in itertools.product(*(task.objects_of(t) for t in p.types)):
            out.append((f"B{len(out) + 1}", Atom(p.name, args)))
    return tuple(out)


def abstract_init(task: TypedTask, counters: Sequence[CounterDef],
                  booleans: Sequence[tuple[str, Atom]], subtypes: Sequence[Subtype]) -> tuple[bool, ...]:
    state = StateIndex(task.init)
    members = subtype_members(subtypes, task)
    nums = tuple(count_bag(c, state, members) > 0 for c in counters)
    return nums + tuple(a in task.init for _, a in booleans)


def abstract_goal(task: TypedTask, counters: Sequence[CounterDef],
                  booleans: Sequence[tuple[str, Atom]], bags: BagStructure) -> tuple[tuple[int, bool], ...]:
    """Boolean goal atoms, plus ``N = 0`` for every bag of a goal object's subtype that
    cannot contain the goal atom."""
    bag = bags.baggable
    bool_index = {a: len(counters) + i for i, (_, a) in enumerate(booleans)}
    goal: dict[int, bool] = {}
    for g in sorted(task.goal):
        if g in bool_index:
            goal[bool_index[g]] = True
            continue
        pattern = _pattern_of(g, task, bag)
        types = task.domain.predicate(g.predicate).types
        for arg, t in zip(g.args, types):
            if t not in bag:
                continue
            st = bags.subtype_of(arg)
            for i, c in enumerate(counters):
                if c.sts_map.get(t) == st.name and pattern not in c.atoms:
                    if goal.setdefault(i, False) is not False:
                        raise ValueError("inconsistent abstract goal")
    return tuple(sorted(goal.items()))


def _set_partitions(items: list[str]) -> Iterator[list[list[str]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def _conflicts(added: Atom, eavs_atoms: Iterable[Atom], mutex: MutexInvariant) -> bool:
    """True if ``added`` contradicts some atom of ``eavs_atoms`` under a mutex group."""
    for t in pattern_types(added):
        for group in mutex.of(t):
            pos = group.position(added.predicate)
            if pos is None:
                continue
            for other in eavs_atoms:
                opos = group.position(other.predicate)
                if opos is None or other == added:
                    continue
                if other.args[opos] == type_var(t) and added.args[pos] == type_var(t):
                    return True
    return False


def build_abstract_actions(task: TypedTask, counters: Sequence[CounterDef],
                           booleans: Sequence[tuple[str, Atom]],
                           bags: BagStructure) -> tuple[list[Op], list[Concretization]]:
    bag = bags.baggable
    n_num = len(counters)
    bool_index = {a: n_num + i for i, (_, a) in enumerate(booleans)}
    by_types: dict[tuple[str, ...], list[int]] = {}
    for i, c in enumerate(counters):
        by_types.setdefault(c.types, []).append(i)

    ops: list[Op] = []
    rules: list[Concretization] = []
    for schema in task.domain.actions:
        bag_params = [(v, t) for v, t in schema.params if t in bag]
        other_params = [(v, t) for v, t in schema.params if t not in bag]
        bag_types = sorted(t for _, t in bag_params)
        for objs in itertools.product(*(task.objects_of(t) for _, t in other_params)):
            binding = {v: o for (v, _), o in zip(other_params, objs)}
            binding.update({v: type_var(t) for v, t in bag_params})
            pre = [a.substitute(binding) for a in schema.pre]
            add = {a.substitute(binding) for a in schema.add}
            dele = {a.substitute(binding) for a in schema.delete} - add
            pre_bool = {bool_index[a] for a in pre if a in bool_index}
            pre_bag = {a for a in pre if a not in bool_index}
            for partition in _set_partitions(bag_types):
                blocks = [tuple(sorted(b)) for b in partition]
                for choice in itertools.product(*(by_types.get(b, []) for b in blocks)):
                    atoms = set().union(*(counters[i].atoms for i in choice)) if choice else set()
                    if not pre_bag <= atoms:
                        continue
                    sts = {}
                    for i in choice:
                        sts.update(counters[i].sts_map)
                    eff: dict[int, str] = {}
                    for a in sorted(add):
                        if a in bool_index:
                            eff[bool_index[a]] = "set"
                    for a in sorted(dele):
                        if a in bool_index:
                            eff[bool_index[a]] = "clear"
                    for i in choice:
                        c_atoms = counters[i].atoms
                        if any(a in dele for a in c_atoms) or any(
                                _conflicts(a, c_atoms, bags.mutex) for a in add):
                            eff[i] = "dec"
                    after = (atoms - dele) | add
                    inc_types: list[set[str]] = []
                    for j, c in enumerate(counters):
                        if j in choice or not set(c.types) <= set(bag_types):
                            continue
                        if any(sts.get(t) != st for t, st in c.sts):
                            continue
                        if set(c.atoms) <= after:
                            if any(set(c.types) & ts for ts in inc_types):
                                raise AssertionError(f"{schema.name}: overlapping inc targets")
                            inc_types.append(set(c.types))
                            eff[j] = "inc"
                    # an op whose effects leave every state unchanged is dropped
                    changes = [v for v, e in eff.items()
                               if not (e == "set" and v in pre_bool)]
                    if not changes:
                        continue
                    op_id = f"a{len(ops) + 1}"
                    args = [counters[i].id for i in choice] + list(objs)
                    name = f"{schema.name}({','.join(args)})"
                    op_pre = tuple(sorted([(v, True) for v in pre_bool] +
                                          [(i, True) for i in choice]))
                    ops.append(Op(op_id, name, op_pre, tuple(sorted(eff.items()))))
                    rules.append(Concretization(
                        op_id, schema.name, tuple((v, binding[v]) for v, _ in schema.params),
                        tuple(counters[i].id for i in choice), tuple(pre)))
    return ops, rules


# --------------------------------------------------------------------------
# fact pruning

def prune_facts(problem: BqnpProblem, mapping: RefinementMapping,
                gtask: GroundTask) -> tuple[BqnpProblem, RefinementMapping]:
    """Drop variables and actions made redundant by atoms that no action changes."""
    task = gtask.task
    static = gtask.atoms_of(gtask.static)
    init = task.init
    static_preds = {p.name for p in task.domain.predicates
                    if all(Atom(p.name, args) in static for args in itertools.product(
                        *(task.objects_of(t) for t in p.types)))}
    n_num = problem.n_numeric

    members = subtype_members(mapping.subtypes, task)
    static_init = StateIndex(a for a in init if a.predicate in static_preds)

    def dead(c: CounterDef) -> bool:
        # the static part of the bag has no true instance inside its subtypes
        domains = {type_var(t): members[st] for t, st in c.sts}
        pats = [pat for pat in c.atoms if pat.predicate in static_preds]
        return bool(pats) and next(iter_bindings(pats, static_init, domains), None) is None

    keep_num = [i for i, c in enumerate(mapping.counters) if not dead(c)]
    dead_num = set(range(n_num)) - set(keep_num)
    frozen = {}
    keep_bool = []
    for j, (_, atom) in enumerate(mapping.booleans):
        if atom in static:
            frozen[n_num + j] = atom in init
        else:
            keep_bool.append(n_num + j)

    remap = {old: new for new, old in enumerate(keep_num + keep_bool)}
    new_ops, new_rules = [], []
    for op, rule in zip(problem.ops, mapping.rules):
        pre = op.pre_map
        if any(v in dead_num for v in pre) or any(frozen.get(v, val) != val for v, val in pre.items()):
            continue
        new_pre = tuple(sorted((remap[v], val) for v, val in pre.items() if v in remap))
        new_eff = tuple(sorted((remap[v], e) for v, e in op.eff if v in remap))
        op_id = f"a{len(new_ops) + 1}"
        new_ops.append(Op(op_id, op.name, new_pre, new_eff))
        new_rules.append(replace(rule, op=op_id))

    goal = []
    goal_bad = False
    for v, val in problem.goal:
        if v in remap:
            goal.append((remap[v], val))
        elif v in frozen and frozen[v] != val or v in dead_num and val:
            goal_bad = True
    if goal_bad and goal:
        goal.append((goal[0][0], not goal[0][1]))  # keep the problem visibly unsolvable
    order = keep_num + keep_bool
    pruned = BqnpProblem(
        tuple(problem.var_id(v) for v in keep_num),
        tuple(problem.var_id(v) for v in keep_bool),
        tuple(problem.init[v] for v in order),
        tuple(sorted(goal)), tuple(new_ops),
        tuple(problem.numeric_names[v] for v in keep_num) if problem.numeric_names else (),
        tuple(problem.boolean_names[v - n_num] for v in keep_bool) if problem.boolean_names else (),
    )
    new_mapping = replace(
        mapping,
        counters=tuple(mapping.counters[i] for i in keep_num),
        booleans=tuple(mapping.booleans[v - n_num] for v in keep_bool),
        rules=tuple(new_rules),
        frozen=mapping.frozen + tuple((mapping.booleans[v - n_num][1], val)
                                      for v, val in sorted(frozen.items())),
    )
    return pruned, new_mapping


# --------------------------------------------------------------------------
# pipeline

@dataclass(frozen=True)
class AbstractionResult:
    problem: BqnpProblem
    mapping: RefinementMapping
    bags: BagStructure
    ground: GroundTask
    seconds: float = 0.0
    stats: dict = field(default_factory=dict)


def _stats(task: TypedTask, gtask: GroundTask, bags: BagStructure, problem: BqnpProblem,
           seconds: float) -> dict:
    n_bag = sum(len(task.objects_of(t)) for t in bags.baggable)
    return {
        "baggable_types": len(bags.baggable),
        "baggable_objects": n_bag,
        "other_objects": len(task.objects) - n_bag,
        "ground_atoms": len(gtask.atoms),
        "facts": len(gtask.static & gtask.init),
        "ground_actions": len(gtask.actions),
        "subtypes": len(bags.all_subtypes),
        "numeric": problem.n_numeric,
        "boolean": len(problem.boolean),
        "ops": len(problem.ops),
        "seconds": round(seconds, 4),
    }


def abstract(task: TypedTask, force: bool = False, prune: bool = True,
             mutex: MutexInvariant | None = None) -> AbstractionResult:
    """Mutex inference and verification, bag analysis, then the BQNP problem and its mapping.

    ``mutex`` replaces the inferred candidate groups; it is verified like them.
    Raises :class:`InvariantError`, :class:`InitViolationError` or
    :class:`NotProperError` (the last one only without ``force``).
    """
    t0 = time.perf_counter()
    inv = verify_mutex_invariant(task, mutex if mutex is not None else infer_mutex_groups(task))
    violations = check_init(task, inv)
    if violations:
        e, g, n = violations[0]
        raise InitViolationError(f"object {e} has {n} true atoms of group {g.type}:{g}")
    bags = analyze_bags(task, inv)
    if not bags.proper and not force:
        bad = next(v for v in bags.atomicity if not v.atomic)
        raise NotProperError(str(bad))
    counters = build_numeric_variables(bags)
    booleans = build_boolean_variables(task, bags.baggable)
    init = abstract_init(task, counters, booleans, bags.all_subtypes)
    goal = abstract_goal(task, counters, booleans, bags)
    ops, rules = build_abstract_actions(task, counters, booleans, bags)
    problem = BqnpProblem(tuple(c.id for c in counters), tuple(b for b, _ in booleans),
                          init, goal, tuple(ops), tuple(c.name for c in counters),
                          tuple(str(a) for _, a in booleans))
    mapping = RefinementMapping(bags.baggable, tuple(bags.all_subtypes), counters, booleans,
                                tuple(rules))
    gtask = ground(task)
    if prune:
        problem, mapping = prune_facts(problem, mapping, gtask)
    seconds = time.perf_counter() - t0
    return AbstractionResult(problem, mapping, bags, gtask, seconds,
                             _stats(task, gtask, bags, problem, seconds))
