"""Baggable types, goal-equivalence subtypes, attribute value vectors and atomicity.

Attribute values and extended AVSes are conjunctions of *pattern atoms*: the
argument of each baggable type ``t`` is the type variable ``?t`` and every
other argument is a concrete object of the instance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

from .mutex import MutexInvariant, PredicateGroup, single_types
from .pddl import ActionSchema, Atom, TypedTask

__all__ = [
    "Subtype", "AttributeValue", "Avs", "ExtendedAvs", "AtomicityVerdict", "BagStructure",
    "type_var", "pattern_types", "baggable_types", "compute_subtypes", "goal_signature",
    "attribute_values", "enumerate_avs", "enumerate_eavs", "check_atomic", "analyze_bags",
    "bags_report",
]


def type_var(t: str) -> str:
    return f"?{t}"


def pattern_types(atom: Atom) -> frozenset[str]:
    """Open (baggable) types of a pattern atom."""
    return frozenset(a[1:] for a in atom.args if a.startswith("?"))


@dataclass(frozen=True)
class Subtype:
    name: str
    type: str
    members: tuple[str, ...]
    signature: frozenset[tuple[str, tuple[str, ...]]]

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True, order=True)
class AttributeValue:
    group: PredicateGroup
    atom: Atom

    @property
    def types(self) -> frozenset[str]:
        return pattern_types(self.atom)


@dataclass(frozen=True)
class Avs:
    type: str
    values: tuple[AttributeValue, ...]

    @property
    def atoms(self) -> frozenset[Atom]:
        return frozenset(v.atom for v in self.values)

    @property
    def types(self) -> frozenset[str]:
        return frozenset().union(*(v.types for v in self.values))

    def __str__(self) -> str:
        return " & ".join(str(v.atom) for v in self.values)


@dataclass(frozen=True)
class ExtendedAvs:
    types: tuple[str, ...]
    components: tuple[Avs, ...]
    atoms: tuple[Atom, ...]

    def component(self, t: str) -> Avs:
        for c in self.components:
            if c.type == t:
                return c
        raise KeyError(t)

    @property
    def key(self) -> tuple:
        return (self.types, self.atoms)

    def __str__(self) -> str:
        return " & ".join(map(str, self.atoms))


@dataclass(frozen=True)
class AtomicityVerdict:
    schema: str
    atomic: bool
    eavs: str | None = None
    pair: tuple[str, str] | None = None

    def __str__(self) -> str:
        if self.atomic:
            return f"{self.schema}: atomic"
        return f"{self.schema}: not atomic under {self.eavs}, unbridged pair {self.pair}"


@dataclass(frozen=True)
class BagStructure:
    task: TypedTask
    mutex: MutexInvariant
    baggable: tuple[str, ...]
    subtypes: dict[str, tuple[Subtype, ...]]
    avs: dict[str, tuple[Avs, ...]]
    eavs: tuple[ExtendedAvs, ...]
    atomicity: tuple[AtomicityVerdict, ...]

    @property
    def proper(self) -> bool:
        return all(v.atomic for v in self.atomicity)

    @property
    def all_subtypes(self) -> list[Subtype]:
        out = [s for t in self.baggable for s in self.subtypes[t]]
        return sorted(out, key=lambda s: int(s.name[2:]))

    def subtype(self, name: str) -> Subtype:
        for s in self.all_subtypes:
            if s.name == name:
                return s
        raise KeyError(name)

    def subtype_of(self, obj: str) -> Subtype | None:
        for s in self.all_subtypes:
            if obj in s.members:
                return s
        return None

    def groups(self, t: str) -> tuple[PredicateGroup, ...]:
        return self.mutex.of(t)

    def eavs_of(self, t: str) -> list[ExtendedAvs]:
        return [e for e in self.eavs if t in e.types]

    def is_baggable_pred(self, predicate: str) -> bool:
        p = self.task.domain.predicate(predicate)
        return any(t in self.baggable for t in p.types)


def baggable_types(task: TypedTask, inv: MutexInvariant) -> tuple[str, ...]:
    """Single types whose predicates are partitioned by their mutex groups."""
    dom = task.domain
    out = []
    for t in sorted(single_types(dom)):
        preds = {p.name for p in dom.predicates if t in p.types}
        groups = inv.of(t)
        if not preds or not groups:
            continue
        covered = [p for g in groups for p in g.predicates]
        if sorted(covered) == sorted(preds):
            out.append(t)
    return tuple(out)


def goal_signature(task: TypedTask, obj: str) -> frozenset[tuple[str, tuple[str, ...]]]:
    return frozenset((g.predicate, tuple("*" if a == obj else a for a in g.args))
                     for g in task.goal if obj in g.args)


def compute_subtypes(task: TypedTask, t: str, start: int = 1) -> tuple[Subtype, ...]:
    """Partition objects of ``t`` into goal-equivalence classes, ordered by first member."""
    classes: dict[frozenset, list[str]] = {}
    for e in task.objects_of(t):
        classes.setdefault(goal_signature(task, e), []).append(e)
    ordered = sorted(classes.items(), key=lambda kv: kv[1][0])
    return tuple(Subtype(f"st{start + i}", t, tuple(members), sig)
                 for i, (sig, members) in enumerate(ordered))


def attribute_values(task: TypedTask, group: PredicateGroup,
                     baggable: Iterable[str]) -> tuple[AttributeValue, ...]:
    """Every instantiation of the members' non-baggable parameters."""
    bag = set(baggable)
    out = []
    for pname in group.predicates:
        pred = task.domain.predicate(pname)
        choices = [(type_var(t),) if t in bag else task.objects_of(t) for t in pred.types]
        for args in itertools.product(*choices):
            out.append(AttributeValue(group, Atom(pname, args)))
    return tuple(out)


def enumerate_avs(task: TypedTask, t: str, inv: MutexInvariant,
                  baggable: Iterable[str]) -> tuple[Avs, ...]:
    domains = [attribute_values(task, g, baggable) for g in inv.of(t)]
    return tuple(Avs(t, combo) for combo in itertools.product(*domains))


def enumerate_eavs(avs: dict[str, tuple[Avs, ...]]) -> tuple[ExtendedAvs, ...]:
    """Maximal connected conjunctions of AVSes joined on literally shared atoms."""
    found: dict[tuple, ExtendedAvs] = {}

    def consistent(chosen: dict[str, Avs], cand: Avs) -> bool:
        for t, other in chosen.items():
            shared_c = {a for a in cand.atoms if t in pattern_types(a)}
            shared_o = {a for a in other.atoms if cand.type in pattern_types(a)}
            if shared_c != shared_o:
                return False
        return True

    def grow(chosen: dict[str, Avs]) -> None:
        open_types = sorted(set().union(*(c.types for c in chosen.values())) - set(chosen))
        if not open_types:
            types = tuple(sorted(chosen))
            atoms = tuple(sorted(set().union(*(c.atoms for c in chosen.values()))))
            e = ExtendedAvs(types, tuple(chosen[t] for t in types), atoms)
            found.setdefault(e.key, e)
            return
        t = open_types[0]
        for cand in avs.get(t, ()):
            if consistent(chosen, cand):
                grow({**chosen, t: cand})

    for t in sorted(avs):
        for seed in avs[t]:
            grow({t: seed})
    return tuple(found[k] for k in sorted(found))


def _changed_patterns(schema: ActionSchema, eavs: ExtendedAvs, baggable) -> list[Atom]:
    """Atoms of ``eavs`` whose value ``schema`` may change (they unify with an effect)."""
    bag = set(baggable)
    ptype = dict(schema.params)
    changed = []
    for pat in eavs.atoms:
        for eff in schema.add + schema.delete:
            if eff.predicate != pat.predicate:
                continue
            ok = True
            for pa, ea in zip(pat.args, eff.args):
                if pa.startswith("?"):
                    continue
                if ea.startswith("?"):
                    if ptype.get(ea) in bag:
                        ok = False
                elif ea != pa:
                    ok = False
            if ok:
                changed.append(pat)
                break
    return changed


def check_atomic(schema: ActionSchema, eavs: Iterable[ExtendedAvs],
                 baggable: Iterable[str]) -> AtomicityVerdict:
    bag = tuple(baggable)
    if sum(1 for t in schema.types if t in bag) <= 1:
        return AtomicityVerdict(schema.name, True)
    for e in eavs:
        changed = _changed_patterns(schema, e, bag)
        for p1, p2 in itertools.combinations(changed, 2):
            t1, t2 = pattern_types(p1), pattern_types(p2)
            if t1 & t2:
                continue
            if not any(pattern_types(p3) & t1 and pattern_types(p3) & t2 for p3 in changed):
                return AtomicityVerdict(schema.name, False, str(e), (str(p1), str(p2)))
    return AtomicityVerdict(schema.name, True)


def analyze_bags(task: TypedTask, inv: MutexInvariant) -> BagStructure:
    baggable = baggable_types(task, inv)
    subtypes: dict[str, tuple[Subtype, ...]] = {}
    n = 1
    # smaller types are numbered first
    for t in sorted(baggable, key=lambda t: (len(task.objects_of(t)), t)):
        subtypes[t] = compute_subtypes(task, t, start=n)
        n += len(subtypes[t])
    avs = {t: enumerate_avs(task, t, inv, baggable) for t in baggable}
    eavs = enumerate_eavs(avs)
    verdicts = tuple(check_atomic(a, eavs, baggable) for a in task.domain.actions)
    return BagStructure(task, inv, baggable, subtypes, avs, eavs, verdicts)


def bags_report(bags: BagStructure) -> dict:
    return {
        "baggable": list(bags.baggable),
        "subtypes": [{"name": s.name, "type": s.type, "members": list(s.members),
                      "goal_signature": sorted([p, list(a)] for p, a in s.signature)}
                     for s in bags.all_subtypes],
        "avs_counts": {t: len(v) for t, v in bags.avs.items()},
        "eavs": [{"types": list(e.types), "atoms": [str(a) for a in e.atoms]} for e in bags.eavs],
        "atomicity": [{"schema": v.schema, "atomic": v.atomic, "eavs": v.eavs,
                       "pair": list(v.pair) if v.pair else None} for v in bags.atomicity],
        "proper": bags.proper,
    }
