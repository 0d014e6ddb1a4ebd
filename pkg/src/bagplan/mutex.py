"""Exactly-one predicate groups over single types.

A group ``M`` for type ``t`` claims that every object of ``t`` satisfies exactly
one atom built from the members of ``M``. Groups are proposed from action
effects (and, for untouched predicates, from the initial state) and then
checked schema by schema.
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .pddl import ActionSchema, Atom, Domain, TypedTask

log = logging.getLogger(__name__)

__all__ = [
    "PredicateGroup", "MutexInvariant", "Counterexample", "InvariantError",
    "single_types", "infer_mutex_groups", "find_violation",
    "verify_mutex_invariant", "check_init", "mutex_report", "invariant_from_json",
]

# Above this many predicates per type, subset enumeration gives way to greedy growth.
MAX_EXHAUSTIVE = 14


@dataclass(frozen=True, order=True)
class PredicateGroup:
    type: str
    members: tuple[tuple[str, int], ...]

    @property
    def predicates(self) -> tuple[str, ...]:
        return tuple(p for p, _ in self.members)

    def position(self, predicate: str) -> int | None:
        for p, pos in self.members:
            if p == predicate:
                return pos
        return None

    def __str__(self) -> str:
        return "{" + ", ".join(self.predicates) + "}"


@dataclass(frozen=True)
class MutexInvariant:
    groups: dict[str, tuple[PredicateGroup, ...]]
    verified: bool = False
    conflicts: tuple[str, ...] = field(default=(), compare=False)

    def of(self, type_name: str) -> tuple[PredicateGroup, ...]:
        return self.groups.get(type_name, ())

    def all_groups(self) -> list[PredicateGroup]:
        return [g for t in sorted(self.groups) for g in self.groups[t]]


@dataclass(frozen=True)
class Counterexample:
    schema: str
    group: PredicateGroup
    variable: str
    reason: str

    def __str__(self) -> str:
        return f"{self.schema} breaks {self.group.type}:{self.group} on {self.variable}: {self.reason}"


class InvariantError(Exception):
    def __init__(self, counterexample: Counterexample):
        super().__init__(str(counterexample))
        self.counterexample = counterexample


def single_types(domain: Domain) -> frozenset[str]:
    """Types never occurring twice in one predicate or action signature."""
    repeated: set[str] = set()
    for sig in [p.types for p in domain.predicates] + [a.types for a in domain.actions]:
        repeated.update(t for t, n in Counter(sig).items() if n > 1)
    return frozenset(t for t in domain.types if t != "object" and t not in repeated)


def _slots(domain: Domain, t: str) -> list[tuple[str, int]]:
    out = []
    for p in domain.predicates:
        for i, pt in enumerate(p.types):
            if pt == t:
                out.append((p.name, i))
    return out


def _may_unify(a: Atom, b: Atom) -> bool:
    # variables may be bound to equal objects; constants must match
    if a.predicate != b.predicate:
        return False
    for x, y in zip(a.args, b.args):
        if not x.startswith("?") and not y.startswith("?") and x != y:
            return False
    return True


def _member_atoms(atoms, group: PredicateGroup) -> dict[str, list[Atom]]:
    """Member atoms of ``group`` among ``atoms``, keyed by their t-argument."""
    by_var: dict[str, list[Atom]] = {}
    for a in atoms:
        pos = group.position(a.predicate)
        if pos is not None:
            by_var.setdefault(a.args[pos], []).append(a)
    return by_var


def _schema_violation(schema: ActionSchema, group: PredicateGroup) -> Counterexample | None:
    dels = _member_atoms(schema.delete, group)
    adds = _member_atoms(schema.add, group)
    pres = _member_atoms(schema.pre, group)
    for var in sorted(set(dels) | set(adds)):
        d, a, p = dels.get(var, []), adds.get(var, []), pres.get(var, [])
        if not var.startswith("?"):
            return Counterexample(schema.name, group, var, "constant argument of the group type")
        if len(a) > 1:
            return Counterexample(schema.name, group, var, f"adds {len(a)} member atoms")
        known_true = [x for x in d if x in p]
        if a:
            if not known_true:
                return Counterexample(schema.name, group, var,
                                      "adds a member atom without deleting the true one")
        else:
            if known_true:
                return Counterexample(schema.name, group, var,
                                      "deletes the true member atom without adding another")
            # deleted atoms must be provably false: some other member atom holds
            if not p or any(_may_unify(x, y) for x in d for y in p):
                return Counterexample(schema.name, group, var,
                                      "deletes a member atom that may be the true one")
    return None


def find_violation(task_or_domain, inv: MutexInvariant) -> Counterexample | None:
    domain = task_or_domain.domain if isinstance(task_or_domain, TypedTask) else task_or_domain
    for group in inv.all_groups():
        for schema in domain.actions:
            cex = _schema_violation(schema, group)
            if cex is not None:
                return cex
    return None


def verify_mutex_invariant(task_or_domain, inv: MutexInvariant) -> MutexInvariant:
    """Return ``inv`` marked verified, or raise :class:`InvariantError`."""
    cex = find_violation(task_or_domain, inv)
    if cex is not None:
        raise InvariantError(cex)
    return MutexInvariant(inv.groups, True, inv.conflicts)


def _init_counts(task: TypedTask, group: PredicateGroup) -> dict[str, int]:
    counts = {e: 0 for e in task.objects_of(group.type)}
    for atom in task.init:
        pos = group.position(atom.predicate)
        if pos is not None and atom.args[pos] in counts:
            counts[atom.args[pos]] += 1
    return counts


def check_init(task: TypedTask, inv: MutexInvariant) -> list[tuple[str, PredicateGroup, int]]:
    """Violations ``(object, group, count)`` of the exactly-one property in the initial state."""
    out = []
    for group in inv.all_groups():
        for e, n in sorted(_init_counts(task, group).items()):
            if n != 1:
                out.append((e, group, n))
    return out


def _candidates(slots, accept) -> list[tuple[tuple[str, int], ...]]:
    found = []
    if len(slots) <= MAX_EXHAUSTIVE:
        for k in range(len(slots), 0, -1):
            for combo in itertools.combinations(slots, k):
                if accept(combo):
                    found.append(combo)
        return found
    # greedy fallback: grow from each seed slot
    for seed in slots:
        combo = (seed,)
        for s in slots:
            if s not in combo and accept(tuple(sorted(combo + (s,), key=slots.index))):
                combo = tuple(sorted(combo + (s,), key=slots.index))
        if accept(combo):
            found.append(combo)
    return found


def _pick_disjoint(cands, slots) -> list[tuple[tuple[str, int], ...]]:
    order = {s: i for i, s in enumerate(slots)}
    ranked = sorted(set(cands), key=lambda c: (-len(c), [order[s] for s in c]))
    chosen, used = [], set()
    for c in ranked:
        preds = {p for p, _ in c}
        if preds & used:
            continue
        chosen.append(c)
        used |= preds
    return sorted(chosen, key=lambda c: [order[s] for s in c])


def infer_mutex_groups(task: TypedTask) -> MutexInvariant:
    """Candidate groups: effect-balanced ones first, then init-based ones for untouched predicates.

    Effect-based candidates must also hold (exactly one true member per object)
    in the given initial state; this discards vacuous balanced sets whose
    members can never be true one at a time.
    """
    dom = task.domain
    touched = {a.predicate for s in dom.actions for a in s.add + s.delete}
    groups: dict[str, tuple[PredicateGroup, ...]] = {}
    conflicts: list[str] = []
    for t in sorted(single_types(dom)):
        slots = _slots(dom, t)
        if not slots:
            continue

        def holds_in_init(combo) -> bool:
            g = PredicateGroup(t, combo)
            return all(n == 1 for n in _init_counts(task, g).values())

        def effect_ok(combo) -> bool:
            if any(p not in touched for p, _ in combo):
                return False
            g = PredicateGroup(t, combo)
            return (all(_schema_violation(s, g) is None for s in dom.actions)
                    and holds_in_init(combo))

        eff_slots = [s for s in slots if s[0] in touched]
        chosen = _pick_disjoint(_candidates(eff_slots, effect_ok), slots)
        used = {p for c in chosen for p, _ in c}

        static_slots = [s for s in slots if s[0] not in touched]
        init_cands = _candidates(static_slots, holds_in_init)
        for c in init_cands:
            overlap = {p for p, _ in c} & used
            if overlap:
                conflicts.append(f"{t}: init-based {sorted(p for p, _ in c)} overlaps effect-based group")
        chosen += _pick_disjoint([c for c in init_cands if not ({p for p, _ in c} & used)], slots)

        covered = {p for c in chosen for p, _ in c}
        uncovered = sorted({p for p, _ in slots} - covered)
        if uncovered:
            log.debug("type %s: predicates %s are covered by no mutex group", t, uncovered)
        if chosen:
            order = {s: i for i, s in enumerate(slots)}
            groups[t] = tuple(PredicateGroup(t, c) for c in sorted(chosen, key=lambda c: order[c[0]]))
    return MutexInvariant(groups, False, tuple(conflicts))


def invariant_from_json(domain: Domain, data: Mapping[str, Sequence[Sequence[str]]]) -> MutexInvariant:
    """Build a candidate invariant from ``{"ball": [["at", "carry"], ...], ...}``."""
    groups = {}
    for t, lists in sorted(data.items()):
        slots = dict(_slots(domain, t))
        if not slots:
            raise ValueError(f"type {t} occurs in no predicate")
        built = []
        for preds in lists:
            missing = [p for p in preds if p not in slots]
            if missing:
                raise ValueError(f"predicates {missing} have no argument of type {t}")
            built.append(PredicateGroup(t, tuple((p, slots[p]) for p in preds)))
        groups[t] = tuple(built)
    return MutexInvariant(groups)


def mutex_report(task: TypedTask, inv: MutexInvariant) -> dict:
    cex = find_violation(task, inv)
    init_violations = check_init(task, inv)
    return {
        "single_types": sorted(single_types(task.domain)),
        "groups": {t: [list(g.predicates) for g in gs] for t, gs in sorted(inv.groups.items())},
        "verified": cex is None,
        "counterexample": None if cex is None else str(cex),
        "init_violations": [[e, str(g), n] for e, g, n in init_violations],
        "conflicts": list(inv.conflicts),
    }
