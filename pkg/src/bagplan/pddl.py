"""STRIPS + typing PDDL frontend: parsing, pretty-printing and grounding."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

__all__ = [
    "Atom", "Predicate", "ActionSchema", "Domain", "TypedTask",
    "GroundAction", "GroundTask", "PDDLError", "PDDLSyntaxError",
    "UnsupportedFeatureError", "PDDLValidationError",
    "parse_domain", "parse_problem", "ground", "dump_domain", "dump_problem",
    "dump_task", "apply", "applicable",
]

SUPPORTED_REQUIREMENTS = {":strips", ":typing"}

# Constructs outside the STRIPS fragment, keyed by the token that introduces them.
_UNSUPPORTED = {
    "when": "conditional effects",
    "not": "negative preconditions",
    "=": "equality atoms",
    "or": "disjunctive preconditions",
    "imply": "implications",
    "forall": "universal quantification",
    "exists": "existential quantification",
    ":functions": "functions",
    ":derived": "derived predicates",
    "increase": "numeric fluents",
    "decrease": "numeric fluents",
    "assign": "numeric fluents",
    ":durative-action": "durative actions",
}


class PDDLError(Exception):
    pass


class PDDLSyntaxError(PDDLError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class UnsupportedFeatureError(PDDLError):
    def __init__(self, construct: str):
        super().__init__(f"unsupported PDDL feature: {construct}")
        self.construct = construct


class PDDLValidationError(PDDLError):
    """Undeclared symbols, arity or type mismatches."""


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate,) + self.args) + ")"

    def substitute(self, binding: dict[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


@dataclass(frozen=True)
class Predicate:
    name: str
    params: tuple[tuple[str, str], ...]

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.params)

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    pre: tuple[Atom, ...]
    add: tuple[Atom, ...]
    delete: tuple[Atom, ...]

    @property
    def types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.params)

    def param_type(self, var: str) -> str | None:
        for v, t in self.params:
            if v == var:
                return t
        return None


@dataclass(frozen=True)
class Domain:
    name: str
    types: tuple[str, ...]
    parents: tuple[tuple[str, str], ...]
    predicates: tuple[Predicate, ...]
    actions: tuple[ActionSchema, ...]
    constants: tuple[tuple[str, str], ...] = ()

    def predicate(self, name: str) -> Predicate:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    def action(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def is_subtype(self, sub: str, sup: str) -> bool:
        parent = dict(self.parents)
        seen = set()
        while sub not in seen:
            if sub == sup:
                return True
            seen.add(sub)
            if sub not in parent:
                return sup == "object"
            sub = parent[sub]
        return False


@dataclass(frozen=True)
class TypedTask:
    """A parsed domain together with one planning instance."""

    domain: Domain
    name: str
    objects: tuple[tuple[str, str], ...]
    init: frozenset[Atom]
    goal: frozenset[Atom]

    @property
    def object_types(self) -> dict[str, str]:
        return dict(self.objects)

    def objects_of(self, type_name: str) -> tuple[str, ...]:
        """Objects whose declared type is ``type_name`` or one of its subtypes, sorted."""
        return tuple(sorted(o for o, t in self.objects
                            if self.domain.is_subtype(t, type_name)))

    def with_objects(self, objects, init, goal, name: str | None = None) -> "TypedTask":
        return TypedTask(self.domain, name or self.name, tuple(sorted(objects)),
                         frozenset(init), frozenset(goal))


# --------------------------------------------------------------------------
# s-expression reader

_TOKEN_RE = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s()]+")


@dataclass
class _Node:
    value: str | list
    line: int
    column: int

    @property
    def is_list(self) -> bool:
        return isinstance(self.value, list)


def _read(text: str) -> _Node:
    stack: list[_Node] = []
    root: _Node | None = None
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        tok = m.group(0)
        col = m.start() - line_start + 1
        if tok[0].isspace() or tok[0] == ";":
            newlines = tok.count("\n")
            if newlines:
                line += newlines
                line_start = m.start() + tok.rfind("\n") + 1
            continue
        if tok == "(":
            node = _Node([], line, col)
            if stack:
                stack[-1].value.append(node)
            elif root is not None:
                raise PDDLSyntaxError("unexpected content after top-level expression", line, col)
            stack.append(node)
        elif tok == ")":
            if not stack:
                raise PDDLSyntaxError("unbalanced ')'", line, col)
            node = stack.pop()
            if not stack:
                root = node
        else:
            if not stack:
                raise PDDLSyntaxError(f"unexpected token {tok!r}", line, col)
            stack[-1].value.append(_Node(tok.lower(), line, col))
    if stack:
        raise PDDLSyntaxError("unbalanced '(' (missing ')')", stack[-1].line, stack[-1].column)
    if root is None:
        raise PDDLSyntaxError("empty input", line, 1)
    return root


def _expect_list(node: _Node, what: str) -> list[_Node]:
    if not node.is_list:
        raise PDDLSyntaxError(f"expected {what}", node.line, node.column)
    return node.value


def _atom_token(node: _Node, what: str) -> str:
    if node.is_list:
        raise PDDLSyntaxError(f"expected {what}", node.line, node.column)
    return node.value


def _typed_list(nodes: Sequence[_Node]) -> list[tuple[str, str]]:
    """Parse ``a b - t c - u d`` into [(a, t), (b, t), (c, u), (d, object)]."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(nodes):
        tok = _atom_token(nodes[i], "name")
        if tok == "-":
            if i + 1 >= len(nodes) or not pending:
                raise PDDLSyntaxError("dangling '-' in typed list", nodes[i].line, nodes[i].column)
            type_node = nodes[i + 1]
            if type_node.is_list:
                raise UnsupportedFeatureError("either-types")
            out.extend((name, type_node.value) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(tok)
        i += 1
    out.extend((name, "object") for name in pending)
    return out


def _check_supported(node: _Node) -> None:
    if node.is_list:
        items = node.value
        if items and not items[0].is_list and items[0].value in _UNSUPPORTED:
            raise UnsupportedFeatureError(_UNSUPPORTED[items[0].value])
        for child in items:
            _check_supported(child)


def _conjunction(node: _Node) -> list[_Node]:
    items = _expect_list(node, "condition")
    if not items:
        return []
    head = items[0]
    if not head.is_list and head.value == "and":
        return items[1:]
    return [node]


def _literal(node: _Node) -> Atom:
    items = _expect_list(node, "atom")
    if not items:
        raise PDDLSyntaxError("empty atom", node.line, node.column)
    return Atom(_atom_token(items[0], "predicate name"),
                tuple(_atom_token(a, "argument") for a in items[1:]))


def _sections(items: Sequence[_Node]) -> Iterator[tuple[str, _Node]]:
    for node in items:
        parts = _expect_list(node, "section")
        if not parts:
            raise PDDLSyntaxError("empty section", node.line, node.column)
        yield _atom_token(parts[0], "section keyword"), node


def parse_domain(text: str) -> Domain:
    root = _read(text)
    items = _expect_list(root, "(define ...)")
    if len(items) < 2 or items[0].is_list or items[0].value != "define":
        raise PDDLSyntaxError("expected (define (domain NAME) ...)", root.line, root.column)
    head = _expect_list(items[1], "(domain NAME)")
    if len(head) != 2 or head[0].value != "domain":
        raise PDDLSyntaxError("expected (domain NAME)", items[1].line, items[1].column)
    name = _atom_token(head[1], "domain name")

    types: list[tuple[str, str]] = []
    constants: list[tuple[str, str]] = []
    predicates: list[Predicate] = []
    raw_actions: list[_Node] = []
    for key, node in _sections(items[2:]):
        body = node.value[1:]
        if key == ":requirements":
            for req in body:
                r = _atom_token(req, "requirement")
                if r not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeatureError(f"requirement {r}")
        elif key == ":types":
            types = _typed_list(body)
        elif key == ":constants":
            constants = _typed_list(body)
        elif key == ":predicates":
            for p in body:
                parts = _expect_list(p, "predicate declaration")
                pname = _atom_token(parts[0], "predicate name")
                predicates.append(Predicate(pname, tuple(_typed_list(parts[1:]))))
        elif key == ":action":
            raw_actions.append(node)
        elif key in _UNSUPPORTED:
            raise UnsupportedFeatureError(_UNSUPPORTED[key])
        else:
            raise PDDLSyntaxError(f"unknown domain section {key}", node.line, node.column)

    declared = {"object"} | {t for t, _ in types} | {p for _, p in types}
    parents = tuple((t, p) for t, p in types if t != p)
    pred_index = {p.name: p for p in predicates}
    for p in predicates:
        for _, t in p.params:
            if t not in declared:
                raise PDDLValidationError(f"predicate {p.name}: undeclared type {t}")

    dom = Domain(name, tuple(sorted(declared)), parents, tuple(predicates), (), tuple(constants))
    actions = tuple(_parse_action(n, dom, pred_index, declared) for n in raw_actions)
    return Domain(name, dom.types, parents, tuple(predicates), actions, tuple(constants))


def _parse_action(node: _Node, dom: Domain, preds: dict[str, Predicate],
                  declared: set[str]) -> ActionSchema:
    items = node.value
    name = _atom_token(items[1], "action name")
    params: list[tuple[str, str]] = []
    pre: list[Atom] = []
    add: list[Atom] = []
    delete: list[Atom] = []
    i = 2
    while i < len(items):
        key = _atom_token(items[i], "action keyword")
        if i + 1 >= len(items):
            raise PDDLSyntaxError(f"missing value for {key}", items[i].line, items[i].column)
        val = items[i + 1]
        if key == ":parameters":
            params = _typed_list(_expect_list(val, "parameter list"))
        elif key == ":precondition":
            _check_supported(val)
            pre = [_literal(c) for c in _conjunction(val)]
        elif key == ":effect":
            for c in _conjunction(val):
                parts = _expect_list(c, "effect")
                if parts and not parts[0].is_list and parts[0].value == "not":
                    if len(parts) != 2:
                        raise PDDLSyntaxError("malformed negative effect", c.line, c.column)
                    _check_supported(parts[1])
                    delete.append(_literal(parts[1]))
                else:
                    _check_supported(c)
                    add.append(_literal(c))
        else:
            raise PDDLSyntaxError(f"unknown action keyword {key}", items[i].line, items[i].column)
        i += 2

    ptypes = dict(params)
    consts = dict(dom.constants)
    for v, t in params:
        if not v.startswith("?"):
            raise PDDLValidationError(f"action {name}: parameter {v} must start with '?'")
        if t not in declared:
            raise PDDLValidationError(f"action {name}: undeclared type {t}")
    for atom in itertools.chain(pre, add, delete):
        p = preds.get(atom.predicate)
        if p is None:
            raise PDDLValidationError(f"action {name}: undeclared predicate {atom.predicate}")
        if len(atom.args) != p.arity:
            raise PDDLValidationError(f"action {name}: arity mismatch in {atom}")
        for arg, (_, t) in zip(atom.args, p.params):
            at = ptypes.get(arg) if arg.startswith("?") else consts.get(arg)
            if at is None:
                raise PDDLValidationError(f"action {name}: unknown term {arg} in {atom}")
            if not dom.is_subtype(at, t):
                raise PDDLValidationError(f"action {name}: type mismatch for {arg} in {atom}")
    if set(add) & set(delete):
        raise PDDLValidationError(f"action {name}: add and delete lists overlap")
    return ActionSchema(name, tuple(params), tuple(dict.fromkeys(pre)),
                        tuple(dict.fromkeys(add)), tuple(dict.fromkeys(delete)))


def parse_problem(text: str, domain: Domain) -> TypedTask:
    root = _read(text)
    items = _expect_list(root, "(define ...)")
    if len(items) < 2 or items[0].is_list or items[0].value != "define":
        raise PDDLSyntaxError("expected (define (problem NAME) ...)", root.line, root.column)
    head = _expect_list(items[1], "(problem NAME)")
    if len(head) != 2 or head[0].value != "problem":
        raise PDDLSyntaxError("expected (problem NAME)", items[1].line, items[1].column)
    name = _atom_token(head[1], "problem name")

    objects = list(domain.constants)
    init: list[Atom] = []
    goal: list[Atom] = []
    for key, node in _sections(items[2:]):
        body = node.value[1:]
        if key == ":domain":
            dname = _atom_token(body[0], "domain name")
            if dname != domain.name:
                raise PDDLValidationError(f"problem refers to domain {dname}, not {domain.name}")
        elif key == ":objects":
            objects.extend(_typed_list(body))
        elif key == ":init":
            for a in body:
                _check_supported(a)
                init.append(_literal(a))
        elif key == ":goal":
            if len(body) != 1:
                raise PDDLSyntaxError("expected a single goal formula", node.line, node.column)
            _check_supported(body[0])
            goal = [_literal(c) for c in _conjunction(body[0])]
        elif key == ":requirements":
            pass
        else:
            raise PDDLSyntaxError(f"unknown problem section {key}", node.line, node.column)

    typed = dict(objects)
    if len(typed) != len(objects):
        raise PDDLValidationError("duplicate object declaration")
    for o, t in objects:
        if t not in domain.types:
            raise PDDLValidationError(f"object {o}: undeclared type {t}")
    for atom in itertools.chain(init, goal):
        _validate_ground_atom(atom, domain, typed)
    return TypedTask(domain, name, tuple(sorted(objects)), frozenset(init), frozenset(goal))


def _validate_ground_atom(atom: Atom, domain: Domain, typed: dict[str, str]) -> None:
    try:
        p = domain.predicate(atom.predicate)
    except KeyError:
        raise PDDLValidationError(f"undeclared predicate in {atom}") from None
    if len(atom.args) != p.arity:
        raise PDDLValidationError(f"arity mismatch in {atom}")
    for arg, t in zip(atom.args, p.types):
        if arg not in typed:
            raise PDDLValidationError(f"undeclared object {arg} in {atom}")
        if not domain.is_subtype(typed[arg], t):
            raise PDDLValidationError(f"type mismatch: {arg} is not a {t} in {atom}")


# --------------------------------------------------------------------------
# pretty printing

def _typed_str(pairs: Iterable[tuple[str, str]]) -> str:
    return " ".join(f"{n} - {t}" for n, t in pairs)


def dump_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})", "  (:requirements :strips :typing)"]
    decl = [(t, dict(domain.parents).get(t, "object")) for t in domain.types if t != "object"]
    if decl:
        lines.append(f"  (:types {_typed_str(decl)})")
    if domain.constants:
        lines.append(f"  (:constants {_typed_str(domain.constants)})")
    lines.append("  (:predicates")
    for p in domain.predicates:
        inner = " ".join([p.name] + ([_typed_str(p.params)] if p.params else []))
        lines.append(f"    ({inner})")
    lines.append("  )")
    for a in domain.actions:
        lines.append(f"  (:action {a.name}")
        lines.append(f"    :parameters ({_typed_str(a.params)})")
        lines.append(f"    :precondition (and {' '.join(map(str, a.pre))})")
        effs = [str(x) for x in a.add] + [f"(not {x})" for x in a.delete]
        lines.append(f"    :effect (and {' '.join(effs)}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


def dump_problem(task: TypedTask) -> str:
    consts = set(task.domain.constants)
    objs = [(o, t) for o, t in task.objects if (o, t) not in consts]
    lines = [f"(define (problem {task.name})", f"  (:domain {task.domain.name})",
             f"  (:objects {_typed_str(objs)})", "  (:init"]
    lines.extend(f"    {a}" for a in sorted(task.init))
    lines.append("  )")
    lines.append(f"  (:goal (and {' '.join(map(str, sorted(task.goal)))}))")
    lines.append(")")
    return "\n".join(lines) + "\n"


def dump_task(task: TypedTask) -> str:
    """Canonical dump of domain and problem, deterministic in every ordering."""
    return dump_domain(task.domain) + "\n" + dump_problem(task)


# --------------------------------------------------------------------------
# grounding

@dataclass(frozen=True)
class GroundAction:
    schema: str
    args: tuple[str, ...]
    pre: frozenset[int]
    add: frozenset[int]
    delete: frozenset[int]

    @property
    def name(self) -> str:
        return "(" + " ".join((self.schema,) + self.args) + ")"


@dataclass(frozen=True)
class GroundTask:
    task: TypedTask
    atoms: tuple[Atom, ...]
    actions: tuple[GroundAction, ...]
    init: frozenset[int]
    goal: frozenset[int]
    static: frozenset[int]
    index: dict[Atom, int] = field(compare=False, repr=False)
    action_index: dict[tuple[str, tuple[str, ...]], int] = field(compare=False, repr=False)

    @property
    def init_bits(self) -> int:
        return sum(1 << i for i in self.init)

    def state_of(self, atoms: Iterable[Atom]) -> frozenset[int]:
        return frozenset(self.index[a] for a in atoms)

    def atoms_of(self, state: Iterable[int]) -> frozenset[Atom]:
        return frozenset(self.atoms[i] for i in state)

    def lookup(self, schema: str, args: Sequence[str]) -> GroundAction:
        return self.actions[self.action_index[(schema, tuple(args))]]

    def is_goal(self, state: frozenset[int]) -> bool:
        return self.goal <= state


def applicable(action: GroundAction, state: frozenset[int]) -> bool:
    return action.pre <= state


def apply(action: GroundAction, state: frozenset[int]) -> frozenset[int]:
    if not action.pre <= state:
        raise ValueError(f"{action.name} is not applicable")
    return (state - action.delete) | action.add


def ground(task: TypedTask) -> GroundTask:
    dom = task.domain
    atoms: list[Atom] = []
    for p in dom.predicates:
        for args in itertools.product(*(task.objects_of(t) for t in p.types)):
            atoms.append(Atom(p.name, args))
    index = {a: i for i, a in enumerate(atoms)}

    actions: list[GroundAction] = []
    for schema in dom.actions:
        params = [v for v, _ in schema.params]
        for args in itertools.product(*(task.objects_of(t) for t in schema.types)):
            binding = dict(zip(params, args))

            def idx(atoms_: Sequence[Atom]) -> frozenset[int]:
                return frozenset(index[a.substitute(binding)] for a in atoms_)
            actions.append(GroundAction(schema.name, args, idx(schema.pre),
                                        idx(schema.add), idx(schema.delete)))

    touched: set[int] = set()
    for a in actions:
        touched |= a.add | a.delete
    static = frozenset(range(len(atoms))) - touched
    return GroundTask(
        task, tuple(atoms), tuple(actions),
        frozenset(index[a] for a in task.init), frozenset(index[a] for a in task.goal),
        static, index, {(a.schema, a.args): i for i, a in enumerate(actions)},
    )
