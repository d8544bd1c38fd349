"""Typed STRIPS planning from skill descriptions and a scene.

Each plannable skill description becomes an action schema whose
parameters are its element-typed parameters. Relation conditions map to
binary literals ``(predicate subject object)``; property conditions map
to equality literals ``(predicate subject value)`` over the values found
in the scene. A positive property postcondition *assigns* the property:
it deletes the subject's other values of that predicate.

Search is breadth-first over ground actions in lexicographic order, so
the first plan found is the shortest one and, among the shortest, the
lexicographically smallest sequence of ground-action names.
"""
from __future__ import annotations

import itertools
import logging
import re
from collections import deque
from dataclasses import dataclass, field

from . import bt
from .skills import (ConditionKind, GroundingError, SkillContext, SkillNode, SkillRegistry,
                     check_binding, select_implementation)
from .world import Scene

log = logging.getLogger(__name__)

Literal = tuple  # (predicate, arg, arg, ...)


class PlanningError(Exception):
    pass


class GoalSyntaxError(PlanningError):
    pass


class UnknownConstantError(PlanningError):
    pass


class UnsolvableError(PlanningError):
    pass


class SearchBudgetExceeded(PlanningError):
    pass


# ------------------------------------------------------------------ goals
_SEXPR = re.compile(r"\s*(?:(\()|(\))|\"((?:[^\"\\]|\\.)*)\"|([^\s()\"]+))")


def _parse_sexpr(text: str):
    pos, stack, top = 0, [], []
    cur = top
    text = text.strip()
    while pos < len(text):
        m = _SEXPR.match(text, pos)
        if not m or m.end() == pos:
            raise GoalSyntaxError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        if m.group(1):
            stack.append(cur)
            new: list = []
            cur.append(new)
            cur = new
        elif m.group(2):
            if not stack:
                raise GoalSyntaxError(f"unbalanced ')' at offset {m.start(2)}")
            cur = stack.pop()
        elif m.group(3) is not None:
            cur.append(m.group(3))
        elif m.group(4):
            cur.append(m.group(4))
        if pos < len(text) and text[pos:].strip() == "":
            break
    if stack:
        raise GoalSyntaxError("unbalanced '(': missing ')'")
    return top


def parse_goal(text: str) -> frozenset:
    """Parse ``(p a b)``, a list of literals, or ``(and ...)``; ``()`` or blank is the empty goal."""
    items = _parse_sexpr(text)
    literals: list = []

    def literal(x):
        if not isinstance(x, list) or not x:
            raise GoalSyntaxError(f"expected a literal, got {x!r}")
        if any(isinstance(a, list) for a in x):
            raise GoalSyntaxError(f"nested expression in literal {x!r}")
        if x[0] in ("not", "or", "forall", "exists", "when"):
            raise GoalSyntaxError(f"only positive ground literals are supported, got {x[0]!r}")
        if any(a.startswith("?") for a in x[1:]):
            raise GoalSyntaxError(f"goal literal {x!r} is not ground")
        return tuple(x)

    def visit(x):
        if not x:
            return
        if isinstance(x[0], list):
            for y in x:
                visit(y)
        elif x[0] == "and":
            for y in x[1:]:
                visit(y)
        else:
            literals.append(literal(x))

    for item in items:
        if not isinstance(item, list):
            raise GoalSyntaxError(f"goal must be parenthesised, got {item!r}")
        visit(item)
    return frozenset(literals)


# ------------------------------------------------------------------ domain
def _var(name: str) -> str:
    return "?" + name


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple  # ((name, type), ...)
    pre: frozenset
    add: frozenset
    delete: frozenset
    assign: frozenset = frozenset()  # (pred, ?subject, value): delete other values, add this one

    def ground(self, args: tuple) -> GroundAction:
        sub = {_var(n): a for (n, _), a in zip(self.params, args)}

        def g(lits):
            return frozenset(tuple(sub.get(x, x) for x in lit) for lit in lits)

        return GroundAction(self.name, tuple(args), g(self.pre), g(self.add), g(self.delete), g(self.assign),
                            dict(zip((n for n, _ in self.params), args)))


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple
    pre: frozenset
    add: frozenset
    delete: frozenset
    assign: frozenset
    bindings: dict = field(compare=False, hash=False)

    def applicable(self, state: frozenset) -> bool:
        return self.pre <= state

    def apply(self, state: frozenset) -> frozenset:
        s = set(state) - self.delete
        for pred, subj, value in self.assign:
            s = {f for f in s if not (f[0] == pred and len(f) == 3 and f[1] == subj)}
            s.add((pred, subj, value))
        return frozenset(s | self.add)

    def __str__(self):
        return "(" + " ".join((self.name,) + self.args) + ")"


def build_domain(registry: SkillRegistry, warnings: list | None = None) -> list[ActionSchema]:
    """One schema per plannable skill description, sorted by name.

    Excluded (with a warning): skills with Required scalar parameters
    (a planner cannot invent them) and skills with negative
    preconditions (not expressible in STRIPS).
    """
    schemas = []
    arity: dict[str, int] = {}

    def note(msg):
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)

    for name in registry:
        desc = registry.description(name)
        scalar = [p.name for p in desc.params if not p.is_element and p.default is None]
        if scalar:
            note(f"skill {name} not plannable: scalar parameters {scalar} need values")
            continue
        negative = [str(c) for c in desc.preconditions + desc.holdconditions if not c.desired]
        if negative:
            note(f"skill {name} not plannable: negative preconditions {negative}")
            continue
        params = tuple((p.name, p.type) for p in desc.params if p.is_element)
        pnames = {n for n, _ in params}

        def lit(c):
            if c.kind is ConditionKind.RELATION:
                return (c.predicate, _var(c.subject), _var(c.object))
            return (c.predicate, _var(c.subject), c.object)

        bad = [str(c) for c in desc.conditions() if any(p not in pnames for p in c.params())]
        if bad:
            note(f"skill {name} not plannable: conditions {bad} use scalar parameters")
            continue
        pre = frozenset(lit(c) for c in desc.preconditions + desc.holdconditions)
        add, delete, assign = set(), set(), set()
        for c in desc.postconditions:
            if not c.desired:
                delete.add(lit(c))
            elif c.kind is ConditionKind.PROPERTY:
                assign.add(lit(c))
            else:
                add.add(lit(c))
        for lit_ in pre | add | delete | assign:
            k = len(lit_) - 1
            if arity.setdefault(lit_[0], k) != k:
                raise PlanningError(f"predicate {lit_[0]} used with arities {arity[lit_[0]]} and {k}")
        schemas.append(ActionSchema(name, params, pre, frozenset(add), frozenset(delete), frozenset(assign)))
    return schemas


def property_predicates(domain) -> set:
    out = set()
    for a in domain:
        for lit in a.pre | a.add | a.delete | a.assign:
            if not str(lit[2]).startswith("?"):
                out.add(lit[0])
    return out


# ------------------------------------------------------------------ problem
@dataclass(frozen=True)
class PlanningProblem:
    objects: dict  # id -> concept
    init: frozenset
    goal: frozenset
    typed: dict = field(default_factory=dict, compare=False)  # type -> sorted ids

    def objects_of(self, concept: str) -> list:
        return self.typed.get(concept, [])


def build_problem(scene: Scene, goal, domain) -> PlanningProblem:
    """Objects and initial facts from the scene; ``goal`` is a literal set or goal text."""
    if isinstance(goal, str):
        goal = parse_goal(goal)
    objects = {e.id: e.concept for e in scene.elements.values()}
    for lit in goal:
        for a in lit[1:]:
            if a not in objects and not _is_value(a, domain):
                raise UnknownConstantError(f"goal constant {a!r} is not in the scene")
    props = property_predicates(domain)
    init = set()
    for e in scene.elements.values():
        for pred, target in e.relations:
            init.add((pred, e.id, target))
        for pred in props:
            for v in e.get_all(pred):
                init.add((pred, e.id, v))
    typed = {}
    for a in domain:
        for _, t in a.params:
            if t not in typed:
                typed[t] = [e.id for e in scene.query_by_concept(t)] if scene.has_concept(t) else []
    return PlanningProblem(objects, frozenset(init), frozenset(goal), typed)


def _is_value(a, domain) -> bool:
    return any(lit[2] == a for s in domain for lit in s.pre | s.add | s.assign if len(lit) == 3)


# ------------------------------------------------------------------ search
@dataclass
class Plan:
    actions: list
    expanded: int = 0

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.actions]

    def __str__(self):
        return "\n".join(str(a) for a in self.actions)


def ground_actions(domain, problem: PlanningProblem) -> list[GroundAction]:
    """All type-correct ground actions, sorted by their printed name."""
    out = []
    for schema in domain:
        pools = [problem.objects_of(t) for _, t in schema.params]
        for args in itertools.product(*pools):
            out.append(schema.ground(args))
    out.sort(key=str)
    return out


def plan(domain, problem: PlanningProblem, max_states: int = 100_000) -> Plan:
    """Shortest plan by breadth-first search; ties go to the lexicographically smallest plan."""
    actions = ground_actions(domain, problem)
    init, goal = problem.init, problem.goal
    if goal <= init:
        return Plan([], 0)
    parent = {init: None}
    queue = deque([init])
    expanded = 0
    while queue:
        state = queue.popleft()
        expanded += 1
        for a in actions:
            if not a.pre <= state:
                continue
            nxt = a.apply(state)
            if nxt in parent:
                continue
            parent[nxt] = (state, a)
            if goal <= nxt:
                steps = []
                s = nxt
                while parent[s] is not None:
                    s, act = parent[s][0], parent[s][1]
                    steps.append(act)
                return Plan(steps[::-1], expanded)
            if len(parent) > max_states:
                raise SearchBudgetExceeded(f"more than {max_states} states explored")
            queue.append(nxt)
    raise UnsolvableError(f"goal {sorted(goal)} is unreachable ({len(parent)} states explored)")


def validate_plan(problem: PlanningProblem, plan_: Plan) -> bool:
    """Replay the plan from the initial state: every action applicable and the goal reached."""
    state = problem.init
    for a in plan_.actions:
        if not a.applicable(state):
            return False
        state = a.apply(state)
    return problem.goal <= state


# ------------------------------------------------------------------ PDDL text
def _pddl_name(x) -> str:
    s = re.sub(r"[^A-Za-z0-9_-]", "_", str(x))
    return s if s[:1].isalpha() else "c_" + s


def to_pddl(domain, problem: PlanningProblem, name: str = "skills") -> tuple[str, str]:
    """Domain and problem text; ``:`` and other symbols become ``_``, property
    assignments are expanded over the values present in the problem."""
    types = sorted({t for a in domain for _, t in a.params})
    preds = {}
    for a in domain:
        for lit in a.pre | a.add | a.delete | a.assign:
            preds[lit[0]] = len(lit) - 1
    values = sorted({str(l[2]) for l in problem.init | problem.goal if l[0] in property_predicates(domain)}
                    | {str(l[2]) for a in domain for l in a.pre | a.add | a.assign | a.delete
                       if not str(l[2]).startswith("?")})
    d = [f"(define (domain {name})", "  (:requirements :strips :typing)",
         "  (:types " + " ".join(_pddl_name(t) for t in types) + " value)"]
    if values:
        d.append("  (:constants " + " ".join("v_" + _pddl_name(v) for v in values) + " - value)")
    d.append("  (:predicates")
    for p, k in sorted(preds.items()):
        d.append(f"    ({_pddl_name(p)} " + " ".join(f"?x{i}" for i in range(k)) + ")")
    d.append("  )")

    def term(x):
        x = str(x)
        if x.startswith("?"):
            return "?" + _pddl_name(x[1:])
        return "v_" + _pddl_name(x)

    def fmt(lit):
        return "(" + " ".join([_pddl_name(lit[0])] + [term(a) for a in lit[1:]]) + ")"

    for a in domain:
        d.append(f"  (:action {_pddl_name(a.name)}")
        d.append("    :parameters (" + " ".join(f"?{_pddl_name(n)} - {_pddl_name(t)}" for n, t in a.params) + ")")
        d.append("    :precondition (and " + " ".join(fmt(l) for l in sorted(a.pre)) + ")")
        eff = [fmt(l) for l in sorted(a.add)] + [f"(not {fmt(l)})" for l in sorted(a.delete)]
        for lit in sorted(a.assign, key=str):
            eff.append(fmt(lit))
            eff += [f"(not {fmt((lit[0], lit[1], v))})" for v in values if v != str(lit[2])]
        d.append("    :effect (and " + " ".join(eff) + "))")
    d.append(")")

    objs = sorted(problem.objects)
    p = [f"(define (problem {name}-problem)", f"  (:domain {name})", "  (:objects"]
    for t in types:
        members = problem.objects_of(t)
        if members:
            p.append("    " + " ".join(_pddl_name(o) for o in members) + f" - {_pddl_name(t)}")
    p.append("  )")

    def gfmt(lit):
        args = [_pddl_name(a) if a in problem.objects else "v_" + _pddl_name(a) for a in lit[1:]]
        return "(" + " ".join([_pddl_name(lit[0])] + args) + ")"

    relevant = set(preds)
    p.append("  (:init " + " ".join(gfmt(l) for l in sorted(problem.init, key=str) if l[0] in relevant
                                    and all(a in objs or str(a) in values for a in l[1:])) + ")")
    p.append("  (:goal (and " + " ".join(gfmt(l) for l in sorted(problem.goal, key=str)) + "))")
    p.append(")")
    return "\n".join(d) + "\n", "\n".join(p) + "\n"


# ------------------------------------------------------------------ execution
def plan_to_bt(plan_: Plan, registry: SkillRegistry, scene: Scene, ctx: SkillContext | None = None) -> bt.Node:
    """Memory sequence of expanded skill subtrees, grounded with the plan's bindings.

    Raises :class:`GroundingError` if a bound element is gone or no longer
    has the planned type. Preconditions are checked when each skill starts.
    """
    if ctx is None:
        ctx = SkillContext(scene, registry=registry)
    ctx.registry = registry
    children = []
    for action in plan_.actions:
        desc = registry.description(action.name)
        bindings = {}
        for spec in desc.params:
            if spec.name in action.bindings:
                value = action.bindings[spec.name]
                if value not in scene:
                    raise GroundingError(f"{action}: element {value!r} no longer exists")
                check_binding(spec, value, scene)
                bindings[spec.name] = value
            elif spec.default is not None:
                bindings[spec.name] = spec.default
        impl = select_implementation(desc, bindings, scene, registry)
        children.append(SkillNode(impl, desc, bindings, ctx))
    return bt.Sequence(children, name="plan")
