"""Skill model: descriptions, implementations, grounding and execution.

A :class:`SkillDescription` is the semantic signature of a skill (typed
parameters and pre-, hold- and postconditions). A
:class:`SkillImplementation` implements exactly one description; it may
narrow parameter types to subconcepts and add conditions, which is how
several implementations of the same skill coexist and get selected by
the concepts of the bound elements.

Parameters come in three kinds. Required ones must be supplied, Optional
ones fall back to a default, and Inferred ones are reasoned from the
world model through the preconditions that mention them.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Any

from . import bt
from .bt import Status
from .geometry import Pose
from .world import Scene

log = logging.getLogger(__name__)

SCALAR_TYPES = {
    "float": (float, int),
    "int": (int,),
    "bool": (bool,),
    "string": (str,),
    "pose": (Pose,),
    "any": (object,),
}


class SkillError(Exception):
    pass


class PreconditionError(SkillError):
    """The skill cannot start: a precondition is violated."""

    def __init__(self, message, violated=()):
        super().__init__(message)
        self.violated = list(violated)


class GroundingError(PreconditionError):
    """No element satisfies the preconditions of an inferred parameter."""


class ParameterError(SkillError):
    pass


class SelectionError(SkillError):
    pass


class AmbiguousImplementationError(SelectionError):
    pass


class ParamKind(enum.Enum):
    REQUIRED = "required"
    OPTIONAL = "optional"
    INFERRED = "inferred"


REQUIRED, OPTIONAL, INFERRED = ParamKind.REQUIRED, ParamKind.OPTIONAL, ParamKind.INFERRED


@dataclass(frozen=True)
class ParamSpec:
    """``type`` is either a concept name (element parameter) or a scalar type name."""

    name: str
    type: str
    kind: ParamKind = REQUIRED
    default: Any = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ParamKind(self.kind))
        if self.kind is REQUIRED and self.default is not None:
            raise ValueError(f"required parameter {self.name!r} cannot have a default")
        if self.kind is OPTIONAL and self.default is None:
            raise ValueError(f"optional parameter {self.name!r} needs a default")

    @property
    def is_element(self) -> bool:
        return self.type not in SCALAR_TYPES


class ConditionKind(enum.Enum):
    RELATION = "relation"
    PROPERTY = "property"


@dataclass(frozen=True)
class Condition:
    """Relation: ``subject --predicate--> object`` (both parameters).
    Property: ``subject.predicate == object`` (object is a literal)."""

    kind: ConditionKind
    subject: str
    predicate: str
    object: Any
    desired: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", ConditionKind(self.kind))

    def params(self) -> list[str]:
        if self.kind is ConditionKind.RELATION:
            return [self.subject, self.object]
        return [self.subject]

    def __str__(self):
        neg = "not " if not self.desired else ""
        if self.kind is ConditionKind.RELATION:
            return f"{neg}{self.predicate}({self.subject}, {self.object})"
        return f"{neg}{self.predicate}({self.subject}) == {self.object!r}"


def Relation(subject: str, predicate: str, obj: str, desired: bool = True) -> Condition:
    return Condition(ConditionKind.RELATION, subject, predicate, obj, desired)


def Property(subject: str, predicate: str, value: Any, desired: bool = True) -> Condition:
    return Condition(ConditionKind.PROPERTY, subject, predicate, value, desired)


@dataclass(frozen=True)
class SkillDescription:
    name: str
    params: tuple[ParamSpec, ...] = ()
    preconditions: tuple[Condition, ...] = ()
    holdconditions: tuple[Condition, ...] = ()
    postconditions: tuple[Condition, ...] = ()

    def __post_init__(self):
        for attr in ("params", "preconditions", "holdconditions", "postconditions"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"skill {self.name}: duplicate parameter names")
        for c in self.conditions():
            for p in c.params():
                if p not in names:
                    raise ValueError(f"skill {self.name}: condition {c} uses undeclared parameter {p!r}")

    def conditions(self):
        return self.preconditions + self.holdconditions + self.postconditions

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def param_names(self) -> list[str]:
        return [p.name for p in self.params]


class SkillContext:
    """What a running skill can reach: the world model, the robot runtime
    (simulation, controllers), the task blackboard and the skill registry."""

    def __init__(self, scene: Scene, runtime=None, registry: SkillRegistry | None = None,
                 blackboard: Blackboard | None = None):
        self.scene = scene
        self.runtime = runtime
        self.registry = registry
        self.blackboard = blackboard if blackboard is not None else Blackboard()
        self.command_log: list[tuple] = []

    @property
    def time(self) -> float:
        return self.runtime.time if self.runtime is not None else 0.0

    def record(self, *command) -> None:
        """Append a robot-independent command to the abstract command stream."""
        self.command_log.append(tuple(command))


class Blackboard:
    """Task-scoped parameter store; a key can only be rebound by its owner."""

    def __init__(self):
        self._values: dict[str, Any] = {}
        self._owners: dict[str, str] = {}

    def bind(self, key: str, value: Any, owner: str = "") -> None:
        if key in self._owners and self._owners[key] != owner:
            raise KeyError(f"blackboard key {key!r} is owned by {self._owners[key]!r}")
        self._values[key] = value
        self._owners[key] = owner

    def __getitem__(self, key):
        return self._values[key]

    def __contains__(self, key):
        return key in self._values

    def get(self, key, default=None):
        return self._values.get(key, default)

    def items(self):
        return self._values.items()


# ------------------------------------------------------------------ implementations
class SkillImplementation:
    """Base class; subclass :class:`Primitive` or :class:`Compound`.

    Class attributes: ``name``, ``implements`` (description name),
    ``specializations`` (param -> narrower concept) and extra
    ``preconditions`` / ``holdconditions`` / ``postconditions``.
    """

    name: str = ""
    implements: str = ""
    specializations: dict[str, str] = {}
    preconditions: tuple[Condition, ...] = ()
    holdconditions: tuple[Condition, ...] = ()
    postconditions: tuple[Condition, ...] = ()

    def __init__(self, description: SkillDescription, bindings: dict, ctx: SkillContext):
        self.description = description
        self.params = dict(bindings)
        self.ctx = ctx

    @classmethod
    def effective_description(cls, description: SkillDescription) -> SkillDescription:
        params = tuple(replace(p, type=cls.specializations.get(p.name, p.type)) for p in description.params)
        return replace(description, params=params,
                       preconditions=description.preconditions + tuple(cls.preconditions),
                       holdconditions=description.holdconditions + tuple(cls.holdconditions),
                       postconditions=description.postconditions + tuple(cls.postconditions))

    @classmethod
    def validate(cls, description: SkillDescription, scene: Scene | None = None) -> None:
        if cls.implements != description.name:
            raise ValueError(f"{cls.name} implements {cls.implements!r}, not {description.name!r}")
        for p, concept in cls.specializations.items():
            spec = description.param(p)
            if not spec.is_element:
                raise ValueError(f"{cls.name}: cannot specialize scalar parameter {p!r}")
            if scene is not None and not scene.is_subconcept(concept, spec.type):
                raise ValueError(f"{cls.name}: {concept} does not narrow {spec.type}")
        cls.effective_description(description)  # re-checks condition parameters


class Primitive(SkillImplementation):
    """Atomic skill with the lifecycle on_init, on_start, execute (per tick), on_stop."""

    def on_init(self) -> None:
        pass

    def on_start(self) -> None:
        pass

    def execute(self) -> Status:
        return Status.SUCCESS

    def on_stop(self) -> None:
        pass


class Compound(SkillImplementation):
    """Skill built as a behavior tree of child skills."""

    def build(self) -> bt.Node:
        raise NotImplementedError

    def child(self, skill: str, **bindings) -> bt.Node:
        """Expanded node for a child skill with the given bindings."""
        return instantiate(skill, bindings, self.ctx)


class SkillRegistry:
    """Descriptions and their implementations, frozen after start-up."""

    def __init__(self):
        self.descriptions: dict[str, SkillDescription] = {}
        self._impls: dict[str, dict[str, type]] = {}
        self.frozen = False

    def add(self, description: SkillDescription, *implementations: type) -> None:
        if self.frozen:
            raise RuntimeError("skill registry is frozen")
        if description.name in self.descriptions:
            raise ValueError(f"duplicate skill {description.name!r}")
        self.descriptions[description.name] = description
        self._impls[description.name] = {}
        for impl in implementations:
            self.add_implementation(impl)

    def add_implementation(self, impl: type) -> None:
        if self.frozen:
            raise RuntimeError("skill registry is frozen")
        desc = self.descriptions.get(impl.implements)
        if desc is None:
            raise KeyError(f"{impl.name} implements unknown skill {impl.implements!r}")
        impl.validate(desc)
        if impl.name in self._impls[desc.name]:
            raise ValueError(f"duplicate implementation {impl.name!r}")
        self._impls[desc.name][impl.name] = impl

    def freeze(self) -> SkillRegistry:
        self.frozen = True
        return self

    def description(self, name: str) -> SkillDescription:
        try:
            return self.descriptions[name]
        except KeyError:
            raise SkillError(f"unknown skill {name!r}") from None

    def implementations(self, name: str) -> list[type]:
        self.description(name)
        return [self._impls[name][k] for k in sorted(self._impls[name])]

    def validate(self, scene: Scene) -> None:
        """Check specializations against a concept hierarchy."""
        for name, desc in self.descriptions.items():
            for impl in self._impls[name].values():
                impl.validate(desc, scene)

    def __iter__(self):
        return iter(sorted(self.descriptions))

    def __len__(self):
        return len(self.descriptions)


# ------------------------------------------------------------------ reasoning
def _value_ok(spec: ParamSpec, value, scene: Scene) -> bool:
    if spec.is_element:
        if not isinstance(value, str) or value not in scene:
            return False
        return scene.is_subconcept(scene.element(value).concept, spec.type)
    if spec.type == "float" and isinstance(value, bool):
        return False
    return isinstance(value, SCALAR_TYPES[spec.type])


def check_binding(spec: ParamSpec, value, scene: Scene) -> None:
    if spec.is_element:
        if not isinstance(value, str):
            raise ParameterError(f"parameter {spec.name!r} expects an element id, got {value!r}")
        if value not in scene:
            raise GroundingError(f"parameter {spec.name!r}: unknown element {value!r}")
        concept = scene.element(value).concept
        if not scene.is_subconcept(concept, spec.type):
            raise ParameterError(f"parameter {spec.name!r}: {value} is a {concept}, not a {spec.type}")
    elif not _value_ok(spec, value, scene):
        raise ParameterError(f"parameter {spec.name!r} expects {spec.type}, got {value!r}")


def _holds(c: Condition, bindings: dict, scene: Scene) -> bool:
    for p in c.params():
        if p not in bindings:
            raise ParameterError(f"condition {c} references unbound parameter {p!r}")
    subject = bindings[c.subject]
    if c.kind is ConditionKind.RELATION:
        value = scene.has_relation(subject, c.predicate, bindings[c.object])
    else:
        value = subject in scene and c.object in scene.element(subject).get_all(c.predicate)
    return value == c.desired


def check_conditions(conditions, bindings: dict, scene: Scene) -> tuple[bool, list[Condition]]:
    """All conditions hold? Returns ``(ok, violated)``."""
    violated = [c for c in conditions if not _holds(c, bindings, scene)]
    return not violated, violated


def ground_parameters(description: SkillDescription, partial: dict, scene: Scene,
                      warnings: list | None = None) -> dict:
    """Complete ``partial`` bindings: check Required, default Optional, infer Inferred.

    An inferred parameter is bound to the element of its type that
    satisfies every precondition linking it to already bound parameters.
    Parameters constrained by bound ones are resolved first, so chains
    (arm -> gripper -> tool) resolve in order. Several candidates: the
    lowest id wins and a warning reports how many were discarded.
    """
    names = set(description.param_names)
    unknown = set(partial) - names
    if unknown:
        raise ParameterError(f"{description.name}: unknown parameters {sorted(unknown)}")
    bindings: dict = {}
    for spec in description.params:
        if spec.name in partial and partial[spec.name] is not None:
            check_binding(spec, partial[spec.name], scene)
            bindings[spec.name] = partial[spec.name]
        elif spec.kind is REQUIRED:
            raise ParameterError(f"{description.name}: required parameter {spec.name!r} is not bound")
        elif spec.kind is OPTIONAL:
            bindings[spec.name] = spec.default

    pending = [p for p in description.params if p.kind is INFERRED and p.name not in bindings]
    while pending:
        ready = [p for p in pending if _linked(p.name, description.preconditions, bindings)]
        spec = (ready or pending)[0]
        if not spec.is_element:
            raise GroundingError(f"{description.name}: cannot infer scalar parameter {spec.name!r}")
        conds = [c for c in description.preconditions
                 if spec.name in c.params() and all(q == spec.name or q in bindings for q in c.params())]
        candidates = []
        for e in scene.query_by_concept(spec.type):
            trial = dict(bindings, **{spec.name: e.id})
            if all(_holds(c, trial, scene) for c in conds):
                candidates.append(e.id)
        if not candidates:
            detail = ", ".join(map(str, conds)) or "its type"
            raise GroundingError(f"{description.name}: no {spec.type} satisfies {detail} "
                                 f"for parameter {spec.name!r}")
        if len(candidates) > 1:
            msg = (f"{description.name}: {len(candidates)} candidates for {spec.name!r}, "
                   f"took {candidates[0]}, discarded {len(candidates) - 1}")
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
        bindings[spec.name] = candidates[0]
        pending.remove(spec)
    return bindings


def _linked(name: str, conditions, bindings) -> bool:
    for c in conditions:
        if c.kind is ConditionKind.RELATION and name in c.params():
            other = c.object if c.subject == name else c.subject
            if other in bindings:
                return True
    return False


def select_implementation(description: SkillDescription, bindings: dict, scene: Scene,
                          registry: SkillRegistry) -> type:
    """The matching implementation with the deepest specializations.

    Specificity is the summed depth of each specialized concept below the
    described type; a tie between the best candidates is an error.
    """
    scored = []
    for impl in registry.implementations(description.name):
        score = 0
        ok = True
        for p, concept in impl.specializations.items():
            value = bindings.get(p)
            if value is None or value not in scene or not scene.has_concept(concept):
                ok = False
                break
            if not scene.is_subconcept(scene.element(value).concept, concept):
                ok = False
                break
            score += scene.concept_depth(concept, description.param(p).type)
        if ok:
            scored.append((score, impl))
    if not scored:
        concepts = {p: scene.element(v).concept for p, v in bindings.items()
                    if description.param(p).is_element and isinstance(v, str) and v in scene}
        raise SelectionError(f"no implementation of {description.name} matches {concepts}")
    best = max(s for s, _ in scored)
    top = [impl for s, impl in scored if s == best]
    if len(top) > 1:
        raise AmbiguousImplementationError(
            f"{description.name}: implementations {[i.name for i in top]} are equally specific")
    return top[0]


# ------------------------------------------------------------------ execution
class SkillNode(bt.Node):
    """Behavior-tree node running one grounded skill implementation.

    Preconditions are checked on the first tick (failure: the skill never
    starts), holdconditions on every tick, postconditions after Success.
    ``failure`` records why the node failed.
    """

    kind = "Skill"

    def __init__(self, impl: type, description: SkillDescription, bindings: dict, ctx: SkillContext,
                 check_pre: bool = True):
        self.impl_cls = impl
        self.description = impl.effective_description(description)
        self.bindings = dict(bindings)
        self.ctx = ctx
        self.check_pre = check_pre
        self.instance = impl(description, bindings, ctx)
        children = [self.instance.build()] if isinstance(self.instance, Compound) else []
        super().__init__(children, name=f"{description.name}:{impl.name}")
        self.active = False
        self.failure: str | None = None
        self.starts = self.stops = 0
        self.paused = False
        if isinstance(self.instance, Primitive):
            self.instance.on_init()

    def label(self):
        return f"Skill({self.description.name}:{self.impl_cls.name})"

    def _start(self):
        self.failure = None
        if self.check_pre:
            ok, violated = check_conditions(self.description.preconditions, self.bindings, self.ctx.scene)
            if not ok:
                self.failure = "precondition: " + ", ".join(map(str, violated))
                return False
        if isinstance(self.instance, Primitive):
            try:
                self.instance.on_start()
            except PreconditionError as exc:
                self.failure = f"precondition: {exc}"
                return False
            except Exception as exc:
                self.failure = f"execution: {type(exc).__name__}: {exc}"
                log.error("%s failed to start: %s", self.label(), self.failure)
                return False
        self.active = True
        self.starts += 1
        return True

    def _stop(self):
        if self.active:
            self.active = False
            self.stops += 1
            if isinstance(self.instance, Primitive):
                self.instance.on_stop()

    def pause(self):
        self.paused = True

    def resume(self):
        self.paused = False

    def update(self, ctx):
        if self.paused and self.active:
            return Status.RUNNING
        if not self.active and not self._start():
            return Status.FAILURE
        ok, violated = check_conditions(self.description.holdconditions, self.bindings, self.ctx.scene)
        if not ok:
            if self.children and self.children[0].status is Status.RUNNING:
                self.children[0].halt(ctx)
            self._stop()
            self.failure = "holdcondition: " + ", ".join(map(str, violated))
            return Status.FAILURE
        try:
            if isinstance(self.instance, Primitive):
                st = self.instance.execute()
            else:
                st = self.children[0].tick(ctx)
        except Exception as exc:
            self._stop()
            self.failure = f"execution: {type(exc).__name__}: {exc}"
            log.error("%s failed: %s", self.label(), self.failure)
            return Status.FAILURE
        if st is Status.RUNNING:
            return st
        self._stop()
        if st is Status.FAILURE:
            self.failure = self.failure or "execution"
            return st
        ok, violated = check_conditions(self.description.postconditions, self.bindings, self.ctx.scene)
        if not ok:
            self.failure = "postcondition: " + ", ".join(map(str, violated))
            return Status.FAILURE
        return Status.SUCCESS

    def halt(self, ctx=None):
        super().halt(ctx)
        self._stop()
        if self.failure is None:
            self.failure = "halted"

    def failures(self):
        """(label, reason) of every failed skill node in this subtree, innermost first."""
        out = []
        for n in reversed(list(self.walk())):
            if isinstance(n, SkillNode) and n.failure and n.failure != "halted":
                out.append((n.label(), n.failure))
        return out


def instantiate(skill: str, bindings: dict, ctx: SkillContext, ground: bool = True) -> SkillNode:
    """Ground, select and instantiate a skill as a tree node (compounds expand recursively)."""
    registry = ctx.registry
    desc = registry.description(skill)
    full = ground_parameters(desc, bindings, ctx.scene) if ground else dict(bindings)
    impl = select_implementation(desc, full, ctx.scene, registry)
    return SkillNode(impl, desc, full, ctx)


def expand(skill: str, bindings: dict, registry: SkillRegistry, scene: Scene,
           ctx: SkillContext | None = None) -> SkillNode:
    """Executable tree for a (compound) skill with grounded, implementation-selected leaves."""
    if ctx is None:
        ctx = SkillContext(scene, registry=registry)
    ctx.registry = registry
    return instantiate(skill, bindings, ctx)


@dataclass
class SkillResult:
    status: Status
    ticks: int
    failure: str | None = None
    node: SkillNode | None = field(default=None, repr=False)

    @property
    def stage(self) -> str | None:
        """Which check failed: precondition, holdcondition, postcondition, execution or budget."""
        if self.failure is None:
            return None
        return self.failure.split(":", 1)[0]


class Executor:
    """Ticks a tree at a fixed rate; ``between_ticks(period)`` advances the world."""

    def __init__(self, rate_hz: float = 100.0, max_ticks: int = 100_000, between_ticks=None):
        self.rate_hz = rate_hz
        self.max_ticks = max_ticks
        self.between_ticks = between_ticks

    def run(self, tree: bt.Node, ctx=None) -> bt.RunResult:
        return bt.run_to_completion(tree, self.rate_hz, self.max_ticks, ctx, self.between_ticks)


def run_skill(implementation: type, bindings: dict, scene: Scene, executor: Executor | None = None,
              ctx: SkillContext | None = None, description: SkillDescription | None = None) -> SkillResult:
    """Run one implementation to completion with condition checks.

    Violated preconditions raise :class:`PreconditionError` before
    anything starts; other failures come back in the result.
    """
    executor = executor or Executor()
    if ctx is None:
        ctx = SkillContext(scene)
    if description is None:
        if ctx.registry is None:
            raise SkillError("run_skill needs the description or a registry")
        description = ctx.registry.description(implementation.implements)
    eff = implementation.effective_description(description)
    for spec in eff.params:
        if spec.name in bindings:
            check_binding(spec, bindings[spec.name], scene)
    ok, violated = check_conditions(eff.preconditions, bindings, scene)
    if not ok:
        raise PreconditionError(f"{description.name}: preconditions violated: "
                                + ", ".join(map(str, violated)), violated)
    node = SkillNode(implementation, description, bindings, ctx, check_pre=False)
    res = executor.run(node, ctx)
    failure = node.failure if res.status is Status.FAILURE else None
    if res.budget_exhausted:
        failure = "budget: " + res.diagnostic
    return SkillResult(res.status, res.ticks, failure, node)

