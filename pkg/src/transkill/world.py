"""Semantic world model: concept hierarchy, scene of elements, spatial reasoning.

Scenes are read from a line-oriented triple format::

    # concepts
    rparts:GripperEffector a owl:Class
    scalable:WsgGripper subClassOf rparts:GripperEffector
    # instances
    scalable:WsgGripper-3 a scalable:WsgGripper
    scalable:WsgGripper-3 skiros:FrameId "wsg_tcp"^^string
    scalable:Ur5-2 skiros:hasA scalable:WsgGripper-3

Objects are typed literals (``"..."^^string|float|int|bool|pose``), bare
identifiers (relations to other elements) or concepts after ``a``. A
statement may end in ``;`` to continue with the same subject on the next
line (predicate and object only), in ``,`` to add another object for the
same predicate, or in ``.``. ``xsd:`` type prefixes are accepted so
Turtle-flavoured listings load unchanged.
"""
from __future__ import annotations

import copy
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable

from .geometry import Pose

# property keys shared by the rest of the package
POSE = "skiros:Pose"
FRAME_ID = "skiros:FrameId"
LINKED_TO = "skiros:LinkedToFrameId"
BASE_FRAME = "skiros:BaseFrameId"
LABEL = "rdfs:label"

ROOT_CONCEPT_MARKERS = {"owl:Class", "rdfs:Class"}
IGNORED_TYPES = {"owl:NamedIndividual"}
INSTANCE_OF = {"a", "rdf:type"}
SUBCLASS_OF = {"subClassOf", "rdfs:subClassOf"}

DEFAULT_WORLD_FRAME = "world"

_TYPE_TAGS = {
    "string": "string", "xsd:string": "string",
    "float": "float", "xsd:float": "float", "xsd:double": "float", "double": "float",
    "int": "int", "xsd:int": "int", "xsd:integer": "int", "integer": "int",
    "bool": "bool", "xsd:boolean": "bool", "boolean": "bool",
    "pose": "pose",
}

_TOKEN = re.compile(r'"(?P<str>(?:[^"\\]|\\.)*)"(?:\^\^(?P<tag>[\w:]+))?|(?P<punct>[;,])|(?P<ident>[^\s;,"]+)')


class SceneError(Exception):
    """Base class of world-model errors."""


class SceneParseError(SceneError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownConceptError(SceneError):
    pass


class UnknownElementError(SceneError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DanglingReferenceError(SceneError):
    pass


class FrameError(SceneError):
    """Frame cycle, broken frame chain or missing pose."""


@dataclass
class Concept:
    name: str
    parents: set[str] = field(default_factory=set)


@dataclass
class Element:
    """A typed individual with properties and relations.

    ``properties`` maps a key to the list of its values; a property
    stated more than once is multi-valued.
    """

    id: str
    concept: str
    label: str = ""
    properties: dict[str, list[Any]] = field(default_factory=dict)
    relations: list[tuple[str, str]] = field(default_factory=list)

    def get(self, key: str, default: Any = None) -> Any:
        values = self.properties.get(key)
        return values[0] if values else default

    def get_all(self, key: str) -> list[Any]:
        return list(self.properties.get(key, []))

    def set(self, key: str, value: Any) -> None:
        self.properties[key] = [value]

    def has(self, key: str) -> bool:
        return bool(self.properties.get(key))

    def targets(self, predicate: str) -> list[str]:
        return [t for p, t in self.relations if p == predicate]

    @property
    def frame_id(self) -> str:
        return self.get(FRAME_ID, self.id)


class Scene:
    """Concept hierarchy plus the element instances of one scene.

    Reads are lock-free; every mutation goes through one lock and
    re-validates the invariants, rolling back on failure. ``snapshot()``
    returns a frozen deep copy for consumers that must not see updates.
    """

    def __init__(self, world_frame: str = DEFAULT_WORLD_FRAME):
        self.world_frame = world_frame
        self.concepts: dict[str, Concept] = {}
        self.elements: dict[str, Element] = {}
        self._lock = threading.RLock()
        self._frozen = False
        self.version = 0

    # ---------------------------------------------------------------- concepts
    def add_concept(self, name: str, parents: Iterable[str] = ()) -> Concept:
        self._check_writable()
        with self._lock:
            c = self.concepts.setdefault(name, Concept(name))
            c.parents.update(parents)
            return c

    def has_concept(self, name: str) -> bool:
        return name in self.concepts

    def ancestors(self, name: str) -> set[str]:
        """Transitive superclasses of ``name`` (excluding itself)."""
        self._require_concept(name)
        seen: set[str] = set()
        stack = list(self.concepts[name].parents)
        while stack:
            c = stack.pop()
            if c in seen:
                continue
            seen.add(c)
            stack.extend(self.concepts[c].parents if c in self.concepts else ())
        return seen

    def is_subconcept(self, name: str, ancestor: str) -> bool:
        """True if ``name`` equals or descends from ``ancestor``."""
        return name == ancestor or ancestor in self.ancestors(name)

    def concept_depth(self, name: str, ancestor: str) -> int:
        """Length of the longest subclass path from ``name`` up to ``ancestor``."""
        if not self.is_subconcept(name, ancestor):
            raise UnknownConceptError(f"{name} is not a subconcept of {ancestor}")
        if name == ancestor:
            return 0
        return 1 + max(self.concept_depth(p, ancestor)
                       for p in self.concepts[name].parents
                       if self.is_subconcept(p, ancestor))

    def descendants(self, name: str) -> set[str]:
        self._require_concept(name)
        return {c for c in self.concepts if c != name and name in self.ancestors(c)}

    # ---------------------------------------------------------------- queries
    def element(self, element_id: str) -> Element:
        try:
            return self.elements[element_id]
        except KeyError:
            raise UnknownElementError(f"unknown element {element_id!r}") from None

    def __contains__(self, element_id: str) -> bool:
        return element_id in self.elements

    def __len__(self) -> int:
        return len(self.elements)

    def query_by_concept(self, concept: str, include_subtypes: bool = True) -> list[Element]:
        """Instances of ``concept`` (and its subconcepts if asked), sorted by id."""
        self._require_concept(concept)
        if include_subtypes:
            match = lambda e: self.is_subconcept(e.concept, concept)  # noqa: E731
        else:
            match = lambda e: e.concept == concept  # noqa: E731
        return [e for _, e in sorted(self.elements.items()) if match(e)]

    def resolve_relation(self, subject: str, predicate: str) -> list[Element]:
        return [self.element(t) for t in self.element(subject).targets(predicate)]

    def has_relation(self, subject: str, predicate: str, target: str) -> bool:
        e = self.elements.get(subject)
        return e is not None and (predicate, target) in e.relations

    def frame_owner(self, frame: str) -> Element | None:
        for e in self.elements.values():
            if e.frame_id == frame:
                return e
        return None

    def resolve_world_pose(self, element_id: str) -> Pose:
        """Compose the element's pose with its parents' up to the world frame."""
        e = self.element(element_id)
        pose = e.get(POSE)
        if pose is None:
            raise FrameError(f"{element_id} has no pose")
        visited = {e.id}
        parent = e.get(LINKED_TO, self.world_frame)
        while parent != self.world_frame:
            owner = self.frame_owner(parent)
            if owner is None:
                raise FrameError(f"broken frame chain at {parent!r} (from {element_id})")
            if owner.id in visited:
                raise FrameError(f"frame cycle through {owner.id}")
            visited.add(owner.id)
            parent_pose = owner.get(POSE)
            if parent_pose is None:
                raise FrameError(f"{owner.id} publishes frame {parent!r} but has no pose")
            pose = parent_pose * pose
            parent = owner.get(LINKED_TO, self.world_frame)
        return pose

    def relative_pose(self, pose_world: Pose, frame: str) -> Pose:
        """Express a world pose in ``frame``."""
        if frame == self.world_frame:
            return pose_world
        owner = self.frame_owner(frame)
        if owner is None:
            raise FrameError(f"unknown frame {frame!r}")
        return self.resolve_world_pose(owner.id).inverse() * pose_world

    # ---------------------------------------------------------------- mutation
    def add_element(self, element: Element) -> None:
        with self._lock:
            self._check_writable()
            if element.id in self.elements:
                raise SceneError(f"duplicate element id {element.id!r}")
            self._apply(lambda: self.elements.__setitem__(element.id, copy.deepcopy(element)))

    def update_element(self, element: Element) -> None:
        with self._lock:
            self._check_writable()
            self.element(element.id)
            self._apply(lambda: self.elements.__setitem__(element.id, copy.deepcopy(element)))

    def remove_element(self, element_id: str) -> None:
        with self._lock:
            self._check_writable()
            self.element(element_id)
            self._apply(lambda: self.elements.pop(element_id))

    def set_property(self, element_id: str, key: str, value: Any) -> None:
        e = copy.deepcopy(self.element(element_id))
        e.set(key, value)
        self.update_element(e)

    def add_relation(self, subject: str, predicate: str, target: str) -> None:
        e = copy.deepcopy(self.element(subject))
        if (predicate, target) not in e.relations:
            e.relations.append((predicate, target))
            self.update_element(e)

    def remove_relation(self, subject: str, predicate: str, target: str) -> None:
        e = copy.deepcopy(self.element(subject))
        e.relations = [r for r in e.relations if r != (predicate, target)]
        self.update_element(e)

    def snapshot(self) -> Scene:
        with self._lock:
            s = Scene(self.world_frame)
            s.concepts = copy.deepcopy(self.concepts)
            s.elements = copy.deepcopy(self.elements)
            s.version = self.version
            s._frozen = True
            return s

    def copy(self) -> Scene:
        """Mutable deep copy."""
        s = self.snapshot()
        s._frozen = False
        return s

    def _apply(self, mutate) -> None:
        backup = dict(self.elements)
        mutate()
        try:
            self.validate()
        except SceneError:
            self.elements = backup
            raise
        self.version += 1

    def _check_writable(self):
        if self._frozen:
            raise SceneError("scene snapshot is read-only")

    def _require_concept(self, name: str):
        if name not in self.concepts:
            raise UnknownConceptError(f"unknown concept {name!r}")

    # ---------------------------------------------------------------- invariants
    def validate(self) -> None:
        for c in self.concepts.values():
            for p in c.parents:
                if p not in self.concepts:
                    raise UnknownConceptError(f"{c.name} subClassOf unknown concept {p!r}")
        self._check_concept_dag()
        for e in self.elements.values():
            if e.concept not in self.concepts:
                raise UnknownConceptError(f"{e.id} is an instance of unknown concept {e.concept!r}")
            for pred, target in e.relations:
                if target not in self.elements:
                    raise DanglingReferenceError(f"{e.id} {pred} -> undeclared element {target!r}")
        self._check_frames()

    def _check_concept_dag(self):
        state: dict[str, int] = {}

        def visit(name, path):
            mark = state.get(name)
            if mark == 1:
                raise SceneError(f"concept cycle: {' -> '.join(path + [name])}")
            if mark == 2:
                return
            state[name] = 1
            for p in sorted(self.concepts[name].parents):
                visit(p, path + [name])
            state[name] = 2

        for name in self.concepts:
            visit(name, [])

    def _check_frames(self):
        owners: dict[str, str] = {}
        for e in self.elements.values():
            f = e.frame_id
            if f in owners:
                raise FrameError(f"frame {f!r} published by both {owners[f]} and {e.id}")
            owners[f] = e.id
        if self.world_frame in owners:
            raise FrameError(f"element {owners[self.world_frame]} reuses the world frame id")
        for e in self.elements.values():
            seen = set()
            cur = e
            # chains that leave the scene (unknown frame) are only an error on resolution
            while cur is not None:
                if cur.id in seen:
                    raise FrameError(f"frame cycle through {cur.id}")
                seen.add(cur.id)
                parent = cur.get(LINKED_TO, self.world_frame)
                if parent == self.world_frame:
                    break
                nxt = owners.get(parent)
                cur = self.elements[nxt] if nxt is not None else None

    # ---------------------------------------------------------------- text io
    def serialize(self) -> str:
        return dump_scene(self)


# ------------------------------------------------------------------- parsing
def _parse_literal(text: str, tag: str | None, line: int):
    kind = _TYPE_TAGS.get(tag or "string")
    if kind is None:
        raise SceneParseError(line, f"unknown type tag ^^{tag}")
    raw = re.sub(r"\\(.)", r"\1", text)
    try:
        if kind == "string":
            return raw
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        return Pose.from_values(raw.split())
    except ValueError as exc:
        raise SceneParseError(line, f"bad {kind} literal {text!r}: {exc}") from None


def _tokenize(line: str, lineno: int):
    tokens = []
    pos = 0
    line = line.rstrip()
    while pos < len(line):
        if line[pos].isspace():
            pos += 1
            continue
        if line[pos] == "#":
            break
        m = _TOKEN.match(line, pos)
        if m is None:
            raise SceneParseError(lineno, f"cannot tokenize near {line[pos:pos + 20]!r}")
        if m.group("str") is not None or line[pos] == '"':
            tokens.append(("lit", (m.group("str"), m.group("tag"))))
        elif m.group("punct"):
            tokens.append(("punct", m.group("punct")))
        else:
            ident = m.group("ident")
            if ident.endswith(".") and m.end() == len(line):
                if ident != ".":
                    tokens.append(("id", ident[:-1]))
                tokens.append(("punct", "."))
            else:
                tokens.append(("id", ident))
        pos = m.end()
    return tokens


def load_scene(text: str) -> Scene:
    """Parse a scene document; see the module docstring for the grammar."""
    scene = Scene()
    instance_of: dict[str, tuple[str, int]] = {}
    order: list[str] = []
    pending: dict[str, list] = {}  # id -> [(kind, key, value, line)]
    subject = None  # carried over by ';'
    predicate = None  # carried over by ','

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("@world"):
            parts = stripped.split()
            if len(parts) != 2:
                raise SceneParseError(lineno, "expected '@world <frame>'")
            scene.world_frame = parts[1]
            continue
        tokens = _tokenize(raw, lineno)
        if not tokens:
            continue
        terminator = tokens.pop()[1] if tokens[-1][0] == "punct" else None
        if not tokens:
            raise SceneParseError(lineno, f"dangling {terminator!r}")
        # split "<head...> obj, obj, obj"
        groups: list[list] = [[]]
        for tok in tokens:
            if tok == ("punct", ","):
                groups.append([])
            elif tok[0] == "punct":
                raise SceneParseError(lineno, f"unexpected {tok[1]!r}")
            else:
                groups[-1].append(tok)
        head, extra = groups[0], groups[1:]
        if any(len(g) != 1 for g in extra):
            raise SceneParseError(lineno, "expected a single object after ','")
        if predicate is not None:
            if len(head) != 1:
                raise SceneParseError(lineno, "expected a single object after ','")
            objects = head
        elif subject is not None:
            if len(head) != 2:
                raise SceneParseError(lineno, "expected '<predicate> <object>' after ';'")
            predicate = _ident(head[0], lineno, "predicate")
            objects = head[1:]
        else:
            if len(head) != 3:
                raise SceneParseError(lineno, f"expected '<subject> <predicate> <object>', got {len(head)} tokens")
            subject = _ident(head[0], lineno, "subject")
            predicate = _ident(head[1], lineno, "predicate")
            objects = head[2:]
        for obj in objects + [g[0] for g in extra]:
            _statement(scene, subject, predicate, obj, lineno, instance_of, order, pending)
        if terminator == ",":
            continue
        predicate = None
        if terminator != ";":
            subject = None
    if subject is not None or predicate is not None:
        raise SceneParseError(len(text.splitlines()), "document ends inside a statement")

    for sid, stmts in pending.items():
        if sid not in instance_of and sid not in scene.concepts:
            raise SceneParseError(stmts[0][3], f"subject {sid!r} is never declared with 'a <Concept>'")
        if sid in scene.concepts and sid not in instance_of:
            raise SceneParseError(stmts[0][3], f"statements about concept {sid!r} other than subClassOf")
    for sid in order:
        concept, line = instance_of[sid]
        if concept not in scene.concepts:
            raise UnknownConceptError(f"line {line}: {sid} is an instance of unknown concept {concept!r}")
        e = Element(sid, concept)
        for kind, key, value, _ in pending.get(sid, []):
            if kind == "label":
                e.label = value
            elif kind == "prop":
                e.properties.setdefault(key, []).append(value)
            else:
                e.relations.append((key, value))
        scene.elements[sid] = e
    scene.validate()
    return scene


def _ident(tok, line, what):
    if tok[0] != "id":
        raise SceneParseError(line, f"{what} must be an identifier")
    return tok[1]


def _statement(scene, subject, predicate, obj, line, instance_of, order, pending):
    if predicate in INSTANCE_OF:
        target = _ident(obj, line, "type")
        if target in IGNORED_TYPES:
            return
        if target in ROOT_CONCEPT_MARKERS:
            scene.add_concept(subject)
            return
        if subject in instance_of and instance_of[subject][0] != target:
            raise SceneParseError(line, f"{subject} already declared as {instance_of[subject][0]}")
        if subject not in instance_of:
            order.append(subject)
        instance_of[subject] = (target, line)
    elif predicate in SUBCLASS_OF:
        parent = _ident(obj, line, "superclass")
        scene.add_concept(subject, [parent])
    elif predicate == LABEL:
        if obj[0] != "lit":
            raise SceneParseError(line, "label must be a literal")
        pending.setdefault(subject, []).append(("label", None, _parse_literal(*obj[1], line), line))
    elif obj[0] == "lit":
        pending.setdefault(subject, []).append(("prop", predicate, _parse_literal(*obj[1], line), line))
    else:
        pending.setdefault(subject, []).append(("rel", predicate, obj[1], line))


# ------------------------------------------------------------------- writing
def _format_value(value) -> str:
    if isinstance(value, bool):
        return f'"{str(value).lower()}"^^bool'
    if isinstance(value, int):
        return f'"{value}"^^int'
    if isinstance(value, float):
        return f'"{value!r}"^^float'
    if isinstance(value, Pose):
        return '"' + " ".join(repr(float(v)) for v in value.to_values()) + '"^^pose'
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"^^string'
    raise TypeError(f"unsupported property value {value!r}")


def dump_scene(scene: Scene) -> str:
    """Canonical text: statements sorted by subject then predicate."""
    stmts: list[tuple[str, str, str]] = []
    for c in scene.concepts.values():
        if c.parents:
            stmts.extend((c.name, "subClassOf", p) for p in sorted(c.parents))
        else:
            stmts.append((c.name, "a", "owl:Class"))
    for e in scene.elements.values():
        stmts.append((e.id, "a", e.concept))
        if e.label:
            stmts.append((e.id, LABEL, _format_value(e.label)))
        for key, values in e.properties.items():
            stmts.extend((e.id, key, _format_value(v)) for v in values)
        stmts.extend((e.id, p, t) for p, t in e.relations)
    stmts.sort(key=lambda s: (s[0], s[1]))
    lines = []
    if scene.world_frame != DEFAULT_WORLD_FRAME:
        lines.append(f"@world {scene.world_frame}")
    lines.extend(" ".join(s) for s in stmts)
    return "\n".join(lines) + ("\n" if lines else "")


def load_scene_file(path) -> Scene:
    with open(path, encoding="utf-8") as fh:
        return load_scene(fh.read())
