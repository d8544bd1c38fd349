"""Behavior trees: three-valued ticks, control-flow nodes and a tick loop.

Sequences and selectors keep memory by default: a child that returned
Success (Sequence) or Failure (Selector) is not ticked again until the
node itself finishes, so a plan never restarts completed motions. The
memoryless variants re-evaluate from the first child on every tick,
which suits guard conditions.

A node that stops being ticked while Running (a sibling failed, the
budget ran out, ...) is *halted*; leaves use this to release resources.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable


class Status(enum.Enum):
    RUNNING = "Running"
    SUCCESS = "Success"
    FAILURE = "Failure"

    def __str__(self):
        return self.value


TickResult = Status


class TreeError(ValueError):
    """Malformed tree (detected at construction)."""


class Node:
    kind = "Node"

    def __init__(self, children=(), name: str = ""):
        self.name = name
        self.children: list[Node] = list(children)
        for c in self.children:
            if not isinstance(c, Node):
                raise TreeError(f"{type(c).__name__} is not a behavior tree node")
        self._check_acyclic()
        self.status: Status | None = None
        self.ticks = 0

    def _check_acyclic(self):
        seen: set[int] = set()
        stack = [(self, ())]
        while stack:
            node, path = stack.pop()
            if id(node) in path:
                raise TreeError("behavior tree contains a cycle")
            for c in node.children:
                if id(c) in seen and id(c) not in path:
                    raise TreeError(f"node {c.label()} appears twice in the tree")
                seen.add(id(c))
                stack.append((c, path + (id(node),)))

    def tick(self, ctx=None) -> Status:
        self.ticks += 1
        status = self.update(ctx)
        if not isinstance(status, Status):
            raise TypeError(f"{self.label()} returned {status!r} instead of a Status")
        self.status = status
        return status

    def update(self, ctx) -> Status:
        raise NotImplementedError

    def halt(self, ctx=None) -> None:
        """Stop a Running subtree and clear memory."""
        for c in self.children:
            if c.status is Status.RUNNING:
                c.halt(ctx)
        self.reset_memory()
        if self.status is Status.RUNNING:
            self.status = None

    def reset_memory(self) -> None:
        pass

    def label(self) -> str:
        return f"{self.kind}({self.name})" if self.name else self.kind

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def __len__(self):
        return sum(1 for _ in self.walk())

    def __repr__(self):
        return f"<{self.label()} {self.status}>"


class Sequence(Node):
    kind = "Sequence"

    def __init__(self, children=(), name: str = "", memory: bool = True):
        super().__init__(children, name)
        self.memory = memory
        self.index = 0

    def reset_memory(self):
        self.index = 0

    def update(self, ctx):
        start = self.index if self.memory else 0
        for i in range(start, len(self.children)):
            st = self.children[i].tick(ctx)
            if st is Status.RUNNING:
                self._halt_after(i, ctx)
                self.index = i
                return st
            if st is Status.FAILURE:
                self._halt_after(i, ctx)
                self.index = 0
                return st
        self.index = 0
        return Status.SUCCESS

    def _halt_after(self, i, ctx):
        # only relevant without memory: a later child may still be running
        for c in self.children[i + 1:]:
            if c.status is Status.RUNNING:
                c.halt(ctx)


class Selector(Sequence):
    kind = "Selector"

    def update(self, ctx):
        start = self.index if self.memory else 0
        for i in range(start, len(self.children)):
            st = self.children[i].tick(ctx)
            if st is Status.RUNNING:
                self._halt_after(i, ctx)
                self.index = i
                return st
            if st is Status.SUCCESS:
                self._halt_after(i, ctx)
                self.index = 0
                return st
        self.index = 0
        return Status.FAILURE


class Parallel(Node):
    """Ticks every unfinished child; Success once ``threshold`` children succeeded,
    Failure as soon as the remaining children can no longer reach it."""

    kind = "Parallel"

    def __init__(self, children=(), threshold: int | None = None, name: str = ""):
        super().__init__(children, name)
        self.threshold = len(self.children) if threshold is None else int(threshold)
        if not 0 <= self.threshold <= len(self.children):
            raise TreeError(f"parallel threshold {self.threshold} outside [0, {len(self.children)}]")
        self.results: dict[int, Status] = {}

    def reset_memory(self):
        self.results = {}

    def label(self):
        base = f"Parallel[{self.threshold}]"
        return f"{base}({self.name})" if self.name else base

    def update(self, ctx):
        for i, c in enumerate(self.children):
            if i not in self.results:
                st = c.tick(ctx)
                if st is not Status.RUNNING:
                    self.results[i] = st
        successes = sum(1 for s in self.results.values() if s is Status.SUCCESS)
        failures = sum(1 for s in self.results.values() if s is Status.FAILURE)
        if successes >= self.threshold:
            result = Status.SUCCESS
        elif len(self.children) - failures < self.threshold:
            result = Status.FAILURE
        else:
            return Status.RUNNING
        for c in self.children:
            if c.status is Status.RUNNING:
                c.halt(ctx)
        self.results = {}
        return result


class Decorator(Node):
    kind = "Decorator"

    def __init__(self, child: Node, name: str = ""):
        if isinstance(child, (list, tuple)):
            raise TreeError("a decorator has exactly one child")
        super().__init__([child], name)

    @property
    def child(self) -> Node:
        return self.children[0]


class Invert(Decorator):
    kind = "Invert"

    def update(self, ctx):
        st = self.child.tick(ctx)
        if st is Status.SUCCESS:
            return Status.FAILURE
        if st is Status.FAILURE:
            return Status.SUCCESS
        return st


class ForceSuccess(Decorator):
    kind = "ForceSuccess"

    def update(self, ctx):
        st = self.child.tick(ctx)
        return Status.RUNNING if st is Status.RUNNING else Status.SUCCESS


class Retry(Decorator):
    """Re-runs a failing child up to ``attempts`` times in total; each retry
    starts on the next tick, so one tick never ticks the child twice."""

    kind = "Retry"

    def __init__(self, child: Node, attempts: int, name: str = ""):
        super().__init__(child, name)
        if attempts < 1:
            raise TreeError("retry needs at least one attempt")
        self.attempts = attempts
        self.failures = 0

    def label(self):
        return f"Retry[{self.attempts}]" + (f"({self.name})" if self.name else "")

    def reset_memory(self):
        self.failures = 0

    def update(self, ctx):
        st = self.child.tick(ctx)
        if st is Status.FAILURE:
            self.failures += 1
            if self.failures >= self.attempts:
                self.failures = 0
                return Status.FAILURE
            self.child.reset_memory()
            return Status.RUNNING
        if st is Status.SUCCESS:
            self.failures = 0
        return st


class Leaf(Node):
    kind = "Leaf"

    def __init__(self, name: str = ""):
        super().__init__((), name)


class Action(Leaf):
    """Leaf calling ``fn(ctx) -> Status``."""

    kind = "Action"

    def __init__(self, fn: Callable, name: str = ""):
        super().__init__(name or getattr(fn, "__name__", ""))
        self.fn = fn

    def update(self, ctx):
        return self.fn(ctx)


class Constant(Leaf):
    kind = "Constant"

    def __init__(self, status: Status, name: str = ""):
        super().__init__(name or str(status))
        self.value = status

    def update(self, ctx):
        return self.value


class Script(Leaf):
    """Leaf replaying a fixed list of statuses, repeating the last one."""

    kind = "Script"

    def __init__(self, statuses, name: str = ""):
        super().__init__(name)
        self.statuses = list(statuses)
        if not self.statuses:
            raise TreeError("script needs at least one status")
        self.halted = 0

    def update(self, ctx):
        return self.statuses[min(self.ticks, len(self.statuses)) - 1]

    def halt(self, ctx=None):
        self.halted += 1
        super().halt(ctx)


def export_text(node: Node, indent: str = "  ") -> str:
    """One node per line, ``kind [status]``, children indented below their parent."""
    lines = []

    def visit(n, depth):
        st = n.status.value if n.status is not None else "-"
        lines.append(f"{indent * depth}{n.label()} [{st}]")
        for c in n.children:
            visit(c, depth + 1)

    visit(node, 0)
    return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    status: Status
    ticks: int
    budget_exhausted: bool = False

    @property
    def diagnostic(self) -> str:
        if self.budget_exhausted:
            return f"tick budget of {self.ticks} exhausted"
        return f"{self.status} after {self.ticks} ticks"


def run_to_completion(tree: Node, rate_hz: float, max_ticks: int, ctx=None,
                      between_ticks: Callable[[float], None] | None = None) -> RunResult:
    """Tick until the tree finishes; ``between_ticks(period)`` runs after every Running tick.

    Running out of ticks halts the tree and reports Failure with
    ``budget_exhausted`` set.
    """
    if not rate_hz > 0:
        raise ValueError("tick rate must be positive")
    period = 1.0 / rate_hz
    for k in range(1, max_ticks + 1):
        st = tree.tick(ctx)
        if st is not Status.RUNNING:
            return RunResult(st, k)
        if between_ticks is not None:
            between_ticks(period)
    tree.halt(ctx)
    return RunResult(Status.FAILURE, max_ticks, budget_exhausted=True)
