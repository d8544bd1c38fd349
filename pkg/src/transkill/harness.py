"""Wiring for whole runs: scene + skill registry + simulated arm + executor.

A :class:`Session` owns the world model, the runtime of one simulated
arm and the skill context. ``run_skill`` grounds and expands a skill and
ticks it while the simulation advances between ticks; ``run_goal`` plans
first and executes the plan as a behavior tree.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from . import bt
from . import planner as pl
from .runtime import RunLog, SimRuntime
from .skills import Executor, SkillContext, SkillNode, SkillRegistry, SkillResult, expand
from .skills_lib import MANIPULATOR, default_registry
from .world import Scene, load_scene_file

log = logging.getLogger(__name__)

ROBOTS = {"6dof": "wipe6.scene", "7dof": "wipe7.scene"}
TICK_RATE = 100.0


def scene_path(robot: str) -> Path:
    """Shipped scene for a robot name (``6dof`` or ``7dof``)."""
    try:
        name = ROBOTS[robot]
    except KeyError:
        raise ValueError(f"unknown robot {robot!r}; choose from {sorted(ROBOTS)}") from None
    return Path(str(resources.files("transkill") / "data" / "scenes" / name))


def load_robot_scene(robot: str) -> Scene:
    return load_scene_file(scene_path(robot))


def find_arm(scene: Scene) -> str:
    arms = sorted(e.id for e in scene.query_by_concept(MANIPULATOR))
    if len(arms) != 1:
        raise ValueError(f"expected exactly one manipulator in the scene, found {arms}")
    return arms[0]


def plan_goal(scene: Scene, goal: str, registry: SkillRegistry | None = None, arm: str | None = None,
              warnings: list | None = None) -> pl.Plan:
    """Plan for ``goal``; with ``arm`` set, no other manipulator may appear in the plan."""
    registry = registry or default_registry()
    domain = pl.build_domain(registry, warnings)
    problem = pl.build_problem(scene, goal, domain)
    if arm is not None:
        if arm not in scene or not scene.is_subconcept(scene.element(arm).concept, MANIPULATOR):
            raise ValueError(f"{arm!r} is not a manipulator of this scene")
        typed = {t: [i for i in ids if i == arm or not scene.is_subconcept(problem.objects[i], MANIPULATOR)]
                 for t, ids in problem.typed.items()}
        problem = replace(problem, typed=typed)
    return pl.plan(domain, problem)


@dataclass
class GoalResult:
    status: bt.Status
    plan: pl.Plan | None
    ticks: int = 0
    failure: str | None = None
    tree: bt.Node | None = field(default=None, repr=False)


class Session:
    """One simulated arm acting in a scene."""

    def __init__(self, scene: Scene, arm: str | None = None, registry: SkillRegistry | None = None,
                 max_ticks: int = 100_000, dt: float = 1e-3):
        scene.validate()
        self.scene = scene
        self.arm = arm or find_arm(scene)
        self.registry = registry or default_registry()
        self.registry.validate(scene)
        self.runtime = SimRuntime.for_arm(scene, self.arm, dt=dt)
        self.ctx = SkillContext(scene, self.runtime, self.registry)
        self.executor = Executor(TICK_RATE, max_ticks, self.runtime.advance)

    @classmethod
    def for_robot(cls, robot: str, **kw) -> Session:
        return cls(load_robot_scene(robot), **kw)

    @property
    def run_log(self) -> RunLog:
        return self.runtime.arm(self.arm).log

    @property
    def commands(self) -> list[tuple]:
        return self.ctx.command_log

    def bindings(self, skill: str, bindings: dict) -> dict:
        """Fill in the session arm for skills taking an ``arm`` parameter."""
        desc = self.registry.description(skill)
        out = dict(bindings)
        if "arm" in desc.param_names and "arm" not in out:
            out["arm"] = self.arm
        return out

    def run_skill(self, skill: str, **bindings) -> SkillResult:
        node = expand(skill, self.bindings(skill, bindings), self.registry, self.scene, self.ctx)
        res = self.executor.run(node, self.ctx)
        failure = None
        if res.status is bt.Status.FAILURE:
            reasons = node.failures()
            failure = reasons[0][1] if reasons else node.failure
            if res.budget_exhausted:
                failure = "budget: " + res.diagnostic
        return SkillResult(res.status, res.ticks, failure, node)

    def plan(self, goal: str, warnings: list | None = None) -> pl.Plan:
        return plan_goal(self.scene, goal, self.registry, self.arm, warnings)

    def run_goal(self, goal: str) -> GoalResult:
        """Plan for ``goal`` and execute the plan. Raises planner errors when unsolvable."""
        plan = self.plan(goal)
        tree = pl.plan_to_bt(plan, self.registry, self.scene, self.ctx)
        res = self.executor.run(tree, self.ctx)
        failure = None
        if res.status is bt.Status.FAILURE:
            reasons = [r for n in tree.children if isinstance(n, SkillNode) for r in n.failures()]
            failure = reasons[0][1] if reasons else res.diagnostic
        return GoalResult(res.status, plan, res.ticks, failure, tree)
