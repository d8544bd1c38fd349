"""Command-line entry point.

    transkill list-skills <scene>
    transkill plan <scene> <goal>
    transkill run-goal <scene> <goal> [--robot ID] [--out DIR]
    transkill run-skill <scene> <skill> --param k=v ... [--robot ID] [--out DIR]
    transkill report <log.csv> [--out DIR]

``<scene>`` is a scene file or the name of a shipped scene (``6dof``,
``7dof``). Run artifacts go to ``--out``, else to ``$TRANSKILL_LOG_DIR``,
else to ``./transkill-runs``.

Exit codes: 0 success, 1 no plan exists, 2 execution failed, 3 bad input
(I/O, parse or usage errors).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import coverage as cov
from . import planner as pl
from .bt import Status, export_text
from .geometry import Pose
from .harness import ROBOTS, Session, load_robot_scene, plan_goal
from .runtime import wipe_surfaces
from .skills import INFERRED, OPTIONAL, ParameterError, PreconditionError, SkillError
from .skills_lib import MANIPULATOR, default_registry
from .world import SceneError, load_scene_file

LOG_DIR_ENV = "TRANSKILL_LOG_DIR"
DEFAULT_LOG_DIR = "transkill-runs"

EXIT_OK = 0
EXIT_UNSOLVABLE = 1
EXIT_FAILED = 2
EXIT_INPUT = 3

log = logging.getLogger("transkill")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share the "bad input" exit code instead of argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def load_scene_arg(text: str):
    if text in ROBOTS and not Path(text).exists():
        return load_robot_scene(text)
    return load_scene_file(text)


def out_dir(args) -> Path:
    return Path(args.out or os.environ.get(LOG_DIR_ENV) or DEFAULT_LOG_DIR)


def parse_value(text: str, type_: str):
    """Convert a ``--param`` value according to the parameter type."""
    if type_ == "float":
        return float(text)
    if type_ == "int":
        return int(text)
    if type_ == "bool":
        if text.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"not a boolean: {text!r}")
        return text.lower() in ("true", "1")
    if type_ == "pose":
        return Pose.from_values(text.replace(",", " ").split())
    if type_ == "any":
        parts = text.replace(",", " ").split()
        try:
            numbers = [float(p) for p in parts]
        except ValueError:
            return text
        if len(numbers) == 7:
            return Pose.from_values(numbers)
        return numbers[0] if len(numbers) == 1 else tuple(numbers)
    return text  # strings and element ids


def parse_params(items, description) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        try:
            spec = description.param(key)
        except KeyError:
            raise UsageError(f"{description.name} has no parameter {key!r}") from None
        try:
            out[key] = parse_value(value, spec.type)
        except ValueError as exc:
            raise UsageError(f"parameter {key}: {exc}") from None
    return out


def pick_robot(scene, robot: str | None, used=()) -> str:
    arms = sorted(e.id for e in scene.query_by_concept(MANIPULATOR))
    if robot is not None:
        if robot not in arms:
            raise UsageError(f"--robot {robot!r} is not a manipulator of this scene (have {arms})")
        return robot
    used = [a for a in used if a in arms]
    if len(set(used)) == 1:
        return used[0]
    if len(arms) != 1:
        raise UsageError(f"scene has manipulators {arms}; choose one with --robot")
    return arms[0]


def write_artifacts(session: Session, directory: Path, surface: str | None, tree=None) -> cov.CoverageReport | None:
    directory.mkdir(parents=True, exist_ok=True)
    info = None
    if surface is not None:
        info = cov.surface_info(session.scene, surface, session.runtime.arm(session.arm).base)
    path = cov.write_log(session.run_log, directory / "run.csv", info)
    (directory / "commands.txt").write_text("".join(f"{c}\n" for c in session.commands), encoding="utf-8")
    if tree is not None:
        (directory / "tree.txt").write_text(export_text(tree), encoding="utf-8")
    print(f"log: {path}")
    if info is None:
        return None
    report = cov.report_file(path, directory)
    print(report.summary())
    return report


# ------------------------------------------------------------------ commands
def cmd_list_skills(args) -> int:
    scene = load_scene_arg(args.scene)
    registry = default_registry()
    registry.validate(scene)
    for name in registry:
        desc = registry.description(name)
        marks = {OPTIONAL: "?", INFERRED: "*"}
        params = ", ".join(f"{p.name}:{p.type}{marks.get(p.kind, '')}" for p in desc.params)
        impls = ", ".join(i.name for i in registry.implementations(name))
        print(f"{name}({params})  [{impls}]")
    return EXIT_OK


def cmd_plan(args) -> int:
    scene = load_scene_arg(args.scene)
    plan = plan_goal(scene, args.goal, arm=args.robot)
    print(plan if len(plan) else "(empty plan: goal already holds)")
    return EXIT_OK


def cmd_run_goal(args) -> int:
    scene = load_scene_arg(args.scene)
    plan = plan_goal(scene, args.goal, arm=args.robot)
    print("plan:")
    print(plan if len(plan) else "(empty plan: goal already holds)")
    arms = [v for a in plan for k, v in a.bindings.items() if k == "arm"]
    session = Session(scene, pick_robot(scene, args.robot, arms))
    result = session.run_goal(args.goal)
    print(f"result: {result.status}" + (f" ({result.failure})" if result.failure else ""))
    surfaces = [a.bindings["surface"] for a in plan if a.name == "wipe_surface"]
    directory = out_dir(args)
    (directory).mkdir(parents=True, exist_ok=True)
    (directory / "plan.txt").write_text(str(plan) + "\n", encoding="utf-8")
    write_artifacts(session, directory, surfaces[-1] if surfaces else None, result.tree)
    return EXIT_OK if result.status is Status.SUCCESS else EXIT_FAILED


def cmd_run_skill(args) -> int:
    scene = load_scene_arg(args.scene)
    registry = default_registry()
    try:
        desc = registry.description(args.skill)
    except SkillError as exc:
        raise UsageError(str(exc)) from None
    params = parse_params(args.param, desc)
    arm = pick_robot(scene, args.robot, [params["arm"]] if isinstance(params.get("arm"), str) else ())
    session = Session(scene, arm, registry)
    result = session.run_skill(args.skill, **params)
    print(f"result: {result.status}" + (f" ({result.failure})" if result.failure else ""))
    surface = params.get("surface")
    if surface is None and args.skill == "wipe_surface":
        surfaces = wipe_surfaces(scene)
        surface = surfaces[0] if len(surfaces) == 1 else None
    write_artifacts(session, out_dir(args), surface, result.node)
    return EXIT_OK if result.status is Status.SUCCESS else EXIT_FAILED


def cmd_report(args) -> int:
    report = cov.report_file(args.log, args.out)
    print(report.summary())
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="transkill", description="Run robot-independent skills on simulated arms.")
    p.add_argument("-v", "--verbose", action="store_true", help="log skill progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("list-skills", help="list registered skills and their implementations")
    s.add_argument("scene")
    s.set_defaults(func=cmd_list_skills)

    s = sub.add_parser("plan", help="plan for a goal without executing")
    s.add_argument("scene")
    s.add_argument("goal")
    s.add_argument("--robot")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("run-goal", help="plan for a goal and execute the plan in simulation")
    s.add_argument("scene")
    s.add_argument("goal")
    s.add_argument("--robot")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run_goal)

    s = sub.add_parser("run-skill", help="run one skill in simulation")
    s.add_argument("scene")
    s.add_argument("skill")
    s.add_argument("--param", action="append", metavar="KEY=VALUE")
    s.add_argument("--robot")
    s.add_argument("--out")
    s.set_defaults(func=cmd_run_skill)

    s = sub.add_parser("report", help="coverage and force report for a run log")
    s.add_argument("log")
    s.add_argument("--out", help="directory for path.csv, cells.csv and report.json")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (pl.UnsolvableError, pl.SearchBudgetExceeded) as exc:
        print(f"no plan: {exc}", file=sys.stderr)
        return EXIT_UNSOLVABLE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PreconditionError, SkillError) as exc:
        # grounding and selection happen when the run starts
        print(f"execution failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (UsageError, pl.PlanningError, SceneError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
