"""Shared fixtures: shipped scenes, small fixture scenes and the four
full wiping runs (two robots x two surfaces) used by the acceptance suite."""
from __future__ import annotations

import contextlib
import io
import json
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from transkill import cli
from transkill.harness import load_robot_scene

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

WHITEBOARD = "scalable:Workstation-1186"
TABLE = "scalable:Workstation-1187"
CELL = "scalable:Cell-12"
SURFACES = {"whiteboard": WHITEBOARD, "table": TABLE}
ROBOTS = ("6dof", "7dof")


def clean_goal(surface: str) -> str:
    return f"(skiros:clean {surface} {CELL})"


@pytest.fixture
def scene6():
    return load_robot_scene("6dof")


@pytest.fixture
def scene7():
    return load_robot_scene("7dof")


class WipeRun:
    """Artifacts of one ``transkill run-goal`` invocation."""

    def __init__(self, robot, surface, directory, code, wall, stdout):
        self.robot = robot
        self.surface = surface
        self.dir = Path(directory)
        self.code = code
        self.wall = wall
        self.stdout = stdout

    @property
    def commands(self) -> str:
        return (self.dir / "commands.txt").read_text(encoding="utf-8")

    @property
    def plan(self) -> str:
        return (self.dir / "plan.txt").read_text(encoding="utf-8")

    @property
    def report(self) -> dict:
        return json.loads((self.dir / "report.json").read_text(encoding="utf-8"))

    @property
    def log(self) -> Path:
        return self.dir / "run.csv"


@pytest.fixture(scope="session")
def wipe_runs(tmp_path_factory):
    """Run the clean goal for both surfaces on both robots through the CLI (slow: minutes)."""
    runs = {}
    for robot in ROBOTS:
        for name, surface in SURFACES.items():
            out = tmp_path_factory.mktemp(f"{robot}-{name}")
            buf = io.StringIO()
            t0 = time.perf_counter()
            with contextlib.redirect_stdout(buf):
                code = cli.main(["run-goal", robot, clean_goal(surface), "--out", str(out)])
            runs[robot, name] = WipeRun(robot, name, out, code, time.perf_counter() - t0, buf.getvalue())
    return runs
