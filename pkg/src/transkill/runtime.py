"""Simulated robot runtime: one simulator, controller and trajectory
generator per arm, configured from the arm's world-model element.

Skills talk to an arm through named channels. The names are the values
of the arm's interface properties (``skiros:CartesianGoalAction``,
``skiros:CartesianStiffnessTopic``, ...), so a skill only needs the arm
element to reach the right controller, whichever robot it is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import control as ctl
from . import dynamics as dyn
from .geometry import Pose
from .trajectory import OverlaySpec, TrajConfig, TrajectoryGenerator
from .world import POSE, Scene

ROBOT_MODEL = "skiros:RobotModel"
COMPLIANT_CONTROLLER = "skiros:CompliantController"
JOINT_CONTROLLER = "skiros:JointConfigurationController"
GOAL_CHANNEL = "skiros:CartesianGoalAction"
OVERLAY_CHANNEL = "skiros:OverlayMotionService"
STIFFNESS_CHANNEL = "skiros:CartesianStiffnessTopic"
WRENCH_CHANNEL = "skiros:CartesianWrenchTopic"
DEFAULT_STIFFNESS = "skiros:DefaultStiffness"
NULLSPACE_STIFFNESS = "skiros:NullspaceStiffness"

# surface element properties
WIDTH = "scalable:Width"
HEIGHT = "scalable:Height"
WIPE_FORCE = "scalable:WipeForce"
FOOTPRINT_RADIUS = "scalable:FootprintRadius"
LANE_OVERLAP = "scalable:LaneOverlap"
CONTACT_STIFFNESS = "scalable:ContactStiffness"
CONTACT_DAMPING = "scalable:ContactDamping"
CONTACT_FRICTION = "scalable:ContactFriction"
CONTACT_MARGIN = 0.06  # m of contact patch beyond the wiping area on every side

CONTROLLER_KINDS = {
    "cartesian_impedance_controller": "impedance",
    "cartesian_compliance_controller": "fdcc",
}

DEFAULT_GAINS = {
    "impedance": (1500.0, 150.0),
    "fdcc": (1000.0, 50.0),
}


class RuntimeFault(RuntimeError):
    pass


def surface_contact(scene: Scene, surface_id: str, base: Pose) -> dyn.ContactSurface:
    """Penalty contact patch for a surface element, in the robot base frame.

    The patch extends ``CONTACT_MARGIN`` beyond the wiping area so the
    eraser never slides off the edge while pressing.
    """
    e = scene.element(surface_id)
    w, h = float(e.get(WIDTH, 0.0)), float(e.get(HEIGHT, 0.0))
    world = scene.resolve_world_pose(surface_id)
    corner = world * Pose([-CONTACT_MARGIN, -CONTACT_MARGIN, 0.0])
    return dyn.ContactSurface(base.inverse() * corner, (w + 2 * CONTACT_MARGIN, h + 2 * CONTACT_MARGIN),
                              stiffness=float(e.get(CONTACT_STIFFNESS, 3000.0)),
                              damping=float(e.get(CONTACT_DAMPING, 50.0)),
                              friction=float(e.get(CONTACT_FRICTION, 10.0)),
                              wipe_force=float(e.get(WIPE_FORCE, 0.0)), name=surface_id)


def parse_vector(text, n: int | None = None) -> np.ndarray:
    v = np.array([float(x) for x in str(text).replace(",", " ").split()])
    if n is not None and v.size != n:
        raise ValueError(f"expected {n} numbers, got {text!r}")
    return v


@dataclass
class RunLog:
    """Per control step: time, reference and actual TCP pose, wrench, joints, active skill."""

    arm: str
    n: int
    t: list = field(default_factory=list)
    reference: list = field(default_factory=list)
    actual: list = field(default_factory=list)
    wrench: list = field(default_factory=list)
    q: list = field(default_factory=list)
    skill: list = field(default_factory=list)

    def append(self, t, ref: Pose, act: Pose, wrench, q, skill):
        self.t.append(t)
        self.reference.append(ref.to_values())
        self.actual.append(act.to_values())
        self.wrench.append([float(x) for x in wrench])
        self.q.append([float(x) for x in q])
        self.skill.append(skill)

    def __len__(self):
        return len(self.t)

    def columns(self) -> list[str]:
        names = ["t"]
        names += [f"ref_{c}" for c in ("x", "y", "z", "qx", "qy", "qz", "qw")]
        names += [f"act_{c}" for c in ("x", "y", "z", "qx", "qy", "qz", "qw")]
        names += [f"{c}" for c in ("fx", "fy", "fz", "tx", "ty", "tz")]
        names += [f"q{i + 1}" for i in range(self.n)]
        return names + ["skill"]


class ArmRuntime:
    """Simulator, controller and trajectory generator of one arm."""

    def __init__(self, scene: Scene, arm_id: str, surfaces=(), dt: float = 1e-3,
                 traj: TrajConfig = TrajConfig(), log: bool = True):
        self.scene = scene
        self.arm_id = arm_id
        arm = scene.element(arm_id)
        model_name = arm.get(ROBOT_MODEL)
        if model_name is None:
            raise RuntimeFault(f"{arm_id} has no {ROBOT_MODEL} property")
        self.model = dyn.load_model(model_name)
        self.base = scene.resolve_world_pose(arm_id) if arm.has(POSE) else Pose()
        self.surfaces = [surface_contact(scene, s, self.base) for s in surfaces]
        self.sim = dyn.Simulator(self.model, surfaces=self.surfaces, dt=dt)
        home = self.sim.tcp_pose()
        self.controller_name = arm.get(COMPLIANT_CONTROLLER)
        kind = CONTROLLER_KINDS.get(self.controller_name)
        if kind is None:
            raise RuntimeFault(f"{arm_id}: unknown compliant controller {self.controller_name!r}")
        self.kind = kind
        trans, rot = DEFAULT_GAINS[kind]
        if arm.has(DEFAULT_STIFFNESS):
            k = parse_vector(arm.get(DEFAULT_STIFFNESS), 6)
            gains = ctl.ImpedanceGains(np.diag(k), ctl.critical_damping(np.diag(k)))
        else:
            gains = ctl.ImpedanceGains.diagonal(trans, rot)
        if arm.has(NULLSPACE_STIFFNESS):
            k_ns, d_ns = parse_vector(arm.get(NULLSPACE_STIFFNESS), 2)
            gains = ctl.ImpedanceGains(gains.stiffness, gains.damping, self.model.home, k_ns, d_ns)
        self.default_gains = gains
        if kind == "impedance":
            self.controller = ctl.ImpedanceController(self.model, gains, home)
        else:
            self.controller = ctl.FdccController(self.model, gains, home, self.model.home)
        self.traj = TrajectoryGenerator(home, traj)
        self.channels = {
            arm.get(GOAL_CHANNEL, GOAL_CHANNEL): self._on_goal,
            arm.get(OVERLAY_CHANNEL, OVERLAY_CHANNEL): self._on_overlay,
            arm.get(STIFFNESS_CHANNEL, STIFFNESS_CHANNEL): self.controller.set_stiffness,
            arm.get(WRENCH_CHANNEL, WRENCH_CHANNEL): self.controller.set_wrench,
        }
        self.active_skill = ""
        self.attached: str | None = None
        self.log = RunLog(arm_id, self.model.n) if log else None
        self.last_reference = home
        self.contact_force = np.zeros(3)

    # ---------------------------------------------------------------- channels
    def publish(self, channel: str, value) -> None:
        try:
            handler = self.channels[channel]
        except KeyError:
            raise RuntimeFault(f"{self.arm_id} has no channel {channel!r}") from None
        handler(value)

    def channel_of(self, key: str) -> str:
        return self.scene.element(self.arm_id).get(key, key)

    def _on_goal(self, value):
        goal, config = value if isinstance(value, tuple) else (value, None)
        self.traj.set_goal(goal, self.time, config)

    def _on_overlay(self, spec: OverlaySpec | None):
        self.traj.set_overlay(spec, self.time)

    # ---------------------------------------------------------------- state
    @property
    def time(self) -> float:
        return self.sim.state.t

    @property
    def dt(self) -> float:
        return self.sim.dt

    def tcp_pose(self) -> Pose:
        return self.sim.tcp_pose()

    def to_base(self, pose_world: Pose) -> Pose:
        return self.base.inverse() * pose_world

    def measured_wrench(self) -> np.ndarray:
        """Wrench estimate available to the controller (wrist sensor if present)."""
        if self.model.wrist_ft:
            return self.sim.ft_reading()
        return self.sim.wrench.copy()

    def step(self) -> None:
        """One control step; the log row holds the state at the start of the step."""
        t = self.time
        q = self.sim.state.q
        ref = self.traj.reference(t)
        self.controller.set_reference(ref.pose)
        wrench = self.sim.ft_reading() if self.model.wrist_ft else None
        cmd = self.controller.command(t, self.dt, q, self.sim.state.qd, wrench)
        self.sim.step(cmd)
        self.last_reference = ref.pose
        self.contact_force = self.sim.last.contact_force
        if self.log is not None:
            self.log.append(t, ref.pose, self.sim.last.kin.pose(), self.sim.wrench, q, self.active_skill)

    def advance(self, seconds: float) -> None:
        for _ in range(max(1, int(math.floor(seconds / self.dt + 1e-9)))):
            self.step()


class SimRuntime:
    """All arms of a scenario stepped round-robin on one clock."""

    def __init__(self, scene: Scene, arms: dict[str, ArmRuntime]):
        self.scene = scene
        self.arms = arms

    @classmethod
    def for_arm(cls, scene: Scene, arm_id: str, surfaces=None, **kw) -> SimRuntime:
        if surfaces is None:
            surfaces = wipe_surfaces(scene)
        return cls(scene, {arm_id: ArmRuntime(scene, arm_id, surfaces, **kw)})

    def arm(self, arm_id: str) -> ArmRuntime:
        try:
            return self.arms[arm_id]
        except KeyError:
            raise RuntimeFault(f"arm {arm_id!r} is not simulated") from None

    @property
    def time(self) -> float:
        return min(a.time for a in self.arms.values()) if self.arms else 0.0

    def advance(self, seconds: float) -> None:
        steps = max(1, int(math.floor(seconds / next(iter(self.arms.values())).dt + 1e-9)))
        for _ in range(steps):
            for a in self.arms.values():
                a.step()


def wipe_surfaces(scene: Scene) -> list[str]:
    """Ids of all elements that describe a wipeable surface."""
    return sorted(e.id for e in scene.elements.values() if e.has(WIDTH) and e.has(HEIGHT) and e.has(POSE))
