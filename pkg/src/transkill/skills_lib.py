"""The shipped skills: compliant motion primitives, gripper actuation with
one implementation per gripper family, pick, a relocate stub, and the
wipe-surface compound.

Every primitive appends a robot-independent entry to the context's
command stream (targets are given relative to world-model elements,
gains as masks or "default"), so the same skill run on two robots can
be compared command by command.
"""
from __future__ import annotations

import math

import numpy as np

from . import bt
from .bt import Status
from .control import ImpedanceGains
from .geometry import Pose
from .runtime import (COMPLIANT_CONTROLLER, FOOTPRINT_RADIUS, GOAL_CHANNEL, HEIGHT, JOINT_CONTROLLER,
                      LANE_OVERLAP, OVERLAY_CHANNEL, STIFFNESS_CHANNEL, WIDTH, WIPE_FORCE, WRENCH_CHANNEL)
from .skills import (INFERRED, OPTIONAL, REQUIRED, Compound, ParamSpec, PreconditionError, Primitive,
                     Property, Relation, SkillDescription, SkillRegistry)
from .trajectory import OverlayKind, OverlaySpec, TrajConfig

# concepts
MANIPULATOR = "skiros:Manipulator"
GRIPPER = "rparts:GripperEffector"
TWO_FINGER = "scalable:TwoFingerGripper"
THREE_FINGER = "scalable:ThreeFingerGripper"
LOCATION = "skiros:Location"
CELL = "skiros:Cell"
WIPE_SURFACE = "scalable:WipeSurface"
TOOL = "skiros:Tool"

# predicates and properties
HAS_A = "skiros:hasA"
CONTAIN = "skiros:contain"
AT = "skiros:at"
CLEAN = "skiros:clean"
CONTAINER_STATE = "skiros:ContainerState"
FINGER_WIDTH = "scalable:FingerWidth"
FINGER_POSITION = "scalable:FingerPosition"

DEFAULT_FOOTPRINT = 0.025
DEFAULT_OVERLAP = 0.5
APPROACH_STANDOFF = 0.05
LANE_TOLERANCE = 0.005
FORCE_SETTLE = 1.0
SURFACE_SPEED = 0.1


def _round(values, digits=9):
    return tuple(round(float(v), digits) for v in values)


class ArmPrimitive(Primitive):
    """Primitive acting on the simulated arm bound to the ``arm`` parameter."""

    @property
    def rt(self):
        return self.ctx.runtime.arm(self.params["arm"])

    @property
    def now(self) -> float:
        return self.ctx.runtime.time

    def on_start(self):
        arm = self.ctx.scene.element(self.params["arm"])
        if not (arm.has(COMPLIANT_CONTROLLER) or arm.has(JOINT_CONTROLLER)):
            raise PreconditionError(f"{arm.id} has no active controller")
        self.rt.active_skill = self.description.name
        self.t_start = self.now
        self.start()

    def start(self):
        pass

    def on_stop(self):
        if self.ctx.runtime is not None:
            self.rt.active_skill = ""

    def publish(self, key: str, value):
        self.rt.publish(self.rt.channel_of(key), value)


# ------------------------------------------------------------------ motion primitives
GOTO_LINEAR = SkillDescription(
    "goto_linear",
    params=(
        ParamSpec("arm", MANIPULATOR, REQUIRED),
        ParamSpec("target", "any", REQUIRED),
        ParamSpec("frame", "string", OPTIONAL, ""),
        ParamSpec("pos_tol", "float", OPTIONAL, 0.002),
        ParamSpec("ang_tol", "float", OPTIONAL, math.radians(1.0)),
        ParamSpec("speed", "float", OPTIONAL, 0.1),
        ParamSpec("timeout", "float", OPTIONAL, 0.0),
    ),
)


class GotoLinear(ArmPrimitive):
    """Straight-line Cartesian move; ``target`` is a Pose (in ``frame``, an
    element id, or the robot base frame when empty) or an element id.

    Success once the trajectory has ended and the TCP is within tolerance
    of the reference on every axis that is not compliant (zero stiffness
    axes are force controlled and carry no position target). With an
    overlay running, the error is taken against the path and the overlay
    amplitude is added to the position tolerance. Failure when
    ``timeout`` (default: trajectory duration + 5 s) runs out.
    """

    name = "goto_linear_cartesian"
    implements = "goto_linear"

    def resolve_target(self) -> Pose:
        scene, target, frame = self.ctx.scene, self.params["target"], self.params["frame"]
        if isinstance(target, str):
            return self.rt.to_base(scene.resolve_world_pose(target))
        if not isinstance(target, Pose):
            raise TypeError(f"goto target must be a Pose or element id, got {target!r}")
        if frame:
            return self.rt.to_base(scene.resolve_world_pose(frame) * target)
        return target

    def start(self):
        goal = self.resolve_target()
        target = self.params["target"]
        self.ctx.record("goto_linear", self.params["frame"] or "base",
                        target if isinstance(target, str) else _round(target.to_values()))
        self.rt.sim.state.fault = None
        config = TrajConfig(v_max=self.params["speed"])
        self.publish(GOAL_CHANNEL, (goal, config))
        duration = self.rt.traj.trajectory.duration
        self.deadline = self.t_start + (self.params["timeout"] or duration + 5.0)

    def execute(self):
        rt = self.rt
        if rt.sim.state.fault:
            raise RuntimeError(f"{rt.arm_id}: {rt.sim.state.fault}")
        now = self.now
        if rt.traj.done(now):
            act = rt.tcp_pose()
            if rt.traj.overlay_active(now):
                # the overlay is a deliberate offset from the path; allow for its size
                ref = rt.traj.path_reference(now).pose
                pos_tol = self.params["pos_tol"] + rt.traj.overlay.amplitude
            else:
                ref = rt.traj.reference(now).pose
                pos_tol = self.params["pos_tol"]
            err = act.rotation.T @ (act.position - ref.position)
            stiff = np.diag(rt.controller.target_gains.stiffness) > 0
            pos_err = float(np.linalg.norm(err[stiff[:3]])) if stiff[:3].any() else 0.0
            ang_err = act.angle_to(ref) if stiff[3:].all() else 0.0
            if pos_err <= pos_tol and ang_err <= self.params["ang_tol"]:
                return Status.SUCCESS
        if now > self.deadline:
            return Status.FAILURE
        return Status.RUNNING


CHANGE_STIFFNESS = SkillDescription(
    "change_stiffness",
    params=(
        ParamSpec("arm", MANIPULATOR, REQUIRED),
        ParamSpec("stiffness", "any", OPTIONAL, "default"),
        ParamSpec("mask", "any", OPTIONAL, (True,) * 6),
    ),
)


class ChangeStiffness(ArmPrimitive):
    """Set the diagonal stiffness on the masked end-effector axes.

    ``stiffness`` is six values or ``"default"`` (the arm's configured
    gains). Damping becomes 2 sqrt(K) on axes with positive stiffness; an
    axis switched to zero stiffness keeps its previous damping so the
    force-controlled direction stays damped. Success once the ramp ends.
    """

    name = "change_stiffness_diagonal"
    implements = "change_stiffness"

    def start(self):
        rt = self.rt
        mask = np.array(self.params["mask"], dtype=bool)
        if mask.shape != (6,):
            raise ValueError("stiffness mask needs 6 entries")
        current = rt.controller.target_gains
        k = np.diag(current.stiffness).copy()
        d = np.diag(current.damping).copy()
        if isinstance(self.params["stiffness"], str):
            if self.params["stiffness"] != "default":
                raise ValueError(f"unknown stiffness preset {self.params['stiffness']!r}")
            values = np.diag(rt.default_gains.stiffness)
            record = "default"
        else:
            values = np.broadcast_to(np.asarray(self.params["stiffness"], dtype=float), (6,))
            record = _round(values)
        k[mask] = values[mask]
        pos = k > 0
        d[pos] = 2.0 * np.sqrt(k[pos])
        gains = ImpedanceGains(np.diag(k), np.diag(d), current.q_nullspace, current.k_ns, current.d_ns)
        self.ctx.record("change_stiffness", tuple(bool(m) for m in mask), record)
        self.publish(STIFFNESS_CHANNEL, gains)
        self.target = gains

    def execute(self):
        ctl = self.rt.controller
        if ctl.ramp_done(self.now) and ctl.gains.same_as(self.target):
            return Status.SUCCESS
        return Status.RUNNING


APPLY_FORCE = SkillDescription(
    "apply_force",
    params=(
        ParamSpec("arm", MANIPULATOR, REQUIRED),
        ParamSpec("magnitude", "float", REQUIRED),
        ParamSpec("direction", "any", OPTIONAL, (0.0, 0.0, 1.0)),
        ParamSpec("settle_time", "float", OPTIONAL, 0.0),
    ),
)


class ApplyForce(ArmPrimitive):
    """Command a force (N) along a unit direction of the end-effector frame.

    Success once the force ramp has finished and ``settle_time`` seconds
    have passed since the skill started.
    """

    name = "apply_force_cartesian"
    implements = "apply_force"

    def start(self):
        direction = np.asarray(self.params["direction"], dtype=float)
        if direction.shape != (3,) or not np.isclose(np.linalg.norm(direction), 1.0):
            raise ValueError("force direction must be a unit 3-vector")
        wrench = np.concatenate([direction * float(self.params["magnitude"]), np.zeros(3)])
        self.ctx.record("apply_force", _round(direction), round(float(self.params["magnitude"]), 9))
        self.publish(WRENCH_CHANNEL, wrench)

    def execute(self):
        now = self.now
        if self.rt.controller.ramp_done(now) and now - self.t_start >= self.params["settle_time"] - 1e-9:
            return Status.SUCCESS
        return Status.RUNNING


OVERLAY = SkillDescription(
    "overlay",
    params=(
        ParamSpec("arm", MANIPULATOR, REQUIRED),
        ParamSpec("on", "bool", OPTIONAL, True),
        ParamSpec("kind", "string", OPTIONAL, "circle"),
        ParamSpec("amplitude", "float", OPTIONAL, 0.01),
        ParamSpec("frequency", "float", OPTIONAL, 1.0),
        ParamSpec("pitch", "float", OPTIONAL, 0.0),
    ),
)


class Overlay(ArmPrimitive):
    """Switch a periodic overlay on or off in the plane orthogonal to the
    tool axis. On: Success immediately. Off: Success once the overlay has
    faded out and the reference is back on the path."""

    name = "overlay_tool_plane"
    implements = "overlay"

    def start(self):
        p = self.params
        if p["on"]:
            normal = self.rt.tcp_pose().rotation[:, 2]
            spec = OverlaySpec(OverlayKind(p["kind"]), p["amplitude"], p["frequency"], p["pitch"],
                               tuple(normal / np.linalg.norm(normal)))
            self.ctx.record("overlay", "on", p["kind"], p["amplitude"], p["frequency"], p["pitch"])
        else:
            spec = None
            self.ctx.record("overlay", "off")
        self.publish(OVERLAY_CHANNEL, spec)

    def execute(self):
        if self.params["on"] or not self.rt.traj.overlay_active(self.now):
            return Status.SUCCESS
        return Status.RUNNING


# ------------------------------------------------------------------ grippers
GRIPPER_SET = SkillDescription(
    "gripper_set",
    params=(
        ParamSpec("gripper", GRIPPER, REQUIRED),
        ParamSpec("open", "bool", REQUIRED),
    ),
)


class _GripperSet(Primitive):
    latency = 0.5

    def on_start(self):
        self.t_start = self.ctx.time
        self.ctx.record("gripper_set", bool(self.params["open"]))

    def execute(self):
        if self.ctx.runtime is not None and self.ctx.time - self.t_start < self.latency - 1e-9:
            return Status.RUNNING
        self.actuate(bool(self.params["open"]))
        return Status.SUCCESS


class TwoFingerGripperSet(_GripperSet):
    """Parallel-jaw gripper: commands a finger width in meters."""

    name = "gripper_set_two_finger"
    implements = "gripper_set"
    specializations = {"gripper": TWO_FINGER}
    latency = 0.5
    max_width = 0.11

    def actuate(self, open_):
        self.ctx.scene.set_property(self.params["gripper"], FINGER_WIDTH, self.max_width if open_ else 0.0)


class ThreeFingerGripperSet(_GripperSet):
    """Three-finger adaptive gripper: commands a finger position 0 (open) .. 255 (closed)."""

    name = "gripper_set_three_finger"
    implements = "gripper_set"
    specializations = {"gripper": THREE_FINGER}
    latency = 1.0

    def actuate(self, open_):
        self.ctx.scene.set_property(self.params["gripper"], FINGER_POSITION, 0 if open_ else 255)


# ------------------------------------------------------------------ pick and relocate
GRASP_TOOL = SkillDescription(
    "grasp_tool",
    params=(
        ParamSpec("gripper", GRIPPER, REQUIRED),
        ParamSpec("tool", TOOL, REQUIRED),
        ParamSpec("holder", LOCATION, REQUIRED),
    ),
)


class GraspTool(Primitive):
    """World-model side of a grasp: the tool moves from its holder into the gripper."""

    name = "grasp_tool_attach"
    implements = "grasp_tool"

    def execute(self):
        scene = self.ctx.scene
        g, tool, holder = self.params["gripper"], self.params["tool"], self.params["holder"]
        scene.remove_relation(holder, CONTAIN, tool)
        scene.add_relation(g, CONTAIN, tool)
        scene.set_property(g, CONTAINER_STATE, "Full")
        self.ctx.record("grasp_tool")
        if self.ctx.runtime is not None:
            for arm in self.ctx.runtime.arms.values():
                if scene.has_relation(arm.arm_id, HAS_A, g):
                    arm.attached = tool
        return Status.SUCCESS


PICK = SkillDescription(
    "pick",
    params=(
        ParamSpec("arm", MANIPULATOR, REQUIRED),
        ParamSpec("tool", TOOL, REQUIRED),
        ParamSpec("gripper", GRIPPER, INFERRED),
        ParamSpec("holder", LOCATION, INFERRED),
    ),
    preconditions=(
        Relation("arm", HAS_A, "gripper"),
        Property("gripper", CONTAINER_STATE, "Empty"),
        Relation("holder", CONTAIN, "tool"),
    ),
    postconditions=(
        Relation("gripper", CONTAIN, "tool"),
        Relation("holder", CONTAIN, "tool", desired=False),
        Property("gripper", CONTAINER_STATE, "Full"),
    ),
)


class Pick(Compound):
    """Open, approach the tool along its z axis, close, attach, lift.

    The lift target is taken relative to the holder because the tool
    frame follows the gripper once attached.
    """

    name = "pick_top_grasp"
    implements = "pick"

    def build(self):
        p = self.params
        above = Pose([0.0, 0.0, -0.1])
        return bt.Sequence([
            self.child("gripper_set", gripper=p["gripper"], open=True),
            self.child("goto_linear", arm=p["arm"], target=above, frame=p["tool"]),
            self.child("goto_linear", arm=p["arm"], target=Pose(), frame=p["tool"]),
            self.child("gripper_set", gripper=p["gripper"], open=False),
            self.child("grasp_tool", gripper=p["gripper"], tool=p["tool"], holder=p["holder"]),
            self.child("goto_linear", arm=p["arm"], target=above, frame=p["holder"]),
        ], name="pick")


RELOCATE = SkillDescription(
    "relocate",
    params=(
        ParamSpec("arm", MANIPULATOR, REQUIRED),
        ParamSpec("target", CELL, REQUIRED),
        ParamSpec("origin", CELL, INFERRED),
    ),
    preconditions=(Relation("arm", AT, "origin"),),
    postconditions=(Relation("arm", AT, "target"),),
)


class Relocate(Primitive):
    """Stand-in for base navigation: only moves the arm between cells in the world model."""

    name = "relocate_teleport"
    implements = "relocate"

    def execute(self):
        scene, arm = self.ctx.scene, self.params["arm"]
        if self.params["origin"] != self.params["target"]:
            scene.remove_relation(arm, AT, self.params["origin"])
            scene.add_relation(arm, AT, self.params["target"])
        self.ctx.record("relocate", self.params["target"])
        return Status.SUCCESS


# ------------------------------------------------------------------ wiping
def lane_pitch(radius: float, overlap: float) -> float:
    return 2.0 * radius * (1.0 - overlap)


def _stops(extent: float, inset: float, pitch: float) -> list[float]:
    if extent <= 2 * inset:
        return [0.5 * extent]
    last = extent - inset
    n = max(1, math.ceil((last - inset) / pitch - 1e-9))
    return [min(inset + k * pitch, last) for k in range(n + 1)]


def lane_raster(width: float, height: float, radius: float, overlap: float = DEFAULT_OVERLAP):
    """Waypoints of the wiping path in surface coordinates.

    Lanes run along x ("right"), step down along y by the lane pitch and
    come back ("left"), inset by half the footprint radius from every
    edge, until the last lane reaches the far edge.
    """
    if not radius > 0:
        raise ValueError("footprint radius must be positive")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("lane overlap must be in [0, 1)")
    inset = 0.5 * radius
    xs = _stops(width, inset, width)  # only the two ends matter along a lane
    x0, x1 = xs[0], xs[-1]
    ys = _stops(height, inset, lane_pitch(radius, overlap))
    points = []
    for k, y in enumerate(ys):
        a, b = (x0, x1) if k % 2 == 0 else (x1, x0)
        points.append((a, y))
        points.append((b, y))
    return points


WIPE_SURFACE_SKILL = SkillDescription(
    "wipe_surface",
    params=(
        ParamSpec("arm", MANIPULATOR, REQUIRED),
        ParamSpec("surface", WIPE_SURFACE, REQUIRED),
        ParamSpec("cell", CELL, INFERRED),
        ParamSpec("gripper", GRIPPER, INFERRED),
        ParamSpec("tool", TOOL, INFERRED),
    ),
    preconditions=(
        Relation("arm", HAS_A, "gripper"),
        Relation("gripper", CONTAIN, "tool"),
        Relation("arm", AT, "cell"),
        Relation("cell", CONTAIN, "surface"),
    ),
    postconditions=(Relation("surface", CLEAN, "cell"),),
)


class MarkClean(Primitive):
    name = "mark_clean_wm"
    implements = "mark_clean"

    def execute(self):
        self.ctx.scene.add_relation(self.params["surface"], CLEAN, self.params["cell"])
        return Status.SUCCESS


MARK_CLEAN = SkillDescription(
    "mark_clean",
    params=(ParamSpec("surface", WIPE_SURFACE, REQUIRED), ParamSpec("cell", CELL, REQUIRED)),
)


class WipeSurface(Compound):
    """Raster the surface under force control with a circular overlay.

    Approach the first corner, make the surface normal compliant and push
    with the surface's wipe force, switch the overlay on, sweep the lanes
    (right, down, left, ...), then switch everything back and retreat.
    Geometry, force, footprint and overlap all come from the surface
    element; every target is expressed in the surface frame.
    """

    name = "wipe_surface_lanes"
    implements = "wipe_surface"

    def build(self):
        p = self.params
        arm, surface = p["arm"], p["surface"]
        s = self.ctx.scene.element(surface)
        width, height = float(s.get(WIDTH, 0.0)), float(s.get(HEIGHT, 0.0))
        radius = float(s.get(FOOTPRINT_RADIUS, DEFAULT_FOOTPRINT))
        overlap = float(s.get(LANE_OVERLAP, DEFAULT_OVERLAP))
        force = float(s.get(WIPE_FORCE))
        if not force > 0:
            raise ValueError(f"{surface}: wipe force must be positive")
        points = lane_raster(width, height, radius, overlap)

        def goto(x, y, z=0.0, **kw):
            return self.child("goto_linear", arm=arm, target=Pose([x, y, z]), frame=surface, **kw)

        (x0, y0), (xe, ye) = points[0], points[-1]
        normal_off = (False, False, True, False, False, False)
        steps = [
            goto(x0, y0, -APPROACH_STANDOFF),
            goto(x0, y0, 0.0),
            self.child("change_stiffness", arm=arm, stiffness=(0.0,) * 6, mask=normal_off),
            self.child("apply_force", arm=arm, magnitude=force, settle_time=FORCE_SETTLE),
            self.child("overlay", arm=arm, on=True, kind="circle", amplitude=0.01, frequency=1.0),
        ]
        for x, y in points[1:]:
            steps.append(goto(x, y, speed=SURFACE_SPEED, pos_tol=LANE_TOLERANCE))
        steps += [
            self.child("overlay", arm=arm, on=False),
            self.child("apply_force", arm=arm, magnitude=0.0),
            self.child("change_stiffness", arm=arm, stiffness="default", mask=normal_off),
            goto(xe, ye, -APPROACH_STANDOFF),
            self.child("mark_clean", surface=surface, cell=p["cell"]),
        ]
        return bt.Sequence(steps, name="wipe")


def default_registry() -> SkillRegistry:
    reg = SkillRegistry()
    reg.add(GOTO_LINEAR, GotoLinear)
    reg.add(CHANGE_STIFFNESS, ChangeStiffness)
    reg.add(APPLY_FORCE, ApplyForce)
    reg.add(OVERLAY, Overlay)
    reg.add(GRIPPER_SET, TwoFingerGripperSet, ThreeFingerGripperSet)
    reg.add(GRASP_TOOL, GraspTool)
    reg.add(PICK, Pick)
    reg.add(RELOCATE, Relocate)
    reg.add(MARK_CLEAN, MarkClean)
    reg.add(WIPE_SURFACE_SKILL, WipeSurface)
    return reg.freeze()
