"""Serial-chain rigid-body kinematics, dynamics and a contact simulator.

All quantities live in the robot base frame unless noted. Joints are
revolute; link ``i`` is rigidly attached to the moving side of joint
``i``. The equation of motion integrated by :func:`step` is

    M(q) qdd + C(q, qd) qd (+ g(q)) = tau_c + tau_ext

with ``M`` from the composite-rigid-body algorithm and the velocity
product / gravity terms from recursive Newton-Euler.
"""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels as _k
from .geometry import Pose, rpy_to_matrix, skew

GRAVITY = np.array([0.0, 0.0, -9.81])
MAX_JOINT_SPEED = 20.0  # rad/s; beyond this the integration is treated as diverged


class SimulationFault(RuntimeError):
    pass


class InterfaceError(TypeError):
    """Command kind not accepted by the robot's control interface."""


@dataclass
class Joint:
    name: str
    axis: np.ndarray
    origin: np.ndarray  # 4x4, parent link frame -> joint frame at q = 0
    mass: float
    com: np.ndarray  # in the link frame
    inertia: np.ndarray  # 3x3 about the com, link frame
    lower: float = -2 * np.pi
    upper: float = 2 * np.pi
    armature: float = 0.0  # reflected rotor inertia, kg m^2

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        self.axis = self.axis / np.linalg.norm(self.axis)
        self.com = np.asarray(self.com, dtype=float)
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0:
            raise ValueError(f"joint {self.name}: link mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T) or np.linalg.eigvalsh(self.inertia).min() <= 0:
            raise ValueError(f"joint {self.name}: inertia must be symmetric positive definite")
        K = skew(self.axis)
        self._K = K
        self._K2 = K @ K


@dataclass(frozen=True)
class TorqueInterface:
    pass


@dataclass(frozen=True)
class PositionInterface:
    """Stiff joint PD tracking loop: tau = kp (q_cmd - q) - kd qd."""

    kp: np.ndarray
    kd: np.ndarray


@dataclass
class RobotModel:
    name: str
    joints: list[Joint]
    tool: np.ndarray = field(default_factory=lambda: np.eye(4))  # last link -> TCP
    interface: TorqueInterface | PositionInterface = field(default_factory=TorqueInterface)
    wrist_ft: bool = False
    home: np.ndarray | None = None
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        if self.home is None:
            self.home = np.zeros(self.n)
        self.home = np.asarray(self.home, dtype=float)
        self._origins_R = np.array([j.origin[:3, :3] for j in self.joints])
        self._origins_p = np.array([j.origin[:3, 3] for j in self.joints])
        self._K = np.array([j._K for j in self.joints])
        self._K2 = np.array([j._K2 for j in self.joints])
        self._axes = np.array([j.axis for j in self.joints])
        self._masses = np.array([j.mass for j in self.joints])
        self._coms = np.array([j.com for j in self.joints])
        self._inertias = np.array([j.inertia for j in self.joints])
        self._armature = np.array([j.armature for j in self.joints])
        self._tool_R = np.ascontiguousarray(self.tool[:3, :3])
        self._tool_p = np.ascontiguousarray(self.tool[:3, 3])
        self.lower = np.array([j.lower for j in self.joints])
        self.upper = np.array([j.upper for j in self.joints])

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def accepts_torque(self) -> bool:
        return isinstance(self.interface, TorqueInterface)

    def with_interface(self, interface) -> RobotModel:
        return replace(self, interface=interface)

    def with_uniform_links(self, mass: float = 1.0, inertia: float = 0.01) -> RobotModel:
        """Same kinematics, every link a point-ish mass at its com, no armature."""
        joints = [replace(j, mass=mass, inertia=np.eye(3) * inertia, armature=0.0) for j in self.joints]
        return replace(self, joints=joints, name=self.name + "-virtual")


# ------------------------------------------------------------------ kinematics
@dataclass
class Kinematics:
    """Link frames and TCP of one configuration, reused by the dynamics."""

    R: np.ndarray  # (n, 3, 3) link rotations
    p: np.ndarray  # (n, 3) joint origins
    z: np.ndarray  # (n, 3) joint axes
    tcp_R: np.ndarray
    tcp_p: np.ndarray

    def pose(self) -> Pose:
        return Pose.from_rotation(self.tcp_p, self.tcp_R)

    def jacobian_base(self) -> np.ndarray:
        """Geometric Jacobian, linear rows first, both expressed in the base frame."""
        return _k.jacobian_base(self.p, self.z, self.tcp_p)

    def jacobian_tcp(self) -> np.ndarray:
        """Geometric Jacobian expressed in the TCP (task) frame."""
        J = self.jacobian_base()
        Rt = self.tcp_R.T
        J[:3] = Rt @ J[:3]
        J[3:] = Rt @ J[3:]
        return J


def kinematics(model: RobotModel, q) -> Kinematics:
    q = np.ascontiguousarray(q, dtype=float)
    return Kinematics(*_k.forward_kinematics(model._origins_R, model._origins_p, model._K, model._K2,
                                             model._axes, model._tool_R, model._tool_p, q))


def fk(model: RobotModel, q) -> Pose:
    """TCP pose in the base frame."""
    return kinematics(model, np.asarray(q, dtype=float)).pose()


def jacobian(model: RobotModel, q) -> np.ndarray:
    """6 x n geometric Jacobian in the TCP frame (twist rows: v, omega)."""
    return kinematics(model, np.asarray(q, dtype=float)).jacobian_tcp()


# ------------------------------------------------------------------ dynamics
def mass_matrix(model: RobotModel, q, kin: Kinematics | None = None) -> np.ndarray:
    """Joint-space inertia by the composite-rigid-body algorithm.

    Links are folded into composite bodies from the tip inwards; column
    ``j`` is the momentum of composite body ``j..n-1`` under unit motion of
    joint ``j``, projected on the axes of joints ``0..j``. Rotor armature
    is added to the diagonal.
    """
    if kin is None:
        kin = kinematics(model, q)
    return _k.crba(kin.R, kin.p, kin.z, model._masses, model._coms, model._inertias, model._armature)


def bias(model: RobotModel, q, qd, kin: Kinematics | None = None, gravity=True) -> np.ndarray:
    """C(q, qd) qd + g(q) by recursive Newton-Euler with zero joint acceleration.

    ``gravity`` may be True (model gravity), False, or a 3-vector.
    """
    if kin is None:
        kin = kinematics(model, q)
    if gravity is True:
        g = model.gravity
    elif gravity is False:
        g = np.zeros(3)
    else:
        g = np.asarray(gravity, dtype=float)
    return _k.rnea(kin.R, kin.p, kin.z, model._masses, model._coms, model._inertias,
                   np.ascontiguousarray(qd, dtype=float), np.ascontiguousarray(g, dtype=float))


def gravity_torque(model: RobotModel, q, kin: Kinematics | None = None) -> np.ndarray:
    return bias(model, q, np.zeros(model.n), kin=kin, gravity=True)


def kinetic_energy(model: RobotModel, q, qd) -> float:
    qd = np.asarray(qd, dtype=float)
    return 0.5 * float(qd @ mass_matrix(model, q) @ qd)


# ------------------------------------------------------------------ contact
@dataclass
class ContactSurface:
    """Rectangular penalty-contact patch.

    The surface frame has its origin at one corner, x and y along the two
    edges (``extents``) and z pointing *into* the material; penetration is
    the TCP's z coordinate in this frame.
    """

    pose: Pose  # in the robot base frame
    extents: tuple[float, float]
    stiffness: float = 3000.0
    damping: float = 50.0
    friction: float = 10.0  # tangential viscous coefficient, N s/m
    wipe_force: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.stiffness <= 0:
            raise ValueError("contact stiffness must be positive")
        if min(self.extents) < 0:
            raise ValueError("surface extents must be non-negative")
        self._R = self.pose.rotation
        self._o = np.asarray(self.pose.position)

    @property
    def normal(self) -> np.ndarray:
        """Outward normal (pointing away from the material) in the base frame."""
        return -self._R[:, 2]

    def to_surface(self, p) -> np.ndarray:
        return self._R.T @ (np.asarray(p) - self._o)

    def contact_force(self, p, v) -> np.ndarray:
        """Force on the robot (base frame) for TCP position ``p`` and velocity ``v``."""
        ps = self._R.T @ (p - self._o)
        w, h = self.extents
        if ps[2] <= 0.0 or not (0.0 <= ps[0] <= w and 0.0 <= ps[1] <= h):
            return np.zeros(3)
        vs = self._R.T @ v
        fn = self.stiffness * ps[2] + self.damping * vs[2]
        if fn <= 0.0:
            return np.zeros(3)
        fs = np.array([-self.friction * vs[0], -self.friction * vs[1], -fn])
        return self._R @ fs


# ------------------------------------------------------------------ simulation
@dataclass
class SimState:
    q: np.ndarray
    qd: np.ndarray
    t: float = 0.0
    fault: str | None = None

    def copy(self) -> SimState:
        return SimState(self.q.copy(), self.qd.copy(), self.t, self.fault)


@dataclass(frozen=True)
class JointTorque:
    tau: np.ndarray


@dataclass(frozen=True)
class JointPosition:
    q: np.ndarray


@dataclass
class StepInfo:
    """Extra per-step quantities kept for logging and checks."""

    kin: Kinematics
    contact_force: np.ndarray  # base frame, on the robot
    tau_ext: np.ndarray
    tau_applied: np.ndarray


def step(model: RobotModel, state: SimState, command, surfaces=(), dt: float = 1e-3,
         info: list | None = None) -> tuple[SimState, np.ndarray]:
    """Advance one semi-implicit Euler step; returns the new state and the wrist wrench.

    The wrench is the contact wrench acting on the robot, expressed in the
    TCP frame (force first). Gravity is compensated exactly for both
    interfaces.
    """
    if not 0.0 < dt <= 5e-3:
        raise ValueError(f"dt must be in (0, 5e-3], got {dt}")
    q, qd = state.q, state.qd
    kin = kinematics(model, q)
    J = kin.jacobian_base()
    v_tcp = J[:3] @ qd
    force = np.zeros(3)
    for s in surfaces:
        force = force + s.contact_force(kin.tcp_p, v_tcp)
    wrench = np.concatenate([kin.tcp_R.T @ force, np.zeros(3)])
    J_tcp = J.copy()
    J_tcp[:3] = kin.tcp_R.T @ J[:3]
    J_tcp[3:] = kin.tcp_R.T @ J[3:]
    tau_ext = J_tcp.T @ wrench

    if isinstance(command, JointTorque):
        if not model.accepts_torque:
            raise InterfaceError(f"{model.name} does not accept torque commands")
        tau = np.asarray(command.tau, dtype=float)
    elif isinstance(command, JointPosition):
        if model.accepts_torque:
            raise InterfaceError(f"{model.name} is torque commanded")
        iface = model.interface
        tau = iface.kp * (np.asarray(command.q, dtype=float) - q) - iface.kd * qd
    else:
        raise InterfaceError(f"unknown command {type(command).__name__}")
    if tau.shape != (model.n,) or not np.all(np.isfinite(tau)):
        raise ValueError("command must be a finite n-vector")

    M = mass_matrix(model, q, kin)
    # gravity compensation is exact, so g(q) cancels out of the balance
    c = bias(model, q, qd, kin, gravity=False)
    qdd = np.linalg.solve(M, tau + tau_ext - c)
    qd_new = qd + dt * qdd
    q_new = q + dt * qd_new
    fault = state.fault
    below, above = q_new < model.lower, q_new > model.upper
    if below.any() or above.any():
        q_new = np.clip(q_new, model.lower, model.upper)
        qd_new[below | above] = 0.0
        fault = "joint limit"
    if not np.all(np.isfinite(qd_new)) or np.linalg.norm(qd_new) > MAX_JOINT_SPEED:
        raise SimulationFault(f"joint speed {np.linalg.norm(qd_new):.3g} rad/s at t={state.t:.4f}s")
    if info is not None:
        info.append(StepInfo(kin, force, tau_ext, tau))
    return SimState(q_new, qd_new, state.t + dt, fault), wrench


class Simulator:
    """Stateful wrapper around :func:`step` holding the last command."""

    def __init__(self, model: RobotModel, q0=None, surfaces=(), dt: float = 1e-3):
        self.model = model
        q0 = model.home if q0 is None else q0
        self.state = SimState(np.array(q0, dtype=float), np.zeros(model.n))
        self.surfaces = list(surfaces)
        self.dt = dt
        self.wrench = np.zeros(6)
        self.last: StepInfo | None = None
        if model.accepts_torque:
            self.command = JointTorque(np.zeros(model.n))
        else:
            self.command = JointPosition(self.state.q.copy())

    def step(self, command=None):
        if command is not None:
            self.command = command
        info: list = []
        self.state, self.wrench = step(self.model, self.state, self.command, self.surfaces, self.dt, info)
        self.last = info[0]
        return self.state, self.wrench

    def tcp_pose(self) -> Pose:
        return fk(self.model, self.state.q)

    def ft_reading(self) -> np.ndarray:
        """Wrist force-torque sensor; only present on models that carry one."""
        if not self.model.wrist_ft:
            raise InterfaceError(f"{self.model.name} has no wrist force-torque sensor")
        return self.wrench.copy()


# ------------------------------------------------------------------ model files
def _floats(tokens, i, k):
    return [float(t) for t in tokens[i:i + k]], i + k


def parse_model(text: str) -> RobotModel:
    """Read a robot description.

    Lines (``#`` comments)::

        name <id>
        interface torque | position kp=<v,...> kd=<v,...>
        wrist_ft true|false
        tool xyz <x y z> rpy <r p y>
        home <q1 ... qn>
        joint <name> axis <x y z> xyz <x y z> rpy <r p y> mass <kg>
              com <x y z> inertia <ixx iyy izz> [limit <lo hi>] [armature <v>]
    """
    name = "robot"
    joints: list[Joint] = []
    tool = np.eye(4)
    interface = None
    wrist_ft = False
    home = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = shlex.split(line)
        key = tok[0]
        try:
            if key == "name":
                name = tok[1]
            elif key == "wrist_ft":
                wrist_ft = tok[1].lower() == "true"
            elif key == "home":
                home = np.array([float(t) for t in tok[1:]])
            elif key == "interface":
                if tok[1] == "torque":
                    interface = TorqueInterface()
                elif tok[1] == "position":
                    kv = dict(t.split("=", 1) for t in tok[2:])
                    interface = ("position", kv["kp"], kv["kd"])
                else:
                    raise ValueError(f"unknown interface {tok[1]!r}")
            elif key in ("tool", "joint"):
                fields: dict[str, list[float]] = {}
                i = 2 if key == "joint" else 1
                sizes = {"axis": 3, "xyz": 3, "rpy": 3, "mass": 1, "com": 3,
                         "inertia": 3, "limit": 2, "armature": 1}
                while i < len(tok):
                    f = tok[i]
                    if f not in sizes:
                        raise ValueError(f"unknown field {f!r}")
                    fields[f], i = _floats(tok, i + 1, sizes[f])
                    if len(fields[f]) != sizes[f]:
                        raise ValueError(f"field {f!r} needs {sizes[f]} numbers")
                T = np.eye(4)
                T[:3, :3] = rpy_to_matrix(*fields.get("rpy", [0.0, 0.0, 0.0]))
                T[:3, 3] = fields.get("xyz", [0.0, 0.0, 0.0])
                if key == "tool":
                    tool = T
                else:
                    lo, hi = fields.get("limit", [-2 * np.pi, 2 * np.pi])
                    joints.append(Joint(tok[1], fields["axis"], T, fields["mass"][0], fields["com"],
                                        np.diag(fields["inertia"]), lo, hi, fields.get("armature", [0.0])[0]))
            else:
                raise ValueError(f"unknown statement {key!r}")
        except (IndexError, KeyError, ValueError) as exc:
            raise ValueError(f"robot model line {lineno}: {exc}") from None
    if not joints:
        raise ValueError("robot model has no joints")
    if interface is None:
        interface = TorqueInterface()
    elif isinstance(interface, tuple):
        n = len(joints)

        def vec(spec):
            v = np.array([float(x) for x in spec.split(",")])
            return np.full(n, v[0]) if v.size == 1 else v

        interface = PositionInterface(vec(interface[1]), vec(interface[2]))
    return RobotModel(name, joints, tool, interface, wrist_ft, home)


DATA_DIR = Path(__file__).parent / "data"


def load_model(name_or_path) -> RobotModel:
    """Load a shipped model by name (``generic6``, ``generic7``) or from a path."""
    path = Path(name_or_path)
    if not path.exists():
        path = DATA_DIR / "models" / f"{name_or_path}.robot"
    return parse_model(path.read_text(encoding="utf-8"))


def inverse_kinematics(model: RobotModel, target: Pose, q0, iters: int = 200, tol: float = 1e-10,
                       damping: float = 1e-3, rot_weight: float = 1.0):
    """Damped least-squares IK; returns ``(q, converged)``."""
    from .geometry import rotation_log

    q = np.array(q0, dtype=float)
    for _ in range(iters):
        kin = kinematics(model, q)
        e = np.concatenate([target.position - kin.tcp_p,
                            rot_weight * rotation_log(target.rotation @ kin.tcp_R.T)])
        if np.linalg.norm(e) < tol:
            return q, True
        J = kin.jacobian_base()
        J[3:] *= rot_weight
        dq = J.T @ np.linalg.solve(J @ J.T + damping**2 * np.eye(6), e)
        q = np.clip(q + dq, model.lower, model.upper)
    return q, False
