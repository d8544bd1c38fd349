"""Compliant Cartesian control: torque-level impedance control and
forward dynamics compliance control (FDCC) for position-commanded arms.

Both laws render a spring-damper between the end effector and a
reference pose, with stiffness, damping and a commanded wrench expressed
in the end-effector (task) frame. The torque law is

    tau = J^T (-K dxi - D J qd) + N (k_ns (q_d - q) - d_ns qd) + J^T F

with ``N = I - J^T (J J^T + lam I)^-1 J``. FDCC feeds the same Cartesian
force, plus the wrench measured at the wrist, into the forward dynamics
of a light virtual copy of the arm and streams the virtual joint
positions to the real robot.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .geometry import Pose, quat_conjugate, quat_log, quat_multiply

NULLSPACE_REG = 1e-6
DEFAULT_RAMP = 0.2  # s
RAMP_EPS = 1e-9  # s; times are sums of dt and carry round-off
VIRTUAL_SPEED_LIMIT = 20.0  # rad/s


class ControllerFault(RuntimeError):
    pass


def pose_error(current: Pose, reference: Pose) -> np.ndarray:
    """Delta xi = (position error, orientation error) in the current end-effector frame.

    The orientation part is the rotation vector of ``q_ref^-1 q_cur`` on
    the shortest arc; its axis is fixed by that rotation, so it has the
    same coordinates in the reference and the current frame.
    """
    dp = current.rotation.T @ (current.position - reference.position)
    dq = quat_multiply(quat_conjugate(reference.orientation), current.orientation)
    return np.concatenate([dp, quat_log(dq)])


def critical_damping(K) -> np.ndarray:
    """D = 2 sqrt(K) on the diagonal (critical damping for unit mass)."""
    K = np.asarray(K, dtype=float)
    return np.diag(2.0 * np.sqrt(np.clip(np.diag(K), 0.0, None)))


def _check_psd(name, A, size):
    A = np.asarray(A, dtype=float)
    if A.shape != (size, size) or not np.all(np.isfinite(A)):
        raise ValueError(f"{name} must be a finite {size}x{size} matrix")
    if np.max(np.abs(A - A.T)) > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(A).min() < -1e-9:
        raise ValueError(f"{name} must be positive semidefinite")
    return A


@dataclass(frozen=True)
class ImpedanceGains:
    stiffness: np.ndarray  # 6x6, N/m and Nm/rad
    damping: np.ndarray  # 6x6
    q_nullspace: np.ndarray | None = None
    k_ns: float = 0.0
    d_ns: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stiffness", _check_psd("stiffness", self.stiffness, 6))
        object.__setattr__(self, "damping", _check_psd("damping", self.damping, 6))
        if self.q_nullspace is not None:
            q = np.asarray(self.q_nullspace, dtype=float)
            if not np.all(np.isfinite(q)):
                raise ValueError("null-space configuration must be finite")
            object.__setattr__(self, "q_nullspace", q)
        if not (self.k_ns >= 0 and self.d_ns >= 0):
            raise ValueError("null-space gains must be non-negative")

    @classmethod
    def diagonal(cls, translational, rotational, damping=None, **nullspace) -> ImpedanceGains:
        """Diagonal gains from per-axis values; damping defaults to 2 sqrt(K)."""
        k = np.broadcast_to(np.asarray(translational, dtype=float), (3,))
        r = np.broadcast_to(np.asarray(rotational, dtype=float), (3,))
        K = np.diag(np.concatenate([k, r]))
        D = critical_damping(K) if damping is None else np.diag(np.broadcast_to(damping, (6,)))
        return cls(K, D, **nullspace)

    def with_stiffness(self, K, D=None) -> ImpedanceGains:
        K = np.diag(K) if np.ndim(K) == 1 else np.asarray(K, dtype=float)
        D = critical_damping(K) if D is None else (np.diag(D) if np.ndim(D) == 1 else D)
        return replace(self, stiffness=K, damping=D)

    def blend(self, other: ImpedanceGains, s: float) -> ImpedanceGains:
        """Linear interpolation towards ``other`` (null-space settings taken from ``other``)."""
        if s >= 1.0:
            return other
        return replace(other, stiffness=(1 - s) * self.stiffness + s * other.stiffness,
                       damping=(1 - s) * self.damping + s * other.damping)

    def same_as(self, other: ImpedanceGains) -> bool:
        return (np.array_equal(self.stiffness, other.stiffness)
                and np.array_equal(self.damping, other.damping))


def nullspace_projector(J: np.ndarray, lam: float = NULLSPACE_REG) -> np.ndarray:
    n = J.shape[1]
    return np.eye(n) - J.T @ np.linalg.solve(J @ J.T + lam * np.eye(J.shape[0]), J)


def impedance_terms(q, qd, reference: Pose, gains: ImpedanceGains, wrench, model: dyn.RobotModel,
                    kin: dyn.Kinematics | None = None):
    """The three torque contributions ``(tau_ca, tau_ns, tau_ext)``."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    wrench = np.asarray(wrench, dtype=float)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd)) and np.all(np.isfinite(wrench))):
        raise ValueError("non-finite controller input")
    if kin is None:
        kin = dyn.kinematics(model, q)
    J = kin.jacobian_tcp()
    return _terms(J, kin.pose(), q, qd, reference, gains, wrench)


def _terms(J, current, q, qd, reference, gains, wrench):
    dxi = pose_error(current, reference)
    tau_ca = J.T @ (-gains.stiffness @ dxi - gains.damping @ (J @ qd))
    tau_ext = J.T @ wrench
    if gains.k_ns == 0.0 and gains.d_ns == 0.0:
        tau_ns = np.zeros(len(q))
    else:
        qn = q if gains.q_nullspace is None else gains.q_nullspace
        tau_ns = nullspace_projector(J) @ (gains.k_ns * (qn - q) - gains.d_ns * qd)
    return tau_ca, tau_ns, tau_ext


def impedance_torque(q, qd, reference: Pose, gains: ImpedanceGains, wrench, model: dyn.RobotModel,
                     kin: dyn.Kinematics | None = None) -> np.ndarray:
    """Commanded joint torque (gravity compensation is left to the robot)."""
    if model.n < 6:
        raise ValueError("impedance control needs at least 6 joints")
    tau_ca, tau_ns, tau_ext = impedance_terms(q, qd, reference, gains, wrench, model, kin)
    return tau_ca + tau_ns + tau_ext


# ------------------------------------------------------------------ FDCC
@dataclass
class FdccState:
    """Virtual model state; ``q`` is also the last joint position command."""

    q: np.ndarray
    qd: np.ndarray = None
    virtual_mass: float = 1.0
    virtual_inertia: float = 0.01
    model: dyn.RobotModel | None = field(default=None, repr=False)

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float)
        self.qd = np.zeros_like(self.q) if self.qd is None else np.array(self.qd, dtype=float)
        if not self.virtual_mass > 0:
            raise ValueError("virtual link mass must be positive")

    def virtual_model(self, model: dyn.RobotModel) -> dyn.RobotModel:
        if self.model is None or self.model.name != model.name + "-virtual":
            self.model = model.with_uniform_links(self.virtual_mass, self.virtual_inertia)
        return self.model


def fdcc_step(measured_wrench, reference: Pose, q_cmd, gains: ImpedanceGains, state: FdccState,
              dt: float, model: dyn.RobotModel, wrench_cmd=None) -> np.ndarray:
    """One FDCC update; returns the next joint position command.

    The net task-frame force ``-K dxi - D xdot + F_cmd + F_measured`` acts
    on a gravity-free virtual copy of the arm whose links all have the
    same small mass; one semi-implicit Euler step of its forward dynamics
    gives the new command. ``q_cmd`` is the previous command and seeds the
    virtual state if it has drifted from it.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    measured = np.asarray(measured_wrench, dtype=float)
    F = np.zeros(6) if wrench_cmd is None else np.asarray(wrench_cmd, dtype=float)
    if not (np.all(np.isfinite(measured)) and np.all(np.isfinite(F))):
        raise ValueError("non-finite wrench")
    q_cmd = np.asarray(q_cmd, dtype=float)
    if not np.array_equal(q_cmd, state.q):
        state.q = q_cmd.copy()
    vm = state.virtual_model(model)
    kin = dyn.kinematics(vm, state.q)
    J = kin.jacobian_tcp()
    dxi = pose_error(kin.pose(), reference)
    xd = J @ state.qd
    f = -gains.stiffness @ dxi - gains.damping @ xd + F + measured
    M = dyn.mass_matrix(vm, state.q, kin)
    c = dyn.bias(vm, state.q, state.qd, kin, gravity=False)
    tau = J.T @ f
    if gains.k_ns or gains.d_ns:
        qn = state.q if gains.q_nullspace is None else gains.q_nullspace
        tau = tau + nullspace_projector(J) @ (gains.k_ns * (qn - state.q) - gains.d_ns * state.qd)
    qdd = np.linalg.solve(M, tau - c)
    qd_new = state.qd + dt * qdd
    if not np.all(np.isfinite(qd_new)) or np.linalg.norm(qd_new) > VIRTUAL_SPEED_LIMIT:
        raise ControllerFault(f"virtual model diverged (|qd| = {np.linalg.norm(qd_new):.3g} rad/s)")
    q_new = np.clip(state.q + dt * qd_new, model.lower, model.upper)
    state.qd = qd_new
    state.q = q_new
    return q_new.copy()


# ------------------------------------------------------------------ runtime controllers
class CompliantController:
    """Shared runtime state: reference, ramped gains and wrench, setter mailbox.

    Setters validate immediately (invalid values raise and leave the
    controller untouched) and post into a mailbox that the control loop
    drains at the start of its next step, so updates are atomic with
    respect to control steps. Stiffness, damping and wrench changes are
    ramped linearly over ``ramp_time`` seconds.
    """

    kind = "compliant"

    def __init__(self, model: dyn.RobotModel, gains: ImpedanceGains, reference: Pose,
                 ramp_time: float = DEFAULT_RAMP):
        if ramp_time < 0:
            raise ValueError("ramp time must be non-negative")
        self.model = model
        self.ramp_time = ramp_time
        self.reference = reference
        self._gains_from = self._gains_to = gains
        self._wrench_from = self._wrench_to = np.zeros(6)
        self._ramp_start = -np.inf
        self._mailbox: dict = {}
        self._lock = threading.Lock()
        self.gains = gains
        self.wrench = np.zeros(6)
        self._at_target = True

    # setters (producer side)
    def set_stiffness(self, gains: ImpedanceGains) -> None:
        if not isinstance(gains, ImpedanceGains):
            raise TypeError("expected ImpedanceGains")
        with self._lock:
            self._mailbox["gains"] = gains

    def set_wrench(self, wrench) -> None:
        w = np.array(wrench, dtype=float).reshape(-1)
        if w.shape != (6,) or not np.all(np.isfinite(w)):
            raise ValueError("wrench must be a finite 6-vector")
        with self._lock:
            self._mailbox["wrench"] = w

    def set_reference(self, pose: Pose) -> None:
        if not isinstance(pose, Pose):
            raise TypeError("expected Pose")
        with self._lock:
            self._mailbox["reference"] = pose

    # consumer side
    @property
    def target_gains(self) -> ImpedanceGains:
        return self._mailbox.get("gains", self._gains_to)

    @property
    def target_wrench(self) -> np.ndarray:
        return self._mailbox.get("wrench", self._wrench_to)

    def ramp_done(self, t: float) -> bool:
        """True once the ramp has ended by time ``t`` *and* the control loop has applied its final value."""
        return (not self._mailbox and self._at_target
                and t - self._ramp_start >= self.ramp_time - RAMP_EPS)

    def _apply_mailbox(self, t: float) -> None:
        with self._lock:
            box, self._mailbox = self._mailbox, {}
        if "reference" in box:
            self.reference = box["reference"]
        new_gains = box.get("gains")
        new_wrench = box.get("wrench")
        gains_change = new_gains is not None and not new_gains.same_as(self._gains_to)
        wrench_change = new_wrench is not None and not np.array_equal(new_wrench, self._wrench_to)
        if new_gains is not None and not gains_change:
            # same Cartesian gains; null-space settings are taken over without a ramp
            self._gains_to = new_gains
        if gains_change or wrench_change:
            self._gains_from, self._wrench_from = self.gains, self.wrench
            if gains_change:
                self._gains_to = new_gains
            if wrench_change:
                self._wrench_to = new_wrench
            self._ramp_start = t

    def _update_ramp(self, t: float) -> None:
        s = 1.0 if self.ramp_time == 0 else (t - self._ramp_start) / self.ramp_time
        s = 1.0 if s >= 1.0 - RAMP_EPS / max(self.ramp_time, RAMP_EPS) else max(s, 0.0)
        self.gains = self._gains_from.blend(self._gains_to, s)
        self.wrench = self._wrench_to if s >= 1.0 else (1 - s) * self._wrench_from + s * self._wrench_to
        self._at_target = s >= 1.0

    def update(self, t: float) -> None:
        self._apply_mailbox(t)
        self._update_ramp(t)

    def command(self, t, dt, q, qd, measured_wrench=None):
        raise NotImplementedError


class ImpedanceController(CompliantController):
    """Cartesian impedance control for torque-commanded arms."""

    kind = "impedance"

    def __init__(self, model, gains, reference, ramp_time=DEFAULT_RAMP):
        if not model.accepts_torque:
            raise dyn.InterfaceError(f"{model.name} does not accept torque commands")
        super().__init__(model, gains, reference, ramp_time)

    def command(self, t, dt, q, qd, measured_wrench=None) -> dyn.JointTorque:
        self.update(t)
        return dyn.JointTorque(impedance_torque(q, qd, self.reference, self.gains, self.wrench, self.model))


class FdccController(CompliantController):
    """Forward dynamics compliance control for position-commanded arms with a wrist sensor."""

    kind = "fdcc"

    def __init__(self, model, gains, reference, q0, ramp_time=DEFAULT_RAMP,
                 virtual_mass: float = 1.0, virtual_inertia: float = 0.01):
        if model.accepts_torque:
            raise dyn.InterfaceError(f"{model.name} is torque commanded; FDCC needs a position interface")
        if not model.wrist_ft:
            raise dyn.InterfaceError(f"{model.name} has no wrist force-torque sensor")
        super().__init__(model, gains, reference, ramp_time)
        self.state = FdccState(q0, virtual_mass=virtual_mass, virtual_inertia=virtual_inertia)

    def command(self, t, dt, q, qd, measured_wrench=None) -> dyn.JointPosition:
        if measured_wrench is None:
            raise ValueError("FDCC needs the measured wrist wrench")
        self.update(t)
        q_next = fdcc_step(measured_wrench, self.reference, self.state.q, self.gains, self.state, dt,
                           self.model, self.wrench)
        return dyn.JointPosition(q_next)


CONTROLLERS = {"impedance": ImpedanceController, "fdcc": FdccController}
