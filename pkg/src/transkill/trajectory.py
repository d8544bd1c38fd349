"""Cartesian straight-line trajectories with trapezoidal speed profiles and overlay motions.

Translation follows the segment between start and goal; orientation
rotates about the constant axis of the shortest-arc error quaternion.
Each part gets a trapezoidal (triangular when the cruise speed is never
reached) profile from its own limits. With ``synchronize`` the shorter
profile is time-scaled so both finish together.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, quat_conjugate, quat_exp, quat_log, quat_multiply


ZERO_MOTION = 1e-12  # m or rad


@dataclass(frozen=True)
class TrajConfig:
    v_max: float = 0.1  # m/s
    w_max: float = 0.5  # rad/s
    a_max: float = 0.5  # m/s^2
    alpha_max: float = 1.0  # rad/s^2
    synchronize: bool = True

    def __post_init__(self):
        for name in ("v_max", "w_max", "a_max", "alpha_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Profile:
    """Trapezoidal scalar profile covering ``distance`` from rest to rest.

    ``time_scale`` < 1 stretches the profile in time (velocity scales by
    ``time_scale``, acceleration by its square).
    """

    distance: float
    v_peak: float
    accel: float
    t_acc: float
    t_flat: float
    time_scale: float = 1.0

    @classmethod
    def plan(cls, distance: float, v_max: float, a_max: float) -> Profile:
        if distance <= 0.0:
            return cls(0.0, 0.0, a_max, 0.0, 0.0)
        if distance >= v_max * v_max / a_max:
            t_acc = v_max / a_max
            return cls(distance, v_max, a_max, t_acc, distance / v_max - t_acc)
        t_acc = np.sqrt(distance / a_max)
        return cls(distance, a_max * t_acc, a_max, t_acc, 0.0)

    @property
    def natural_duration(self) -> float:
        return 2.0 * self.t_acc + self.t_flat

    @property
    def duration(self) -> float:
        return self.natural_duration / self.time_scale if self.distance > 0 else 0.0

    def stretched(self, duration: float) -> Profile:
        if self.distance <= 0.0 or duration <= self.natural_duration:
            return self
        return Profile(self.distance, self.v_peak, self.accel, self.t_acc, self.t_flat,
                       self.natural_duration / duration)

    def phase_ends(self) -> tuple[float, float]:
        return self.t_acc / self.time_scale, (self.t_acc + self.t_flat) / self.time_scale

    def __call__(self, t: float) -> tuple[float, float, float]:
        """Position, velocity and acceleration at time ``t``."""
        if self.distance <= 0.0:
            return 0.0, 0.0, 0.0
        k = self.time_scale
        tau = t * k
        a, v, ta, tf = self.accel, self.v_peak, self.t_acc, self.t_flat
        T = 2.0 * ta + tf
        if tau <= 0.0:
            return 0.0, 0.0, 0.0
        if tau >= T:
            return self.distance, 0.0, 0.0
        if tau < ta:
            return 0.5 * a * tau * tau, a * tau * k, a * k * k
        if tau <= ta + tf:
            return 0.5 * a * ta * ta + v * (tau - ta), v * k, 0.0
        r = T - tau
        return self.distance - 0.5 * a * r * r, a * r * k, -a * k * k


@dataclass(frozen=True)
class PoseRef:
    pose: Pose
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class Trajectory:
    start: Pose
    goal: Pose
    config: TrajConfig
    translation: Profile
    rotation: Profile
    axis: np.ndarray  # unit rotation axis in the start frame
    duration: float
    accel_end: float
    cruise_end: float

    @property
    def translation_duration(self) -> float:
        return self.translation.duration

    @property
    def rotation_duration(self) -> float:
        return self.rotation.duration

    def sample(self, t: float) -> PoseRef:
        return sample(self, t)


def plan_linear(start: Pose, goal: Pose, config: TrajConfig = TrajConfig()) -> Trajectory:
    """Plan a straight-line move; a zero displacement gives a zero-length trajectory."""
    dp = goal.position - start.position
    dq = quat_multiply(quat_conjugate(start.orientation), goal.orientation)
    rotvec = quat_log(dq)
    angle = float(np.linalg.norm(rotvec))
    distance = float(np.linalg.norm(dp))
    # round-off in q_start^-1 q_goal must not turn "no motion" into a nanosecond move
    angle = angle if angle > ZERO_MOTION else 0.0
    distance = distance if distance > ZERO_MOTION else 0.0
    axis = rotvec / np.linalg.norm(rotvec) if angle > 0 else np.array([0.0, 0.0, 1.0])
    trans = Profile.plan(distance, config.v_max, config.a_max)
    rot = Profile.plan(angle, config.w_max, config.alpha_max)
    duration = max(trans.duration, rot.duration)
    if config.synchronize:
        trans, rot = trans.stretched(duration), rot.stretched(duration)
    lead = trans if trans.duration >= rot.duration else rot
    accel_end, cruise_end = lead.phase_ends()
    return Trajectory(start, goal, config, trans, rot, axis, duration, accel_end, cruise_end)


def sample(traj: Trajectory, t: float) -> PoseRef:
    """Reference pose and twist at time ``t`` (clamped to the goal after the end)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t >= traj.duration:
        return PoseRef(traj.goal)
    if t == 0.0:
        return PoseRef(traj.start)
    s, sd, _ = traj.translation(t)
    th, thd, _ = traj.rotation(t)
    d = traj.goal.position - traj.start.position
    dist = traj.translation.distance
    u = d / dist if dist > 0 else np.zeros(3)
    position = traj.start.position + u * s
    orientation = quat_multiply(traj.start.orientation, quat_exp(traj.axis * th))
    omega = traj.start.rotation @ traj.axis * thd
    return PoseRef(Pose(position, orientation), u * sd, omega)


# ------------------------------------------------------------------ overlays
class OverlayKind(enum.Enum):
    NONE = "none"
    CIRCLE = "circle"
    SINE = "sine"
    SPIRAL = "spiral"


@dataclass(frozen=True)
class OverlaySpec:
    """Periodic offset in the plane orthogonal to ``normal``.

    ``frequency`` is in Hz (turns per second for the spiral); ``pitch`` is
    the spiral's radial growth per turn. A positive ``amplitude`` caps the
    spiral radius.
    """

    kind: OverlayKind = OverlayKind.NONE
    amplitude: float = 0.0
    frequency: float = 1.0
    pitch: float = 0.0
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.amplitude < 0 or self.frequency < 0 or self.pitch < 0:
            raise ValueError("overlay amplitude, frequency and pitch must be non-negative")
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("overlay plane normal must be a unit vector")
        object.__setattr__(self, "kind", OverlayKind(self.kind))

    @property
    def period(self) -> float:
        return 1.0 / self.frequency if self.frequency > 0 else 0.0


def plane_axes(normal) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic in-plane basis ``(u, v)`` with ``u x v = normal``."""
    n = np.asarray(normal, dtype=float)
    e = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = e - (e @ n) * n
    u /= np.linalg.norm(u)
    return u, np.cross(n, u)


def overlay_plane_offset(spec: OverlaySpec, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Offset and its rate in plane coordinates ``(u, v)`` at ``t`` seconds after activation."""
    A, w = spec.amplitude, 2.0 * np.pi * spec.frequency
    if spec.kind is OverlayKind.CIRCLE:
        c, s = np.cos(w * t), np.sin(w * t)
        return np.array([A * c - A, A * s]), np.array([-A * w * s, A * w * c])
    if spec.kind is OverlayKind.SINE:
        return np.array([A * np.sin(w * t), 0.0]), np.array([A * w * np.cos(w * t), 0.0])
    if spec.kind is OverlayKind.SPIRAL:
        r = spec.pitch * spec.frequency * t
        rd = spec.pitch * spec.frequency
        if A > 0 and r >= A:
            r, rd = A, 0.0
        c, s = np.cos(w * t), np.sin(w * t)
        return r * np.array([c, s]), rd * np.array([c, s]) + r * w * np.array([-s, c])
    return np.zeros(2), np.zeros(2)


def overlay_offset(spec: OverlaySpec, t: float) -> np.ndarray:
    """Offset in the reference frame at ``t`` seconds after activation."""
    u, v = plane_axes(spec.normal)
    o, _ = overlay_plane_offset(spec, t)
    return o[0] * u + o[1] * v


def apply_overlay(ref: PoseRef, spec: OverlaySpec, t: float, gain: float = 1.0) -> PoseRef:
    """Add the overlay offset at ``t`` seconds after activation; orientation is untouched."""
    if spec.kind is OverlayKind.NONE or gain == 0.0:
        return ref
    u, v = plane_axes(spec.normal)
    o, od = overlay_plane_offset(spec, t)
    offset = gain * (o[0] * u + o[1] * v)
    rate = gain * (od[0] * u + od[1] * v)
    return PoseRef(Pose(ref.pose.position + offset, ref.pose.orientation),
                   ref.linear_velocity + rate, ref.angular_velocity)


class TrajectoryGenerator:
    """Active trajectory plus overlay state for one arm.

    A new goal replaces the active trajectory and is planned from the
    current *reference*, so the reference stays continuous. Overlays are
    anchored at their activation time; switching one off fades it out
    linearly over one period so the reference returns smoothly to the path.
    """

    def __init__(self, start: Pose, config: TrajConfig = TrajConfig()):
        self.config = config
        self.trajectory = plan_linear(start, start, config)
        self.t0 = 0.0
        self.overlay = OverlaySpec()
        self.overlay_t0 = 0.0
        self.fade_start: float | None = None

    def set_goal(self, goal: Pose, now: float, config: TrajConfig | None = None) -> Trajectory:
        current = self.path_reference(now).pose
        self.trajectory = plan_linear(current, goal, config or self.config)
        self.t0 = now
        return self.trajectory

    def done(self, now: float) -> bool:
        return now - self.t0 >= self.trajectory.duration

    def path_reference(self, now: float) -> PoseRef:
        return sample(self.trajectory, max(0.0, now - self.t0))

    def set_overlay(self, spec: OverlaySpec | None, now: float) -> None:
        if spec is None or spec.kind is OverlayKind.NONE:
            if self.overlay.kind is not OverlayKind.NONE and self.fade_start is None:
                self.fade_start = now
            return
        self.overlay = spec
        self.overlay_t0 = now
        self.fade_start = None

    def overlay_active(self, now: float) -> bool:
        if self.overlay.kind is OverlayKind.NONE:
            return False
        if self.fade_start is not None and now - self.fade_start >= self.overlay.period:
            self.overlay = OverlaySpec()
            self.fade_start = None
            return False
        return True

    def overlay_gain(self, now: float) -> float:
        if self.fade_start is None:
            return 1.0
        period = self.overlay.period
        return max(0.0, 1.0 - (now - self.fade_start) / period) if period > 0 else 0.0

    def reference(self, now: float) -> PoseRef:
        ref = self.path_reference(now)
        if self.overlay_active(now):
            ref = apply_overlay(ref, self.overlay, now - self.overlay_t0, self.overlay_gain(now))
        return ref
