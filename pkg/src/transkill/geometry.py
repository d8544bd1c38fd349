"""Rigid transforms, unit quaternions and small SO(3) helpers.

Quaternions are stored scalar-last, ``(x, y, z, w)``, the same order
used in scene files and by :mod:`scipy.spatial.transform`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_TOL = 1e-9


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError(f"cannot normalize quaternion {q}")
    return q / n


def quat_multiply(a, b):
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array([
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    ])


def quat_conjugate(q):
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_to_matrix(q):
    x, y, z, w = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy)],
        [2 * (xy + wz), 1 - 2 * (xx + zz), 2 * (yz - wx)],
        [2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)],
    ])


def matrix_to_quat(R):
    """Shepperd's method; result has non-negative scalar part."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s, 0.25 * s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([0.25 * s, (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 1] + R[1, 0]) / s, 0.25 * s,
                      (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s,
                      0.25 * s, (R[1, 0] - R[0, 1]) / s])
    if q[3] < 0:
        q = -q
    return quat_normalize(q)


def quat_log(q):
    """Rotation vector (axis * angle) of ``q``, angle in [0, pi]."""
    q = np.asarray(q, dtype=float)
    if q[3] < 0:
        q = -q
    v = q[:3]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v
    angle = 2.0 * np.arctan2(s, q[3])
    return v * (angle / s)


def quat_exp(rotvec):
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-12:
        return quat_normalize(np.array([0.5 * rotvec[0], 0.5 * rotvec[1], 0.5 * rotvec[2], 1.0]))
    axis = rotvec / angle
    s = np.sin(0.5 * angle)
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, np.cos(0.5 * angle)])


def rotation_log(R):
    """Rotation vector of a rotation matrix."""
    return quat_log(matrix_to_quat(R))


def rotation_exp(rotvec):
    """Rodrigues' formula."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(rotvec)
    if theta < 1e-12:
        return np.eye(3) + skew(rotvec)
    k = rotvec / theta
    K = skew(k)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def rpy_to_matrix(roll, pitch, yaw):
    """Fixed-axis X-Y-Z (URDF convention): R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


@dataclass(frozen=True)
class Pose:
    """Position in meters plus unit orientation quaternion."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = np.array(self.orientation, dtype=float).reshape(4)
        # keep already-unit quaternions bit-exact so text round trips are fixpoints
        if not abs(float(q @ q) - 1.0) <= 1e-15:  # written so that NaN fails too
            q = quat_normalize(q)
        if not np.all(np.isfinite(p)):
            raise ValueError(f"pose position must be finite, got {p}")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], matrix_to_quat(T[:3, :3]))

    @classmethod
    def from_rotation(cls, position, R) -> Pose:
        return cls(position, matrix_to_quat(R))

    @classmethod
    def from_values(cls, values) -> Pose:
        """Build from ``(x, y, z, qx, qy, qz, qw)``."""
        values = [float(v) for v in values]
        if len(values) != 7:
            raise ValueError(f"pose needs 7 values, got {len(values)}")
        return cls(values[:3], values[3:])

    def to_values(self) -> list[float]:
        return [*map(float, self.position), *map(float, self.orientation)]

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def inverse(self) -> Pose:
        R = self.rotation
        return Pose.from_rotation(-R.T @ self.position, R.T)

    def __mul__(self, other: Pose) -> Pose:
        R = self.rotation
        return Pose(self.position + R @ other.position,
                    quat_multiply(self.orientation, other.orientation))

    def transform_point(self, p) -> np.ndarray:
        return self.position + self.rotation @ np.asarray(p, dtype=float)

    def angle_to(self, other: Pose) -> float:
        """Shortest-arc rotation angle between the two orientations."""
        dq = quat_multiply(quat_conjugate(self.orientation), other.orientation)
        return 2.0 * float(np.arctan2(np.linalg.norm(dq[:3]), abs(dq[3])))

    def isclose(self, other: Pose, pos_tol: float = 1e-9, ang_tol: float = 1e-9) -> bool:
        return (np.linalg.norm(self.position - other.position) <= pos_tol
                and self.angle_to(other) <= ang_tol)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.position, other.position)
                and np.array_equal(self.orientation, other.orientation))

    def __hash__(self):
        return hash((tuple(self.position), tuple(self.orientation)))

    def __repr__(self):
        p = ", ".join(f"{v:.6g}" for v in self.position)
        q = ", ".join(f"{v:.6g}" for v in self.orientation)
        return f"Pose(position=[{p}], orientation=[{q}])"
