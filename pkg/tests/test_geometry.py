"""Quaternions and poses, checked against scipy's rotation code."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from transkill.geometry import (Pose, matrix_to_quat, quat_exp, quat_log, quat_multiply, quat_normalize,
                                quat_to_matrix, rpy_to_matrix)

_q = st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1)
_rv = st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3).map(np.array)
_vec = st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3)


@given(_q, _vec)
def test_pose_normalizes_orientation(q, p):
    pose = Pose(p, q)
    assert abs(np.linalg.norm(pose.orientation) - 1.0) <= 1e-9


def test_degenerate_quaternion_rejected():
    with pytest.raises(ValueError):
        quat_normalize([0, 0, 0, 0])
    with pytest.raises(ValueError):
        Pose([0, 0, 0], [np.nan, 0, 0, 1])


@given(_q)
def test_quat_to_matrix_matches_scipy(q):
    q = quat_normalize(q)
    np.testing.assert_allclose(quat_to_matrix(q), Rotation.from_quat(q).as_matrix(), atol=1e-12)


@given(_q, _q)
def test_multiply_matches_matrix_product(a, b):
    a, b = quat_normalize(a), quat_normalize(b)
    np.testing.assert_allclose(quat_to_matrix(quat_multiply(a, b)), quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-12)


@given(_rv)
def test_exp_log_round_trip(rv):
    if np.linalg.norm(rv) >= np.pi - 1e-6:
        return  # the log is only unique below pi
    np.testing.assert_allclose(quat_log(quat_exp(rv)), rv, atol=1e-10)
    np.testing.assert_allclose(quat_to_matrix(quat_exp(rv)), Rotation.from_rotvec(rv).as_matrix(), atol=1e-12)


@given(_q, _vec)
def test_matrix_round_trip(q, p):
    pose = Pose(p, q)
    back = Pose.from_matrix(pose.matrix())
    assert back.isclose(pose, 1e-12, 1e-9)
    R = pose.rotation
    np.testing.assert_allclose(quat_to_matrix(matrix_to_quat(R)), R, atol=1e-12)


@given(_q, _vec, _q, _vec, _vec)
def test_composition_matches_matrices(q1, p1, q2, p2, x):
    a, b = Pose(p1, q1), Pose(p2, q2)
    np.testing.assert_allclose((a * b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)
    np.testing.assert_allclose((a.inverse() * a).matrix(), np.eye(4), atol=1e-12)
    np.testing.assert_allclose(a.transform_point(x), a.matrix()[:3, :3] @ x + a.position, atol=1e-12)


def test_rpy_convention():
    r, p, y = 0.3, -0.4, 1.2
    np.testing.assert_allclose(rpy_to_matrix(r, p, y), Rotation.from_euler("xyz", [r, p, y]).as_matrix(), atol=1e-15)


def test_angle_to_and_isclose():
    a = Pose([0, 0, 0])
    b = Pose([0, 0, 0], quat_exp([0, 0, 0.5]))
    assert a.angle_to(b) == pytest.approx(0.5, abs=1e-15)
    assert not a.isclose(b, 1.0, 0.4)
    assert a.isclose(b, 1.0, 0.6)
    assert Pose.from_values(a.to_values()) == a
    with pytest.raises(ValueError):
        Pose.from_values([1, 2, 3])
