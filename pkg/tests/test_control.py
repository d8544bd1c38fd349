"""Compliant control laws: pose error, impedance torque, null space, FDCC, runtime setters."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from transkill import control as ctl, dynamics as dyn
from transkill.geometry import Pose, quat_exp

from helpers import PLANAR

M6 = dyn.load_model("generic6")
M7 = dyn.load_model("generic7")

_vec = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3).map(np.array)
_rot = st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3).map(quat_exp)
_pose = st.builds(Pose, _vec, _rot)


# ---------------------------------------------------------------- pose error
def test_pose_error_zero():
    p = Pose([0.1, 0.2, 0.3], quat_exp([0.3, -0.2, 1.0]))
    assert np.array_equal(ctl.pose_error(p, p), np.zeros(6))


def test_pose_error_quarter_turn():
    current = Pose([0.4, 0.0, 0.3])
    reference = Pose([0.4, 0.0, 0.3], quat_exp([0, 0, np.pi / 2]))
    err = ctl.pose_error(current, reference)
    np.testing.assert_allclose(err[:3], 0.0, atol=1e-15)
    np.testing.assert_allclose(np.abs(err[3:]), [0, 0, np.pi / 2], atol=1e-12)


@given(_pose, _pose)
def test_pose_error_matches_log_map(current, reference):
    err = ctl.pose_error(current, reference)
    Rc, Rr = current.rotation, reference.rotation
    expected_rot = Rotation.from_matrix(Rr.T @ Rc).as_rotvec()
    np.testing.assert_allclose(err[:3], Rc.T @ (current.position - reference.position), atol=1e-10)
    if np.linalg.norm(expected_rot) < np.pi - 1e-6:  # the axis flips at exactly pi
        np.testing.assert_allclose(err[3:], expected_rot, atol=1e-10)
    assert np.linalg.norm(err[3:]) <= np.pi + 1e-12


# ---------------------------------------------------------------- gains
def test_gains_validation():
    with pytest.raises(ValueError):
        ctl.ImpedanceGains(np.diag([1.0, 1, 1, 1, 1, -1]), np.zeros((6, 6)))
    A = np.eye(6)
    A[0, 1] = 1e-6
    with pytest.raises(ValueError):
        ctl.ImpedanceGains(A, np.zeros((6, 6)))
    with pytest.raises(ValueError):
        ctl.ImpedanceGains(np.eye(6), np.eye(6), k_ns=-1.0)
    g = ctl.ImpedanceGains.diagonal(400.0, 16.0)
    np.testing.assert_allclose(np.diag(g.damping), [40, 40, 40, 8, 8, 8])


def test_impedance_needs_six_joints():
    planar = dyn.parse_model(PLANAR)
    with pytest.raises(ValueError):
        ctl.impedance_torque(np.zeros(2), np.zeros(2), Pose(), ctl.ImpedanceGains.diagonal(1, 1), np.zeros(6), planar)
    with pytest.raises(ValueError):
        ctl.impedance_torque(np.full(7, np.nan), np.zeros(7), Pose(), ctl.ImpedanceGains.diagonal(1, 1),
                             np.zeros(6), M7)


def test_terms_superpose():
    rng = np.random.default_rng(3)
    q, qd = M7.home + rng.normal(size=7) * 0.1, rng.normal(size=7) * 0.2
    gains = ctl.ImpedanceGains.diagonal(800.0, 60.0, q_nullspace=M7.home, k_ns=10.0, d_ns=2.0)
    ref, w = Pose([0.5, 0.1, 0.4], quat_exp([np.pi, 0, 0])), rng.normal(size=6)
    tau_ca, tau_ns, tau_ext = ctl.impedance_terms(q, qd, ref, gains, w, M7)
    np.testing.assert_allclose(ctl.impedance_torque(q, qd, ref, gains, w, M7), tau_ca + tau_ns + tau_ext, atol=1e-12)
    J = dyn.jacobian(M7, q)
    np.testing.assert_allclose(tau_ext, J.T @ w, atol=1e-12)


@given(st.lists(st.floats(-2.0, 2.0), min_size=7, max_size=7), st.lists(st.floats(-10, 10), min_size=7, max_size=7))
def test_nullspace_projector_annihilates(q, v):
    J = dyn.jacobian(M7, np.array(q))
    if np.linalg.svd(J, compute_uv=False).min() < 1e-2:
        return  # only claimed at full rank
    v = np.array(v)
    assert np.linalg.norm(J @ ctl.nullspace_projector(J) @ v) <= 1e-3 * np.linalg.norm(v) + 1e-15


def test_zero_normal_stiffness_ignores_normal_error():
    q = M7.home
    ref = dyn.fk(M7, q)
    gains = ctl.ImpedanceGains.diagonal([1500, 1500, 0], 150)
    pushed = ref * Pose([0.0, 0.0, 0.02])  # reference moved along the tool z axis
    a = ctl.impedance_torque(q, np.zeros(7), ref, gains, np.zeros(6), M7)
    b = ctl.impedance_torque(q, np.zeros(7), pushed, gains, np.zeros(6), M7)
    np.testing.assert_allclose(a, b, atol=1e-9)


# ---------------------------------------------------------------- runtime setters
def _controller(ramp=0.2):
    gains = ctl.ImpedanceGains.diagonal(1500.0, 150.0)
    return ctl.ImpedanceController(M7, gains, dyn.fk(M7, M7.home), ramp)


def test_set_wrench_applies_transpose_jacobian():
    c = _controller()
    c.set_wrench([0, 0, 8.0, 0, 0, 0])
    c.update(1.0)
    c.update(1.2)
    assert c.ramp_done(1.2)
    q = M7.home
    tau = c.command(1.3, 1e-3, q, np.zeros(7))
    np.testing.assert_allclose(tau.tau, dyn.jacobian(M7, q).T @ np.array([0, 0, 8.0, 0, 0, 0]), atol=1e-9)


def test_stiffness_ramps_linearly():
    c = _controller()
    target = c.gains.with_stiffness([1500, 1500, 0, 150, 150, 150])
    c.set_stiffness(target)
    assert c.target_gains is target and not c.ramp_done(0.0)
    c.update(1.0)
    c.update(1.1)
    assert c.gains.stiffness[2, 2] == pytest.approx(750.0)
    c.update(1.2)
    assert c.gains.stiffness[2, 2] == 0.0 and c.ramp_done(1.2)


def test_identical_values_are_a_no_op():
    c = _controller()
    c.update(0.5)
    c.set_stiffness(c.gains)
    c.set_wrench(np.zeros(6))
    c.update(1.0)
    assert c.ramp_done(1.0)


def test_invalid_updates_rejected():
    c = _controller()
    with pytest.raises(ValueError):
        c.set_wrench([np.nan, 0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        c.set_wrench([1.0, 2.0])
    with pytest.raises(TypeError):
        c.set_stiffness(np.eye(6))
    with pytest.raises(ValueError):
        c.set_stiffness(ctl.ImpedanceGains(-np.eye(6), np.eye(6)))
    assert np.array_equal(c.target_wrench, np.zeros(6))


def test_interfaces_are_checked():
    gains = ctl.ImpedanceGains.diagonal(1000.0, 50.0)
    with pytest.raises(dyn.InterfaceError):
        ctl.ImpedanceController(M6, gains, Pose())
    with pytest.raises(dyn.InterfaceError):
        ctl.FdccController(M7, gains, Pose(), M7.home)


# ---------------------------------------------------------------- FDCC
def _fdcc_state(q=None):
    return ctl.FdccState(M6.home.copy() if q is None else q)


def test_fdcc_equilibrium():
    state = _fdcc_state()
    vm = M6.with_uniform_links(1.0, 0.01)
    ref = dyn.fk(vm, state.q)
    q0 = state.q.copy()
    q = ctl.fdcc_step(np.zeros(6), ref, q0, ctl.ImpedanceGains.diagonal(1000, 50), state, 1e-3, M6)
    assert np.array_equal(q, q0)


def test_fdcc_drifts_along_compliant_axis():
    state = _fdcc_state()
    start = dyn.fk(M6, state.q)
    gains = ctl.ImpedanceGains.diagonal([1000, 1000, 0], 50)
    q = state.q
    along = []
    for _ in range(300):
        q = ctl.fdcc_step([0, 0, -5.0, 0, 0, 0], start, q, gains, state, 1e-3, M6)
        along.append(start.rotation[:, 2] @ (dyn.fk(M6, q).position - start.position))
    # a constant force on a free mass: moves against tool z, faster and faster at first
    assert np.all(np.diff(along) < 0)
    assert along[-1] < -1e-4


def test_fdcc_converges_to_offset_reference():
    state = _fdcc_state()
    ref = dyn.fk(M6, state.q) * Pose([0.01, 0, 0])
    gains = ctl.ImpedanceGains.diagonal(1000.0, 50.0)
    q = state.q
    errors = []
    for _ in range(3000):
        q = ctl.fdcc_step(np.zeros(6), ref, q, gains, state, 1e-3, M6)
        errors.append(np.linalg.norm(dyn.fk(M6, q).position - ref.position))
    assert errors[-1] <= 1e-4
    assert max(errors[2000:]) <= 1e-4  # settled, not just passing through


def test_fdcc_divergence_is_a_fault():
    state = _fdcc_state()
    ref = dyn.fk(M6, state.q) * Pose([0.3, 0, 0])
    gains = ctl.ImpedanceGains.diagonal(1e6, 1e4)
    with pytest.raises(ctl.ControllerFault):
        for _ in range(100):
            ctl.fdcc_step(np.zeros(6), ref, state.q, gains, state, 1e-3, M6)
    with pytest.raises(ValueError):
        ctl.FdccState(M6.home, virtual_mass=0.0)


# ---------------------------------------------------------------- closed loop
@pytest.mark.parametrize("model", [M6, M7], ids=["fdcc", "impedance"])
def test_closed_loop_reaches_constant_reference(model):
    gains = ctl.ImpedanceGains.diagonal(1000.0, 50.0)
    ref = dyn.fk(model, model.home) * Pose([0.03, -0.02, 0.04])
    if model.accepts_torque:
        c = ctl.ImpedanceController(model, gains, ref)
    else:
        c = ctl.FdccController(model, gains, ref, model.home)
    sim = dyn.Simulator(model)
    for _ in range(5000):
        ft = sim.ft_reading() if model.wrist_ft else None
        sim.step(c.command(sim.state.t, sim.dt, sim.state.q, sim.state.qd, ft))
    assert np.linalg.norm(sim.tcp_pose().position - ref.position) <= 1e-3
    assert sim.state.fault is None
