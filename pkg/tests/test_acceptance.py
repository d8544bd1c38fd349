"""Acceptance suite: one pass/fail test per acceptance criterion.

The first three criteria share the four full wiping runs of the
``wipe_runs`` fixture (two robots x two surfaces, run through the CLI).
"""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from transkill import bt, control as ctl, dynamics as dyn
from transkill import planner as pl
from transkill.coverage import path_coverage
from transkill.geometry import Pose, quat_exp
from transkill.harness import load_robot_scene
from transkill.runtime import SimRuntime
from transkill.skills_lib import default_registry, lane_raster
from transkill.trajectory import (OverlayKind, OverlaySpec, TrajConfig, TrajectoryGenerator,
                                  overlay_offset, plan_linear)

from conftest import ROBOTS, SURFACES, clean_goal
from helpers import ARMS, GRIPPERS, brute_force_plan_length, fd_jacobian_tcp, hold_tool, unlimited

SETPOINTS = {"whiteboard": 8.0, "table": 18.0}
FORCE_TOL = 0.15
RUNTIME_BUDGET = 180.0  # s wall clock per run
RUN_CASES = [(r, s) for r in ROBOTS for s in SURFACES]


# ---------------------------------------------------------------- skill transfer
@pytest.mark.slow
@pytest.mark.parametrize("surface", sorted(SURFACES))
def test_skill_transfer_headline(wipe_runs, surface):
    """The same wipe skill succeeds on the 7-DOF impedance robot and the
    6-DOF FDCC robot with equal abstract command streams, within budget."""
    kinds = {r: SimRuntime.for_arm(load_robot_scene(r), ARMS[r]).arm(ARMS[r]).kind for r in ROBOTS}
    assert kinds == {"7dof": "impedance", "6dof": "fdcc"}
    runs = [wipe_runs[r, surface] for r in ROBOTS]
    for run in runs:
        assert run.code == 0, run.stdout
        assert "wipe_surface" in run.plan
        assert run.wall <= RUNTIME_BUDGET, f"{run.robot} took {run.wall:.0f} s"
    assert runs[0].commands == runs[1].commands
    for command in ("goto_linear", "change_stiffness", "apply_force", "overlay"):
        assert command in runs[0].commands


# ---------------------------------------------------------------- force regulation
@pytest.mark.slow
@pytest.mark.parametrize("robot,surface", RUN_CASES)
def test_force_regulation(wipe_runs, robot, surface):
    report = wipe_runs[robot, surface].report
    assert report["force_setpoint"] == SETPOINTS[surface]
    assert abs(report["force_mean"] - SETPOINTS[surface]) <= FORCE_TOL * SETPOINTS[surface]


# ---------------------------------------------------------------- coverage
@pytest.mark.slow
@pytest.mark.parametrize("robot,surface", RUN_CASES)
def test_simulated_coverage(wipe_runs, robot, surface):
    assert wipe_runs[robot, surface].report["coverage"] >= 0.95


@pytest.mark.parametrize("surface", sorted(SURFACES.values()))
def test_geometric_coverage_of_reference_raster(surface):
    e = load_robot_scene("7dof").element(surface)
    w, h = float(e.get("scalable:Width")), float(e.get("scalable:Height"))
    r, overlap = float(e.get("scalable:FootprintRadius")), float(e.get("scalable:LaneOverlap"))
    waypoints = lane_raster(w, h, r, overlap)
    assert path_coverage(waypoints, w, h, r) >= 0.999


# ---------------------------------------------------------------- planning
def _plan(scene, goal):
    domain = pl.build_domain(default_registry(), [])
    problem = pl.build_problem(scene, goal, domain)
    return domain, problem, pl.plan(domain, problem)


@pytest.mark.parametrize("robot", ROBOTS)
def test_planning_pick_then_wipe(robot):
    domain, problem, plan = _plan(load_robot_scene(robot), clean_goal(SURFACES["whiteboard"]))
    assert plan.names == ["pick", "wipe_surface"]
    length, _ = brute_force_plan_length(domain, problem, max_depth=3)
    assert len(plan) == length
    assert pl.validate_plan(problem, plan)


@pytest.mark.parametrize("robot", ROBOTS)
def test_planning_tool_held_gives_wipe_only(robot):
    scene = hold_tool(load_robot_scene(robot), GRIPPERS[robot])
    domain, problem, plan = _plan(scene, clean_goal(SURFACES["table"]))
    assert plan.names == ["wipe_surface"]
    length, _ = brute_force_plan_length(domain, problem, max_depth=2)
    assert len(plan) == length == 1


# ---------------------------------------------------------------- impedance law
class _IdentityKinematics:
    """Stand-in kinematics with J = I at the identity pose."""

    def jacobian_tcp(self):
        return np.eye(6)

    def pose(self):
        return Pose()


def test_impedance_examples():
    m7 = dyn.load_model("generic7")
    q = m7.home
    gains = ctl.ImpedanceGains.diagonal(1500.0, 150.0, q_nullspace=q, k_ns=10.0, d_ns=2.0)
    tau = ctl.impedance_torque(q, np.zeros(7), dyn.fk(m7, q), gains, np.zeros(6), m7)
    assert np.max(np.abs(tau)) <= 1e-10

    m6 = dyn.load_model("generic6")
    K = np.diag([100.0, 0, 0, 0, 0, 0])
    gains = ctl.ImpedanceGains(K, np.zeros((6, 6)))
    # current pose is the identity; the reference sits 1 cm behind along x
    tau = ctl.impedance_torque(np.zeros(6), np.zeros(6), Pose([-0.01, 0, 0]), gains, np.zeros(6), m6,
                               kin=_IdentityKinematics())
    np.testing.assert_allclose(tau, [-1.0, 0, 0, 0, 0, 0], rtol=0, atol=1e-10)

    gains = ctl.ImpedanceGains(np.zeros((6, 6)), np.zeros((6, 6)))
    tau = ctl.impedance_torque(np.zeros(6), np.zeros(6), Pose(), gains, [0, 0, 10.0, 0, 0, 0], m6,
                               kin=_IdentityKinematics())
    np.testing.assert_allclose(tau, [0, 0, 10.0, 0, 0, 0], rtol=0, atol=1e-10)


def test_impedance_virtual_work_consistency():
    rng = np.random.default_rng(7)
    model = dyn.load_model("generic7")
    for _ in range(100):
        q = rng.uniform(model.lower, model.upper)
        ref = Pose(rng.normal(size=3) * 0.3, quat_exp(rng.normal(size=3)))
        A = rng.normal(size=(6, 6))
        K = A @ A.T
        gains = ctl.ImpedanceGains(K, np.zeros((6, 6)))
        tau = ctl.impedance_torque(q, np.zeros(7), ref, gains, np.zeros(6), model)
        dq = rng.normal(size=7)
        dxi = ctl.pose_error(dyn.fk(model, q), ref)
        rhs = -dxi @ K @ dyn.jacobian(model, q) @ dq
        assert abs(tau @ dq - rhs) <= 1e-8 * max(1.0, abs(rhs))


# ---------------------------------------------------------------- dynamics
@pytest.mark.parametrize("name", ["generic6", "generic7"])
def test_dynamics_validity(name):
    rng = np.random.default_rng(11)
    model = dyn.load_model(name)
    for _ in range(100):
        q = rng.uniform(model.lower, model.upper)
        np.testing.assert_allclose(dyn.jacobian(model, q), fd_jacobian_tcp(model, q, dyn.fk), rtol=0, atol=1e-6)
        M = dyn.mass_matrix(model, q)
        assert np.max(np.abs(M - M.T)) <= 1e-12 * np.max(np.abs(M))
        assert np.linalg.eigvalsh(M).min() > 0

    # passive energy: zero torque, gravity compensated away, no contact, 10 s
    free = unlimited(model).with_interface(dyn.TorqueInterface())
    state = dyn.SimState(free.home.copy(), rng.normal(size=free.n) * 0.2)
    e0 = dyn.kinetic_energy(free, state.q, state.qd)
    cmd = dyn.JointTorque(np.zeros(free.n))
    for _ in range(10_000):
        state, _ = dyn.step(free, state, cmd, dt=1e-3)
    assert state.fault is None
    assert abs(dyn.kinetic_energy(free, state.q, state.qd) - e0) <= 0.005 * e0


# ---------------------------------------------------------------- trajectory generator
def test_trajectory_generator():
    traj = plan_linear(Pose(), Pose([1.0, 0, 0]), TrajConfig(v_max=0.5, a_max=1.0))
    assert abs(traj.duration - 2.5) <= 1e-9
    ts = np.linspace(0, traj.duration, 250_001)
    speed = np.array([traj.translation(t)[1] for t in ts])
    travelled = np.sum(0.5 * (speed[1:] + speed[:-1]) * np.diff(ts))
    assert abs(travelled - 1.0) <= 1e-6

    # 0.1 m + 170 degrees: rotation dominates, translation is stretched to match
    cfg = TrajConfig()
    angle = np.radians(170.0)
    goal = Pose([0.1, 0, 0], quat_exp([0, 0, angle]))
    traj = plan_linear(Pose(), goal, cfg)
    t_rot = angle / cfg.w_max + cfg.w_max / cfg.alpha_max
    t_trans = 0.1 / cfg.v_max + cfg.v_max / cfg.a_max
    assert t_rot > t_trans
    assert abs(traj.duration - t_rot) <= 1e-9
    assert abs(traj.translation_duration - traj.rotation_duration) <= 1e-9
    assert abs(traj.translation(traj.duration)[0] - 0.1) <= 1e-9
    assert traj.translation(traj.duration - 1e-3)[0] < 0.1

    # overlay: exactly zero offset at activation for every kind
    gen = TrajectoryGenerator(Pose([0.4, 0.1, 0.3]))
    gen.set_goal(Pose([0.6, 0.1, 0.3]), 0.0)
    for kind, now in itertools.product(list(OverlayKind)[1:], [0.0, 0.37, 1.5]):
        spec = OverlaySpec(kind, amplitude=0.01, frequency=1.3, pitch=0.004, normal=(0, 0, 1))
        assert np.all(overlay_offset(spec, 0.0) == 0.0)
        gen.set_overlay(spec, now)
        assert np.array_equal(gen.reference(now).pose.position, gen.path_reference(now).pose.position)


# ---------------------------------------------------------------- behavior trees
def _parallel_oracle(statuses, threshold):
    s = statuses.count(bt.Status.SUCCESS)
    f = statuses.count(bt.Status.FAILURE)
    if s >= threshold:
        return bt.Status.SUCCESS
    if len(statuses) - f < threshold:
        return bt.Status.FAILURE
    return bt.Status.RUNNING


def test_parallel_matches_brute_force_table():
    checked = 0
    for k in range(1, 5):
        for threshold in range(k + 1):
            for statuses in itertools.product(list(bt.Status), repeat=k):
                node = bt.Parallel([bt.Constant(s) for s in statuses], threshold)
                assert node.tick() is _parallel_oracle(list(statuses), threshold), (statuses, threshold)
                checked += 1
    assert checked == sum((k + 1) * 3**k for k in range(1, 5))
