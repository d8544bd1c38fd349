"""Independent oracles and scene tweaks shared by several test files."""
from __future__ import annotations

import itertools

import numpy as np

GRIPPERS = {"6dof": "scalable:WsgGripper-3", "7dof": "scalable:RobotiqGripper-6"}
ARMS = {"6dof": "scalable:Ur5-2", "7dof": "scalable:Iiwa-5"}
TOOL = "scalable:Eraser-21"
HOLDER = "skiros:ToolHolder-20"


def hold_tool(scene, gripper):
    """Scene variant in which the eraser already sits in ``gripper``."""
    scene.remove_relation(HOLDER, "skiros:contain", TOOL)
    scene.add_relation(gripper, "skiros:contain", TOOL)
    scene.set_property(gripper, "skiros:ContainerState", "Full")
    return scene


def _apply(state, action):
    s = set(state) - set(action.delete)
    for pred, subj, value in action.assign:
        s = {f for f in s if not (f[0] == pred and len(f) == 3 and f[1] == subj)}
        s.add((pred, subj, value))
    return frozenset(s | set(action.add))


def brute_force_plan_length(domain, problem, max_depth=4):
    """Optimal plan length and the lexicographically first optimal plan, by
    exhaustive enumeration of all action sequences up to ``max_depth``
    (iterative deepening, no duplicate detection)."""
    actions = []
    for schema in domain:
        pools = [problem.typed.get(t, []) for _, t in schema.params]
        actions += [schema.ground(args) for args in itertools.product(*pools)]
    actions.sort(key=str)  # product() then yields sequences in lexicographic order
    for depth in range(max_depth + 1):
        for seq in itertools.product(actions, repeat=depth):
            state = problem.init
            ok = True
            for a in seq:
                if not set(a.pre) <= state:
                    ok = False
                    break
                state = _apply(state, a)
            if ok and problem.goal <= state:
                return depth, [str(a) for a in seq]
    return None, None


def unlimited(model):
    """Same robot without joint limits (the limit clamp removes energy by design)."""
    from dataclasses import replace

    return replace(model, joints=[replace(j, lower=-np.inf, upper=np.inf) for j in model.joints])


def homogeneous(position, R):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = position
    return T


def fd_jacobian_tcp(model, q, fk, h=1e-6):
    """Central-difference geometric Jacobian expressed in the TCP frame."""
    q = np.asarray(q, dtype=float)
    T0 = fk(model, q).matrix()
    R0 = T0[:3, :3]
    J = np.zeros((6, len(q)))
    for i in range(len(q)):
        dq = np.zeros(len(q))
        dq[i] = h
        Tp, Tm = fk(model, q + dq).matrix(), fk(model, q - dq).matrix()
        J[:3, i] = R0.T @ (Tp[:3, 3] - Tm[:3, 3]) / (2 * h)
        W = R0.T @ (Tp[:3, :3] - Tm[:3, :3]) / (2 * h)  # skew(omega) up to O(h^2)
        J[3:, i] = 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])
    return J


PLANAR = """
name planar2
interface torque
tool xyz 0.3 0 0 rpy 0 0 0
joint j1 axis 0 0 1 xyz 0 0 0   rpy 0 0 0 mass 1.0 com 0.25 0 0 inertia 0.01 0.02 0.02
joint j2 axis 0 0 1 xyz 0.5 0 0 rpy 0 0 0 mass 0.5 com 0.15 0 0 inertia 0.005 0.01 0.01
"""
