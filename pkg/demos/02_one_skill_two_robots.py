"""
The same wipe skill on two different robots
============================================

A 7-DOF arm that takes joint torques runs an impedance controller. A
6-DOF arm that only takes joint positions runs forward dynamics
compliance control around its wrist force sensor. The wipe skill does
not know which one it is driving.

Each run simulates about a minute of wiping at 1 kHz, so expect this to
take a few minutes.
"""

import sys

from transkill import coverage as cov
from transkill.harness import Session, load_robot_scene

surface = sys.argv[1] if len(sys.argv) > 1 else "scalable:Workstation-1186"
goal = f"(skiros:clean {surface} scalable:Cell-12)"

streams = {}
for robot in ("7dof", "6dof"):
    scene = load_robot_scene(robot)
    session = Session(scene)
    print(robot, session.arm, "controller:", type(session.runtime.arm(session.arm).controller).__name__)

    result = session.run_goal(goal)
    print("  plan:", result.plan.names, "->", result.status)

    # coverage and force come from the logged contact wrench and tool path
    info = cov.surface_info(scene, surface, session.runtime.arm(session.arm).base)
    report, _, _ = cov.analyze(cov.log_data(session.run_log), info)
    print("  " + report.summary())
    streams[robot] = session.commands

# the abstract command streams are identical: only the controllers differ
print("identical command streams:", streams["7dof"] == streams["6dof"])
for command in streams["7dof"][:8]:
    print("  ", command)
