"""
Pressing on a surface with two compliant controllers
====================================================

Both controllers get the same request: no stiffness along the tool axis
and a constant 8 N push. The torque-commanded arm turns the wrench
straight into joint torques; the position-commanded arm integrates a
virtual robot driven by the force error and sends its joint positions.
"""

import numpy as np

from transkill import control as ctl
from transkill import dynamics as dyn
from transkill.geometry import Pose

force = 8.0
steps = 3000  # 3 s at 1 kHz


def surface_below(model, gap):
    # a flat patch facing the tool, `gap` metres in front of it
    tcp = dyn.fk(model, model.home)
    corner = tcp.position - tcp.rotation @ np.array([0.1, 0.1, -gap])
    return dyn.ContactSurface(Pose(corner, tcp.orientation), (0.2, 0.2))


def press(name, gap, normal_damping=50.0):
    model = dyn.load_model(name)
    sim = dyn.Simulator(model, surfaces=[surface_below(model, gap)])
    gains = ctl.ImpedanceGains.diagonal(1000.0, 50.0)
    start = dyn.fk(model, model.home)
    if model.accepts_torque:
        controller = ctl.ImpedanceController(model, gains, start)
    else:
        controller = ctl.FdccController(model, gains, start, model.home)

    # switch the tool axis to force control and push
    damping = np.diag(gains.damping).copy()
    damping[2] = normal_damping
    controller.set_stiffness(ctl.ImpedanceGains(np.diag([1000.0, 1000, 0, 100, 100, 100]), np.diag(damping)))
    controller.set_wrench([0, 0, force, 0, 0, 0])

    normal = []
    for _ in range(steps):
        ft = sim.ft_reading() if model.wrist_ft else None
        try:
            sim.step(controller.command(sim.state.t, sim.dt, sim.state.q, sim.state.qd, ft))
        except ctl.ControllerFault as exc:
            print(f"  {name}, gap {gap * 1000:.0f} mm: stopped after {sim.state.t:.2f} s ({exc})")
            return
        normal.append(-sim.wrench[2])  # the surface pushes back along -z of the tool
    normal = np.array(normal)
    print(f"  {name} ({type(controller).__name__}), gap {gap * 1000:.0f} mm: "
          f"mean force over the last second {normal[-1000:].mean():.2f} N, "
          f"spread {normal[-1000:].std():.3f} N")


# touching the surface before pushing, the way the wipe skill does it
print("starting in contact:")
for name in ("generic7", "generic6"):
    press(name, 0.0)

# a 5 mm gap means hitting the surface with some speed; both absorb it
print("pushing across a 5 mm gap:")
press("generic7", 0.005)
press("generic6", 0.005)

# why the change_stiffness skill keeps the old damping on an axis whose
# stiffness drops to zero: without it the admittance loop of the
# position-commanded arm keeps bouncing on the surface after the impact
# (the bounce grows; given a few more seconds the divergence guard trips)
print("same, with no damping along the tool axis:")
press("generic7", 0.005, normal_damping=0.0)
press("generic6", 0.005, normal_damping=0.0)
