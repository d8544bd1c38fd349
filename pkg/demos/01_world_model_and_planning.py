"""
From a scene description to an executable plan
===============================================

The world model knows what is in the cell, the planner turns a goal into
a sequence of skills, and the sequence becomes a behavior tree.
"""

from transkill import planner as pl
from transkill.bt import export_text
from transkill.harness import load_robot_scene, plan_goal
from transkill.skills import SkillContext
from transkill.skills_lib import default_registry

# load the shipped scene of the torque-commanded 7-DOF arm
scene = load_robot_scene("7dof")
print(len(scene), "elements")

# every wipeable surface, found through the concept hierarchy
for e in scene.query_by_concept("scalable:WipeSurface"):
    print(e.id, e.label, e.get("scalable:WipeForce"), "N")

# where is the whiteboard in the world frame?
board = "scalable:Workstation-1186"
print(scene.resolve_world_pose(board))

# the eraser starts in its holder, so cleaning needs a pick first
goal = f"(skiros:clean {board} scalable:Cell-12)"
plan = plan_goal(scene, goal)
print(plan)

# the same problem as PDDL, for use with an external planner
registry = default_registry()
domain = pl.build_domain(registry)
domain_text, problem_text = pl.to_pddl(domain, pl.build_problem(scene, goal, domain))
print(domain_text[:400], "...")

# the executable tree: skills are grounded and implementations selected
tree = pl.plan_to_bt(plan, registry, scene, SkillContext(scene, registry=registry))
print(export_text(tree)[:1500])
