"""Task planning: goal parsing, domain and problem construction, optimal search, plan to tree."""
from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from transkill import planner as pl
from transkill.bt import Status
from transkill.skills import GroundingError, SkillRegistry
from transkill.skills_lib import default_registry

from conftest import CELL, TABLE, WHITEBOARD, clean_goal
from helpers import GRIPPERS, TOOL, brute_force_plan_length, hold_tool


def test_parse_goal_examples():
    assert pl.parse_goal("(skiros:contain skiros:Location-1 skiros:Product-1)") == {
        ("skiros:contain", "skiros:Location-1", "skiros:Product-1")}
    assert pl.parse_goal(clean_goal(WHITEBOARD)) == {("skiros:clean", WHITEBOARD, CELL)}
    assert pl.parse_goal("()") == frozenset()
    assert pl.parse_goal("") == frozenset()
    assert len(pl.parse_goal("(and (p a) (q b c))")) == 2


@pytest.mark.parametrize("text", ["(p a", "p a", "(not (p a))", "(p ?x)", "((p a) b)", "(p a))"])
def test_parse_goal_syntax_errors(text):
    with pytest.raises(pl.GoalSyntaxError):
        pl.parse_goal(text)


def test_empty_registry_gives_empty_domain():
    assert pl.build_domain(SkillRegistry()) == []


def test_domain_from_skill_library():
    warnings = []
    domain = {a.name: a for a in pl.build_domain(default_registry(), warnings)}
    wipe, pick = domain["wipe_surface"], domain["pick"]
    assert wipe.pre == {("skiros:hasA", "?arm", "?gripper"), ("skiros:contain", "?gripper", "?tool"),
                        ("skiros:at", "?arm", "?cell"), ("skiros:contain", "?cell", "?surface")}
    assert wipe.add == {("skiros:clean", "?surface", "?cell")}
    assert ("skiros:contain", "?gripper", "?tool") in pick.add
    assert ("skiros:contain", "?holder", "?tool") in pick.delete
    assert pick.assign == {("skiros:ContainerState", "?gripper", "Full")}
    # skills needing invented scalar values cannot be planned
    for name in ("apply_force", "goto_linear", "gripper_set"):
        assert name not in domain
        assert any(name in w for w in warnings)


@pytest.mark.parametrize("robot", ["6dof", "7dof"])
def test_plans_on_shipped_scenes(robot, request):
    scene = request.getfixturevalue(f"scene{robot[0]}")
    domain = pl.build_domain(default_registry())
    plan = pl.plan(domain, pl.build_problem(scene, clean_goal(TABLE), domain))
    assert plan.names == ["pick", "wipe_surface"]
    assert plan.actions[0].bindings["tool"] == TOOL
    hold_tool(scene, GRIPPERS[robot])
    plan = pl.plan(domain, pl.build_problem(scene, clean_goal(TABLE), domain))
    assert plan.names == ["wipe_surface"]


def test_goal_already_satisfied(scene7):
    domain = pl.build_domain(default_registry())
    goal = f"(skiros:contain {CELL} {WHITEBOARD})"
    assert len(pl.plan(domain, pl.build_problem(scene7, goal, domain))) == 0


def test_unknown_constant_and_unsolvable(scene7):
    domain = pl.build_domain(default_registry())
    with pytest.raises(pl.UnknownConstantError):
        pl.build_problem(scene7, "(skiros:clean x:Nowhere scalable:Cell-12)", domain)
    scene7.remove_relation(CELL, "skiros:contain", WHITEBOARD)
    with pytest.raises(pl.UnsolvableError):
        pl.plan(domain, pl.build_problem(scene7, clean_goal(WHITEBOARD), domain))


def test_plan_to_bt(scene7):
    registry = default_registry()
    empty = pl.plan_to_bt(pl.Plan([]), registry, scene7)
    assert empty.tick() is Status.SUCCESS
    domain = pl.build_domain(registry)
    plan = pl.plan(domain, pl.build_problem(scene7, clean_goal(WHITEBOARD), domain))
    tree = pl.plan_to_bt(plan, registry, scene7)
    assert tree.kind == "Sequence" and tree.memory
    assert [c.label() for c in tree.children] == ["Skill(pick:pick_top_grasp)",
                                                  "Skill(wipe_surface:wipe_surface_lanes)"]
    scene7.remove_relation("skiros:ToolHolder-20", "skiros:contain", TOOL)
    scene7.remove_element(TOOL)
    with pytest.raises(GroundingError):
        pl.plan_to_bt(plan, registry, scene7)


def test_pddl_export(scene6):
    domain = pl.build_domain(default_registry())
    d, p = pl.to_pddl(domain, pl.build_problem(scene6, clean_goal(WHITEBOARD), domain))
    assert "(:action pick" in d and "(:action wipe_surface" in d
    assert "(skiros_clean scalable_Workstation-1186 scalable_Cell-12)" in p
    assert d.count("(") == d.count(")") and p.count("(") == p.count(")")


# ---------------------------------------------------------------- properties
ATOMS = [("p", f"a{i}") for i in range(5)]
_atoms = st.frozensets(st.sampled_from(ATOMS), max_size=3)
_schema = st.tuples(_atoms, _atoms, _atoms)


@given(st.lists(_schema, min_size=1, max_size=4), st.frozensets(st.sampled_from(ATOMS), max_size=3),
       st.frozensets(st.sampled_from(ATOMS), min_size=1, max_size=3))
def test_plan_matches_brute_force(schemas, init, goal):
    domain = [pl.ActionSchema(f"act{i}", (), pre, add, delete) for i, (pre, add, delete) in enumerate(schemas)]
    problem = pl.PlanningProblem({}, init, goal)
    length, first = brute_force_plan_length(domain, problem, max_depth=4)
    try:
        plan = pl.plan(domain, problem)
    except pl.UnsolvableError:
        assert length is None
        return
    assert pl.validate_plan(problem, plan)
    if length is not None:
        assert len(plan) == length
        assert [str(a) for a in plan] == first  # lexicographic tie-break
    else:
        assert len(plan) > 4
    again = pl.plan(domain, problem)
    assert [str(a) for a in again] == [str(a) for a in plan]


def test_search_budget():
    atoms = [("p", f"a{i}") for i in range(12)]
    domain = [pl.ActionSchema(f"set{i}", (), frozenset(), frozenset([a]), frozenset()) for i, a in enumerate(atoms)]
    problem = pl.PlanningProblem({}, frozenset(), frozenset([("q", "never")]))
    with pytest.raises(pl.SearchBudgetExceeded):
        pl.plan(domain, problem, max_states=100)
