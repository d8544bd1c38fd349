"""Behavior trees: tick semantics, decorators, run loop and tree export."""
from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from transkill.bt import (Action, Constant, ForceSuccess, Invert, Parallel, Retry, Script, Selector,
                          Sequence, Status, TreeError, export_text, run_to_completion)

S, F, R = Status.SUCCESS, Status.FAILURE, Status.RUNNING


def test_empty_sequence_succeeds():
    assert Sequence([]).tick() is S


def test_selector_stops_at_first_success():
    a, b = Constant(F), Constant(S)
    assert Selector([a, b]).tick() is S
    assert (a.ticks, b.ticks) == (1, 1)


def test_parallel_example():
    second = Script([R, S])
    node = Parallel([Constant(S), second, Constant(F)], threshold=2)
    assert node.tick() is R
    assert node.tick() is S


def test_parallel_failure_halts_running_children():
    running = Script([R])
    node = Parallel([Constant(F), running, Constant(F)], threshold=2)
    assert node.tick() is F
    assert running.halted == 1


def test_parallel_threshold_bounds():
    with pytest.raises(TreeError):
        Parallel([Constant(S)], threshold=2)
    assert Parallel([Constant(F), Constant(F)], threshold=0).tick() is S


def test_memory_sequence_resumes():
    first, second = Constant(S), Script([R, R, S])
    seq = Sequence([first, second])
    assert [seq.tick() for _ in range(3)] == [R, R, S]
    assert first.ticks == 1 and second.ticks == 3
    assert seq.tick() is S  # memory was reset: a fresh episode
    assert first.ticks == 2


def test_memoryless_sequence_reticks_guard():
    guard, body = Constant(S), Script([R, R, S])
    seq = Sequence([guard, body], memory=False)
    for _ in range(3):
        seq.tick()
    assert guard.ticks == 3


def test_memoryless_selector_halts_lower_priority_child():
    flag = {"ok": False}
    guard = Action(lambda ctx: S if flag["ok"] else F)
    fallback = Script([R])
    sel = Selector([guard, fallback], memory=False)
    assert sel.tick() is R
    flag["ok"] = True
    assert sel.tick() is S
    assert fallback.halted == 1


def test_decorators():
    assert Invert(Constant(S)).tick() is F
    assert Invert(Constant(F)).tick() is S
    assert Invert(Script([R])).tick() is R
    assert ForceSuccess(Constant(F)).tick() is S
    with pytest.raises(TreeError):
        Invert([Constant(S), Constant(S)])


def test_retry():
    child = Script([F, F, S])
    node = Retry(child, 3)
    assert [node.tick() for _ in range(3)] == [R, R, S]
    node = Retry(Constant(F), 2)
    assert [node.tick() for _ in range(2)] == [R, F]
    with pytest.raises(TreeError):
        Retry(Constant(S), 0)


def test_malformed_trees():
    leaf = Constant(S)
    with pytest.raises(TreeError):
        Sequence([leaf, leaf])
    seq = Sequence([])
    seq.children.append(seq)
    with pytest.raises(TreeError):
        seq._check_acyclic()
    with pytest.raises(TreeError):
        Sequence(["not a node"])


def test_non_status_result_is_an_error():
    with pytest.raises(TypeError):
        Action(lambda ctx: True).tick()


def test_run_to_completion():
    res = run_to_completion(Script([R, R, S]), 100.0, 50)
    assert (res.status, res.ticks, res.budget_exhausted) == (S, 3, False)
    leaf = Script([R])
    res = run_to_completion(leaf, 100.0, 10)
    assert (res.status, res.ticks, res.budget_exhausted) == (F, 10, True)
    assert "budget" in res.diagnostic
    assert leaf.halted == 1
    with pytest.raises(ValueError):
        run_to_completion(leaf, 0.0, 10)


def test_between_ticks_gets_the_period():
    periods = []
    run_to_completion(Script([R, R, S]), 50.0, 10, between_ticks=periods.append)
    assert periods == [0.02, 0.02]


def test_export_text():
    tree = Sequence([Constant(S, name="a"), Parallel([Constant(F, name="b")], 1)], name="root")
    tree.tick()
    assert export_text(tree) == ("Sequence(root) [Failure]\n"
                                 "  Constant(a) [Success]\n"
                                 "  Parallel[1] [Failure]\n"
                                 "    Constant(b) [Failure]\n")


# ---------------------------------------------------------------- properties
def _tree(leaves, with_retry=True):
    composites = [lambda cs: Sequence(cs), lambda cs: Selector(cs),
                  lambda cs: Sequence(cs, memory=False), lambda cs: Selector(cs, memory=False)]

    def extend(children):
        kids = st.lists(children, min_size=1, max_size=3)
        options = [st.tuples(st.sampled_from(composites), kids).map(lambda t: t[0](t[1])),
                   kids.flatmap(lambda cs: st.integers(0, len(cs)).map(lambda k: Parallel(cs, k))),
                   children.map(Invert), children.map(ForceSuccess)]
        if with_retry:
            options.append(st.tuples(children, st.integers(1, 3)).map(lambda t: Retry(*t)))
        return st.one_of(*options)

    return st.recursive(leaves, extend, max_leaves=8)


_finished = st.sampled_from([S, F]).map(Constant)
_scripts = st.lists(st.sampled_from([S, F, R]), min_size=1, max_size=4).map(Script)


@given(_tree(_finished, with_retry=False), st.integers(1, 4))
def test_no_running_leaf_never_running(tree, ticks):
    for _ in range(ticks):
        assert tree.tick() is not R


@given(_tree(_scripts), st.integers(1, 6))
def test_leaf_ticks_bounded_by_tree_size(tree, ticks):
    leaves = [n for n in tree.walk() if not n.children]
    for _ in range(ticks):
        before = sum(leaf.ticks for leaf in leaves)
        tree.tick()
        assert sum(leaf.ticks for leaf in leaves) - before <= len(tree)


@given(st.lists(st.lists(st.sampled_from([S, R]), min_size=1, max_size=4), min_size=1, max_size=5))
def test_memory_sequence_never_reticks_succeeded_child(scripts):
    children = [Script(s + [S]) for s in scripts]
    seq = Sequence(children)
    done = set()
    for _ in range(40):
        before = [c.ticks for c in children]
        status = seq.tick()
        for i, c in enumerate(children):
            if i in done:
                assert c.ticks == before[i]
            if c.status is S and c.ticks > before[i]:
                done.add(i)
        if status is not R:
            break
    assert status is S
