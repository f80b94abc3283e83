import math

import numpy as np
import pytest

from priocoord import kernels
from priocoord.coordination import (EllipseSection, EmptySection, GoalRegion, PriorityGraph,
                                    build_bounds, induced_priority_graph)
from priocoord.kinodynamics import KinodynamicModel, SystemState, braking_state, max_state
from priocoord.planner import (DeadlockDetected, Decision, InitialStateUnsafe, PlannerConfig,
                               StepLimitExceeded, check_initial, decide, decide_all,
                               detect_deadlock, find_braking_violation, plan, step,
                               virtual_path)

M = KinodynamicModel(1.0, 0.05, -0.05)
CFG = PlannerConfig.for_robots(1.0, 1.0)
DISC = EllipseSection.disc(2.0)


def two_robot(x2, v2=1.0, x1=-30.0, v1=0.0):
    s = SystemState.from_robots({1: (x1, v1), 2: (x2, v2)}, M)
    g = PriorityGraph({1, 2}, {(1, 2)})
    return s, g, build_bounds(g, {(1, 2): DISC}, CFG.eps)


def test_config_validation():
    assert CFG.eps == 0.5 and CFG.substeps == 4
    with pytest.raises(ValueError):
        PlannerConfig(1.0, 0.3, 0.6)
    with pytest.raises(ValueError):
        PlannerConfig(1.0, 2.0, 0.6)
    with pytest.raises(ValueError):
        PlannerConfig(1.0, 0.5, -1.0)


def test_virtual_path_single_robot():
    s = SystemState.from_robots({1: (0.0, 0.5)}, M)
    vp = virtual_path(s, 1, CFG)
    assert vp.shape[1] == 1
    x1, v1 = max_state(s.robot(1), M, 1.0)
    assert math.isclose(vp[CFG.substeps, 0], x1)
    assert math.isclose(vp[-1, 0], x1 + v1 * v1 / 0.1)
    assert np.all(np.diff(vp[:, 0]) >= 0)


def test_virtual_path_all_stopped_collapses():
    s = SystemState.from_robots({1: (0.0, 0.0), 2: (4.0, 0.0)}, M)
    vp = virtual_path(s, 2, CFG)
    # only robot 2 moves during the step, then it brakes from 0.05 back to rest
    assert np.all(vp[:, 0] == 0.0)
    assert math.isclose(vp[-1, 1], 4.0 + 0.025 + 0.05 ** 2 / 0.1)


def test_virtual_path_example():
    s = SystemState.from_robots({1: (0.0, 1.0), 2: (0.0, 1.0)}, M)
    vp = virtual_path(s, 1, CFG)
    assert vp[CFG.substeps, 0] == 1.0
    assert math.isclose(vp[CFG.substeps, 1], 0.975)
    assert math.isclose(vp[-1, 0], 11.0)
    assert math.isclose(vp[-1, 1], 10.0)


def test_decide_brake_and_accelerate():
    s, g, b = two_robot(-12.0)
    assert decide(s, 2, g, b, CFG) is Decision.BRAKE
    s, g, b = two_robot(-20.0)
    assert decide(s, 2, g, b, CFG) is Decision.ACCELERATE


def test_no_incoming_edges_accelerates():
    s, g, b = two_robot(-12.0)
    assert decide(s, 1, g, b, CFG) is Decision.ACCELERATE


def test_step_brake_drops_velocity():
    s, g, b = two_robot(-12.0)
    n, dec = step(s, g, b, CFG)
    assert dec == {1: Decision.ACCELERATE, 2: Decision.BRAKE}
    assert math.isclose(n.v[1], 0.95)
    assert math.isclose(n.x[1], braking_state(s.robot(2), M, 1.0).x)


def test_step_free_robot_advances_by_max_state():
    s = SystemState.from_robots({1: (0.0, 0.3)}, M)
    n, _ = step(s, PriorityGraph({1}), {}, CFG)
    assert np.allclose(n.robot(1), max_state(s.robot(1), M, 1.0))


def test_empty_section_pair_both_accelerate():
    s = SystemState.from_robots({1: (0.0, 0.0), 2: (0.0, 0.0)}, M)
    g = PriorityGraph({1, 2}, {(1, 2)})
    b = build_bounds(g, {(1, 2): EmptySection()}, CFG.eps)
    assert decide_all(s, g, b, CFG).all()


def test_plan_single_robot():
    s = SystemState.from_robots({1: (-12.0, 0.0)}, M)
    traj = plan(s, PriorityGraph({1}), {}, GoalRegion({1: 2.0}), CFG)
    assert len(traj) == 24
    assert traj.states[-1].x[0] >= 2.0 and traj.states[-2].x[0] < 2.0


def test_plan_already_in_goal():
    s = SystemState.from_robots({1: (5.0, 0.0)}, M)
    traj = plan(s, PriorityGraph({1}), {}, GoalRegion({1: 2.0}), CFG)
    assert len(traj) == 0 and len(traj.states) == 1


def test_plan_respects_priority():
    s = SystemState.from_robots({1: (-12.0, 0.5), 2: (-20.0, 1.0)}, M)
    g = PriorityGraph({1, 2}, {(1, 2)})
    secs = {(1, 2): DISC}
    b = build_bounds(g, secs, CFG.eps)
    traj = plan(s, g, b, GoalRegion.from_sections([1, 2], secs), CFG)
    induced = induced_priority_graph(traj.positions(), secs)
    assert induced.edges == {(1, 2)}
    # states follow the decisions exactly
    for a, d, c in zip(traj.states, traj.decisions, traj.states[1:]):
        for r in a.ids:
            f = max_state if d[r] is Decision.ACCELERATE else braking_state
            assert np.allclose(c.robot(r), f(a.robot(r), M, 1.0), atol=1e-9)


def test_plan_is_deterministic():
    s = SystemState.from_robots({1: (-9.0, 0.7), 2: (-11.0, 1.0)}, M)
    g = PriorityGraph({1, 2}, {(2, 1)})
    secs = {(1, 2): DISC}
    b = build_bounds(g, secs, CFG.eps)
    goal = GoalRegion.from_sections([1, 2], secs)
    t1 = plan(s, g, b, goal, CFG)
    t2 = plan(s, g, b, goal, CFG)
    assert all(np.array_equal(a.x, c.x) and np.array_equal(a.v, c.v)
               for a, c in zip(t1.states, t2.states))


def test_check_initial():
    s = SystemState.from_robots({1: (-30.0, 0.0), 2: (-20.0, 0.0)}, M)
    g = PriorityGraph({1, 2}, {(1, 2)})
    check_initial(s, g, build_bounds(g, {(1, 2): DISC}, CFG.eps), CFG)
    s, g, b = two_robot(-5.0)
    with pytest.raises(InitialStateUnsafe) as exc:
        check_initial(s, g, b, CFG)
    assert exc.value.edge == (1, 2)
    # no edges, nothing to violate
    check_initial(s, PriorityGraph({1, 2}), {}, CFG)


def test_step_limit():
    s = SystemState.from_robots({1: (-12.0, 0.0)}, M)
    cfg = PlannerConfig(1.0, 0.25, 0.5, max_steps=5)
    with pytest.raises(StepLimitExceeded):
        plan(s, PriorityGraph({1}), {}, GoalRegion({1: 2.0}), cfg)


def test_detect_deadlock_cases():
    a = SystemState.from_robots({1: (0.0, 0.0)}, M)
    moving = SystemState.from_robots({1: (0.0, 0.5)}, M)
    assert not detect_deadlock(moving, step(moving, PriorityGraph({1}), {}, CFG)[0], False)
    assert detect_deadlock(a, a, False)
    assert not detect_deadlock(a, a, True)


def three_cycle():
    """Robots 1 > 2 > 3 > 1, each stopped before its near conflict (at 10) with the
    robot it yields to; that robot's side of the same conflict is at 22."""
    secs = {(1, 2): EllipseSection((22.0, 10.0), (1.0, 0.0, 1.0), 2.0),
            (2, 3): EllipseSection((22.0, 10.0), (1.0, 0.0, 1.0), 2.0),
            (3, 1): EllipseSection((22.0, 10.0), (1.0, 0.0, 1.0), 2.0)}
    g = PriorityGraph({1, 2, 3}, set(secs))
    s = SystemState.from_robots({1: (0.0, 0.0), 2: (0.0, 0.0), 3: (0.0, 0.0)}, M)
    return s, g, secs


def test_three_cycle_deadlocks():
    s, g, secs = three_cycle()
    b = build_bounds(g, secs, CFG.eps)
    with pytest.raises(DeadlockDetected) as exc:
        plan(s, g, b, GoalRegion.from_sections([1, 2, 3], secs), CFG)
    assert exc.value.step < 1000
    assert np.all(exc.value.state.v == 0.0)
    assert np.all(exc.value.state.x < 10.0 - 2.5)


def test_braking_violation_time_and_margin():
    s, g, b = two_robot(-5.0)
    v = find_braking_violation(s, g, b, CFG)
    assert v.edge == (1, 2) and 0.0 < v.time < 10.0
    s, g, b = two_robot(-20.0)
    assert find_braking_violation(s, g, b, CFG, margin=1e-9) is None


@pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernels not built")
def test_backends_give_same_trajectory():
    s, g, secs = three_cycle()
    s = SystemState.from_robots({1: (0.0, 0.3), 2: (-3.0, 1.0), 3: (1.0, 0.6)}, M)
    g = PriorityGraph({1, 2, 3}, {(1, 2), (2, 3)})
    b = build_bounds(g, secs, CFG.eps)
    goal = GoalRegion.from_sections([1, 2, 3], secs)
    before = kernels.BACKEND
    try:
        kernels.use("python")
        t_py = plan(s, g, b, goal, CFG)
        kernels.use("compiled")
        t_c = plan(s, g, b, goal, CFG)
    finally:
        kernels.use(before)
    assert len(t_py) == len(t_c)
    assert all(np.array_equal(a.x, c.x) for a, c in zip(t_py.states, t_c.states))
