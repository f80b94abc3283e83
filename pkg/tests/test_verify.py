import math

import numpy as np
import pytest

from priocoord.coordination import (EllipseSection, EmptySection, GoalRegion, PriorityGraph,
                                    StripSection, build_bounds)
from priocoord.geometry import PathGeometry
from priocoord.kinodynamics import KinodynamicModel, SystemState
from priocoord.planner import Decision, PlannerConfig, Trajectory, plan
from priocoord.verify import (braking_invariant_holds, braking_trajectory,
                              brute_force_shifted_membership, first_collision, left_greedy_oracle,
                              pair_sections, trajectory_collision_free)

M = KinodynamicModel(1.0, 0.05, -0.05)
CFG = PlannerConfig.for_robots(1.0, 1.0)
DISC = EllipseSection.disc(2.0)

# two orthogonal lanes crossing at coordinate 30 on both
H = PathGeometry.straight("h", (-30, 0), (30, 0))
V = PathGeometry.straight("v", (0, -30), (0, 30))
PATHS = {"h": H, "v": V}


def lane_state(robots):
    ids = tuple(robots)
    return SystemState(ids, [robots[r][1] for r in ids], [robots[r][2] for r in ids], (M,) * len(ids),
                       tuple(robots[r][0] for r in ids))


def test_single_robot_is_collision_free():
    s = lane_state({1: ("h", 0.0, 1.0)})
    traj = Trajectory(1.0, [s], [])
    assert trajectory_collision_free(traj, PATHS, 1.0, CFG.substep / 4) is None


def test_positive_control_same_point():
    s = lane_state({1: ("h", 25.0, 1.0), 2: ("v", 25.0, 1.0)})
    dec = {1: Decision.ACCELERATE, 2: Decision.ACCELERATE}
    traj = Trajectory(1.0, [s, s], [dec] * 10)
    traj.states = [s]
    traj.decisions = []
    cur = s
    from priocoord.kinodynamics import advance
    for _ in range(10):
        traj.decisions.append(dec)
        cur = advance(cur, [True, True], 1.0)
        traj.states.append(cur)
    viol = trajectory_collision_free(traj, PATHS, 1.0, CFG.substep / 4)
    assert viol is not None
    assert viol.pair == (1, 2)
    assert viol.distance < 2.0
    assert 3.0 < viol.time < 4.0  # discs first touch at 30 - sqrt(2) on both lanes


def test_first_collision_none_when_apart():
    x = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert first_collision((1, 2), ("h", "v"), x, PATHS, 1.0) is None


def test_braking_invariant_examples():
    g = PriorityGraph({1, 2}, {(1, 2)})
    b = build_bounds(g, {(1, 2): DISC}, CFG.eps)
    free = SystemState.from_robots({1: (-30.0, 0.0), 2: (-20.0, 0.0)}, M)
    assert braking_invariant_holds(free, g, b, CFG)
    unsafe = SystemState.from_robots({1: (-30.0, 0.0), 2: (-5.0, 1.0)}, M)
    assert not braking_invariant_holds(unsafe, g, b, CFG)


def test_braking_invariant_along_a_plan():
    secs = {(1, 2): DISC}
    g = PriorityGraph({1, 2}, {(2, 1)})
    b = build_bounds(g, secs, CFG.eps)
    s = SystemState.from_robots({1: (-13.0, 1.0), 2: (-22.0, 1.0)}, M)
    traj = plan(s, g, b, GoalRegion.from_sections([1, 2], secs), CFG)
    assert all(braking_invariant_holds(st, g, b, CFG) for st in traj.states)


def test_ics_witness():
    """A state passing the invariant has a collision-free all-brake future."""
    rng = np.random.default_rng(5)
    secs = {(1, 2): EllipseSection((30.0, 30.0), (1.0, 0.0, 1.0), 2.0)}
    g = PriorityGraph({1, 2}, {(1, 2)})
    b = build_bounds(g, secs, CFG.eps)
    checked = 0
    for _ in range(300):
        s = lane_state({1: ("h", rng.uniform(10, 40), rng.uniform(0, 1)),
                        2: ("v", rng.uniform(10, 40), rng.uniform(0, 1))})
        if np.any(s.x + s.v ** 2 / 0.1 > 60):
            continue
        if braking_invariant_holds(s, g, b, CFG):
            checked += 1
            # not starting inside the raw obstacle either
            if np.hypot(*(H.point_at(s.x[0]) - V.point_at(s.x[1]))) < 2.0:
                continue
            traj = braking_trajectory(s, CFG)
            assert trajectory_collision_free(traj, PATHS, 1.0, CFG.substep / 4) is None
    assert checked > 50


def test_brute_force_reproduces_examples():
    assert brute_force_shifted_membership(0.0, -1.0, DISC, 0.01)[0]
    assert not brute_force_shifted_membership(3.0, 5.0, DISC, 0.01)[0]
    assert not brute_force_shifted_membership(0.0, -2.5, DISC, 0.01)[0]
    assert not brute_force_shifted_membership(0.0, 0.0, EmptySection(), 0.01)[0]
    assert brute_force_shifted_membership(0.1, 0.2, DISC, 1.0)[0]  # a = b = 0 already inside


def test_brute_force_strip_needs_window():
    with pytest.raises(ValueError):
        brute_force_shifted_membership(0.0, 0.0, StripSection(0.0, 2.0, 2.0), 0.1)
    assert brute_force_shifted_membership(0.0, 0.0, StripSection(0.0, 2.0, 2.0), 0.1,
                                          window=(-5, 5, -5, 5))[0]


def test_left_greedy_no_conflicts():
    s = SystemState.from_robots({1: (0.0, 1.0), 2: (3.0, 1.0)}, M)
    xs = left_greedy_oracle(s, PriorityGraph({1, 2}), {}, 1.0, GoalRegion({1: 5.0, 2: 5.0}), 50)
    assert np.allclose(xs[1], [1.0, 4.0])
    assert np.allclose(xs[-1][0], 5.0)


def test_left_greedy_waits_at_last_safe_coordinate():
    secs = {(1, 2): DISC}
    g = PriorityGraph({1, 2}, {(1, 2)})
    b = build_bounds(g, secs)
    s = SystemState.from_robots({1: (-20.0, 1.0), 2: (-10.0, 1.0)}, M)
    xs = np.array(left_greedy_oracle(s, g, b, 1.0, GoalRegion({1: 2.0, 2: 2.0}), 100))
    # robot 2 reaches the disc's lower edge and holds there until robot 1 clears
    assert np.all(xs[8:22, 1] == -2.0)
    assert xs[22, 0] == 2.0 and xs[23, 1] == -1.0


def test_pair_sections_from_lane_table():
    table = {("h", "v"): DISC, ("h", "h"): StripSection(0.0, 2.0, 2.0), ("v", "v"): EmptySection()}
    out = pair_sections((1, 2, 3), {1: "h", 2: "v", 3: "v"}, table)
    assert set(out) == {(1, 2), (1, 3)}
    assert math.isclose(out[(1, 2)].center[0], 0.0)
