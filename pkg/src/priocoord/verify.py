"""Independent checks of planner output.

The geometric checker works from planar disc positions only and never touches the
cross-section machinery, so a bug there cannot hide a collision here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .coordination import CrossSection, PriorityGraph, induced_priority_graph, oriented
from .kinodynamics import SystemState, braking_positions, max_positions
from .planner import Decision, PlannerConfig, Trajectory, find_braking_violation


@dataclass(frozen=True)
class CollisionViolation:
    time: float
    pair: tuple
    distance: float


def interval_positions(s: SystemState, accelerate, dt: float, fine: float) -> tuple[np.ndarray, np.ndarray]:
    """Curvilinear positions during one step, sampled every ``fine``: ``(times, x[n, S])``."""
    nsub = max(1, int(math.ceil(dt / fine - 1e-9)))
    tau = np.linspace(0.0, dt, nsub + 1)
    acc = np.asarray(accelerate, dtype=bool)[:, None]
    xb, _ = braking_positions(s.x[:, None], s.v[:, None], s.a_min[:, None], tau[None, :])
    xm, _ = max_positions(s.x[:, None], s.v[:, None], s.v_max[:, None], s.a_max[:, None], tau[None, :])
    return tau, np.where(acc, xm, xb)


def first_collision(ids, lanes, x: np.ndarray, paths: Mapping, radius: float):
    """First ``(sample, i, j, distance)`` at which two discs overlap; ``x`` is ``(n, S)``."""
    n = len(ids)
    if n < 2:
        return None
    pts = np.empty(x.shape + (2,))
    for k, lane in enumerate(lanes):
        pts[k] = paths[lane].points_at(x[k])
    d = np.hypot(pts[:, None, :, 0] - pts[None, :, :, 0], pts[:, None, :, 1] - pts[None, :, :, 1])
    iu, ju = np.triu_indices(n, 1)
    dd = d[iu, ju]  # (pairs, S)
    bad = dd < 2.0 * radius
    if not bad.any():
        return None
    samples = np.nonzero(bad.any(axis=0))[0]
    s0 = samples[0]
    p = np.nonzero(bad[:, s0])[0][0]
    return s0, ids[iu[p]], ids[ju[p]], float(dd[p, s0])


def trajectory_collision_free(traj: Trajectory, paths: Mapping, radius: float,
                              fine: float) -> CollisionViolation | None:
    """Re-integrate every step at resolution ``fine`` and test all disc pairs."""
    for k, (s, dec) in enumerate(zip(traj.states, traj.decisions)):
        acc = [dec[r] is Decision.ACCELERATE for r in s.ids]
        tau, x = interval_positions(s, acc, traj.dt, fine)
        hit = first_collision(s.ids, s.lanes, x, paths, radius)
        if hit is not None:
            si, i, j, d = hit
            return CollisionViolation(k * traj.dt + float(tau[si]), (i, j), d)
    if traj.states and not traj.decisions:
        s = traj.states[0]
        hit = first_collision(s.ids, s.lanes, s.x[:, None], paths, radius)
        if hit is not None:
            return CollisionViolation(0.0, (hit[1], hit[2]), hit[3])
    return None


def braking_invariant_holds(s: SystemState, graph: PriorityGraph, bounds, cfg: PlannerConfig,
                            table=None) -> bool:
    return find_braking_violation(s, graph, bounds, cfg, table) is None


def braking_trajectory(s: SystemState, cfg: PlannerConfig) -> Trajectory:
    """The explicit all-brake trajectory from ``s``, stepped until every robot rests."""
    traj = Trajectory(cfg.dt, [s], [])
    cur = s
    while np.any(cur.v > 0):
        dec = {r: Decision.BRAKE for r in cur.ids}
        xb, vb = braking_positions(cur.x, cur.v, cur.a_min, cfg.dt)
        traj.decisions.append(dec)
        cur = cur.with_arrays(xb, vb)
        traj.states.append(cur)
    return traj


def brute_force_shifted_membership(y_ahead, y_behind, section: CrossSection, step: float,
                                   window: tuple[float, float, float, float] | None = None):
    """Search shifts ``a, b >= 0`` on a grid for ``(y_ahead + a, y_behind - b)`` inside ``section``.

    ``section`` is oriented ``(x_ahead, x_behind)``. Unbounded sections need ``window``
    ``(u_lo, u_hi, v_lo, v_hi)`` limiting the search. Vectorized over the inputs.
    """
    ya = np.atleast_1d(np.asarray(y_ahead, dtype=float))
    yb = np.atleast_1d(np.asarray(y_behind, dtype=float))
    if section.empty:
        return np.zeros(ya.shape, dtype=bool)
    u_lo, u_hi, v_lo, v_hi = window if window is not None else section.bounds()
    if not all(math.isfinite(b) for b in (u_hi, v_lo)):
        raise ValueError("unbounded section needs a finite search window")
    out = np.zeros(ya.shape, dtype=bool)
    for k in range(len(ya)):
        na = int(max(0.0, u_hi - ya[k]) / step) + 1
        nb = int(max(0.0, yb[k] - v_lo) / step) + 1
        a = np.arange(na)[:, None] * step
        b = np.arange(nb)[None, :] * step
        out[k] = bool(np.any(section.contains(ya[k] + a, yb[k] - b)))
    return out


def left_greedy_oracle(s_init: SystemState, graph: PriorityGraph, bounds, dt: float,
                       goal, steps: int, substep: float | None = None) -> list[np.ndarray]:
    """Reference trajectory for robots that start and stop instantly.

    Each step every robot moves ``v_max * dt`` unless the move, with everyone else frozen,
    would enter a region forbidden by one of its incoming edges.
    """
    substep = dt / 4 if substep is None else substep
    nsub = int(round(dt / substep))
    frac = np.arange(1, nsub + 1) / nsub
    x = s_init.x.copy()
    idx = s_init.index
    incoming = {r: [(e, bounds[e]) for e in graph.edges if e[1] == r and e in bounds] for r in s_init.ids}
    out = [x.copy()]
    for _ in range(steps):
        if all(x[idx[r]] >= goal.thresholds[r] for r in s_init.ids):
            break
        move = np.ones(len(x), dtype=bool)
        for r in s_init.ids:
            k = idx[r]
            sweep = x[k] + s_init.v_max[k] * dt * frac
            for (a, _), b in incoming[r]:
                if np.any(b.contains(np.full_like(sweep, x[idx[a]]), sweep)):
                    move[k] = False
                    break
        x = x + np.where(move, s_init.v_max * dt, 0.0)
        out.append(x.copy())
    return out


def priority_mismatches(positions: Mapping[int, np.ndarray], sections: Mapping[tuple, CrossSection],
                        assigned: set) -> list[tuple]:
    """Pairs whose realized orientation differs from the assigned one.

    Only pairs the trajectory actually constrained (entered one shifted region) count.
    """
    induced = induced_priority_graph(positions, sections)
    bad = []
    for (i, j) in induced.edges:
        if (i, j) not in assigned:
            bad.append((i, j))
    return bad


def pair_sections(ids: Sequence[int], lanes: Mapping[int, str], lane_sections: Mapping) -> dict:
    """Robot-pair sections from a per-lane-pair table (same-lane pairs included)."""
    out = {}
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            sec = oriented(lane_sections, lanes[i], lanes[j])
            if sec is not None and not sec.empty:
                out[(i, j)] = sec
    return out

