"""Maximally aggressive trajectory planning under assigned priorities.

Every step each robot accelerates at full rate unless doing so would make the
all-robots braking manoeuvre that follows enter a region forbidden by one of its
incoming priority edges; in that case it brakes. Keeping the braking manoeuvre safe at
every step is what makes the whole trajectory collision-free.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .coordination import NPARAM, GoalRegion, PriorityGraph, ShiftBound, in_goal
from .kinodynamics import (SystemState, advance, braking_positions, max_positions,
                           position_vector)


class Decision(enum.Enum):
    BRAKE = "B"
    ACCELERATE = "A"


class PlanningError(RuntimeError):
    pass


class DeadlockDetected(PlanningError):
    def __init__(self, step: int, state: SystemState):
        super().__init__(f"deadlock at step {step}: state repeats with goal not reached")
        self.step = step
        self.state = state


class StepLimitExceeded(PlanningError):
    pass


class InitialStateUnsafe(PlanningError):
    def __init__(self, edge, time):
        super().__init__(f"braking trajectory enters the region forbidden by {edge[0]} > {edge[1]} at t={time:g}")
        self.edge = edge
        self.time = time


@dataclass(frozen=True)
class PlannerConfig:
    dt: float
    substep: float
    eps: float
    max_steps: int = 1_000_000
    # decisions treat the forbidden region as this much larger than the invariant check
    # does, absorbing rounding between composed closed forms
    margin: float = 1e-9

    def __post_init__(self):
        if not (0 < self.substep <= self.dt):
            raise ValueError("need 0 < substep <= dt")
        ratio = self.dt / self.substep
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("dt must be a whole number of substeps")
        if self.eps < 0:
            raise ValueError("negative inflation")

    @classmethod
    def for_robots(cls, v_max: float, dt: float, substep: float | None = None, **kw) -> "PlannerConfig":
        """Config with the sampling inflation ``2 * v_max * substep``; substep defaults to dt/4."""
        if substep is None:
            substep = dt / 4.0
        return cls(dt, substep, 2.0 * v_max * substep, **kw)

    @property
    def substeps(self) -> int:
        return int(round(self.dt / self.substep))


@dataclass
class Trajectory:
    dt: float
    states: list = field(default_factory=list)
    decisions: list = field(default_factory=list)

    def __len__(self):
        return len(self.decisions)

    def positions(self) -> dict:
        """``{robot id: array of x per recorded state}``."""
        ids = self.states[0].ids if self.states else ()
        return {r: np.array([s.x[s.index[r]] for s in self.states]) for r in ids}


@dataclass
class EdgeTable:
    """Edges of a priority graph packed for the kernels, bound to one robot ordering."""

    ids: tuple
    edges: list
    src: np.ndarray
    dst: np.ndarray
    kind: np.ndarray
    params: np.ndarray
    table: np.ndarray
    table_off: np.ndarray

    @classmethod
    def build(cls, ids, graph: PriorityGraph, bounds: Mapping[tuple, ShiftBound]) -> "EdgeTable":
        index = {r: k for k, r in enumerate(ids)}
        edges = sorted(e for e in graph.edges if e in bounds and e[0] in index and e[1] in index)
        E = len(edges)
        src = np.empty(E, dtype=np.int64)
        dst = np.empty(E, dtype=np.int64)
        kind = np.empty(E, dtype=np.int64)
        params = np.zeros((E, NPARAM))
        off = np.zeros(E, dtype=np.int64)
        tables = []
        pos = 0
        for k, e in enumerate(edges):
            b = bounds[e]
            src[k], dst[k], kind[k] = index[e[0]], index[e[1]], b.kind
            params[k, :len(b.params)] = b.params
            if b.table is not None:
                off[k] = pos
                tables.append(b.table)
                pos += len(b.table)
        table = np.concatenate(tables) if tables else np.zeros(1)
        return cls(tuple(ids), edges, src, dst, kind, params, np.ascontiguousarray(table, dtype=float), off)

    def hits(self, ahead_pos, behind_pos, margin=0.0, skip_blocked=False) -> np.ndarray:
        return kernels.first_hits(ahead_pos, behind_pos, self.src, self.dst, self.kind,
                                  self.params, self.table, self.table_off, margin, skip_blocked)


def _table(s, graph, bounds, table):
    if table is None or table.ids != s.ids:
        table = EdgeTable.build(s.ids, graph, bounds)
    return table


def _time_grid(s: SystemState, cfg: PlannerConfig):
    """Sample times and the state reached by full acceleration over one step.

    Samples ``0..m`` cover the step (sample ``m`` sits exactly at ``dt``); later samples
    are offsets ``(k - m) * substep`` past the step, running until every robot has stopped.
    """
    m = cfg.substeps
    xm, vm = max_positions(s.x, s.v, s.v_max, s.a_max, cfg.dt)
    t_stop = float(np.max(vm / -s.a_min)) if len(s) else 0.0
    tail = int(math.ceil(t_stop / cfg.substep - 1e-12)) + 1
    t_in = np.arange(m + 1) * cfg.substep
    t_in[m] = cfg.dt
    t_after = np.arange(1, tail + 1) * cfg.substep
    return t_in, t_after, xm, vm


def braking_samples(s: SystemState, cfg: PlannerConfig, t_in=None, t_after=None) -> np.ndarray:
    """All-robots braking trajectory sampled on the planning grid, shape ``(n, K)``."""
    if t_in is None:
        t_in, t_after, _, _ = _time_grid(s, cfg)
    t = np.concatenate((t_in, cfg.dt + t_after))
    xb, _ = braking_positions(s.x[:, None], s.v[:, None], s.a_min[:, None], t[None, :])
    return xb


def _virtual_matrix(s, cfg, t_in, t_after, xm, vm):
    """Row ``i``: robot ``i`` at full acceleration for one step, then braking."""
    x1, _ = max_positions(s.x[:, None], s.v[:, None], s.v_max[:, None], s.a_max[:, None], t_in[None, :])
    x1[:, -1] = xm
    x2, _ = braking_positions(xm[:, None], vm[:, None], s.a_min[:, None], t_after[None, :])
    return np.concatenate((x1, x2), axis=1)


def virtual_path(s: SystemState, i, cfg: PlannerConfig) -> np.ndarray:
    """Configurations visited when ``i`` accelerates for one step while everybody else
    brakes, and then everybody brakes to a stop. Shape ``(K, n)``, columns in ``s.ids``
    order; the last row is the rest configuration."""
    t_in, t_after, xm, vm = _time_grid(s, cfg)
    B = braking_samples(s, cfg, t_in, t_after)
    V = _virtual_matrix(s, cfg, t_in, t_after, xm, vm)
    k = s.index[i]
    out = B.copy()
    out[k] = V[k]
    return out.T


def decide_all(s: SystemState, graph: PriorityGraph, bounds, cfg: PlannerConfig,
               table: EdgeTable | None = None) -> np.ndarray:
    """Boolean accelerate flag per robot (``s.ids`` order), all from the same state."""
    n = len(s)
    if n == 0:
        return np.zeros(0, dtype=bool)
    table = _table(s, graph, bounds, table)
    if not table.edges:
        return np.ones(n, dtype=bool)
    t_in, t_after, xm, vm = _time_grid(s, cfg)
    B = braking_samples(s, cfg, t_in, t_after)
    V = _virtual_matrix(s, cfg, t_in, t_after, xm, vm)
    hits = table.hits(B, V, cfg.margin, skip_blocked=True)
    acc = np.ones(n, dtype=bool)
    acc[table.dst[hits >= 0]] = False
    return acc


def decide(s: SystemState, i, graph: PriorityGraph, bounds, cfg: PlannerConfig) -> Decision:
    sub = PriorityGraph(set(graph.vertices), {e for e in graph.edges if e[1] == i})
    acc = decide_all(s, sub, bounds, cfg)
    return Decision.ACCELERATE if acc[s.index[i]] else Decision.BRAKE


def step(s: SystemState, graph: PriorityGraph, bounds, cfg: PlannerConfig,
         table: EdgeTable | None = None):
    """One planning step: ``(next state, {id: Decision})``."""
    acc = decide_all(s, graph, bounds, cfg, table)
    nxt = advance(s, acc, cfg.dt)
    return nxt, {r: (Decision.ACCELERATE if a else Decision.BRAKE) for r, a in zip(s.ids, acc)}


@dataclass(frozen=True)
class Violation:
    edge: tuple
    time: float


def find_braking_violation(s: SystemState, graph: PriorityGraph, bounds, cfg: PlannerConfig,
                           table: EdgeTable | None = None, margin: float = 0.0) -> Violation | None:
    """First priority region entered by the all-robots braking trajectory from ``s``."""
    if len(s) == 0:
        return None
    table = _table(s, graph, bounds, table)
    if not table.edges:
        return None
    t_in, t_after, _, _ = _time_grid(s, cfg)
    B = braking_samples(s, cfg, t_in, t_after)
    hits = table.hits(B, B, margin)
    bad = np.nonzero(hits >= 0)[0]
    if len(bad) == 0:
        return None
    t = np.concatenate((t_in, cfg.dt + t_after))
    e = min(bad, key=lambda k: (hits[k], k))
    return Violation(table.edges[e], float(t[hits[e]]))


def check_initial(s: SystemState, graph: PriorityGraph, bounds, cfg: PlannerConfig,
                  table: EdgeTable | None = None) -> None:
    """Raise :class:`InitialStateUnsafe` unless braking from ``s`` respects every priority."""
    v = find_braking_violation(s, graph, bounds, cfg, table)
    if v is not None:
        raise InitialStateUnsafe(v.edge, v.time)


def detect_deadlock(previous: SystemState, current: SystemState, goal_reached: bool) -> bool:
    # the step map is deterministic: a repeated state repeats forever
    return (not goal_reached) and previous.same_as(current, 1e-12)


def plan(s_init: SystemState, graph: PriorityGraph, bounds, goal: GoalRegion,
         cfg: PlannerConfig) -> Trajectory:
    table = EdgeTable.build(s_init.ids, graph, bounds)
    check_initial(s_init, graph, bounds, cfg, table)
    traj = Trajectory(cfg.dt, [s_init], [])
    s = s_init
    for k in range(cfg.max_steps + 1):
        if in_goal(position_vector(s), goal):
            return traj
        if k == cfg.max_steps:
            break
        nxt, dec = step(s, graph, bounds, cfg, table)
        traj.states.append(nxt)
        traj.decisions.append(dec)
        if detect_deadlock(s, nxt, in_goal(position_vector(nxt), goal)):
            raise DeadlockDetected(k + 1, nxt)
        s = nxt
    raise StepLimitExceeded(f"goal not reached within {cfg.max_steps} steps")
