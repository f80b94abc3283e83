"""Double-integrator robots with box constraints on velocity and acceleration.

Only the minimal (full braking) and maximal (full acceleration) trajectories are needed by
the planner; both are piecewise quadratic in time and evaluated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class KinodynamicModel:
    v_max: float
    a_max: float
    a_min: float

    def __post_init__(self):
        if not (self.v_max > 0 and self.a_max > 0 and self.a_min < 0):
            raise ValueError(f"invalid kinodynamic model {self}")


class RobotState(NamedTuple):
    x: float
    v: float


def braking_state(state: RobotState, model: KinodynamicModel, t: float) -> RobotState:
    """Decelerate at ``a_min`` until stopped, then hold position."""
    if t < 0:
        raise ValueError("negative duration")
    x, v = state
    t_stop = v / -model.a_min
    if t >= t_stop:
        return RobotState(x + v * v / (-2.0 * model.a_min), 0.0)
    return RobotState(x + v * t + 0.5 * model.a_min * t * t, v + model.a_min * t)


def max_state(state: RobotState, model: KinodynamicModel, t: float) -> RobotState:
    """Accelerate at ``a_max`` up to ``v_max``, then cruise."""
    if t < 0:
        raise ValueError("negative duration")
    x, v = state
    t_acc = (model.v_max - v) / model.a_max
    if t >= t_acc:
        d_acc = (model.v_max * model.v_max - v * v) / (2.0 * model.a_max)
        return RobotState(x + d_acc + model.v_max * (t - t_acc), model.v_max)
    return RobotState(x + v * t + 0.5 * model.a_max * t * t, v + model.a_max * t)


def stopping_distance(state: RobotState, model: KinodynamicModel) -> float:
    return state.v * state.v / (-2.0 * model.a_min)


def time_to_reach(state: RobotState, model: KinodynamicModel, target: float) -> float:
    """Earliest time the maximal trajectory reaches coordinate ``target``."""
    d = target - state.x
    if d <= 0:
        return 0.0
    v, a, vm = state.v, model.a_max, model.v_max
    d_acc = (vm * vm - v * v) / (2.0 * a)
    if d <= d_acc:
        return (-v + math.sqrt(v * v + 2.0 * a * d)) / a
    return (vm - v) / a + (d - d_acc) / vm


# vectorized forms over arrays of robots (and, by broadcasting, of times)

def braking_positions(x, v, a_min, t):
    """Positions and velocities of braking trajectories; ``t`` broadcasts against the robots."""
    t_stop = v / -a_min
    moving = t < t_stop
    xs = np.where(moving, x + v * t + 0.5 * a_min * t * t, x + v * v / (-2.0 * a_min))
    vs = np.where(moving, v + a_min * t, 0.0)
    return xs, vs


def max_positions(x, v, v_max, a_max, t):
    t_acc = (v_max - v) / a_max
    acc = t < t_acc
    d_acc = (v_max * v_max - v * v) / (2.0 * a_max)
    xs = np.where(acc, x + v * t + 0.5 * a_max * t * t, x + d_acc + v_max * (t - t_acc))
    vs = np.where(acc, v + a_max * t, v_max)
    return xs, vs


@dataclass(frozen=True)
class SystemState:
    """Positions and velocities of the active robots, with their models and lanes.

    Robots are addressed by id; ``index`` maps an id to its row in the arrays.
    """

    ids: tuple
    x: np.ndarray
    v: np.ndarray
    models: tuple
    lanes: tuple = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).copy()
        v = np.asarray(self.v, dtype=float).copy()
        n = len(self.ids)
        if x.shape != (n,) or v.shape != (n,) or len(self.models) != n:
            raise ValueError("state arrays must match the number of robots")
        if self.lanes and len(self.lanes) != n:
            raise ValueError("one lane per robot expected")
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "index", {r: k for k, r in enumerate(self.ids)})
        object.__setattr__(self, "v_max", np.array([m.v_max for m in self.models], dtype=float))
        object.__setattr__(self, "a_max", np.array([m.a_max for m in self.models], dtype=float))
        object.__setattr__(self, "a_min", np.array([m.a_min for m in self.models], dtype=float))
        if n and (np.any(v < 0) or np.any(v > self.v_max * (1 + 1e-12))):
            raise ValueError("velocity outside [0, v_max]")

    @classmethod
    def from_robots(cls, robots: dict, model: KinodynamicModel | None = None, models=None,
                    lanes: dict | None = None) -> "SystemState":
        """Build from ``{id: (x, v)}``; one shared ``model`` or a per-id ``models`` mapping."""
        ids = tuple(robots)
        ms = tuple(models[i] for i in ids) if models is not None else (model,) * len(ids)
        ln = tuple(lanes[i] for i in ids) if lanes is not None else ()
        return cls(ids, [robots[i][0] for i in ids], [robots[i][1] for i in ids], ms, ln)

    def __len__(self):
        return len(self.ids)

    def robot(self, rid) -> RobotState:
        k = self.index[rid]
        return RobotState(float(self.x[k]), float(self.v[k]))

    def with_arrays(self, x, v) -> "SystemState":
        return SystemState(self.ids, x, v, self.models, self.lanes)

    def same_as(self, other: "SystemState", tol: float = 1e-12) -> bool:
        return (self.ids == other.ids and bool(np.all(np.abs(self.x - other.x) <= tol))
                and bool(np.all(np.abs(self.v - other.v) <= tol)))


def position_vector(s: SystemState) -> dict:
    """Configuration of the system: ``{robot id: x}``."""
    return {r: float(x) for r, x in zip(s.ids, s.x)}


def advance(s: SystemState, accelerate: Sequence[bool] | np.ndarray, dt: float) -> SystemState:
    """Move every robot ``dt`` along its maximal (accelerate) or braking trajectory."""
    acc = np.asarray(accelerate, dtype=bool)
    xb, vb = braking_positions(s.x, s.v, s.a_min, dt)
    xm, vm = max_positions(s.x, s.v, s.v_max, s.a_max, dt)
    return s.with_arrays(np.where(acc, xm, xb), np.where(acc, vm, vb))
