"""Planar paths, disc footprints and the pairwise collision predicate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PathGeometry:
    """A fixed planar track parameterized by arc length.

    ``kind`` is ``"straight"`` for two-point paths and ``"polyline"`` otherwise.
    """

    id: str
    points: tuple[tuple[float, float], ...]
    kind: str = field(init=False)
    length: float = field(init=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _pts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError(f"path {self.id!r}: need at least two planar points")
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 0.0):
            raise ValueError(f"path {self.id!r}: consecutive points must be distinct")
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        object.__setattr__(self, "points", tuple((float(a), float(b)) for a, b in pts))
        object.__setattr__(self, "kind", "straight" if len(pts) == 2 else "polyline")
        object.__setattr__(self, "length", float(cum[-1]))
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_pts", pts)

    @classmethod
    def straight(cls, id: str, start: Sequence[float], end: Sequence[float]) -> "PathGeometry":
        return cls(id, (tuple(start), tuple(end)))

    @property
    def is_straight(self) -> bool:
        return self.kind == "straight"

    @property
    def direction(self) -> np.ndarray:
        """Unit direction of a straight path."""
        if not self.is_straight:
            raise ValueError("direction is only defined for straight paths")
        d = self._pts[1] - self._pts[0]
        return d / self.length

    @property
    def start(self) -> np.ndarray:
        return self._pts[0].copy()

    def point_at(self, s: float) -> np.ndarray:
        if not (0.0 <= s <= self.length):
            raise ValueError(f"curvilinear coordinate {s} outside [0, {self.length}]")
        return self.points_at(np.array([s]))[0]

    def points_at(self, s) -> np.ndarray:
        """Vectorized :meth:`point_at`; returns an array of shape ``s.shape + (2,)``."""
        s = np.asarray(s, dtype=float)
        if np.any(s < 0.0) or np.any(s > self.length):
            raise ValueError(f"curvilinear coordinate outside [0, {self.length}]")
        xs = np.interp(s, self._cum, self._pts[:, 0])
        ys = np.interp(s, self._cum, self._pts[:, 1])
        return np.stack([xs, ys], axis=-1)


@dataclass(frozen=True)
class RobotFootprint:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("footprint radius must be positive")


def point_at(path: PathGeometry, s: float) -> np.ndarray:
    return path.point_at(s)


def pair_collision(path_i: PathGeometry, x_i: float, r_i: float,
                   path_j: PathGeometry, x_j: float, r_j: float) -> bool:
    """True iff the two discs overlap (open obstacle region, so touching is free)."""
    p = path_i.point_at(x_i)
    q = path_j.point_at(x_j)
    return bool(math.hypot(p[0] - q[0], p[1] - q[1]) < r_i + r_j)


@dataclass
class LaneSpec:
    path: PathGeometry
    spawn: float
    exit: float

    def __post_init__(self):
        if not self.spawn < self.exit:
            raise ValueError(f"lane {self.path.id!r}: spawn must precede exit")
        if not (0.0 <= self.spawn and self.exit <= self.path.length):
            raise ValueError(f"lane {self.path.id!r}: spawn/exit outside the path")


class IntersectionLayout:
    """Scenario container: the lanes robots are spawned on, in a fixed order."""

    def __init__(self, lanes: Sequence[LaneSpec], name: str = "custom"):
        ids = [ln.path.id for ln in lanes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate path ids in layout")
        self.name = name
        self.lanes = {ln.path.id: ln for ln in lanes}
        self.lane_ids = tuple(ids)

    def path(self, lane_id: str) -> PathGeometry:
        return self.lanes[lane_id].path

    def fingerprint(self) -> str:
        """Stable text summary used to pair traces with the scenario they came from."""
        parts = []
        for lid in self.lane_ids:
            ln = self.lanes[lid]
            pts = ";".join(f"{a:.9g},{b:.9g}" for a, b in ln.path.points)
            parts.append(f"{lid}[{pts}|{ln.spawn:.9g}|{ln.exit:.9g}]")
        return " ".join(parts)


def crossroads(radius: float = 1.0, lane_offset: float = 3.0, approach: float = 30.0,
               departure: float = 10.0, runout: float = 30.0) -> IntersectionLayout:
    """Two-way crossroads with four straight lanes.

    Lengths are in units of ``radius``. Opposite lanes are ``lane_offset`` apart, robots
    spawn ``approach`` before their first conflict and exit ``departure`` after the last.
    ``runout`` extends each path past its exit so braking tails stay on the path.
    """
    R = radius
    h = 0.5 * lane_offset * R
    reach = 2.0 * R  # sum of two footprint radii
    spawn_to_cross = (approach * R) + reach
    first = -h - spawn_to_cross  # planar coordinate of the spawn point
    last_cross = h
    exit_s = (last_cross - first) + reach + departure * R
    end = first + exit_s + runout * R
    lanes = [
        # eastbound, south of centre
        LaneSpec(PathGeometry.straight("east", (first, -h), (end, -h)), 0.0, exit_s),
        # northbound, east of centre
        LaneSpec(PathGeometry.straight("north", (h, first), (h, end)), 0.0, exit_s),
        # westbound, north of centre
        LaneSpec(PathGeometry.straight("west", (-first, h), (-end, h)), 0.0, exit_s),
        # southbound, west of centre
        LaneSpec(PathGeometry.straight("south", (-h, -first), (-h, -end)), 0.0, exit_s),
    ]
    return IntersectionLayout(lanes, name="crossroads")
