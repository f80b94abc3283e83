"""Coordination space: cross-sections of obstacle cylinders, priority-shifted regions,
priority graphs and the goal region.

A cross-section for the ordered pair ``(a, b)`` lives in the plane ``(u, v) = (x_a, x_b)``.
The region where ``a`` has *not* yet cleared the conflict ahead of ``b`` is

    {y : exists (u, v) in S with u >= y_a and v <= y_b}  ==  {y : y_a < W(y_b)}

with ``W(v) = sup{u : (u, v') in S, v' <= v}``. Every directed edge therefore reduces to a
single monotone scalar bound ``W``, evaluated in O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import PathGeometry

# kind codes shared with the compiled kernel
ELLIPSE, STRIP, GRID = 0, 1, 2
NPARAM = 9

PARALLEL_TOL = 1e-12


class EmptySectionError(ValueError):
    pass


class ContractViolation(ValueError):
    pass


class InconsistentTrajectory(ValueError):
    """The trajectory lies in both shifted regions of a pair, i.e. it is not collision-free."""


class CrossSection:
    """Footprint of the obstacle cylinder of a robot pair in the ``(u, v)`` plane."""

    kind: int
    r_sum: float

    @property
    def empty(self) -> bool:
        return False

    def contains(self, u, v):
        raise NotImplementedError

    def transpose(self) -> "CrossSection":
        raise NotImplementedError

    def inflated(self, eps: float) -> "CrossSection":
        """Same section with the footprint sum grown by ``eps``."""
        raise NotImplementedError

    def bounds(self) -> tuple[float, float, float, float]:
        """``(u_inf, u_sup, v_inf, v_sup)``; strips report infinite sups/infs."""
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(b) for b in self.bounds())


@dataclass(frozen=True)
class EmptySection(CrossSection):
    r_sum: float = 0.0

    @property
    def empty(self) -> bool:
        return True

    def contains(self, u, v):
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(v)).shape, dtype=bool)

    def transpose(self):
        return self

    def inflated(self, eps):
        return self

    def bounds(self):
        return (math.inf, -math.inf, math.inf, -math.inf)


@dataclass(frozen=True)
class EllipseSection(CrossSection):
    """``q(z - c) < r_sum**2 - offset_sq`` with ``q(d) = d^T M d``, ``M`` symmetric positive definite.

    For two straight lines the squared distance between the disc centres is exactly
    ``q(z - c) + offset_sq`` where ``offset_sq`` is the squared gap between the lines
    (zero for crossing lines in the plane).
    """

    center: tuple[float, float]
    matrix: tuple[float, float, float]  # (A, B, C) for [[A, B], [B, C]]
    r_sum: float
    offset_sq: float = 0.0
    kind: int = field(default=ELLIPSE, init=False)

    def __post_init__(self):
        A, B, C = self.matrix
        if not (A > 0 and A * C - B * B > 0):
            raise ValueError("ellipse matrix must be positive definite")
        if not self.level > 0:
            raise ValueError("ellipse level must be positive (use EmptySection)")

    @classmethod
    def disc(cls, radius: float, center=(0.0, 0.0)) -> "EllipseSection":
        return cls(tuple(center), (1.0, 0.0, 1.0), radius)

    @property
    def level(self) -> float:
        return self.r_sum * self.r_sum - self.offset_sq

    def contains(self, u, v):
        A, B, C = self.matrix
        du = np.asarray(u, dtype=float) - self.center[0]
        dv = np.asarray(v, dtype=float) - self.center[1]
        return A * du * du + 2.0 * B * du * dv + C * dv * dv < self.level

    def transpose(self):
        A, B, C = self.matrix
        return EllipseSection((self.center[1], self.center[0]), (C, B, A), self.r_sum, self.offset_sq)

    def inflated(self, eps):
        return EllipseSection(self.center, self.matrix, self.r_sum + eps, self.offset_sq)

    def _inv(self):
        A, B, C = self.matrix
        det = A * C - B * B
        return C / det, -B / det, A / det

    def bounds(self):
        iA, _, iC = self._inv()
        k = self.level
        hu, hv = math.sqrt(k * iA), math.sqrt(k * iC)
        cu, cv = self.center
        return (cu - hu, cu + hu, cv - hv, cv + hv)

    def u_extreme(self) -> tuple[float, float]:
        """``(u_sup, v_at_u_sup)``: the point of the boundary furthest along ``u``."""
        iA, iB, _ = self._inv()
        k = self.level
        scale = math.sqrt(k / iA)
        return self.center[0] + scale * iA, self.center[1] + scale * iB


@dataclass(frozen=True)
class StripSection(CrossSection):
    """``|u - v - offset| < half_width``: two robots sharing (or running parallel to) a lane."""

    offset: float
    half_width: float
    r_sum: float
    offset_sq: float = 0.0
    kind: int = field(default=STRIP, init=False)

    def contains(self, u, v):
        return np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float) - self.offset) < self.half_width

    def transpose(self):
        return StripSection(-self.offset, self.half_width, self.r_sum, self.offset_sq)

    def inflated(self, eps):
        r = self.r_sum + eps
        return StripSection(self.offset, math.sqrt(r * r - self.offset_sq), r, self.offset_sq)

    def bounds(self):
        return (-math.inf, math.inf, -math.inf, math.inf)


@dataclass(frozen=True)
class GridSection(CrossSection):
    """Conservative rasterization: a cell is marked when any point of it may collide.

    Cell ``(k, l)`` covers ``[u0 + k*du, u0 + (k+1)*du) x [v0 + l*dv, v0 + (l+1)*dv)``.
    """

    u0: float
    v0: float
    cell: float
    mask: np.ndarray = field(repr=False)  # bool, shape (nu, nv)
    r_sum: float
    source: tuple = field(default=None, repr=False, compare=False)
    kind: int = field(default=GRID, init=False)

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())

    def contains(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        k = np.floor((u - self.u0) / self.cell).astype(np.int64)
        l = np.floor((v - self.v0) / self.cell).astype(np.int64)
        nu, nv = self.mask.shape
        ok = (k >= 0) & (k < nu) & (l >= 0) & (l < nv)
        out = np.zeros(np.broadcast(u, v).shape, dtype=bool)
        kk, ll = np.broadcast_arrays(k, l)
        out[ok] = self.mask[kk[ok], ll[ok]]
        return out

    def transpose(self):
        src = None
        if self.source is not None:
            pi, pj, r = self.source
            src = (pj, pi, r)
        return GridSection(self.v0, self.u0, self.cell, self.mask.T.copy(), self.r_sum, src)

    def inflated(self, eps):
        if self.source is None:
            raise ValueError("grid section without source geometry cannot be inflated")
        pi, pj, r = self.source
        return _grid_section(pi, pj, r + eps, self.cell)

    def bounds(self):
        if self.empty:
            return EmptySection().bounds()
        ks = np.nonzero(self.mask.any(axis=1))[0]
        ls = np.nonzero(self.mask.any(axis=0))[0]
        c = self.cell
        return (self.u0 + ks[0] * c, self.u0 + (ks[-1] + 1) * c,
                self.v0 + ls[0] * c, self.v0 + (ls[-1] + 1) * c)


def _grid_section(path_i: PathGeometry, path_j: PathGeometry, r_sum: float, cell: float) -> CrossSection:
    nu = max(1, int(math.ceil(path_i.length / cell)))
    nv = max(1, int(math.ceil(path_j.length / cell)))
    su = np.minimum((np.arange(nu) + 0.5) * cell, path_i.length)
    sv = np.minimum((np.arange(nv) + 0.5) * cell, path_j.length)
    pu = path_i.points_at(su)
    pv = path_j.points_at(sv)
    # every point of a cell lies within cell/2 (arc length) of its centre on each path
    d = np.hypot(pu[:, None, 0] - pv[None, :, 0], pu[:, None, 1] - pv[None, :, 1])
    mask = d < r_sum + cell
    g = GridSection(0.0, 0.0, cell, mask, r_sum, (path_i, path_j, r_sum))
    if g.empty:
        return EmptySection(r_sum)
    return g


def build_cross_section(path_i: PathGeometry, path_j: PathGeometry, r_sum: float,
                        resolution: float | None = None) -> CrossSection:
    """Cross-section of the pair's obstacle cylinder in ``(x_i, x_j)``.

    Straight pairs get an analytic ellipse or strip when it fits inside both paths'
    coordinate ranges; everything else is rasterized at ``resolution`` (default ``r_sum/20``,
    i.e. a tenth of a footprint radius for equal discs).
    """
    if not r_sum > 0:
        raise ValueError("footprint sum must be positive")
    if resolution is None:
        resolution = r_sum / 20.0
    if not resolution > 0:
        raise ValueError("grid resolution must be positive")
    if path_i.is_straight and path_j.is_straight:
        sec = _analytic_section(path_i, path_j, r_sum)
        if sec is not None:
            return sec
    return _grid_section(path_i, path_j, r_sum, resolution)


def _analytic_section(path_i, path_j, r_sum):
    ui, uj = path_i.direction, path_j.direction
    d = path_i.start - path_j.start
    c = float(ui @ uj)
    if abs(abs(c) - 1.0) <= PARALLEL_TOL:
        cross = float(d[0] * ui[1] - d[1] * ui[0])
        gap_sq = cross * cross
        if gap_sq >= r_sum * r_sum:
            return EmptySection(r_sum)
        if c < 0:
            return None  # head-on lanes: bounded only by path ends, rasterize
        # |p_i - p_j|^2 = gap^2 + (s - t + d.u)^2
        return StripSection(-float(d @ ui), math.sqrt(r_sum * r_sum - gap_sq), r_sum, gap_sq)
    # |d + s ui - t uj|^2 = q((s, t) - centre) + gap^2 with q = [[1, -c], [-c, 1]]
    b = np.array([d @ ui, -(d @ uj)])
    M = np.array([[1.0, -c], [-c, 1.0]])
    center = -np.linalg.solve(M, b)
    gap_sq = max(0.0, float(d @ d + b @ center))
    if gap_sq >= r_sum * r_sum:
        return EmptySection(r_sum)
    sec = EllipseSection((float(center[0]), float(center[1])), (1.0, -c, 1.0), r_sum, gap_sq)
    u_lo, u_hi, v_lo, v_hi = sec.inflated(r_sum).bounds()
    if u_lo < 0 or v_lo < 0 or u_hi > path_i.length or v_hi > path_j.length:
        return None  # lines meet near (or beyond) a path end
    return sec


@dataclass(frozen=True)
class ShiftBound:
    """Monotone bound ``W`` of the region where ``ahead`` still blocks ``behind``.

    ``params`` is the packed row consumed by the kernels (see :func:`shift_bound`).
    """

    ahead: int
    behind: int
    kind: int
    params: tuple
    table: np.ndarray | None = field(default=None, repr=False)

    def W(self, v: float) -> float:
        """``W(v)``; ``nan`` when no section point has ``v' <= v``."""
        return float(w_values(self.kind, self.params, self.table, np.array([v], dtype=float))[0])

    def contains(self, y_ahead, y_behind, margin: float = 0.0):
        w = w_values(self.kind, self.params, self.table, np.asarray(y_behind, dtype=float) + margin)
        with np.errstate(invalid="ignore"):
            return np.asarray(y_ahead) < w + margin


def w_values(kind: int, p, table, v: np.ndarray) -> np.ndarray:
    """Vectorized ``W``; ``nan`` where absent (every comparison with nan is False)."""
    v = np.asarray(v, dtype=float)
    if kind == ELLIPSE:
        cu, cv, A, B, C, k, v_lo, v_star, u_sup = p[:9]
        dv = v - cv
        disc = np.maximum(B * B * dv * dv - A * (C * dv * dv - k), 0.0)
        w = np.where(v < v_star, cu + (-B * dv + np.sqrt(disc)) / A, u_sup)
        return np.where(v > v_lo, w, np.nan)
    if kind == STRIP:
        return v + p[0]
    if kind == GRID:
        v0, cell, n = p[0], p[1], int(p[2])
        idx = np.floor((v - v0) / cell)
        idx = np.minimum(idx, n - 1)
        out = np.full(v.shape, np.nan)
        ok = idx >= 0
        out[ok] = table[idx[ok].astype(np.int64)]
        return out
    raise ValueError(f"unknown section kind {kind}")


def shift_bound(section: CrossSection, ahead: int = 0, behind: int = 1) -> ShiftBound:
    """Bound for the priority ``ahead > behind``; ``section`` is oriented ``(u, v) = (x_ahead, x_behind)``."""
    if section.empty:
        raise EmptySectionError("no shift bound for an empty cross-section")
    if section.kind == ELLIPSE:
        A, B, C = section.matrix
        k = section.level
        u_sup, v_star = section.u_extreme()
        v_lo = section.bounds()[2]
        params = (section.center[0], section.center[1], A, B, C, k, v_lo, v_star, u_sup)
        return ShiftBound(ahead, behind, ELLIPSE, params)
    if section.kind == STRIP:
        params = (section.offset + section.half_width,) + (0.0,) * (NPARAM - 1)
        return ShiftBound(ahead, behind, STRIP, params)
    if section.kind == GRID:
        mask = section.mask
        nu, nv = mask.shape
        # top edge of the highest marked cell in each column, then running max along v
        any_col = mask.any(axis=0)
        top = nu - np.argmax(mask[::-1, :], axis=0)
        col_sup = np.where(any_col, section.u0 + top * section.cell, -np.inf)
        table = np.maximum.accumulate(col_sup)
        first = int(np.argmax(any_col))
        table = table[first:]
        v0 = section.v0 + first * section.cell
        params = (v0, section.cell, float(len(table))) + (0.0,) * (NPARAM - 3)
        return ShiftBound(ahead, behind, GRID, params, table)
    raise ValueError("unsupported section")


def in_shifted_obstacle(config: Mapping[int, float] | Sequence[float], edge: tuple[int, int],
                        bound: ShiftBound) -> bool:
    """Whether ``config`` lies in the region forbidden by priority ``edge = (ahead, behind)``."""
    a, b = edge
    return bool(bound.contains(config[a], config[b]))


def curve_intersects_shifted(samples, edge: tuple[int, int], bound: ShiftBound) -> bool:
    """Whether any sample of a forward-only curve lies in the shifted region.

    ``bound`` should come from a section inflated by ``2 * v_max * dt_sample`` so that a
    miss at every sample implies a miss for the continuous curve.
    """
    a, b = edge
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if len(arr) > 1 and np.any(np.diff(arr, axis=0) < 0):
        raise ContractViolation("configuration samples must be nondecreasing in time")
    return bool(np.any(bound.contains(arr[:, a], arr[:, b])))


@dataclass
class PriorityGraph:
    """Oriented graph over robot ids; edge ``(i, j)`` means ``i`` passes before ``j``."""

    vertices: set = field(default_factory=set)
    edges: set = field(default_factory=set)

    def add_edge(self, i: int, j: int):
        if i == j:
            raise ValueError("self edge")
        if (j, i) in self.edges:
            raise ValueError(f"pair ({i}, {j}) already oriented the other way")
        self.vertices.update((i, j))
        self.edges.add((i, j))

    def incoming(self, i: int):
        return [e for e in self.edges if e[1] == i]

    def remove_vertex(self, i: int):
        self.vertices.discard(i)
        self.edges = {e for e in self.edges if i not in e}

    def copy(self) -> "PriorityGraph":
        return PriorityGraph(set(self.vertices), set(self.edges))

    def __contains__(self, edge):
        return edge in self.edges

    def __len__(self):
        return len(self.edges)


def oriented(sections: Mapping[tuple[int, int], CrossSection], i: int, j: int) -> CrossSection | None:
    """Section of ``(i, j)`` oriented as ``(x_i, x_j)``, whichever way it is stored."""
    sec = sections.get((i, j))
    if sec is not None:
        return sec
    sec = sections.get((j, i))
    if sec is not None:
        return sec.transpose()
    return None


def build_bounds(graph: PriorityGraph, sections: Mapping[tuple[int, int], CrossSection],
                 eps: float = 0.0) -> dict[tuple[int, int], ShiftBound]:
    out = {}
    for i, j in graph.edges:
        sec = oriented(sections, i, j)
        if sec is None or sec.empty:
            continue
        if eps:
            sec = sec.inflated(eps)
        out[(i, j)] = shift_bound(sec, i, j)
    return out


@dataclass
class GoalRegion:
    thresholds: dict

    @classmethod
    def from_sections(cls, ids: Iterable[int], sections: Mapping[tuple[int, int], CrossSection],
                      floor: float = -math.inf) -> "GoalRegion":
        """Per-robot threshold = largest ``sup`` of the bounded sections involving the robot."""
        th = {i: floor for i in ids}
        for (i, j), sec in sections.items():
            if sec.empty or not sec.bounded:
                continue
            u_lo, u_hi, v_lo, v_hi = sec.bounds()
            if i in th:
                th[i] = max(th[i], u_hi)
            if j in th:
                th[j] = max(th[j], v_hi)
        return cls(th)


def in_goal(config: Mapping[int, float], goal: GoalRegion) -> bool:
    return all(config[i] >= goal.thresholds[i] for i in config)


def induced_priority_graph(positions: Mapping[int, np.ndarray],
                           sections: Mapping[tuple[int, int], CrossSection],
                           ) -> PriorityGraph:
    """Priority orientation realized by a collision-free trajectory.

    ``positions[i]`` is the robot's coordinate per sample; ``nan`` marks samples where the
    robot is absent. A pair is oriented ``i > j`` when the trajectory enters the region
    forbidden under ``j > i`` but never the one forbidden under ``i > j``. Pairs that
    never enter either region are unconstrained and get no edge.
    """
    g = PriorityGraph(vertices=set(positions))
    for (i, j), sec in sections.items():
        if sec.empty or i not in positions or j not in positions:
            continue
        xi, xj = np.asarray(positions[i], float), np.asarray(positions[j], float)
        both = ~(np.isnan(xi) | np.isnan(xj))
        if not both.any():
            continue
        xi, xj = xi[both], xj[both]
        in_ij = shift_bound(sec, i, j).contains(xi, xj).any()
        in_ji = shift_bound(sec.transpose(), j, i).contains(xj, xi).any()
        if in_ij and in_ji:
            raise InconsistentTrajectory(f"pair ({i}, {j}) violates both orientations")
        if in_ji:
            g.add_edge(i, j)
        elif in_ij:
            g.add_edge(j, i)
    return g
