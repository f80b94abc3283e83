"""Stochastic traffic on an intersection layout and the delay-vs-density sweep."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coordination import (PriorityGraph, build_cross_section, induced_priority_graph,
                           shift_bound)
from .geometry import IntersectionLayout, crossroads
from .kinodynamics import KinodynamicModel, RobotState, SystemState, advance, max_state
from .planner import EdgeTable, PlannerConfig, decide_all, find_braking_violation
from .policy import new_robot_edges
from .verify import first_collision, interval_positions

log = logging.getLogger(__name__)


class InvariantViolation(AssertionError):
    pass


@dataclass
class ScenarioConfig:
    layout: IntersectionLayout = field(default_factory=crossroads)
    radius: float = 1.0
    v_max: float = 1.0
    a_max: float | None = None
    a_min: float | None = None
    dt: float | None = None
    substep: float | None = None
    densities: tuple = (1.0, 2.0, 5.0, 10.0)
    seeds: tuple = (1, 2, 3)
    horizon: int = 1_000_000
    robots: int = 500
    grid_resolution: float | None = None
    # override the arrival rule where it would close a priority cycle
    acyclic_priorities: bool = True

    def __post_init__(self):
        if self.dt is None:
            self.dt = self.radius / self.v_max  # one radius per step at full speed
        if self.substep is None:
            self.substep = self.dt / 4.0
        if self.a_max is None:
            self.a_max = self.v_max / (20.0 * self.dt)  # 20 steps from rest to full speed
        if self.a_min is None:
            self.a_min = -self.a_max
        for d in self.densities:
            if not 0.0 < d <= 100.0:
                raise ValueError(f"density {d} outside (0, 100]")
        if self.horizon <= 0 or self.robots <= 0:
            raise ValueError("horizon and robots must be positive")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def model(self) -> KinodynamicModel:
        return KinodynamicModel(self.v_max, self.a_max, self.a_min)

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig.for_robots(self.v_max, self.dt, self.substep)


def spawn_probability(density: float, v_max: float, dt: float, radius: float) -> float:
    """Per-lane per-step spawn probability; 100% is one robot every ``2R`` at full speed."""
    return min(1.0, (density / 100.0) * (v_max * dt) / (2.0 * radius))


@dataclass
class RobotRecord:
    id: int
    lane: str
    spawn_step: int
    exit_step: int | None = None
    ideal_steps: int = 0

    @property
    def travel_steps(self):
        return None if self.exit_step is None else self.exit_step - self.spawn_step

    @property
    def increase_percent(self):
        if self.exit_step is None:
            return None
        return 100.0 * (self.travel_steps - self.ideal_steps) / self.ideal_steps


@dataclass
class RunMetrics:
    density: float
    seed: int
    steps: int = 0
    spawned: int = 0
    completed: int = 0
    deferrals: int = 0
    achieved_density: float = 0.0
    mean_increase: float = math.nan
    max_increase: float = math.nan
    deadlocked: bool = False
    deadlock_step: int | None = None
    collisions: int = 0
    invariant_checks: int = 0
    constrained_pairs: int = 0
    priority_mismatches: int = 0
    robots: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "robots"}
        return d


class LaneTables:
    """Cross-sections and shift bounds per ordered lane pair, shared by all robots."""

    def __init__(self, layout: IntersectionLayout, radius: float, eps: float, resolution=None):
        self.raw = {}
        self.bounds = {}
        for a in layout.lane_ids:
            for b in layout.lane_ids:
                pa, pb = layout.path(a), layout.path(b)
                if (b, a) in self.raw:
                    sec = self.raw[(b, a)].transpose()
                else:
                    sec = build_cross_section(pa, pb, 2.0 * radius, resolution)
                self.raw[(a, b)] = sec
                if not sec.empty:
                    self.bounds[(a, b)] = shift_bound(sec.inflated(eps))
        self.check_layout(layout)

    def check_layout(self, layout):
        for (a, b), sec in self.raw.items():
            if sec.empty or not sec.bounded:
                continue
            u_lo, u_hi, _, _ = sec.bounds()
            ln = layout.lanes[a]
            if not (ln.spawn < u_lo and u_hi < ln.exit):
                raise ValueError(f"lane {a!r}: conflict with {b!r} not strictly between spawn and exit")


class TrafficSim:
    """One deterministic run at a fixed density and seed."""

    def __init__(self, cfg: ScenarioConfig, density: float, seed: int, verify: bool = False,
                 record_trace: bool = False, tables: LaneTables | None = None):
        self.cfg = cfg
        self.density = density
        self.seed = seed
        self.verify = verify
        self.pcfg = cfg.planner_config()
        self.model = cfg.model
        self.layout = cfg.layout
        self.paths = {lid: cfg.layout.path(lid) for lid in cfg.layout.lane_ids}
        self.tables = tables or LaneTables(cfg.layout, cfg.radius, self.pcfg.eps, cfg.grid_resolution)
        self.rng = np.random.default_rng([int(seed), int(round(density * 1000))])
        self.p_spawn = spawn_probability(density, cfg.v_max, cfg.dt, cfg.radius)

        self.state = SystemState((), [], [], (), ())
        self.graph = PriorityGraph()
        self.edge_bounds = {}
        self._table = None
        self.next_id = 1
        self.pending = {lid: 0 for lid in self.layout.lane_ids}
        self.records: dict[int, RobotRecord] = {}
        self.history: dict[int, list] = {}
        self.coexist: set = set()
        self.assigned: set = set()
        self.trace: list | None = [] if record_trace else None
        self.metrics = RunMetrics(density, seed)
        self.t = 0

    # -- spawning ---------------------------------------------------------------------

    def _ideal_steps(self, lane) -> int:
        ln = self.layout.lanes[lane]
        st = RobotState(ln.spawn, self.cfg.v_max)
        k = 0
        while st.x < ln.exit:
            st = max_state(st, self.model, self.cfg.dt)
            k += 1
        return k

    def _try_spawn(self, lane) -> bool:
        ln = self.layout.lanes[lane]
        rid = self.next_id
        s = self.state
        cand = SystemState(s.ids + (rid,), np.append(s.x, ln.spawn), np.append(s.v, self.cfg.v_max),
                           s.models + (self.model,), s.lanes + (lane,))
        lane_of = dict(zip(s.ids, s.lanes))
        new_edges = new_robot_edges(self.graph, rid, cand, lambda r: self.tables.raw[(lane_of[r], lane)],
                                    self.cfg.acyclic_priorities)
        lanes = dict(zip(cand.ids, cand.lanes))
        nb = {e: self.tables.bounds[(lanes[e[0]], lanes[e[1]])] for e in new_edges}
        sub = PriorityGraph(set(cand.ids), set(new_edges))
        if find_braking_violation(cand, sub, nb, self.pcfg, margin=self.pcfg.margin) is not None:
            return False
        self.next_id += 1
        self.state = cand
        self.graph.vertices.add(rid)
        for e in new_edges:
            self.graph.add_edge(*e)
        self.edge_bounds.update(nb)
        self.assigned.update(new_edges)
        self.coexist.update((min(e), max(e)) for e in new_edges)
        self._table = None
        self.records[rid] = RobotRecord(rid, lane, self.t, ideal_steps=self._ideal_steps(lane))
        self.history[rid] = [ln.spawn]
        self.metrics.spawned += 1
        return True

    def spawn_phase(self) -> bool:
        spawned = False
        draws = self.rng.random(len(self.layout.lane_ids))
        active = self.metrics.spawned < self.cfg.robots
        for lane, u in zip(self.layout.lane_ids, draws):
            if active and u < self.p_spawn:
                self.pending[lane] += 1
            if self.pending[lane] > 0 and self.metrics.spawned < self.cfg.robots:
                if self._try_spawn(lane):
                    self.pending[lane] -= 1
                    spawned = True
                else:
                    self.metrics.deferrals += 1
        return spawned

    # -- stepping ---------------------------------------------------------------------

    def step(self) -> bool:
        """Advance one step; returns False once the run is over."""
        spawned = self.spawn_phase()
        s = self.state
        if self._table is None:
            self._table = EdgeTable.build(s.ids, self.graph, self.edge_bounds)
        acc = decide_all(s, self.graph, self.edge_bounds, self.pcfg, self._table)
        nxt = advance(s, acc, self.cfg.dt)

        if len(s) > 1:
            _, xs = interval_positions(s, acc, self.cfg.dt, self.pcfg.substep / 4.0)
            hit = first_collision(s.ids, s.lanes, xs, self.paths, self.cfg.radius)
            if hit is not None:
                self.metrics.collisions += 1
                log.error("collision between %s and %s at step %d", hit[1], hit[2], self.t)
        if self.verify and len(nxt):
            v = find_braking_violation(nxt, self.graph, self.edge_bounds, self.pcfg, self._table)
            self.metrics.invariant_checks += 1
            if v is not None:
                raise InvariantViolation(f"step {self.t + 1}: braking trajectory enters {v.edge} region at t={v.time}")

        if self.trace is not None:
            for r, lane, x, v, a in zip(s.ids, s.lanes, s.x, s.v, acc):
                self.trace.append((self.t, r, lane, float(x), float(v), "A" if a else "B"))

        self.t += 1
        exits = [k for k, (lane, x) in enumerate(zip(nxt.lanes, nxt.x)) if x >= self.layout.lanes[lane].exit]
        for k, r in enumerate(nxt.ids):
            self.history[r].append(float(nxt.x[k]))
        if exits:
            keep = [k for k in range(len(nxt)) if k not in set(exits)]
            for k in exits:
                r = nxt.ids[k]
                self.records[r].exit_step = self.t
                self.graph.remove_vertex(r)
                self.edge_bounds = {e: b for e, b in self.edge_bounds.items() if r not in e}
                if self.trace is not None:
                    self.trace.append((self.t, r, nxt.lanes[k], float(nxt.x[k]), float(nxt.v[k]), "X"))
            nxt = SystemState(tuple(nxt.ids[k] for k in keep), nxt.x[keep], nxt.v[keep],
                              tuple(nxt.models[k] for k in keep), tuple(nxt.lanes[k] for k in keep))
            self._table = None
        elif not spawned and len(nxt) and s.same_as(nxt):
            self.metrics.deadlocked = True
            self.metrics.deadlock_step = self.t
            self.state = nxt
            return False
        self.state = nxt
        if self.metrics.spawned >= self.cfg.robots and len(nxt) == 0:
            return False
        return self.t < self.cfg.horizon

    def run(self) -> RunMetrics:
        while self.step():
            pass
        if self.trace is not None:
            for r, lane, x, v in zip(self.state.ids, self.state.lanes, self.state.x, self.state.v):
                self.trace.append((self.t, r, lane, float(x), float(v), "-"))
        return self.finish()

    # -- metrics ----------------------------------------------------------------------

    def finish(self) -> RunMetrics:
        m = self.metrics
        m.steps = self.t
        done = [r for r in self.records.values() if r.exit_step is not None]
        m.completed = len(done)
        m.robots = list(self.records.values())
        if done:
            inc = np.array([r.increase_percent for r in done])
            m.mean_increase = float(inc.mean())
            m.max_increase = float(inc.max())
        last_spawn = max((r.spawn_step for r in self.records.values()), default=0) + 1
        full = self.cfg.v_max * self.cfg.dt / (2.0 * self.cfg.radius)
        m.achieved_density = 100.0 * m.spawned / (last_spawn * len(self.layout.lane_ids)) / full
        m.constrained_pairs, m.priority_mismatches = self.priority_check()
        return m

    def positions(self, rid) -> tuple[int, np.ndarray]:
        return self.records[rid].spawn_step, np.asarray(self.history[rid])

    def priority_check(self) -> tuple[int, int]:
        """Compare realized and assigned orientations over every pair that coexisted."""
        constrained = mismatched = 0
        for i, j in sorted(self.coexist):
            si, xi = self.positions(i)
            sj, xj = self.positions(j)
            lo, hi = max(si, sj), min(si + len(xi), sj + len(xj))
            if hi <= lo:
                continue
            sec = self.tables.raw[(self.records[i].lane, self.records[j].lane)]
            g = induced_priority_graph({i: xi[lo - si:hi - si], j: xj[lo - sj:hi - sj]}, {(i, j): sec})
            for e in g.edges:
                constrained += 1
                if e not in self.assigned:
                    mismatched += 1
                    log.error("pair %s realized as %s against assigned priorities", (i, j), e)
        return constrained, mismatched


def run_scenario(cfg: ScenarioConfig, density: float, seed: int, verify: bool = False,
                 record_trace: bool = False, tables: LaneTables | None = None):
    """Run one density/seed cell; returns ``(sim, metrics)`` (``sim.trace`` holds rows if recorded)."""
    sim = TrafficSim(cfg, density, seed, verify, record_trace, tables)
    metrics = sim.run()
    return sim, metrics


def _cell(args):
    cfg, density, seed, verify = args
    _, m = run_scenario(cfg, density, seed, verify)
    m.robots = []
    return m


def run_sweep(cfg: ScenarioConfig, verify: bool = False, workers: int = 1) -> list[RunMetrics]:
    cells = [(cfg, d, s, verify) for d in cfg.densities for s in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_cell, cells))
    tables = LaneTables(cfg.layout, cfg.radius, cfg.planner_config().eps, cfg.grid_resolution)
    out = []
    for c in cells:
        _, m = run_scenario(*c, tables=tables)
        m.robots = []
        out.append(m)
    return out


def aggregate(runs: list[RunMetrics]) -> list[dict]:
    """One row per density: mean/stddev over seeds plus totals."""
    rows = []
    for d in sorted({r.density for r in runs}):
        rs = [r for r in runs if r.density == d]
        inc = np.array([r.mean_increase for r in rs], dtype=float)
        ach = np.array([r.achieved_density for r in rs], dtype=float)
        rows.append({
            "density": d,
            "seeds": len(rs),
            "achieved_density_mean": float(np.nanmean(ach)),
            "increase_mean": float(np.nanmean(inc)),
            "increase_std": float(np.nanstd(inc, ddof=1)) if len(rs) > 1 else 0.0,
            "completed": int(sum(r.completed for r in rs)),
            "deadlocks": int(sum(r.deadlocked for r in rs)),
            "collisions": int(sum(r.collisions for r in rs)),
            "priority_mismatches": int(sum(r.priority_mismatches for r in rs)),
            "deferrals": int(sum(r.deferrals for r in rs)),
        })
    return rows
