"""Command line: run one scenario, sweep densities, re-check a written trace.

Scenario files are INI::

    [layout]
    preset = crossroads        ; or omit and give [path:NAME] sections
    lane_offset = 3

    [path:east]
    points = -33.5,-1.5; 60,-1.5
    spawn = 0
    exit = 47

    [robots]
    radius = 1
    v_max = 1
    count = 500

    [planner]
    dt = 1
    substep = 0.25

    [sweep]
    densities = 1, 2, 5, 10
    seeds = 1, 2, 3

Exit codes: 0 ok, 1 violation (or deadlock with --strict), 2 usage/config error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .coordination import induced_priority_graph
from .geometry import IntersectionLayout, LaneSpec, PathGeometry, crossroads
from .kinodynamics import SystemState
from .simulator import (InvariantViolation, LaneTables, ScenarioConfig, aggregate, run_scenario,
                        run_sweep)
from .verify import first_collision, interval_positions

log = logging.getLogger("priocoord")

TRACE_MAGIC = "# priocoord trace v1"
TRACE_COLUMNS = ["step", "robot_id", "lane", "x", "v", "decision"]


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


# -- scenario files ------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _layout(cp: configparser.ConfigParser) -> IntersectionLayout:
    paths = [s for s in cp.sections() if s.startswith("path:")]
    sec = cp["layout"] if cp.has_section("layout") else {}
    preset = sec.get("preset", "crossroads" if not paths else "")
    if preset and paths:
        raise ConfigError("give either a layout preset or [path:*] sections, not both")
    if preset == "crossroads":
        kw = {k: float(sec[k]) for k in ("lane_offset", "approach", "departure", "runout") if k in sec}
        radius = cp.getfloat("robots", "radius", fallback=1.0)
        return crossroads(radius=radius, **kw)
    if preset:
        raise ConfigError(f"unknown layout preset {preset!r}")
    lanes = []
    for name in paths:
        s = cp[name]
        xy = _floats(s.get("points", ""))
        if len(xy) < 4 or len(xy) % 2:
            raise ConfigError(f"[{name}] points must be at least two x,y pairs")
        path = PathGeometry(name[len("path:"):], tuple(zip(xy[0::2], xy[1::2])))
        lanes.append(LaneSpec(path, s.getfloat("spawn", 0.0), s.getfloat("exit", path.length)))
    return IntersectionLayout(lanes, name=sec.get("name", "custom"))


def load_scenario(path) -> ScenarioConfig:
    """Parse a scenario file; raises :class:`ConfigError` on any problem."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"scenario file not found: {p}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(p)
        layout = _layout(cp)
        kw = {}
        for key, sect, name in (("radius", "robots", "radius"), ("v_max", "robots", "v_max"),
                                ("a_max", "robots", "a_max"), ("a_min", "robots", "a_min"),
                                ("dt", "planner", "dt"), ("substep", "planner", "substep"),
                                ("grid_resolution", "planner", "grid_resolution")):
            if cp.has_option(sect, name):
                kw[key] = cp.getfloat(sect, name)
        if cp.has_option("robots", "count"):
            kw["robots"] = cp.getint("robots", "count")
        if cp.has_option("planner", "acyclic_priorities"):
            kw["acyclic_priorities"] = cp.getboolean("planner", "acyclic_priorities")
        if cp.has_option("sweep", "densities"):
            kw["densities"] = tuple(_floats(cp.get("sweep", "densities")))
        if cp.has_option("sweep", "seeds"):
            kw["seeds"] = tuple(int(v) for v in _floats(cp.get("sweep", "seeds")))
        if cp.has_option("sweep", "horizon"):
            kw["horizon"] = cp.getint("sweep", "horizon")
        return ScenarioConfig(layout=layout, **kw)
    except ConfigError:
        raise
    except (configparser.Error, ValueError, KeyError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc


# -- traces ---------------------------------------------------------------------------------

def write_trace(path, rows, layout: IntersectionLayout, meta: dict, digits: int = 17) -> None:
    fmt = f"{{:.{digits}g}}"
    with open(path, "w", newline="") as fh:
        fh.write(TRACE_MAGIC + "\n")
        fh.write(f"# layout: {layout.fingerprint()}\n")
        fh.write("# meta: " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for step, rid, lane, x, v, dec in rows:
            w.writerow([step, rid, lane, fmt.format(x), fmt.format(v), dec])


def read_trace(path):
    """``(fingerprint, meta, rows)`` with rows as ``(step, id, lane, x, v, decision)``."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != TRACE_MAGIC:
            raise SchemaError(f"{path}: not a priocoord trace")
        lay = fh.readline().rstrip("\n")
        if not lay.startswith("# layout: "):
            raise SchemaError(f"{path}: missing layout header")
        meta_line = fh.readline().rstrip("\n")
        if not meta_line.startswith("# meta: "):
            raise SchemaError(f"{path}: missing meta header")
        meta = json.loads(meta_line[len("# meta: "):])
        r = csv.reader(fh)
        if next(r, None) != TRACE_COLUMNS:
            raise SchemaError(f"{path}: unexpected columns")
        rows = []
        for rec in r:
            if len(rec) != 6:
                raise SchemaError(f"{path}: malformed row {rec}")
            rows.append((int(rec[0]), int(rec[1]), rec[2], float(rec[3]), float(rec[4]), rec[5]))
    return lay[len("# layout: "):], meta, rows


def write_edges(path, edges) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ahead", "behind"])
        for a, b in sorted(edges):
            w.writerow([a, b])


def read_edges(path) -> set:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if next(r, None) != ["ahead", "behind"]:
            raise SchemaError(f"{path}: unexpected columns")
        return {(int(a), int(b)) for a, b in r}


def trace_states(rows, cfg: ScenarioConfig):
    """Per step: ``(SystemState, accelerate flags)`` for rows carrying an A/B decision."""
    by_step = {}
    for step, rid, lane, x, v, dec in rows:
        if dec in ("A", "B"):
            by_step.setdefault(step, []).append((rid, lane, x, v, dec))
    model = cfg.model
    out = []
    for step in sorted(by_step):
        recs = by_step[step]
        s = SystemState(tuple(r[0] for r in recs), np.array([r[2] for r in recs]),
                        np.array([r[3] for r in recs]), (model,) * len(recs),
                        tuple(r[1] for r in recs))
        out.append((step, s, np.array([r[4] == "A" for r in recs])))
    return out


def check_trace(rows, cfg: ScenarioConfig, edges: set | None) -> list[str]:
    """Problems found in a trace: collisions, non-physical steps, priority mismatches."""
    problems = []
    paths = {lid: cfg.layout.path(lid) for lid in cfg.layout.lane_ids}
    for lane in {r[2] for r in rows}:
        if lane not in paths:
            raise SchemaError(f"trace lane {lane!r} not in scenario layout")
    fine = cfg.substep / 4.0
    states = trace_states(rows, cfg)
    nxt_x = {}
    for step, s, acc in states:
        for k, r in enumerate(s.ids):
            if r in nxt_x and abs(nxt_x[r] - s.x[k]) > 1e-9 * max(1.0, abs(s.x[k])):
                problems.append(f"step {step}: robot {r} at {s.x[k]!r}, dynamics give {nxt_x[r]!r}")
        tau, xs = interval_positions(s, acc, cfg.dt, fine)
        nxt_x = {r: float(xs[k, -1]) for k, r in enumerate(s.ids)}
        hit = first_collision(s.ids, s.lanes, xs, paths, cfg.radius)
        if hit is not None:
            problems.append(f"step {step}: robots {hit[1]} and {hit[2]} overlap at "
                            f"t+{tau[hit[0]]:g} (distance {hit[3]:.6g})")
    if edges is not None:
        hist, first, lane_of = {}, {}, {}
        for step, s, _ in states:
            for k, r in enumerate(s.ids):
                first.setdefault(r, step)
                lane_of[r] = s.lanes[k]
                hist.setdefault(r, []).append(float(s.x[k]))
        tables = LaneTables(cfg.layout, cfg.radius, cfg.planner_config().eps, cfg.grid_resolution)
        for i, j in sorted({(min(e), max(e)) for e in edges}):
            if i not in hist or j not in hist:
                continue
            lo = max(first[i], first[j])
            hi = min(first[i] + len(hist[i]), first[j] + len(hist[j]))
            if hi <= lo:
                continue
            xi = np.array(hist[i][lo - first[i]:hi - first[i]])
            xj = np.array(hist[j][lo - first[j]:hi - first[j]])
            g = induced_priority_graph({i: xi, j: xj}, {(i, j): tables.raw[(lane_of[i], lane_of[j])]})
            for e in g.edges:
                if e not in edges:
                    problems.append(f"pair {(i, j)} realized as {e[0]} > {e[1]} against assigned priority")
    return problems


# -- commands -------------------------------------------------------------------------------

def _apply_seed(cfg: ScenarioConfig, seed):
    if seed is not None:
        cfg.seeds = (seed,)
    return cfg


def cmd_run(args) -> int:
    cfg = _apply_seed(load_scenario(args.scenario), args.seed)
    density = args.density if args.density is not None else cfg.densities[0]
    if not 0.0 < density <= 100.0:
        raise ConfigError(f"density {density} outside (0, 100]")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    try:
        sim, m = run_scenario(cfg, density, seed, verify=args.verify, record_trace=True)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    meta = {"density": density, "seed": seed, "dt": cfg.dt}
    write_trace(out / "trace.csv", sim.trace, cfg.layout, meta, args.format)
    write_edges(out / "edges.csv", sim.assigned)
    summary = m.summary()
    (out / "metrics.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"density {density:g} seed {seed}: {m.completed} robots, mean increase "
          f"{m.mean_increase:.3f}%, collisions {m.collisions}, deadlocked {m.deadlocked}")
    if m.collisions or m.priority_mismatches:
        return 1
    if m.deadlocked and args.strict:
        print(f"deadlock at step {m.deadlock_step}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_seed(load_scenario(args.scenario), args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    try:
        runs = run_sweep(cfg, verify=args.verify, workers=args.workers)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    rows = aggregate(runs)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    cells = [r.summary() for r in runs]
    (out / "metrics.json").write_text(json.dumps({"aggregate": rows, "runs": cells}, indent=2) + "\n")
    for r in rows:
        print(f"density {r['density']:g}%: increase {r['increase_mean']:.3f}% "
              f"(sd {r['increase_std']:.3f}), deadlocks {r['deadlocks']}, collisions {r['collisions']}")
    if any(r["collisions"] or r["priority_mismatches"] for r in rows):
        return 1
    if args.strict and any(r["deadlocks"] for r in rows):
        return 1
    return 0


def cmd_check(args) -> int:
    cfg = load_scenario(args.scenario)
    fp, meta, rows = read_trace(args.trace)
    if fp != cfg.layout.fingerprint():
        raise SchemaError("trace was produced for a different layout than the scenario file")
    if not math.isclose(float(meta.get("dt", cfg.dt)), cfg.dt):
        raise SchemaError("trace time step differs from the scenario's")
    edges_path = Path(args.edges) if args.edges else Path(args.trace).with_name("edges.csv")
    edges = read_edges(edges_path) if edges_path.is_file() else None
    problems = check_trace(rows, cfg, edges)
    for p in problems:
        print(p)
    if problems:
        print(f"{len(problems)} problem(s)", file=sys.stderr)
        return 1
    print(f"ok: {len({r[1] for r in rows})} robots, {len(rows)} rows"
          + ("" if edges is not None else " (no edges file, priorities not checked)"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="priocoord", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario INI file")
        p.add_argument("-o", "--output", default="out", help="output directory")
        p.add_argument("--verify", action="store_true", help="assert the braking invariant every step")
        p.add_argument("--strict", action="store_true", help="exit 1 on deadlock")
        p.add_argument("--seed", type=int, help="override the scenario seeds")

    p = sub.add_parser("run", help="simulate one density and seed, write trace and metrics")
    common(p)
    p.add_argument("--density", type=float, help="density percent (default: first sweep density)")
    p.add_argument("--format", type=int, default=17, metavar="DIGITS",
                   help="significant digits in the trace (17 round-trips exactly)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run every density/seed cell, write aggregate rows")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="re-verify a written trace against its scenario")
    p.add_argument("trace")
    p.add_argument("scenario")
    p.add_argument("--edges", help="assigned priorities (default: edges.csv beside the trace)")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
