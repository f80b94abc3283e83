"""Compare the compiled and pure-Python shift-bound kernels.

    python benchmarks/bench_kernels.py [--robots 5 10 20 40] [--reps 200]

Reports the median time of the raw kernel call and of one full planning step per backend.
"""

import argparse
import itertools
import time

import numpy as np

from priocoord import kernels
from priocoord.coordination import EllipseSection, PriorityGraph, build_bounds
from priocoord.kinodynamics import KinodynamicModel, SystemState
from priocoord.planner import EdgeTable, PlannerConfig, _time_grid, _virtual_matrix, braking_samples, step


def instance(n, seed=0):
    rng = np.random.default_rng(seed)
    m = KinodynamicModel(1.0, 0.05, -0.05)
    cfg = PlannerConfig.for_robots(1.0, 1.0)
    ids = list(range(n))
    secs = {(i, j): EllipseSection((rng.uniform(5, 40), rng.uniform(5, 40)), (1.0, -0.5, 1.0), 2.0)
            for i, j in itertools.combinations(ids, 2)}
    g = PriorityGraph(set(ids), set(secs))
    s = SystemState.from_robots({i: (float(rng.uniform(-30, -20)), float(rng.uniform(0, 1))) for i in ids}, m)
    return s, g, build_bounds(g, secs, cfg.eps), cfg


def median(fn, reps):
    fn()
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(ts))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--robots", type=int, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()

    backends = ["python"] + (["compiled"] if kernels.compiled_available() else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing the Python backend only")
    before = kernels.BACKEND
    print(f"{'n':>4} {'edges':>6} " + " ".join(f"{b + ' kernel':>16} {b + ' step':>14}" for b in backends)
          + ("   speedup (kernel/step)" if len(backends) == 2 else ""))
    try:
        for n in args.robots:
            s, g, b, cfg = instance(n)
            tab = EdgeTable.build(s.ids, g, b)
            t_in, t_after, xm, vm = _time_grid(s, cfg)
            B = braking_samples(s, cfg, t_in, t_after)
            V = _virtual_matrix(s, cfg, t_in, t_after, xm, vm)
            res = []
            for name in backends:
                kernels.use(name)
                k = median(lambda: tab.hits(B, V, cfg.margin, skip_blocked=True), args.reps)
                st = median(lambda: step(s, g, b, cfg, tab), args.reps)
                res.append((k, st))
            line = f"{n:>4} {len(tab.edges):>6} " + " ".join(f"{k:>13.3f} ms {st:>11.3f} ms" for k, st in res)
            if len(res) == 2:
                line += f"   {res[0][0] / res[1][0]:6.1f}x / {res[0][1] / res[1][1]:.1f}x"
            print(line)
    finally:
        kernels.use(before)


if __name__ == "__main__":
    main()
