"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are fed identical inputs and their outputs are compared before
timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from coopguide import _pykernels

try:
    from coopguide import _ckernels
except ImportError:  # extension not built
    _ckernels = None

SHAPE = (48, 48, 24)
RES = 0.1


def make_inputs(seed: int = 0):
    rng = np.random.default_rng(seed)
    state = np.zeros(SHAPE, dtype=np.uint8)
    state[rng.random(SHAPE) < 0.08] = 1
    state[0, 0, 0] = state[-1, -1, -1] = 0
    origin = np.zeros(3)
    extent = np.array(SHAPE) * RES
    starts = rng.uniform(0, extent, (2000, 3))
    ends = rng.uniform(0, extent, (2000, 3))
    sensor = extent / 2
    hit = rng.random(len(ends)) < 0.5
    return state, origin, starts, ends, sensor, hit


def cases(mod, inputs):
    state, origin, starts, ends, sensor, hit = inputs
    passable = state == 0
    unknown = np.zeros(SHAPE, dtype=bool)
    start, goal = (0, 0, 0), tuple(s - 1 for s in SHAPE)

    def raycast():
        return mod.raycast_first_occupied(state, origin, RES, starts, ends)

    def integrate():
        s = np.full(SHAPE, 2, dtype=np.uint8)
        mod.integrate_rays(s, origin, RES, sensor, ends, hit)
        return s

    def astar():
        return mod.astar(passable, unknown, start, goal, 2.0, -1, 1e9)[0]

    return {"raycast": raycast, "integrate": integrate, "astar": astar}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    inputs = make_inputs()
    py, cy = cases(_pykernels, inputs), cases(_ckernels, inputs)
    print(f"{'kernel':<10} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for name in py:
        tp, op = best_of(py[name], args.repeat)
        tc, oc = best_of(cy[name], args.repeat)
        if not np.array_equal(op, oc):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<10} {tp:>10.4f} {tc:>10.4f} {tp / tc:>7.1f}x")


if __name__ == "__main__":
    main()
