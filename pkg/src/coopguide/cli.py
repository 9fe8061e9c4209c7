"""Command line entry point: ``coopguide <command> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import kernels, svg
from .files import path_from_csv, path_to_csv, parse_vector
from .frames import Pose
from .guidance import GuidanceParams, viewpoint_search
from .planner import PlanRequest, find_path, plan
from .sim.experiment import (ALTITUDE, ConfigError, ExperimentConfig, build_scenario,
                             fsm_trace_csv, run_experiment)
from .sim.world import make_forest_world, make_gap_world, make_open_world
from .voxel_map import OccupancyMap


def _pose(text: str) -> Pose:
    v = parse_vector(text, (3, 4))
    return Pose(v[:3], v[3] if len(v) == 4 else 0.0, "L")


def _write(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_map(path: str) -> OccupancyMap:
    with open(path) as fh:
        return OccupancyMap.load(fh)


def _load_params(path: str | None) -> GuidanceParams:
    if path is None:
        return GuidanceParams()
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("guidance parameters must be a JSON object")
    try:
        return GuidanceParams(**data)
    except TypeError as e:
        raise ConfigError(str(e)) from e


# ------------------------------------------------------------------ commands
def cmd_map(a) -> int:
    if a.world == "gap":
        world = make_gap_world(a.ds, a.res, a.gap_width)
    elif a.world == "forest":
        world = make_forest_world(a.seed)
    else:
        world = make_open_world()
    m = world.make_map(a.res, margin=0.5)
    world.rasterize(m)
    with open(a.out, "w") as fh:
        m.dump(fh)
    print(f"wrote {a.out}: dims {m.dims}, resolution {m.resolution}", file=sys.stderr)
    return 0


def cmd_plan(a) -> int:
    m = _load_map(a.map)
    kw = dict(unknown_penalty=a.unknown_penalty, timeout=a.timeout, max_expansions=a.max_expansions)
    start, goal = _pose(a.start), _pose(a.goal)
    if a.raw:
        res = find_path(PlanRequest(m, start, goal, a.d_min, **kw))
    else:
        res = plan(m, start, goal, a.d_min, **kw)
    if not res.found:
        print(f"no path: {res.reason} ({res.nodes_expanded} expansions)", file=sys.stderr)
        return 2
    path = res.path
    text = path_to_csv(path)
    if a.out:
        _write(a.out, text)
    else:
        sys.stdout.write(text)
    print(f"{len(path)} poses, cost {res.cost:.4f} m, {res.nodes_expanded} expansions, "
          f"{res.elapsed * 1000:.1f} ms [{kernels.BACKEND}]", file=sys.stderr)
    if a.svg:
        pts = [(start.position, "#2166ac", "start"), (goal.position, "#b2182b", "goal")]
        _write(a.svg, svg.map_svg(m, start.z, paths=[(path.positions, "#2166ac")], points=pts))
    return 0


def cmd_viewpoint(a) -> int:
    m = _load_map(a.map)
    with open(a.path) as fh:
        path_S = path_from_csv(fh.read())
    if len(path_S) == 0:
        print("the path file has no poses", file=sys.stderr)
        return 2
    x_P = parse_vector(a.primary)
    params = _load_params(a.params)
    search = viewpoint_search(m, path_S, x_P, params)
    if a.svg:
        _write(a.svg, svg.regions_svg(m, search, path_S, x_P))
    print(f"{search.n_intersected} visibility regions intersected", file=sys.stderr)
    if search.point is None:
        print("none")
        return 1
    print(",".join(repr(float(v)) for v in search.point))
    return 0


def _config(a, **over) -> ExperimentConfig:
    data = {}
    if a.config:
        with open(a.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in over.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def _progress(r) -> None:
    print(f"  d_S={r.d_S:.2f} run={r.run} {r.reason} t={r.sim_time:.1f}s "
          f"clearance={r.min_clearance_S:.3f}", file=sys.stderr)


def _reports(rep, out: str) -> None:
    _write(os.path.join(out, "results.csv"), rep.summary_csv())
    _write(os.path.join(out, "runs.csv"), rep.runs_csv())
    _write(os.path.join(out, "trace.csv"), rep.trace_csv())
    _write(os.path.join(out, "path_sizes.csv"), rep.path_size_histogram_csv())
    _write(os.path.join(out, "bandwidth.csv"), rep.bandwidth_csv())


def _trajectory_svg(trial, world, goals) -> str:
    tr = trial.trajectory
    if tr is None or len(tr) == 0:
        tr = np.zeros((0, 7))
    return svg.trajectory_svg(world, ALTITUDE, tr[:, 1:3], tr[:, 4:6], goals=goals)


def cmd_sim_gap(a) -> int:
    cfg = _config(a, ds_sweep=a.ds_sweep, runs=a.runs, seed=a.seed,
                  keep_traces=True if a.svg else None)
    if cfg.world == "forest":
        raise ConfigError("sim-gap needs world 'gap' or 'open'")
    rep = run_experiment(cfg, progress=None if a.quiet else _progress)
    _reports(rep, a.out)
    if a.svg:
        for r in rep.trials:
            if r.run != 0:
                continue
            sc = build_scenario(cfg, r.d_S, r.run)[0]
            name = f"trajectory_dS{r.d_S:.2f}_run{r.run}.svg"
            _write(os.path.join(a.out, name), _trajectory_svg(r, sc.world, [g.position for g in sc.goals]))
    s = rep.successes()
    for d in sorted(s):
        print(f"d_S={d:.2f} successes {s[d]}/{cfg.runs}")
    print(f"total {rep.total_successes()}")
    return 0


def cmd_sim_forest(a) -> int:
    probe = _config(a)
    d_S = float(probe.params.get("d_S", GuidanceParams().d_S))
    cfg = _config(a, world="forest", seed=a.seed, goals=a.goals, runs=1,
                  ds_sweep={"values": [d_S]}, keep_traces=True,
                  time_limit=a.time_limit)
    rep = run_experiment(cfg, progress=None if a.quiet else _progress)
    _reports(rep, a.out)
    r = rep.trials[0]
    _write(os.path.join(a.out, "fsm_trace.csv"), fsm_trace_csv(r.trace))
    sc = build_scenario(cfg, d_S, 0)[0]
    _write(os.path.join(a.out, "trajectory.svg"), _trajectory_svg(r, sc.world, []))
    print(f"{r.reason}: {r.goals_reached}/{cfg.goals} goals in {r.sim_time:.1f} s, "
          f"min clearance {r.min_clearance_S:.3f} m")
    return 0 if r.success else 1


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopguide", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("map", help="rasterise a scenario world into a voxmap file")
    s.add_argument("--world", choices=("gap", "forest", "open"), default="gap")
    s.add_argument("--ds", type=float, default=0.5, help="clearance that sizes the gap")
    s.add_argument("--gap-width", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--res", type=float, default=0.1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_map)

    s = sub.add_parser("plan", help="plan a clearance-constrained path on a voxmap")
    s.add_argument("--map", required=True)
    s.add_argument("--start", required=True, help="x,y,z[,heading]")
    s.add_argument("--goal", required=True, help="x,y,z[,heading]")
    s.add_argument("--d-min", type=float, required=True)
    s.add_argument("--unknown-penalty", type=float, default=2.0)
    s.add_argument("--timeout", type=float, default=10.0)
    s.add_argument("--max-expansions", type=int, default=None)
    s.add_argument("--raw", action="store_true", help="skip shortcutting")
    s.add_argument("--out", help="path CSV (default: stdout)")
    s.add_argument("--svg")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("viewpoint", help="find a guiding viewpoint for a secondary path")
    s.add_argument("--map", required=True)
    s.add_argument("--path", required=True, help="path CSV x,y,z,heading")
    s.add_argument("--primary", required=True, help="x,y,z of the primary")
    s.add_argument("--params", help="JSON file holding an object of guidance parameters")
    s.add_argument("--svg")
    s.set_defaults(func=cmd_viewpoint)

    s = sub.add_parser("sim-gap", help="gap-width study")
    s.add_argument("--ds-sweep", default=None, help="start:stop:step")
    s.add_argument("--runs", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--config")
    s.add_argument("--out", default="out/gap")
    s.add_argument("--svg", action="store_true", help="trajectory SVG for run 0 of every d_S")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sim_gap)

    s = sub.add_parser("sim-forest", help="forest mission with +x goal increments")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--goals", type=int, default=1)
    s.add_argument("--time-limit", type=float, default=None)
    s.add_argument("--config")
    s.add_argument("--out", default="out/forest")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_sim_forest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
