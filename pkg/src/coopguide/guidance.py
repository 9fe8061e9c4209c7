"""Cooperative guidance: path planning for both vehicles, guiding-viewpoint
selection and the mission state machine."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
import shapely

from . import poly2d
from .frames import Path, Pose, Transform4DOF, apply_path
from .planner import path_valid, plan
from .poly2d import MultiPolygon
from .voxel_map import EPS, OccupancyMap, add_obstacle_box


@dataclass(frozen=True)
class GuidanceParams:
    d_P: float = 0.9
    d_S: float = 0.8
    w_P: float = 1.5
    h_P: float = 10.0
    w_S: float = 1.3
    h_S: float = 10.0
    n_samples: int = 500
    d_ray: float = 6.0
    d_buffer: float = 2.0
    delta: float = 0.5
    replan_rate: float = 5.0
    guide_rate: float = 5.0
    unknown_penalty: float = 2.0
    plan_timeout: float = 10.0
    max_expansions: int | None = None
    poi_precision: float | None = None  # defaults to half the map resolution

    def __post_init__(self):
        for name in ("d_P", "d_S", "w_P", "h_P", "w_S", "h_S", "d_ray", "d_buffer",
                     "delta", "replan_rate", "guide_rate", "plan_timeout"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_samples < 8:
            raise ValueError("n_samples must be at least 8")

    def with_(self, **kw) -> "GuidanceParams":
        return replace(self, **kw)


class FsmState(str, enum.Enum):
    IDLE = "IDLE"
    PLANNING = "PLANNING"
    PRIMARY_MOVING = "PRIMARY_MOVING"
    SECONDARY_MOVING = "SECONDARY_MOVING"
    GOAL_REACHED = "GOAL_REACHED"
    FAILURE = "FAILURE"


# ------------------------------------------------------------------ regions
def visibility_region(m: OccupancyMap, waypoint, params: GuidanceParams) -> MultiPolygon:
    """Star-shaped region seen from ``waypoint`` in its horizontal plane.

    Vertex ``k`` lies where ray ``k`` enters the first OCCUPIED voxel it
    meets, or at ``d_ray`` when the ray is clear.  A waypoint inside an
    obstacle yields an empty region.
    """
    p = np.asarray(waypoint.position if isinstance(waypoint, Pose) else waypoint, float)
    n = params.n_samples
    ang = np.arange(n) * (2.0 * math.pi / n)
    dirs = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(n)])
    ends = p + params.d_ray * dirs
    flat = m.first_hits(np.repeat(p[None], n, axis=0), ends)
    r = np.full(n, params.d_ray)
    hit = flat >= 0
    if hit.any():
        lo = m.origin + m.unravel(flat[hit]) * m.resolution
        d = dirs[hit, :2]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo[:, :2] - p[:2]) / d
            tb = (lo[:, :2] + m.resolution - p[:2]) / d
        near = np.where(d == 0.0, -np.inf, np.minimum(ta, tb))
        r[hit] = np.clip(near.max(axis=1), 0.0, params.d_ray)
    ring = p[:2] + r[:, None] * dirs[:, :2]
    if np.count_nonzero(r > 0) < 3:
        return MultiPolygon.empty()
    return poly2d.make_valid_polygon(ring)


def slice_index(m: OccupancyMap, z: float) -> int | None:
    k = int(math.floor((z - m.origin[2]) / m.resolution))
    return k if 0 <= k < m.dims[2] else None


def safe_region(m: OccupancyMap, z: float, d_P: float, vis_union: MultiPolygon) -> MultiPolygon:
    """Union of voxel squares in the slice at ``z`` with clearance above ``d_P``
    whose centres lie inside ``vis_union``."""
    k = slice_index(m, z)
    if k is None or vis_union.is_empty():
        return MultiPolygon.empty()
    res = m.resolution
    ok = m.distance_field()[:, :, k] > d_P + EPS
    x0, y0, x1, y1 = vis_union.bounds()
    i0 = max(0, int(math.floor((x0 - m.origin[0]) / res)))
    i1 = min(m.dims[0], int(math.ceil((x1 - m.origin[0]) / res)) + 1)
    j0 = max(0, int(math.floor((y0 - m.origin[1]) / res)))
    j1 = min(m.dims[1], int(math.ceil((y1 - m.origin[1]) / res)) + 1)
    mask = np.zeros(ok.shape, dtype=bool)
    if i1 <= i0 or j1 <= j0:
        return MultiPolygon.empty()
    sub = ok[i0:i1, j0:j1]
    ii, jj = np.nonzero(sub)
    if len(ii):
        ii = ii + i0
        jj = jj + j0
        cx = m.origin[0] + (ii + 0.5) * res
        cy = m.origin[1] + (jj + 0.5) * res
        geom = vis_union.to_shapely()
        shapely.prepare(geom)
        inside = shapely.contains_xy(geom, cx, cy)
        mask[ii[inside], jj[inside]] = True
    return _mask_to_polygons(m, mask)


def _mask_to_polygons(m: OccupancyMap, mask: np.ndarray) -> MultiPolygon:
    """Merge the True cells of a 2D (x, y) mask into polygons via row runs."""
    res = m.resolution
    ox, oy = m.origin[0], m.origin[1]
    rects = []
    for j in range(mask.shape[1]):
        col = mask[:, j]
        if not col.any():
            continue
        padded = np.concatenate([[False], col, [False]])
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        for a, b in zip(edges[::2], edges[1::2]):
            rects.append(shapely.box(ox + a * res, oy + j * res, ox + b * res, oy + (j + 1) * res))
    if not rects:
        return MultiPolygon.empty()
    return poly2d.from_shapely(shapely.union_all(rects, grid_size=poly2d.SNAP))


# ---------------------------------------------------------------- viewpoint
@dataclass
class ViewpointSearch:
    """Every intermediate region of a viewpoint search, for inspection."""

    buffer: MultiPolygon
    visibility: list
    safe: MultiPolygon
    closest: MultiPolygon
    intersection: MultiPolygon
    n_intersected: int
    point: np.ndarray | None


def viewpoint_search(m: OccupancyMap, path_S: Path, x_P, params: GuidanceParams) -> ViewpointSearch:
    if len(path_S) == 0:
        raise ValueError("viewpoint search needs a nonempty path")
    x_P = np.asarray(x_P, float)
    B = poly2d.buffer_polyline(path_S.positions[:, :2], params.d_buffer)
    V_all = [poly2d.difference(visibility_region(m, p, params), B) for p in path_S.positions]
    union_V = poly2d.union_all([v for v in V_all if not v.is_empty()])
    S = safe_region(m, x_P[2], params.d_P, union_V)
    empty = MultiPolygon.empty()
    if S.is_empty():
        return ViewpointSearch(B, V_all, S, empty, empty, 0, None)
    dists = [poly2d.distance_to(x_P[:2], part) for part in S]
    closest = MultiPolygon.of(S[int(np.argmin(dists))])

    I_all = closest
    found = 0
    for V in V_all:
        I_new = poly2d.intersection(I_all, V)
        if I_new.is_empty():
            break
        I_all = I_new
        found += 1
    if not found:
        return ViewpointSearch(B, V_all, S, closest, empty, 0, None)

    precision = params.poi_precision or m.resolution / 2.0
    best = None
    for part in I_all:
        pt, c = poly2d.pole_of_inaccessibility(part, precision)
        # slivers thinner than the pole precision come from ray sampling, not real visibility
        key = (c < precision, float(np.hypot(*(pt - x_P[:2]))), float(pt[0]), float(pt[1]))
        if best is None or key < best[0]:
            best = (key, pt)
    g = np.array([best[1][0], best[1][1], x_P[2]])
    return ViewpointSearch(B, V_all, S, closest, I_all, found, g)


def find_guiding_viewpoint(m: OccupancyMap, path_S: Path, x_P, params: GuidanceParams):
    """Guiding viewpoint for the primary, or None when no safe spot sees waypoint 0."""
    return viewpoint_search(m, path_S, x_P, params).point


# -------------------------------------------------------------- planning step
@dataclass
class PlanOutcome:
    state: FsmState
    path_P: Path | None = None
    path_S: Path | None = None
    viewpoint: np.ndarray | None = None
    search: ViewpointSearch | None = None
    reason: str = ""


def primary_goal_heading(g_P, path_S: Path) -> float:
    """Heading from the viewpoint towards the first secondary waypoint."""
    d = path_S.positions[0, :2] - np.asarray(g_P, float)[:2]
    if not np.any(d):
        return 0.0
    return math.atan2(d[1], d[0])


def plan_step(m: OccupancyMap, pose_P: Pose, pose_S: Pose, goal_S: Pose,
              params: GuidanceParams) -> PlanOutcome:
    res = m.resolution
    if np.linalg.norm(pose_S.position - goal_S.position) < res:
        return PlanOutcome(FsmState.GOAL_REACHED, reason="goal")
    kw = dict(unknown_penalty=params.unknown_penalty, timeout=params.plan_timeout,
              max_expansions=params.max_expansions)

    m_S = add_obstacle_box(m, pose_P.position, params.w_P, params.h_P)
    r_S = plan(m_S, pose_S, goal_S, params.d_S, **kw)
    if r_S.path is None:
        return PlanOutcome(FsmState.FAILURE, reason=f"secondary path: {r_S.reason}")
    path_S = r_S.path

    search = viewpoint_search(m, path_S, pose_P.position, params)
    g_P = search.point
    if g_P is None:
        return PlanOutcome(FsmState.FAILURE, path_S=path_S, search=search, reason="no viewpoint")
    if np.linalg.norm(pose_P.position - g_P) < res:
        return PlanOutcome(FsmState.SECONDARY_MOVING, path_S=path_S, viewpoint=g_P, search=search)

    m_P = add_obstacle_box(m, pose_S.position, params.w_S, params.h_S)
    goal_P = Pose(g_P, primary_goal_heading(g_P, path_S), pose_P.frame)
    r_P = plan(m_P, pose_P, goal_P, params.d_P, **kw)
    if r_P.path is None:
        return PlanOutcome(FsmState.FAILURE, path_S=path_S, viewpoint=g_P, search=search,
                           reason=f"primary path: {r_P.reason}")
    return PlanOutcome(FsmState.PRIMARY_MOVING, r_P.path, path_S, g_P, search)


def guide_step(path_S: Path, T_SL: Transform4DOF, delta: float) -> Path:
    """Re-express the secondary path in its body frame and drop the visited prefix."""
    p = apply_path(T_SL, path_S)
    if len(p) == 0:
        return p
    far = np.linalg.norm(p.positions, axis=1) >= delta
    if not far.any():
        return Path.empty(p.frame)
    return p[int(np.argmax(far)):]


# ----------------------------------------------------------------------- FSM
@dataclass
class FsmInputs:
    t: float
    map: OccupancyMap
    pose_P: Pose
    pose_S: Pose           # estimate, expressed in the planning frame
    T_SL: Transform4DOF    # planning frame -> secondary body frame (estimate)
    primary_done: bool = False


@dataclass
class Message:
    kind: str   # "path_P" for the primary, "path_S" for the secondary
    path: Path


@dataclass
class GuidanceFSM:
    params: GuidanceParams = field(default_factory=GuidanceParams)
    periodic: bool = True
    auto_increment: float | None = None
    state: FsmState = FsmState.IDLE
    goal: Pose | None = None
    path_P: Path | None = None
    path_S: Path | None = None
    viewpoint: np.ndarray | None = None
    last_outcome: PlanOutcome | None = None
    trace: list = field(default_factory=list)
    n_plans: int = 0
    goals: deque = field(default_factory=deque)
    _next_guide: float = -math.inf
    _guided: bool = False

    def push_goal(self, goal: Pose) -> None:
        self.goals.append(goal)

    def _log(self, t: float, event: str) -> None:
        self.trace.append((t, self.state.value, event))

    def _set(self, t: float, state: FsmState, event: str) -> None:
        self.state = state
        self._log(t, event)

    def _guide(self, inp: FsmInputs, out: list) -> None:
        if not self.periodic and self._guided:
            return
        if inp.t + 1e-9 < self._next_guide:
            return
        self._next_guide = inp.t + 1.0 / self.params.guide_rate
        self._guided = True
        body = guide_step(self.path_S, inp.T_SL, self.params.delta)
        if len(body) == 0 and len(self.path_S):
            # keep steering onto the goal until it is reached, else the
            # secondary would hover wherever the last waypoint was pruned
            body = apply_path(inp.T_SL, self.path_S[-1:])
        # the pruned path is what the next guiding step starts from
        self.path_S = self.path_S[len(self.path_S) - len(body):]
        out.append(Message("path_S", body))

    def tick(self, inp: FsmInputs) -> list:
        out: list = []
        res = inp.map.resolution
        s = self.state
        if s in (FsmState.IDLE, FsmState.FAILURE, FsmState.GOAL_REACHED):
            if not self.goals and s == FsmState.GOAL_REACHED and self.auto_increment:
                g = self.goal
                self.goals.append(Pose(g.position + [self.auto_increment, 0.0, 0.0], g.heading, g.frame))
            if self.goals:
                self.goal = self.goals.popleft()
                self._set(inp.t, FsmState.PLANNING, "new_goal")
                s = self.state
        if s == FsmState.PLANNING:
            o = plan_step(inp.map, inp.pose_P, inp.pose_S, self.goal, self.params)
            self.n_plans += 1
            self.last_outcome = o
            self.path_P, self.path_S, self.viewpoint = o.path_P, o.path_S, o.viewpoint
            if o.path_S is not None and len(o.path_S):
                # a goal snapped away from an obstacle becomes the goal to reach
                end = o.path_S.positions[-1]
                if not np.array_equal(end, self.goal.position):
                    self.goal = Pose(end, self.goal.heading, self.goal.frame)
            event = o.reason or "planned"
            if o.state == FsmState.PRIMARY_MOVING:
                self._set(inp.t, o.state, event)
                out.append(Message("path_P", o.path_P))
            elif o.state == FsmState.SECONDARY_MOVING:
                self._set(inp.t, o.state, "at_viewpoint")
                self._start_guiding(inp, out)
            else:
                self._set(inp.t, o.state, event)
            return out
        if s == FsmState.PRIMARY_MOVING:
            near = np.linalg.norm(inp.pose_P.position - self.viewpoint) < res
            if near or inp.primary_done:
                if not path_valid(inp.map, self.path_S, self.params.d_S):
                    # scans taken on the way revealed obstacles near the plan
                    self._set(inp.t, FsmState.PLANNING, "path_invalidated")
                    return out
                self._set(inp.t, FsmState.SECONDARY_MOVING, "viewpoint_reached")
                self._start_guiding(inp, out)
            return out
        if s == FsmState.SECONDARY_MOVING:
            if np.linalg.norm(inp.pose_S.position - self.goal.position) < res:
                self._set(inp.t, FsmState.GOAL_REACHED, "goal_reached")
                return out
            self._guide(inp, out)
        return out

    def _start_guiding(self, inp: FsmInputs, out: list) -> None:
        self._guided = False
        self._next_guide = -math.inf
        self._guide(inp, out)
