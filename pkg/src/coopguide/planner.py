"""Clearance-constrained A* over a voxel map, shortcut post-processing and
heading assignment."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .frames import Path, Pose
from .voxel_map import EPS, OCCUPIED, UNKNOWN, OccupancyMap

SQ2 = math.sqrt(2.0)
SQ3 = math.sqrt(3.0)


@dataclass
class PlanRequest:
    map: OccupancyMap
    start: Pose
    goal: Pose
    d_min: float
    unknown_penalty: float = 2.0
    timeout: float = 10.0
    # Deterministic alternative to the wall-clock timeout; None disables it.
    max_expansions: int | None = None

    def __post_init__(self):
        if self.d_min < 0:
            raise ValueError("d_min must be non-negative")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.unknown_penalty < 1.0:
            raise ValueError("unknown_penalty must be at least 1")
        if self.start.frame != self.goal.frame:
            raise ValueError("start and goal are in different frames")


@dataclass
class PlanResult:
    path: Path | None
    nodes_expanded: int
    elapsed: float
    cost: float = math.inf
    indices: np.ndarray | None = field(default=None, repr=False)
    reason: str = ""

    @property
    def found(self) -> bool:
        return self.path is not None


def passable_mask(m: OccupancyMap, d_min: float) -> np.ndarray:
    """Voxels whose centre clearance is at least ``d_min`` and that are not OCCUPIED."""
    return (m.distance_field() >= d_min - EPS) & (m.cells != OCCUPIED)


def step_cost(a, b, unknown_dest: bool, penalty: float) -> float:
    """Cost (voxel units) of the move a -> b under the planner's cost model."""
    n = int(np.sum(np.abs(np.asarray(b) - np.asarray(a))))
    base = (0.0, 1.0, SQ2, SQ3)[n]
    return base * penalty if unknown_dest else base


def _snap(m: OccupancyMap, passable: np.ndarray, point, radius: float):
    """Nearest passable voxel within ``radius`` of ``point``; ties by flat index."""
    idx = m.index_of(point)
    if m.contains_index(idx) and passable[tuple(idx)]:
        return idx, False
    r = int(math.ceil(radius / m.resolution)) + 1
    lo = np.maximum(idx - r, 0)
    hi = np.minimum(idx + r + 1, np.array(m.dims))
    if np.any(hi <= lo):
        return None, True
    sub = passable[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
    cand = np.argwhere(sub) + lo
    if len(cand) == 0:
        return None, True
    d = np.linalg.norm(m.center_of(cand) - np.asarray(point, float), axis=1)
    ok = d <= radius + EPS
    if not ok.any():
        return None, True
    cand, d = cand[ok], d[ok]
    flat = m.flat_index(cand)
    order = np.lexsort((flat, d))
    return cand[order[0]], True


def find_path(req: PlanRequest) -> PlanResult:
    t0 = time.perf_counter()
    m = req.map
    passable = passable_mask(m, req.d_min)
    radius = 2.0 * req.d_min
    s_idx, s_snapped = _snap(m, passable, req.start.position, radius)
    if s_idx is None:
        return PlanResult(None, 0, time.perf_counter() - t0, reason="start")
    g_idx, g_snapped = _snap(m, passable, req.goal.position, radius)
    if g_idx is None:
        return PlanResult(None, 0, time.perf_counter() - t0, reason="goal")

    budget = -1 if req.max_expansions is None else int(req.max_expansions)
    flat, expanded, status = kernels.astar(
        passable.view(np.uint8),
        (m.cells == UNKNOWN).view(np.uint8),
        tuple(int(v) for v in s_idx),
        tuple(int(v) for v in g_idx),
        float(req.unknown_penalty),
        budget,
        float(req.timeout),
    )
    elapsed = time.perf_counter() - t0
    if status != kernels.STATUS_FOUND:
        reason = "unreachable" if status == kernels.STATUS_UNREACHABLE else "timeout"
        return PlanResult(None, expanded, elapsed, reason=reason)

    idx = m.unravel(flat)
    unknown = m.cells[idx[:, 0], idx[:, 1], idx[:, 2]] == UNKNOWN
    cost = math.fsum(
        step_cost(idx[i - 1], idx[i], bool(unknown[i]), req.unknown_penalty)
        for i in range(1, len(idx))
    ) * m.resolution
    pos = m.center_of(idx)
    if not s_snapped:
        pos[0] = req.start.position
    if not g_snapped:
        pos[-1] = req.goal.position
    if len(pos) == 1 and not (s_snapped or g_snapped):
        pos = np.array([req.goal.position])
    path = assign_headings(Path(pos, np.zeros(len(pos)), req.start.frame), req.goal.heading)
    return PlanResult(path, expanded, elapsed, cost=cost, indices=flat)


def segment_clear(m: OccupancyMap, a, b, d_min: float, strict: bool = True) -> bool:
    """True if samples every res/2 along a-b keep clearance ``d_min`` inside the map.

    With ``strict``, interior samples must also clear ``d_min`` from their own
    position, not only from their voxel centre: the voxel value minus the
    offset to the centre bounds the true distance to every occupied centre
    from below.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    n = max(1, int(math.ceil(np.linalg.norm(b - a) / (m.resolution / 2.0))))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    pts = a + t * (b - a)
    d = m.obs_dists(pts)
    if np.any(np.isnan(d)):
        return False
    if np.any(d < d_min - EPS):
        return False
    if not strict:
        return not np.any(m.states(pts) == OCCUPIED)
    inner = pts[1:-1]
    off = np.linalg.norm(inner - m.center_of(m.index_of(inner)), axis=1)
    if np.any(d[1:-1] - off < d_min - EPS):
        return False
    return not np.any(m.states(pts) == OCCUPIED)


def path_valid(m: OccupancyMap, path: Path, d_min: float) -> bool:
    """Re-check a stored path against a map that may have changed since planning."""
    pos = path.positions
    if len(pos) == 0:
        return False
    d = m.obs_dists(pos)
    if np.any(np.isnan(d)) or np.any(d < d_min - EPS):
        return False
    return all(segment_clear(m, pos[i], pos[i + 1], d_min, strict=False)
               for i in range(len(pos) - 1))


def postprocess(path: Path, m: OccupancyMap, d_min: float) -> Path:
    """Greedy shortcutting repeated until a full pass changes nothing.

    From each kept pose, jump to the farthest later pose reachable by a clear
    straight segment.  Headings of the kept poses are carried over.
    """
    pos = path.positions
    hdg = path.headings
    keep = list(range(len(path)))
    while True:
        out = [keep[0]] if keep else []
        i = 0
        while i < len(keep) - 1:
            j = len(keep) - 1
            while j > i + 1 and not segment_clear(m, pos[keep[i]], pos[keep[j]], d_min):
                j -= 1
            out.append(keep[j])
            i = j
        if out == keep:
            break
        keep = out
    return Path(pos[keep], hdg[keep], path.frame)


def assign_headings(path: Path, goal_heading: float) -> Path:
    n = len(path)
    if n == 0:
        raise ValueError("cannot assign headings to an empty path")
    pos = path.positions
    h = np.empty(n)
    prev = goal_heading if n == 1 else None
    for i in range(n - 1):
        dx, dy = pos[i + 1, 0] - pos[i, 0], pos[i + 1, 1] - pos[i, 1]
        if dx == 0.0 and dy == 0.0:
            h[i] = prev if prev is not None else (path.headings[i] if len(path) else 0.0)
        else:
            h[i] = math.atan2(dy, dx)
        prev = h[i]
    h[-1] = goal_heading
    return Path(pos, h, path.frame)


def plan(m: OccupancyMap, start: Pose, goal: Pose, d_min: float, **kw) -> PlanResult:
    """find_path followed by post-processing and heading assignment."""
    res = find_path(PlanRequest(m, start, goal, d_min, **kw))
    if res.path is None:
        return res
    smooth = assign_headings(postprocess(res.path, m, d_min), goal.heading)
    return PlanResult(smooth, res.nodes_expanded, res.elapsed, res.cost, res.indices)
