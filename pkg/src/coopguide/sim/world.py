"""Static worlds made of axis-aligned boxes and vertical cylinders, with exact
ray casting, distance queries and rasterisation into a voxel map."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..voxel_map import FREE, OCCUPIED, OccupancyMap


@dataclass
class World:
    """Solid geometry.

    ``boxes`` rows are ``(x0, y0, z0, x1, y1, z1)``; ``cylinders`` rows are
    ``(cx, cy, radius, z0, z1)``.  ``bounds`` is the region of interest as
    ``(lo, hi)`` corners.
    """

    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))
    cylinders: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))
    bounds: tuple = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, float).reshape(-1, 6)
        self.cylinders = np.asarray(self.cylinders, float).reshape(-1, 5)
        if not (np.all(np.isfinite(self.boxes)) and np.all(np.isfinite(self.cylinders))):
            raise ValueError("world geometry must be finite")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.bounds[0], float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.bounds[1], float)

    # ------------------------------------------------------------- rays
    def ray_hits(self, origin, dirs, max_range: float) -> np.ndarray:
        """Distance along each unit direction to the first surface (inf if none)."""
        o = np.asarray(origin, float).reshape(3)
        d = np.asarray(dirs, float).reshape(-1, 3)
        t = np.full(len(d), np.inf)
        if len(self.boxes):
            t = np.minimum(t, _ray_boxes(o, d, self.boxes))
        if len(self.cylinders):
            near = self._cylinders_near(o, max_range)
            if len(near):
                t = np.minimum(t, _ray_cylinders(o, d, near))
        t[t > max_range] = np.inf
        return t

    def _cylinders_near(self, o, max_range):
        c = self.cylinders
        dxy = np.hypot(c[:, 0] - o[0], c[:, 1] - o[1]) - c[:, 2]
        return c[dxy <= max_range]

    def segment_blocked(self, a, b) -> bool:
        a = np.asarray(a, float)
        v = np.asarray(b, float) - a
        L = float(np.linalg.norm(v))
        if L == 0.0:
            return self.distance(a[None])[0] <= 0.0
        t = self.ray_hits(a, v / L, L)
        return bool(t[0] < L)

    # --------------------------------------------------------- distances
    def distance(self, pts) -> np.ndarray:
        """Euclidean distance from each point to the nearest solid (0 inside)."""
        p = np.asarray(pts, float).reshape(-1, 3)
        out = np.full(len(p), np.inf)
        if len(self.boxes):
            lo, hi = self.boxes[:, :3], self.boxes[:, 3:]
            q = np.maximum(np.maximum(lo[None] - p[:, None], p[:, None] - hi[None]), 0.0)
            out = np.minimum(out, np.sqrt(np.einsum("pbk,pbk->pb", q, q)).min(axis=1))
        if len(self.cylinders):
            c = self.cylinders
            dxy = np.maximum(np.hypot(p[:, None, 0] - c[None, :, 0], p[:, None, 1] - c[None, :, 1]) - c[None, :, 2], 0.0)
            dz = np.maximum(np.maximum(c[None, :, 3] - p[:, None, 2], p[:, None, 2] - c[None, :, 4]), 0.0)
            out = np.minimum(out, np.sqrt(dxy**2 + dz**2).min(axis=1))
        return out

    # ------------------------------------------------------ rasterisation
    def make_map(self, res: float, margin: float = 0.5, offset=(0.0, 0.0, 0.0)) -> OccupancyMap:
        """Empty map covering the world bounds plus ``margin``, origin shifted by ``offset``."""
        lo = self.lo - margin + np.asarray(offset, float)
        dims = np.ceil((self.hi + margin - lo) / res - 1e-9).astype(int)
        return OccupancyMap(res, tuple(dims), origin=lo)

    def rasterize(self, m: OccupancyMap, unknown_free: bool = True) -> OccupancyMap:
        """Mark every voxel overlapping a solid with positive volume OCCUPIED.

        All other voxels become FREE when ``unknown_free`` is set.
        """
        if unknown_free:
            m.cells[:] = FREE
        res = m.resolution
        n = np.array(m.dims)
        for b in self.boxes:
            lo = np.floor((b[:3] - m.origin) / res + 1e-9).astype(int)
            hi = np.ceil((b[3:] - m.origin) / res - 1e-9).astype(int) - 1
            lo = np.maximum(lo, 0)
            hi = np.minimum(hi, n - 1)
            if np.all(hi >= lo) and np.all(b[3:] > b[:3]):
                m.cells[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = OCCUPIED
        for cx, cy, r, z0, z1 in self.cylinders:
            i0 = max(int(math.floor((cx - r - m.origin[0]) / res)), 0)
            i1 = min(int(math.ceil((cx + r - m.origin[0]) / res)), n[0])
            j0 = max(int(math.floor((cy - r - m.origin[1]) / res)), 0)
            j1 = min(int(math.ceil((cy + r - m.origin[1]) / res)), n[1])
            k0 = max(int(math.floor((z0 - m.origin[2]) / res + 1e-9)), 0)
            k1 = min(int(math.ceil((z1 - m.origin[2]) / res - 1e-9)), n[2])
            if i1 <= i0 or j1 <= j0 or k1 <= k0:
                continue
            xs0 = m.origin[0] + np.arange(i0, i1) * res
            ys0 = m.origin[1] + np.arange(j0, j1) * res
            # distance from the disc centre to the nearest point of each cell
            dx = np.maximum(np.maximum(xs0 - cx, cx - (xs0 + res)), 0.0)
            dy = np.maximum(np.maximum(ys0 - cy, cy - (ys0 + res)), 0.0)
            cover = dx[:, None] ** 2 + dy[None, :] ** 2 < r * r
            sub = m.cells[i0:i1, j0:j1, k0:k1]
            sub[cover] = OCCUPIED
        m.touch()
        return m


def _ray_boxes(o, d, boxes) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (boxes[None, :, :3] - o) * inv[:, None, :]
        t1 = (boxes[None, :, 3:] - o) * inv[:, None, :]
    # zero direction components: inside slab -> (-inf, inf), outside -> empty
    zero = d[:, None, :] == 0.0
    inside = (o >= boxes[None, :, :3]) & (o <= boxes[None, :, 3:])
    tmin_ax = np.where(zero, np.where(inside, -np.inf, np.inf), np.minimum(t0, t1))
    tmax_ax = np.where(zero, np.where(inside, np.inf, -np.inf), np.maximum(t0, t1))
    tmin = tmin_ax.max(axis=2)
    tmax = tmax_ax.min(axis=2)
    ok = (tmax >= tmin) & (tmax >= 0.0)
    t = np.where(ok, np.maximum(tmin, 0.0), np.inf)
    return t.min(axis=1)


def _ray_cylinders(o, d, cyl) -> np.ndarray:
    cx, cy, r, z0, z1 = (cyl[:, k][None, :] for k in range(5))
    ox, oy, oz = o
    dx, dy, dz = d[:, 0:1], d[:, 1:2], d[:, 2:3]
    fx, fy = ox - cx, oy - cy
    a = dx * dx + dy * dy
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - r * r
    best = np.full(a.shape, np.inf)
    inside_xy = c <= 0.0
    inside_z = (oz >= z0) & (oz <= z1)
    best = np.where(inside_xy & inside_z, 0.0, best)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b * b - 4.0 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        t_side = (-b - sq) / (2.0 * a)
        side_ok = (a > 0) & (disc >= 0) & (t_side >= 0) & ~inside_xy
        zs = oz + t_side * dz
        side_ok &= (zs >= z0) & (zs <= z1)
        best = np.minimum(best, np.where(side_ok, t_side, np.inf))
        for zc in (z0, z1):
            tc = (zc - oz) / dz
            px = fx + tc * dx
            py = fy + tc * dy
            cap_ok = (dz != 0) & (tc >= 0) & (px * px + py * py <= r * r)
            best = np.minimum(best, np.where(cap_ok, tc, np.inf))
    return best.min(axis=1)


# ------------------------------------------------------------------ builders
ROOM_X = 10.0
ROOM_Y = 8.0
ROOM_Z = 5.0
WALL = 0.2
DIVIDER = 0.2


def gap_width(d_S: float, res: float) -> float:
    return 2.0 * d_S + 1.5 * res


def make_gap_world(d_S: float, res: float, width: float | None = None) -> World:
    """Two 10 x 8 x 5 m rooms joined by a full-height gap centred in the divider."""
    if d_S <= 0 or res <= 0:
        raise ValueError("d_S and res must be positive")
    w = gap_width(d_S, res) if width is None else float(width)
    X, Y, Z, t = 2 * ROOM_X, ROOM_Y, ROOM_Z, WALL
    cx, cy, h = ROOM_X, ROOM_Y / 2.0, DIVIDER / 2.0
    boxes = [
        (-t, -t, -t, X + t, Y + t, 0.0),        # floor
        (-t, -t, Z, X + t, Y + t, Z + t),       # ceiling
        (-t, -t, 0.0, 0.0, Y + t, Z),           # west
        (X, -t, 0.0, X + t, Y + t, Z),          # east
        (0.0, -t, 0.0, X, 0.0, Z),              # south
        (0.0, Y, 0.0, X, Y + t, Z),             # north
        (cx - h, 0.0, 0.0, cx + h, cy - w / 2.0, Z),
        (cx - h, cy + w / 2.0, 0.0, cx + h, Y, Z),
    ]
    return World(boxes, bounds=((-t, -t, -t), (X + t, Y + t, Z + t)),
                 meta={"kind": "gap", "gap_width": w, "gap_center": (cx, cy),
                       "divider_x": (cx - h, cx + h)})


def make_open_world() -> World:
    """A single 20 x 8 x 5 m room with no divider."""
    X, Y, Z, t = 2 * ROOM_X, ROOM_Y, ROOM_Z, WALL
    boxes = [
        (-t, -t, -t, X + t, Y + t, 0.0),
        (-t, -t, Z, X + t, Y + t, Z + t),
        (-t, -t, 0.0, 0.0, Y + t, Z),
        (X, -t, 0.0, X + t, Y + t, Z),
        (0.0, -t, 0.0, X, 0.0, Z),
        (0.0, Y, 0.0, X, Y + t, Z),
    ]
    return World(boxes, bounds=((-t, -t, -t), (X + t, Y + t, Z + t)), meta={"kind": "open"})


FOREST_SIZE = 50.0
TREE_HEIGHT = 12.0


def make_forest_world(seed: int, density: float = 0.05, radius=(0.1, 0.3),
                      clear_centers=((5.0, 25.0), (2.5, 25.0)), clear_radius: float = 2.0,
                      size: float = FOREST_SIZE) -> World:
    """Poisson forest of vertical cylinders over a ``size`` x ``size`` area.

    Trunks closer than ``clear_radius`` (surface distance) to any of
    ``clear_centers`` are removed so the vehicles start in the open.
    """
    if density < 0:
        raise ValueError("density must be non-negative")
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(density * size * size)) if density > 0 else 0
    xy = rng.uniform(0.0, size, size=(n, 2))
    r = rng.uniform(radius[0], radius[1], size=n)
    keep = np.ones(n, dtype=bool)
    for cx, cy in clear_centers:
        keep &= np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) - r >= clear_radius
    cyl = np.column_stack([xy[keep], r[keep], np.zeros(keep.sum()), np.full(keep.sum(), TREE_HEIGHT)])
    ground = [(-1.0, -1.0, -0.2, size + 1.0, size + 1.0, 0.0)] if density > 0 else []
    return World(ground, cyl, bounds=((0.0, 0.0, 0.0), (size, size, TREE_HEIGHT)),
                 meta={"kind": "forest", "seed": seed, "n_sampled": n})
