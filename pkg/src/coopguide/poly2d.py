"""Planar polygons with holes, boolean set operations, buffering and poles of
inaccessibility.

Boolean operations delegate to GEOS (through shapely) with every coordinate
snapped to a ``SNAP`` grid, which makes the results robust without exact
arithmetic.  Containment, distance, buffering and the pole of inaccessibility
are computed here directly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely import geometry as sg

SNAP = 1e-7
DISC_SEGMENTS = 32


def _ring_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _open_ring(ring) -> np.ndarray:
    r = np.asarray(ring, dtype=float).reshape(-1, 2)
    if len(r) > 1 and np.array_equal(r[0], r[-1]):
        r = r[:-1]
    return r


def _oriented(ring, ccw: bool) -> np.ndarray:
    r = _open_ring(ring)
    if (_ring_area(r) > 0) != ccw:
        r = r[::-1]
    r = np.ascontiguousarray(r)
    r.setflags(write=False)
    return r


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple outer ring (counter-clockwise) with clockwise holes.

    Rings are stored open: the closing vertex is implied.
    """

    outer: np.ndarray
    holes: tuple = ()
    _geom: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "outer", _oriented(self.outer, True))
        object.__setattr__(self, "holes", tuple(_oriented(h, False) for h in self.holes))

    @property
    def rings(self) -> list[np.ndarray]:
        return [self.outer, *self.holes]

    def area(self) -> float:
        return sum(_ring_area(r) for r in self.rings)

    def perimeter(self) -> float:
        return sum(float(np.sum(np.linalg.norm(np.roll(r, -1, 0) - r, axis=1))) for r in self.rings)

    def bounds(self) -> tuple[float, float, float, float]:
        lo = self.outer.min(axis=0)
        hi = self.outer.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.concatenate(self.rings)
        b = np.concatenate([np.roll(r, -1, 0) for r in self.rings])
        return a, b

    def contains(self, pts) -> np.ndarray:
        """Even-odd membership of each point (boundary points are unspecified)."""
        pts = np.asarray(pts, float).reshape(-1, 2)
        inside = np.zeros(len(pts), dtype=bool)
        for r in self.rings:
            inside ^= _crossings_odd(pts, r)
        return inside

    def boundary_distance(self, pts) -> np.ndarray:
        a, b = self.segments()
        return _segments_min_distance(np.asarray(pts, float).reshape(-1, 2), a, b)

    def to_shapely(self) -> sg.Polygon:
        if self._geom is None:
            object.__setattr__(self, "_geom", sg.Polygon(self.outer, [h for h in self.holes]))
        return self._geom

    @classmethod
    def rectangle(cls, x0, y0, x1, y1) -> "Polygon":
        return cls(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float))


@dataclass(frozen=True, eq=False)
class MultiPolygon:
    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    @classmethod
    def empty(cls) -> "MultiPolygon":
        return cls(())

    @classmethod
    def of(cls, *polys: Polygon) -> "MultiPolygon":
        return cls(polys)

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, i) -> Polygon:
        return self.parts[i]

    def is_empty(self) -> bool:
        return not self.parts

    def area(self) -> float:
        return sum(p.area() for p in self.parts)

    def perimeter(self) -> float:
        return sum(p.perimeter() for p in self.parts)

    def contains(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float).reshape(-1, 2)
        out = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            out |= p.contains(pts)
        return out

    def bounds(self):
        b = np.array([p.bounds() for p in self.parts])
        return float(b[:, 0].min()), float(b[:, 1].min()), float(b[:, 2].max()), float(b[:, 3].max())

    def to_shapely(self):
        if not self.parts:
            return sg.MultiPolygon()
        return sg.MultiPolygon([p.to_shapely() for p in self.parts])


def _crossings_odd(pts: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Ray-crossing parity of each point against one ring."""
    x, y = pts[:, 0:1], pts[:, 1:2]
    a = ring
    b = np.roll(ring, -1, 0)
    ay, by = a[:, 1][None, :], b[:, 1][None, :]
    ax, bx = a[:, 0][None, :], b[:, 0][None, :]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = ax + (y - ay) * (bx - ax) / (by - ay)
    hits = straddle & (x < xi)
    return (np.count_nonzero(hits, axis=1) & 1).astype(bool)


def _segments_min_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty(len(pts))
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd_safe = np.where(dd > 0, dd, 1.0)
    chunk = max(1, 2_000_000 // max(len(a), 1))
    for s in range(0, len(pts), chunk):
        p = pts[s : s + chunk]
        rel = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pij,ij->pi", rel, d) / dd_safe, 0.0, 1.0)
        t = np.where(dd > 0, t, 0.0)
        q = rel - t[..., None] * d[None, :, :]
        out[s : s + chunk] = np.sqrt(np.min(np.einsum("pij,pij->pi", q, q), axis=1))
    return out


def point_segment_distance(p, a, b) -> float:
    """Distance from one point to one segment (scalar reference version)."""
    p, a, b = (np.asarray(v, float) for v in (p, a, b))
    d = b - a
    dd = float(d @ d)
    t = 0.0 if dd == 0 else min(1.0, max(0.0, float((p - a) @ d) / dd))
    return float(np.linalg.norm(p - (a + t * d)))


# ----------------------------------------------------------------- shapely glue
def from_shapely(geom) -> MultiPolygon:
    parts = []
    if geom is None or geom.is_empty:
        return MultiPolygon.empty()
    stack = [geom]
    while stack:
        g = stack.pop()
        if isinstance(g, sg.Polygon):
            if g.is_empty or g.area <= 0.0:
                continue
            outer = np.asarray(g.exterior.coords)
            holes = [np.asarray(r.coords) for r in g.interiors if abs(sg.Polygon(r).area) > 0]
            p = Polygon(outer, tuple(holes))
            object.__setattr__(p, "_geom", g)
            parts.append(p)
        elif hasattr(g, "geoms"):
            stack.extend(reversed(list(g.geoms)))
    # deterministic order: by lower-left of bounds
    parts.sort(key=lambda p: (p.bounds()[0], p.bounds()[1], -p.area()))
    return MultiPolygon(parts)


def _as_geom(m):
    if isinstance(m, Polygon):
        return m.to_shapely()
    return m.to_shapely()


def boolean_op(kind: str, a, b) -> MultiPolygon:
    """``union``, ``intersection`` or ``difference`` of two (multi)polygons."""
    ga, gb = _as_geom(a), _as_geom(b)
    if kind == "union":
        out = shapely.union(ga, gb, grid_size=SNAP)
    elif kind == "intersection":
        if ga.is_empty or gb.is_empty:
            return MultiPolygon.empty()
        out = shapely.intersection(ga, gb, grid_size=SNAP)
    elif kind == "difference":
        if ga.is_empty:
            return MultiPolygon.empty()
        out = shapely.difference(ga, gb, grid_size=SNAP)
    else:
        raise ValueError(f"unknown boolean operation {kind!r}")
    return from_shapely(out)


def union(a, b) -> MultiPolygon:
    return boolean_op("union", a, b)


def intersection(a, b) -> MultiPolygon:
    return boolean_op("intersection", a, b)


def difference(a, b) -> MultiPolygon:
    return boolean_op("difference", a, b)


def union_all(polys: Iterable) -> MultiPolygon:
    geoms = [_as_geom(p) for p in polys]
    if not geoms:
        return MultiPolygon.empty()
    return from_shapely(shapely.union_all(geoms, grid_size=SNAP))


def make_valid_polygon(ring) -> MultiPolygon:
    """Polygon(s) covering a possibly self-touching ring."""
    r = _open_ring(ring)
    if len(r) < 3:
        return MultiPolygon.empty()
    g = shapely.make_valid(sg.Polygon(r))
    g = shapely.set_precision(g, SNAP)
    return from_shapely(g)


# -------------------------------------------------------------------- buffering
def regular_polygon(center, radius: float, n: int = DISC_SEGMENTS) -> np.ndarray:
    ang = np.arange(n) * (2.0 * math.pi / n)
    c = np.asarray(center, float)
    return np.column_stack([c[0] + radius * np.cos(ang), c[1] + radius * np.sin(ang)])


def _hull(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns the CCW hull without collinear points."""
    pts = np.unique(pts, axis=0)
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def buffer_polyline(points, d: float) -> MultiPolygon:
    """Minkowski sum of a polyline with a regular 32-gon of circumradius ``d``."""
    if d <= 0:
        raise ValueError("buffer distance must be positive")
    pts = np.asarray(points, float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("buffer_polyline needs at least one point")
    disc = regular_polygon((0.0, 0.0), d)
    if len(pts) == 1:
        return MultiPolygon.of(Polygon(disc + pts[0]))
    pieces = []
    for p, q in zip(pts[:-1], pts[1:]):
        pieces.append(Polygon(_hull(np.concatenate([disc + p, disc + q]))))
    return union_all(pieces)


# --------------------------------------------------------------------- distance
def distance_to(point, m) -> float:
    """0 inside any part, otherwise distance to the nearest boundary segment."""
    parts = [m] if isinstance(m, Polygon) else list(m.parts)
    if not parts:
        raise ValueError("distance to an empty multipolygon is undefined")
    p = np.asarray(point, float).reshape(1, 2)
    best = math.inf
    for part in parts:
        if part.contains(p)[0]:
            return 0.0
        best = min(best, float(part.boundary_distance(p)[0]))
    return best


def signed_distance(poly: Polygon, pts) -> np.ndarray:
    """Distance to the boundary, positive inside and negative outside."""
    pts = np.asarray(pts, float).reshape(-1, 2)
    d = poly.boundary_distance(pts)
    return np.where(poly.contains(pts), d, -d)


# ------------------------------------------------------------------------- POI
def pole_of_inaccessibility(poly: Polygon, precision: float) -> tuple[np.ndarray, float]:
    """Interior point whose boundary clearance is within ``precision`` of optimal.

    Quadtree search over square cells: a cell of half-size ``h`` centred at
    ``c`` cannot contain a point with clearance above ``sd(c) + h*sqrt(2)``,
    so cells whose bound does not beat the incumbent by ``precision`` are
    dropped.
    """
    if precision <= 0:
        raise ValueError("precision must be positive")
    x0, y0, x1, y1 = poly.bounds()
    w, h = x1 - x0, y1 - y0
    size = min(w, h)
    if size <= 0:
        c = poly.outer[0]
        return c.copy(), 0.0
    half = size / 2.0
    sqrt2 = math.sqrt(2.0)

    xs = np.arange(x0, x1, size) + half
    ys = np.arange(y0, y1, size) + half
    centers = np.array([(x, y) for x in xs for y in ys])
    dists = signed_distance(poly, centers)

    best_pt, best_d = _initial_guess(poly)
    heap: list = []
    counter = 0
    for c, dv in zip(centers, dists):
        heapq.heappush(heap, (-(dv + half * sqrt2), counter, dv, half, c[0], c[1]))
        counter += 1
        if dv > best_d:
            best_d, best_pt = float(dv), np.array(c)

    while heap:
        neg_max, _, dv, hh, cx, cy = heapq.heappop(heap)
        if -neg_max - best_d <= precision:
            break
        q = hh / 2.0
        kids = np.array([[cx - q, cy - q], [cx + q, cy - q], [cx - q, cy + q], [cx + q, cy + q]])
        kd = signed_distance(poly, kids)
        for c, d in zip(kids, kd):
            if d > best_d:
                best_d, best_pt = float(d), c.copy()
            bound = d + q * sqrt2
            if bound - best_d > precision:
                heapq.heappush(heap, (-bound, counter, d, q, c[0], c[1]))
                counter += 1
    if best_d <= 0.0:
        # only possible for slivers thinner than the starting cell grid
        rp = np.asarray(poly.to_shapely().representative_point().coords[0])
        best_pt, best_d = rp, float(signed_distance(poly, rp)[0])
    return best_pt, float(poly.boundary_distance(best_pt)[0])


def _initial_guess(poly: Polygon) -> tuple[np.ndarray, float]:
    ring = poly.outer
    x, y = ring[:, 0], ring[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    f = x * yn - xn * y
    a = f.sum() * 3.0
    if a == 0:
        c = ring.mean(axis=0)
    else:
        c = np.array([((x + xn) * f).sum() / a, ((y + yn) * f).sum() / a])
    return c, float(signed_distance(poly, c)[0])


def multipolygon_from_rings(rings: Sequence) -> MultiPolygon:
    return MultiPolygon([Polygon(r) for r in rings])
