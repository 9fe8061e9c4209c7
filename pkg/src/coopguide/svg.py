"""Plain SVG renderings of top-down slices, regions and trajectories.

Output is deterministic text: coordinates are printed with a fixed number of
decimals and elements appear in call order.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .poly2d import MultiPolygon
from .voxel_map import OCCUPIED, UNKNOWN, OccupancyMap

STYLE = {
    "occupied": "fill:#333333;stroke:none",
    "unknown": "fill:#d8d8d8;stroke:none",
    "obstacle": "fill:#555555;stroke:none",
    "buffer": "fill:#f4a582;fill-opacity:0.45;stroke:#d6604d;stroke-width:1",
    "visibility": "fill:#92c5de;fill-opacity:0.18;stroke:#4393c3;stroke-width:0.6",
    "safe": "fill:#a6dba0;fill-opacity:0.35;stroke:none",
    "intersection": "fill:#1b7837;fill-opacity:0.55;stroke:#1b7837;stroke-width:1",
}


def _f(v: float) -> str:
    return f"{v:.3f}"


class Canvas:
    """Maps world x/y (metres, y up) onto SVG pixels (y down)."""

    def __init__(self, xmin, ymin, xmax, ymax, scale: float = 40.0, margin: float = 10.0):
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("empty drawing bounds")
        self.xmin, self.ymin, self.xmax, self.ymax = float(xmin), float(ymin), float(xmax), float(ymax)
        self.scale = float(scale)
        self.margin = float(margin)
        self.items: list[str] = []

    def px(self, x, y) -> tuple[float, float]:
        return (self.margin + (x - self.xmin) * self.scale,
                self.margin + (self.ymax - y) * self.scale)

    def _pts(self, ring) -> str:
        return " ".join(f"{_f(u)},{_f(v)}" for u, v in (self.px(x, y) for x, y in np.asarray(ring)[:, :2]))

    def rect(self, x0, y0, x1, y1, style: str) -> None:
        u0, v1 = self.px(x0, y0)
        u1, v0 = self.px(x1, y1)
        self.items.append(f'<rect x="{_f(u0)}" y="{_f(v0)}" width="{_f(u1 - u0)}" '
                          f'height="{_f(v1 - v0)}" style="{style}"/>')

    def circle(self, x, y, r, style: str, pixel_radius: bool = False) -> None:
        u, v = self.px(x, y)
        rr = r if pixel_radius else r * self.scale
        self.items.append(f'<circle cx="{_f(u)}" cy="{_f(v)}" r="{_f(rr)}" style="{style}"/>')

    def polyline(self, pts, style: str) -> None:
        pts = np.asarray(pts, float)
        if len(pts) == 0:
            return
        self.items.append(f'<polyline points="{self._pts(pts)}" style="fill:none;{style}"/>')

    def multipolygon(self, mp: MultiPolygon, style: str) -> None:
        for poly in mp:
            d = " ".join("M " + self._pts(r).replace(" ", " L ") + " Z" for r in poly.rings)
            self.items.append(f'<path d="{d}" style="fill-rule:evenodd;{style}"/>')

    def text(self, x, y, s: str, size: int = 12) -> None:
        u, v = self.px(x, y)
        self.items.append(f'<text x="{_f(u)}" y="{_f(v)}" font-size="{size}" '
                          f'font-family="sans-serif">{escape(s)}</text>')

    def render(self) -> str:
        w = 2 * self.margin + (self.xmax - self.xmin) * self.scale
        h = 2 * self.margin + (self.ymax - self.ymin) * self.scale
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
                f'viewBox="0 0 {_f(w)} {_f(h)}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


def draw_map_slice(c: Canvas, m: OccupancyMap, z: float, unknown: bool = True) -> None:
    """Occupied (and optionally unknown) voxels of the layer containing ``z``."""
    k = int(m.index_of([m.origin[0], m.origin[1], z])[2])
    if not 0 <= k < m.dims[2]:
        return
    layer = m.cells[:, :, k]
    res = m.resolution
    kinds = [(OCCUPIED, STYLE["occupied"])]
    if unknown:
        kinds.insert(0, (UNKNOWN, STYLE["unknown"]))
    for value, style in kinds:
        ii, jj = np.nonzero(layer == value)
        # merge runs along y so large maps stay small on disk
        for i in np.unique(ii):
            js = np.sort(jj[ii == i])
            start = prev = js[0]
            for j in list(js[1:]) + [None]:
                if j is not None and j == prev + 1:
                    prev = j
                    continue
                x0 = m.origin[0] + i * res
                c.rect(x0, m.origin[1] + start * res, x0 + res, m.origin[1] + (prev + 1) * res, style)
                if j is not None:
                    start = prev = j


def draw_world_slice(c: Canvas, world, z: float) -> None:
    for x0, y0, z0, x1, y1, z1 in world.boxes:
        if z0 <= z <= z1:
            c.rect(x0, y0, x1, y1, STYLE["obstacle"])
    for cx, cy, r, z0, z1 in world.cylinders:
        if z0 <= z <= z1:
            c.circle(cx, cy, r, STYLE["obstacle"])


def map_svg(m: OccupancyMap, z: float, paths=(), points=(), scale: float = 40.0) -> str:
    """Map layer at altitude ``z`` with optional paths ``(xyz, colour)`` and
    points ``(xy, colour, label)``."""
    lo = m.origin
    hi = m.origin + np.asarray(m.dims) * m.resolution
    c = Canvas(lo[0], lo[1], hi[0], hi[1], scale)
    draw_map_slice(c, m, z)
    for pts, colour in paths:
        c.polyline(pts, f"stroke:{colour};stroke-width:2")
    for p, colour, label in points:
        c.circle(p[0], p[1], 4, f"fill:{colour}", pixel_radius=True)
        if label:
            c.text(p[0], p[1], " " + label)
    return c.render()


def regions_svg(m: OccupancyMap, search, path_S, x_P, scale: float = 40.0) -> str:
    """Every region of a viewpoint search over the map slice at the secondary's altitude."""
    pts = np.asarray(path_S.positions)
    z = float(pts[0, 2])
    lo = m.origin
    hi = m.origin + np.asarray(m.dims) * m.resolution
    c = Canvas(lo[0], lo[1], hi[0], hi[1], scale)
    draw_map_slice(c, m, z)
    for v in search.visibility:
        c.multipolygon(v, STYLE["visibility"])
    c.multipolygon(search.safe, STYLE["safe"])
    c.multipolygon(search.buffer, STYLE["buffer"])
    c.multipolygon(search.intersection, STYLE["intersection"])
    c.polyline(pts, "stroke:#2166ac;stroke-width:2")
    c.circle(x_P[0], x_P[1], 5, "fill:#b2182b", pixel_radius=True)
    c.text(x_P[0], x_P[1], " primary")
    if search.point is not None:
        c.circle(search.point[0], search.point[1], 6, "fill:#1b7837;stroke:black", pixel_radius=True)
        c.text(search.point[0], search.point[1], " viewpoint")
    return c.render()


def trajectory_svg(world, z: float, primary, secondary, scale: float = 20.0, goals=()) -> str:
    """Top-down world slice with both vehicles' flown tracks (N x 2+ arrays)."""
    lo, hi = world.lo, world.hi
    c = Canvas(lo[0], lo[1], hi[0], hi[1], scale)
    draw_world_slice(c, world, z)
    c.polyline(primary, "stroke:#b2182b;stroke-width:2")
    c.polyline(secondary, "stroke:#000000;stroke-width:2")
    for g in goals:
        c.circle(g[0], g[1], 5, "fill:none;stroke:#2166ac;stroke-width:2", pixel_radius=True)
    return c.render()
