"""Bounded ternary occupancy grid.

Voxel ``(i, j, k)`` spans ``origin + [i, i+1) * resolution`` on each axis, so
its centre is ``origin + (i + 0.5) * resolution``.  A point lying exactly on a
voxel face belongs to the voxel with the larger index.
"""

from __future__ import annotations

import enum
import math
from typing import TextIO

import numpy as np
from scipy import ndimage

from . import kernels

# Absolute slack used when comparing metric distances against thresholds.
EPS = 1e-9


class CellState(enum.IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


FREE = int(CellState.FREE)
OCCUPIED = int(CellState.OCCUPIED)
UNKNOWN = int(CellState.UNKNOWN)


class OccupancyMap:
    """Ternary voxel grid over a rolling box region.

    ``rolling`` enables recentring in :meth:`integrate_scan`: when the sensor
    drifts more than a quarter of the extent from the region centre along x or
    y, the region is shifted by whole voxels to re-centre on it.  Cells that
    leave the region are discarded; cells that enter it are UNKNOWN.
    """

    def __init__(self, resolution, dims, origin=None, center=None, rolling=False):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValueError("dims must be three positive integers")
        extent = np.array(self.dims) * self.resolution
        if origin is None:
            c = np.zeros(3) if center is None else np.asarray(center, float)
            origin = c - extent / 2.0
        self.origin = np.array(origin, dtype=float).reshape(3)
        self.rolling = rolling
        self.cells = np.full(self.dims, UNKNOWN, dtype=np.uint8)
        self._edt = None  # distance to nearest OCCUPIED centre, voxel units

    # ----------------------------------------------------------------- basics
    @property
    def center(self) -> np.ndarray:
        return self.origin + np.array(self.dims) * self.resolution / 2.0

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.dims) * self.resolution

    def copy(self) -> "OccupancyMap":
        m = OccupancyMap.__new__(OccupancyMap)
        m.resolution = self.resolution
        m.dims = self.dims
        m.origin = self.origin.copy()
        m.rolling = self.rolling
        m.cells = self.cells.copy()
        m._edt = self._edt  # shared read-only until either side mutates
        return m

    def touch(self) -> None:
        """Invalidate cached derived data after editing ``cells`` directly."""
        self._edt = None

    def index_of(self, points) -> np.ndarray:
        """Integer voxel index for each point (may lie outside the grid)."""
        u = (np.asarray(points, float) - self.origin) / self.resolution
        return np.floor(u).astype(np.int64)

    def center_of(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, float) + 0.5) * self.resolution

    def contains_index(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.array(self.dims)), axis=-1)

    def contains(self, points) -> np.ndarray:
        return self.contains_index(self.index_of(points))

    def flat_index(self, idx) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(idx).T), self.dims)

    def unravel(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.dims), axis=-1)

    def state(self, point) -> CellState:
        idx = self.index_of(point)
        if not self.contains_index(idx):
            return CellState.UNKNOWN
        return CellState(int(self.cells[tuple(idx)]))

    def states(self, points) -> np.ndarray:
        """Vectorised :meth:`state`; UNKNOWN outside the region."""
        idx = self.index_of(np.asarray(points, float).reshape(-1, 3))
        inside = self.contains_index(idx)
        out = np.full(len(idx), UNKNOWN, dtype=np.uint8)
        ii = idx[inside]
        out[inside] = self.cells[ii[:, 0], ii[:, 1], ii[:, 2]]
        return out

    # ------------------------------------------------------------- mutation
    def integrate_scan(self, origin, hits, max_range, misses=None) -> None:
        """Integrate one range scan taken from ``origin``.

        ``hits`` are measured return points; ``misses`` are unit directions of
        rays with no return, carved free out to ``max_range``.
        """
        origin = np.asarray(origin, float).reshape(3)
        if self.rolling:
            self._maybe_recenter(origin)
        if not self.contains(origin):
            raise ValueError("scan origin lies outside the map region")
        hits = np.asarray(hits, float).reshape(-1, 3)
        ends = [hits]
        flags = [np.ones(len(hits), dtype=np.uint8)]
        if misses is not None and max_range > 0:
            dirs = np.asarray(misses, float).reshape(-1, 3)
            ends.append(origin + dirs * max_range)
            flags.append(np.zeros(len(dirs), dtype=np.uint8))
        ends = np.concatenate(ends)
        if len(ends) == 0:
            return
        kernels.integrate_rays(
            self.cells, self.origin, self.resolution, origin, ends, np.concatenate(flags)
        )
        self._edt = None

    def _maybe_recenter(self, sensor) -> None:
        offset = sensor - self.center
        limit = self.extent / 4.0
        if abs(offset[0]) <= limit[0] and abs(offset[1]) <= limit[1]:
            return
        shift = np.round(offset / self.resolution).astype(int)
        shift[2] = 0
        self.shift(shift)

    def shift(self, shift) -> None:
        """Move the region by whole voxels; overlapping cells are kept."""
        shift = np.asarray(shift, dtype=int)
        new = np.full(self.dims, UNKNOWN, dtype=np.uint8)
        src = []
        dst = []
        for ax in range(3):
            n, s = self.dims[ax], int(shift[ax])
            if abs(s) >= n:
                src = None
                break
            if s >= 0:
                src.append(slice(s, n))
                dst.append(slice(0, n - s))
            else:
                src.append(slice(0, n + s))
                dst.append(slice(-s, n))
        if src is not None:
            new[tuple(dst)] = self.cells[tuple(src)]
        self.cells = new
        self.origin = self.origin + shift * self.resolution
        self._edt = None

    def set_occupied_box(self, lo_idx, hi_idx) -> None:
        """Mark the inclusive index box OCCUPIED (clipped to the grid)."""
        lo = np.maximum(np.asarray(lo_idx, int), 0)
        hi = np.minimum(np.asarray(hi_idx, int), np.array(self.dims) - 1)
        if np.any(hi < lo):
            return
        self.cells[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = OCCUPIED
        self._edt = None

    def box_index_range(self, center, width, height):
        """Inclusive index range of voxel centres inside the half-open box.

        The box is ``[c - w/2, c + w/2)`` in x and y and ``[c - h/2, c + h/2)``
        in z, so a 1.5 m box centred on a voxel centre at 0.1 m resolution
        covers exactly 15 voxels per horizontal axis.
        """
        uc = (np.asarray(center, float) - self.origin) / self.resolution - 0.5
        half = np.array([width, width, height], float) / (2.0 * self.resolution)
        lo = np.ceil(np.round(uc - half, 9)).astype(int)
        hi = np.ceil(np.round(uc + half, 9)).astype(int) - 1
        return lo, hi

    # --------------------------------------------------------------- queries
    def _distance_field(self) -> np.ndarray:
        if self._edt is None:
            occ = self.cells == OCCUPIED
            if not occ.any():
                edt = np.full(self.dims, np.inf)
            else:
                edt = ndimage.distance_transform_edt(~occ)
            edt.setflags(write=False)
            self._edt = edt
        return self._edt

    def distance_field(self) -> np.ndarray:
        """Distance (m) from every voxel centre to the nearest OCCUPIED centre."""
        return self._distance_field() * self.resolution

    def obs_dist(self, point) -> float:
        idx = self.index_of(point)
        if not self.contains_index(idx):
            raise ValueError("point lies outside the map region")
        return float(self._distance_field()[tuple(idx)] * self.resolution)

    def obs_dists(self, points) -> np.ndarray:
        """Vectorised :meth:`obs_dist`; NaN for points outside the region."""
        idx = self.index_of(np.asarray(points, float).reshape(-1, 3))
        inside = self.contains_index(idx)
        out = np.full(len(idx), np.nan)
        ii = idx[inside]
        out[inside] = self._distance_field()[ii[:, 0], ii[:, 1], ii[:, 2]] * self.resolution
        return out

    def raycast(self, start, end) -> np.ndarray:
        """Centre of the first OCCUPIED voxel on the segment, else ``end``."""
        hit = self.raycast_many(np.reshape(start, (1, 3)), np.reshape(end, (1, 3)))
        return hit[0]

    def raycast_many(self, starts, ends) -> np.ndarray:
        starts = np.asarray(starts, float).reshape(-1, 3)
        ends = np.asarray(ends, float).reshape(-1, 3)
        flat = kernels.raycast_first_occupied(
            self.cells, self.origin, self.resolution, starts, ends
        )
        out = ends.copy()
        blocked = flat >= 0
        if blocked.any():
            out[blocked] = self.center_of(self.unravel(flat[blocked]))
        return out

    def first_hits(self, starts, ends) -> np.ndarray:
        """Flat index of the first OCCUPIED voxel per segment, -1 if clear."""
        return kernels.raycast_first_occupied(
            self.cells, self.origin, self.resolution,
            np.asarray(starts, float).reshape(-1, 3), np.asarray(ends, float).reshape(-1, 3),
        )

    def line_of_sight(self, a, b) -> bool:
        return bool(self.first_hits(a, b)[0] < 0)

    # ------------------------------------------------------------------ dump
    def dump(self, fh: TextIO) -> None:
        ox, oy, oz = (float(v) for v in self.origin)
        nx, ny, nz = self.dims
        fh.write(f"voxmap v1 {float(self.resolution)!r} {ox!r} {oy!r} {oz!r} {nx} {ny} {nz}\n")
        known = np.argwhere(self.cells != UNKNOWN)
        if len(known):
            rows = np.column_stack([known, self.cells[tuple(known.T)]])
            np.savetxt(fh, rows, fmt="%d")

    @classmethod
    def load(cls, fh: TextIO) -> "OccupancyMap":
        header = fh.readline().split()
        if len(header) != 9 or header[:2] != ["voxmap", "v1"]:
            raise ValueError("not a voxmap v1 file")
        res = float(header[2])
        origin = [float(v) for v in header[3:6]]
        dims = [int(v) for v in header[6:9]]
        m = cls(res, dims, origin=origin)
        data = np.loadtxt(fh, dtype=np.int64, ndmin=2)
        if data.size:
            if data.shape[1] != 4:
                raise ValueError("voxmap rows must be 'x y z state'")
            if not np.all(m.contains_index(data[:, :3])):
                raise ValueError("voxmap row index outside dims")
            if not np.all(np.isin(data[:, 3], (FREE, OCCUPIED, UNKNOWN))):
                raise ValueError("voxmap state must be 0, 1 or 2")
            m.cells[data[:, 0], data[:, 1], data[:, 2]] = data[:, 3].astype(np.uint8)
        return m


def add_obstacle_box(m: OccupancyMap, center, width: float, height: float) -> OccupancyMap:
    """Independent copy of ``m`` with a ``width x width x height`` box set OCCUPIED.

    If ``m`` already holds a distance field, the copy's field is derived
    exactly as the minimum of the parent field and the distance to the box.
    """
    if width <= 0 or height <= 0:
        raise ValueError("box width and height must be positive")
    out = m.copy()
    lo, hi = m.box_index_range(center, width, height)
    lo_c = np.maximum(lo, 0)
    hi_c = np.minimum(hi, np.array(m.dims) - 1)
    if np.any(hi_c < lo_c):
        out._edt = m._edt
        return out
    parent = m._edt
    out.set_occupied_box(lo_c, hi_c)
    if parent is not None:
        axes = []
        for ax in range(3):
            i = np.arange(m.dims[ax])
            axes.append(np.maximum(np.maximum(lo_c[ax] - i, i - hi_c[ax]), 0).astype(np.float64))
        d2 = (
            axes[0][:, None, None] ** 2
            + axes[1][None, :, None] ** 2
            + axes[2][None, None, :] ** 2
        )
        edt = np.minimum(parent, np.sqrt(d2))
        edt.setflags(write=False)
        out._edt = edt
    return out


def brute_force_obs_dist(m: OccupancyMap, point) -> float:
    """O(n) nearest-OCCUPIED-centre search, used as an independent check."""
    occ = np.argwhere(m.cells == OCCUPIED)
    if len(occ) == 0:
        return math.inf
    c = m.index_of(point)
    d = np.sqrt(np.sum((occ - c) ** 2, axis=1)).min()
    return float(d * m.resolution)
