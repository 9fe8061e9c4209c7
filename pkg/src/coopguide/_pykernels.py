"""Pure-Python voxel kernels.

Reference semantics for the compiled twin in ``_ckernels.pyx``; both modules
expose the same three functions and must agree bit-for-bit.  Grids are
C-ordered uint8 arrays holding FREE=0, OCCUPIED=1, UNKNOWN=2.
"""

from __future__ import annotations

import heapq
import math
import time

import numpy as np

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

SQ2 = math.sqrt(2.0)
SQ3 = math.sqrt(3.0)
H2 = SQ2 - 1.0
H3 = SQ3 - SQ2

# 26-neighbourhood in lexicographic order, with unit-voxel step lengths
NEIGHBOURS = [
    (di, dj, dk, (1.0, SQ2, SQ3)[abs(di) + abs(dj) + abs(dk) - 1])
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for dk in (-1, 0, 1)
    if (di, dj, dk) != (0, 0, 0)
]

STATUS_FOUND = 0
STATUS_UNREACHABLE = 1
STATUS_BUDGET = 2


def _traverse(a, b, dims):
    """Yield voxel indices crossed by segment a->b (voxel units), clipped to the grid.

    Returns (cells, end_inside) where end_inside tells whether b itself lies in
    the grid.  Face ties go to the larger index; edge/corner crossings step one
    axis at a time, lowest axis first.
    """
    t0, t1 = 0.0, 1.0
    d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    for ax in range(3):
        n = dims[ax]
        if d[ax] == 0.0:
            if a[ax] < 0.0 or a[ax] > n:
                return [], False
        else:
            ta = (0.0 - a[ax]) / d[ax]
            tb = (n - a[ax]) / d[ax]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return [], False
    end_inside = all(0.0 <= b[ax] < dims[ax] for ax in range(3))
    cell = [0, 0, 0]
    last = [0, 0, 0]
    step = [0, 0, 0]
    tmax = [math.inf, math.inf, math.inf]
    tdelta = [math.inf, math.inf, math.inf]
    for ax in range(3):
        n = dims[ax]
        c = int(math.floor(a[ax] + t0 * d[ax]))
        cell[ax] = min(max(c, 0), n - 1)
        e = int(math.floor(a[ax] + t1 * d[ax]))
        last[ax] = min(max(e, 0), n - 1)
        if d[ax] > 0.0:
            step[ax] = 1
            tmax[ax] = (cell[ax] + 1 - a[ax]) / d[ax]
            tdelta[ax] = 1.0 / d[ax]
        elif d[ax] < 0.0:
            step[ax] = -1
            tmax[ax] = (cell[ax] - a[ax]) / d[ax]
            tdelta[ax] = -1.0 / d[ax]
    cells = []
    while True:
        cells.append((cell[0], cell[1], cell[2]))
        if cell == last:
            break
        ax = 0
        if tmax[1] < tmax[ax]:
            ax = 1
        if tmax[2] < tmax[ax]:
            ax = 2
        if tmax[ax] > t1:
            break
        cell[ax] += step[ax]
        if cell[ax] < 0 or cell[ax] >= dims[ax]:
            break
        tmax[ax] += tdelta[ax]
    return cells, end_inside


def raycast_first_occupied(state, origin, res, starts, ends):
    """Flat index of the first OCCUPIED voxel on each segment, or -1."""
    dims = state.shape
    flat = state.reshape(-1)
    ny, nz = dims[1], dims[2]
    starts = (np.asarray(starts, float).reshape(-1, 3) - origin) / res
    ends = (np.asarray(ends, float).reshape(-1, 3) - origin) / res
    out = np.full(len(starts), -1, dtype=np.int64)
    for r in range(len(starts)):
        cells, _ = _traverse(starts[r].tolist(), ends[r].tolist(), dims)
        for i, j, k in cells:
            idx = (i * ny + j) * nz + k
            if flat[idx] == OCCUPIED:
                out[r] = idx
                break
    return out


def integrate_rays(state, origin, res, sensor, ends, hit):
    """Carve FREE along each ray and mark hit endpoints OCCUPIED, in place.

    OCCUPIED voxels are never carved.  A ray whose endpoint is a hit inside the
    grid leaves its final voxel for the hit mark; every other traversed voxel
    becomes FREE.
    """
    dims = state.shape
    flat = state.reshape(-1)
    ny, nz = dims[1], dims[2]
    a = ((np.asarray(sensor, float) - origin) / res).tolist()
    ends = (np.asarray(ends, float).reshape(-1, 3) - origin) / res
    hit = np.asarray(hit, dtype=np.uint8).reshape(-1)
    for r in range(len(ends)):
        b = ends[r].tolist()
        cells, end_inside = _traverse(a, b, dims)
        mark = bool(hit[r]) and end_inside
        if mark:
            e = [int(math.floor(v)) for v in b]
            end_idx = (e[0] * ny + e[1]) * nz + e[2]
        else:
            end_idx = -1
        for i, j, k in cells:
            idx = (i * ny + j) * nz + k
            if idx != end_idx and flat[idx] != OCCUPIED:
                flat[idx] = FREE
        if mark:
            flat[end_idx] = OCCUPIED


def _octile(i, j, k, gi, gj, gk):
    a = abs(i - gi)
    b = abs(j - gj)
    c = abs(k - gk)
    if a < b:
        a, b = b, a
    if b < c:
        b, c = c, b
    if a < b:
        a, b = b, a
    return a + H2 * b + H3 * c


def astar(passable, unknown, start, goal, penalty, max_expansions, timeout):
    """26-connected A* over voxel indices.

    Step cost is the unit-voxel step length, multiplied by ``penalty`` when
    entering an UNKNOWN voxel.  Returns (flat index path or None, expansions,
    status).  ``max_expansions < 0`` disables the expansion budget.
    """
    nx, ny, nz = passable.shape
    pas = passable.reshape(-1)
    unk = unknown.reshape(-1)
    n = nx * ny * nz
    si = (start[0] * ny + start[1]) * nz + start[2]
    gi = (goal[0] * ny + goal[1]) * nz + goal[2]
    g = np.full(n, math.inf)
    parent = np.full(n, -1, dtype=np.int64)
    closed = np.zeros(n, dtype=bool)
    g[si] = 0.0
    heap = [(_octile(start[0], start[1], start[2], *goal), si)]
    expanded = 0
    deadline = time.monotonic() + timeout
    ga, gb, gc = goal
    while heap:
        _, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        closed[cur] = True
        if cur == gi:
            path = [cur]
            while parent[path[-1]] >= 0:
                path.append(int(parent[path[-1]]))
            path.reverse()
            return np.array(path, dtype=np.int64), expanded, STATUS_FOUND
        expanded += 1
        if max_expansions >= 0 and expanded > max_expansions:
            return None, expanded, STATUS_BUDGET
        if (expanded & 4095) == 0 and time.monotonic() > deadline:
            return None, expanded, STATUS_BUDGET
        k = cur % nz
        j = (cur // nz) % ny
        i = cur // (ny * nz)
        gcur = g[cur]
        for di, dj, dk, step in NEIGHBOURS:
            a = i + di
            b = j + dj
            c = k + dk
            if a < 0 or a >= nx or b < 0 or b >= ny or c < 0 or c >= nz:
                continue
            nb = (a * ny + b) * nz + c
            if not pas[nb] or closed[nb]:
                continue
            cost = step * penalty if unk[nb] else step
            ng = gcur + cost
            if ng < g[nb]:
                g[nb] = ng
                parent[nb] = cur
                heapq.heappush(heap, (ng + _octile(a, b, c, ga, gb, gc), nb))
    return None, expanded, STATUS_UNREACHABLE
