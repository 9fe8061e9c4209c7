# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled voxel kernels.  Semantics mirror ``_pykernels`` exactly."""

import time

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, INFINITY
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport int64_t, uint8_t

cnp.import_array()

cdef enum:
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2

cdef double SQ2 = sqrt(2.0)
cdef double SQ3 = sqrt(3.0)
cdef double H2 = SQ2 - 1.0
cdef double H3 = SQ3 - SQ2

cdef enum:
    C_FOUND = 0
    C_UNREACHABLE = 1
    C_BUDGET = 2

STATUS_FOUND = C_FOUND
STATUS_UNREACHABLE = C_UNREACHABLE
STATUS_BUDGET = C_BUDGET


cdef struct Walk:
    int cell[3]
    int last[3]
    int step[3]
    double tmax[3]
    double tdelta[3]
    double t1
    int dims[3]
    int done
    int end_inside


cdef int walk_init(Walk* w, double* a, double* b, int nx, int ny, int nz) nogil:
    """Clip segment a->b (voxel units) to the grid; return 0 if it misses."""
    cdef double t0 = 0.0, t1 = 1.0, ta, tb, tmp
    cdef double d[3]
    cdef int ax, n, c
    w.dims[0] = nx
    w.dims[1] = ny
    w.dims[2] = nz
    for ax in range(3):
        d[ax] = b[ax] - a[ax]
    for ax in range(3):
        n = w.dims[ax]
        if d[ax] == 0.0:
            if a[ax] < 0.0 or a[ax] > n:
                return 0
        else:
            ta = (0.0 - a[ax]) / d[ax]
            tb = (n - a[ax]) / d[ax]
            if ta > tb:
                tmp = ta
                ta = tb
                tb = tmp
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return 0
    w.end_inside = 1
    for ax in range(3):
        if not (0.0 <= b[ax] and b[ax] < w.dims[ax]):
            w.end_inside = 0
    w.t1 = t1
    w.done = 0
    for ax in range(3):
        n = w.dims[ax]
        c = <int>floor(a[ax] + t0 * d[ax])
        if c < 0:
            c = 0
        if c > n - 1:
            c = n - 1
        w.cell[ax] = c
        c = <int>floor(a[ax] + t1 * d[ax])
        if c < 0:
            c = 0
        if c > n - 1:
            c = n - 1
        w.last[ax] = c
        if d[ax] > 0.0:
            w.step[ax] = 1
            w.tmax[ax] = (w.cell[ax] + 1 - a[ax]) / d[ax]
            w.tdelta[ax] = 1.0 / d[ax]
        elif d[ax] < 0.0:
            w.step[ax] = -1
            w.tmax[ax] = (w.cell[ax] - a[ax]) / d[ax]
            w.tdelta[ax] = -1.0 / d[ax]
        else:
            w.step[ax] = 0
            w.tmax[ax] = INFINITY
            w.tdelta[ax] = INFINITY
    return 1


cdef int walk_next(Walk* w) nogil:
    """Advance to the next voxel; return 0 when the walk has ended."""
    cdef int ax
    if w.cell[0] == w.last[0] and w.cell[1] == w.last[1] and w.cell[2] == w.last[2]:
        return 0
    ax = 0
    if w.tmax[1] < w.tmax[ax]:
        ax = 1
    if w.tmax[2] < w.tmax[ax]:
        ax = 2
    if w.tmax[ax] > w.t1:
        return 0
    w.cell[ax] += w.step[ax]
    if w.cell[ax] < 0 or w.cell[ax] >= w.dims[ax]:
        return 0
    w.tmax[ax] += w.tdelta[ax]
    return 1


def raycast_first_occupied(cnp.ndarray state, origin, double res, starts, ends):
    cdef uint8_t[:, :, ::1] st = state
    cdef int nx = st.shape[0], ny = st.shape[1], nz = st.shape[2]
    cdef double[:, ::1] s = np.ascontiguousarray(
        (np.asarray(starts, float).reshape(-1, 3) - origin) / res)
    cdef double[:, ::1] e = np.ascontiguousarray(
        (np.asarray(ends, float).reshape(-1, 3) - origin) / res)
    cdef Py_ssize_t r, nr = s.shape[0]
    out_arr = np.full(nr, -1, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Walk w
    cdef double a[3]
    cdef double b[3]
    cdef int ax
    with nogil:
        for r in range(nr):
            for ax in range(3):
                a[ax] = s[r, ax]
                b[ax] = e[r, ax]
            if not walk_init(&w, a, b, nx, ny, nz):
                continue
            while True:
                if st[w.cell[0], w.cell[1], w.cell[2]] == OCCUPIED:
                    out[r] = (<int64_t>w.cell[0] * ny + w.cell[1]) * nz + w.cell[2]
                    break
                if not walk_next(&w):
                    break
    return out_arr


def integrate_rays(cnp.ndarray state, origin, double res, sensor, ends, hit):
    cdef uint8_t[:, :, ::1] st = state
    cdef int nx = st.shape[0], ny = st.shape[1], nz = st.shape[2]
    sensor_v = (np.asarray(sensor, float).reshape(3) - origin) / res
    cdef double a[3]
    a[0] = sensor_v[0]
    a[1] = sensor_v[1]
    a[2] = sensor_v[2]
    cdef double[:, ::1] e = np.ascontiguousarray(
        (np.asarray(ends, float).reshape(-1, 3) - origin) / res)
    cdef uint8_t[::1] h = np.ascontiguousarray(np.asarray(hit, dtype=np.uint8).reshape(-1))
    cdef Py_ssize_t r, nr = e.shape[0]
    cdef Walk w
    cdef double b[3]
    cdef int ax, mark, ei, ej, ek
    with nogil:
        for r in range(nr):
            for ax in range(3):
                b[ax] = e[r, ax]
            if not walk_init(&w, a, b, nx, ny, nz):
                continue
            mark = h[r] != 0 and w.end_inside
            ei = ej = ek = -1
            if mark:
                ei = <int>floor(b[0])
                ej = <int>floor(b[1])
                ek = <int>floor(b[2])
            while True:
                if not (w.cell[0] == ei and w.cell[1] == ej and w.cell[2] == ek):
                    if st[w.cell[0], w.cell[1], w.cell[2]] != OCCUPIED:
                        st[w.cell[0], w.cell[1], w.cell[2]] = FREE
                if not walk_next(&w):
                    break
            if mark:
                st[ei, ej, ek] = OCCUPIED


# ---------------------------------------------------------------- A* search

cdef struct HeapItem:
    double f
    int64_t idx


cdef inline bint item_less(HeapItem a, HeapItem b) nogil:
    return a.f < b.f or (a.f == b.f and a.idx < b.idx)


cdef struct Heap:
    HeapItem* data
    Py_ssize_t size
    Py_ssize_t cap


cdef int heap_push(Heap* h, double f, int64_t idx) nogil:
    cdef Py_ssize_t i, p
    cdef HeapItem item, tmp
    cdef HeapItem* grown
    if h.size == h.cap:
        grown = <HeapItem*>realloc(h.data, 2 * h.cap * sizeof(HeapItem))
        if grown == NULL:
            return -1
        h.data = grown
        h.cap *= 2
    item.f = f
    item.idx = idx
    i = h.size
    h.size += 1
    while i > 0:
        p = (i - 1) >> 1
        if item_less(item, h.data[p]):
            h.data[i] = h.data[p]
            i = p
        else:
            break
    h.data[i] = item
    return 0


cdef HeapItem heap_pop(Heap* h) nogil:
    cdef HeapItem top = h.data[0]
    cdef HeapItem last
    cdef Py_ssize_t i = 0, c, n
    h.size -= 1
    n = h.size
    if n > 0:
        last = h.data[n]
        while True:
            c = 2 * i + 1
            if c >= n:
                break
            if c + 1 < n and item_less(h.data[c + 1], h.data[c]):
                c += 1
            if item_less(h.data[c], last):
                h.data[i] = h.data[c]
                i = c
            else:
                break
        h.data[i] = last
    return top


cdef inline double octile(int i, int j, int k, int gi, int gj, int gk) nogil:
    cdef int a = i - gi, b = j - gj, c = k - gk, t
    if a < 0:
        a = -a
    if b < 0:
        b = -b
    if c < 0:
        c = -c
    if a < b:
        t = a; a = b; b = t
    if b < c:
        t = b; b = c; c = t
    if a < b:
        t = a; a = b; b = t
    return a + H2 * b + H3 * c


def astar(cnp.ndarray passable, cnp.ndarray unknown, start, goal,
          double penalty, long max_expansions, double timeout):
    cdef uint8_t[:, :, ::1] pas3 = passable
    cdef uint8_t[:, :, ::1] unk3 = unknown
    cdef int nx = pas3.shape[0], ny = pas3.shape[1], nz = pas3.shape[2]
    cdef int64_t n = <int64_t>nx * ny * nz
    cdef uint8_t[::1] pas = passable.reshape(-1)
    cdef uint8_t[::1] unk = unknown.reshape(-1)
    cdef int ga = goal[0], gb = goal[1], gc = goal[2]
    cdef int64_t si = (<int64_t>start[0] * ny + start[1]) * nz + start[2]
    cdef int64_t gi = (<int64_t>ga * ny + gb) * nz + gc
    g_arr = np.full(n, np.inf)
    parent_arr = np.full(n, -1, dtype=np.int64)
    closed_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] g = g_arr
    cdef int64_t[::1] parent = parent_arr
    cdef uint8_t[::1] closed = closed_arr

    cdef int di[26]
    cdef int dj[26]
    cdef int dk[26]
    cdef double dstep[26]
    cdef int m = 0, x, y, z, cnt
    for x in range(-1, 2):
        for y in range(-1, 2):
            for z in range(-1, 2):
                if x == 0 and y == 0 and z == 0:
                    continue
                di[m] = x
                dj[m] = y
                dk[m] = z
                cnt = abs(x) + abs(y) + abs(z)
                dstep[m] = 1.0 if cnt == 1 else (SQ2 if cnt == 2 else SQ3)
                m += 1

    cdef Heap h
    h.cap = 1024
    h.size = 0
    h.data = <HeapItem*>malloc(h.cap * sizeof(HeapItem))
    if h.data == NULL:
        raise MemoryError()

    cdef double deadline = time.monotonic() + timeout
    cdef long expanded = 0
    cdef int status = C_UNREACHABLE
    cdef HeapItem item
    cdef int64_t cur, nb
    cdef int i, j, k, a, b, c, q
    cdef double gcur, ng, cost
    cdef bint check_time = False
    g[si] = 0.0
    heap_push(&h, octile(start[0], start[1], start[2], ga, gb, gc), si)
    try:
        while h.size > 0:
            with nogil:
                check_time = False
                while h.size > 0:
                    item = heap_pop(&h)
                    cur = item.idx
                    if closed[cur]:
                        continue
                    closed[cur] = 1
                    if cur == gi:
                        status = C_FOUND
                        break
                    expanded += 1
                    if max_expansions >= 0 and expanded > max_expansions:
                        status = C_BUDGET
                        break
                    if (expanded & 4095) == 0:
                        check_time = True
                    k = <int>(cur % nz)
                    j = <int>((cur // nz) % ny)
                    i = <int>(cur // (<int64_t>ny * nz))
                    gcur = g[cur]
                    for q in range(26):
                        a = i + di[q]
                        b = j + dj[q]
                        c = k + dk[q]
                        if a < 0 or a >= nx or b < 0 or b >= ny or c < 0 or c >= nz:
                            continue
                        nb = (<int64_t>a * ny + b) * nz + c
                        if pas[nb] == 0 or closed[nb]:
                            continue
                        if unk[nb]:
                            cost = dstep[q] * penalty
                        else:
                            cost = dstep[q]
                        ng = gcur + cost
                        if ng < g[nb]:
                            g[nb] = ng
                            parent[nb] = cur
                            if heap_push(&h, ng + octile(a, b, c, ga, gb, gc), nb) != 0:
                                status = -1
                                break
                    if status == -1 or check_time:
                        break
            if status == -1:
                raise MemoryError()
            if status != C_UNREACHABLE:
                break
            if check_time and time.monotonic() > deadline:
                status = C_BUDGET
                break
    finally:
        free(h.data)

    if status == C_FOUND:
        path = [gi]
        cur = gi
        while parent[cur] >= 0:
            cur = parent[cur]
            path.append(int(cur))
        path.reverse()
        return np.array(path, dtype=np.int64), expanded, C_FOUND
    return None, expanded, status
