import io
import math

import numpy as np
import pytest

from coopguide import _pykernels
from coopguide.sim.sensors import LidarSpec, simulate_lidar
from coopguide.sim.world import World, make_gap_world
from coopguide.frames import Pose
from coopguide.voxel_map import (FREE, OCCUPIED, UNKNOWN, CellState, OccupancyMap,
                                 add_obstacle_box)


def crossed_voxels(a, b, res, dims):
    """Voxels whose closed cell meets segment a-b in a piece of positive length.

    Slab clipping per candidate voxel; shares nothing with the DDA walk.
    """
    a, b = np.asarray(a, float), np.asarray(b, float)
    lo = np.floor(np.minimum(a, b) / res).astype(int) - 1
    hi = np.floor(np.maximum(a, b) / res).astype(int) + 1
    d = b - a
    L = np.linalg.norm(d)
    out = set()
    for i in range(max(lo[0], 0), min(hi[0], dims[0] - 1) + 1):
        for j in range(max(lo[1], 0), min(hi[1], dims[1] - 1) + 1):
            for k in range(max(lo[2], 0), min(hi[2], dims[2] - 1) + 1):
                t0, t1 = 0.0, 1.0
                for ax, c in enumerate((i, j, k)):
                    s0, s1 = c * res, (c + 1) * res
                    if d[ax] == 0:
                        if not s0 <= a[ax] <= s1:
                            t0, t1 = 1.0, 0.0
                        continue
                    u, v = (s0 - a[ax]) / d[ax], (s1 - a[ax]) / d[ax]
                    t0, t1 = max(t0, min(u, v)), min(t1, max(u, v))
                if (t1 - t0) * L > 1e-9:
                    out.add((i, j, k))
    return out


def brute_nearest(occ_idx, idx, res):
    if len(occ_idx) == 0:
        return math.inf
    return float(np.sqrt(((occ_idx - idx) ** 2).sum(axis=1)).min() * res)


class TestBasics:
    def test_fresh_map_unknown(self):
        m = OccupancyMap(0.1, (4, 5, 6))
        assert np.all(m.cells == UNKNOWN)

    def test_voxel_center(self):
        m = OccupancyMap(0.25, (4, 4, 4), origin=(1, 2, 3))
        assert np.allclose(m.center_of((0, 1, 2)), [1.125, 2.375, 3.625])

    def test_face_tie_goes_to_larger_index(self):
        m = OccupancyMap(0.5, (4, 4, 4), origin=(0, 0, 0))
        m.cells[:] = FREE
        m.cells[2, 0, 0] = OCCUPIED
        assert m.state([1.0, 0.1, 0.1]) == CellState.OCCUPIED
        assert m.state(np.nextafter(1.0, 0.0) * np.array([1, 0, 0]) + [0, 0.1, 0.1]) == CellState.FREE

    def test_outside_is_unknown(self):
        m = OccupancyMap(0.1, (4, 4, 4), origin=(0, 0, 0))
        m.cells[:] = FREE
        assert m.state([-0.01, 0.1, 0.1]) == CellState.UNKNOWN
        assert m.state([0.4, 0.1, 0.1]) == CellState.UNKNOWN

    def test_bad_construction(self):
        with pytest.raises(ValueError):
            OccupancyMap(0.0, (1, 1, 1))
        with pytest.raises(ValueError):
            OccupancyMap(0.1, (1, 0, 1))


class TestIntegrateScan:
    def test_empty_scan_no_change(self):
        m = OccupancyMap(0.1, (10, 10, 10), origin=(0, 0, 0))
        m.integrate_scan([0.5, 0.5, 0.5], np.zeros((0, 3)), 0.0)
        assert np.all(m.cells == UNKNOWN)

    def test_axis_hit(self):
        m = OccupancyMap(0.1, (40, 10, 10), origin=(0, 0, 0))
        m.integrate_scan([0.05, 0.55, 0.55], [[1.05, 0.55, 0.55]], 5.0)
        row = m.cells[:, 5, 5]
        assert row[10] == OCCUPIED
        assert np.all(row[1:10] == FREE)
        assert row[0] == FREE
        assert np.all(row[11:] == UNKNOWN)
        assert np.count_nonzero(m.cells != UNKNOWN) == 11

    def test_occupied_absorbing(self):
        m = OccupancyMap(0.1, (40, 10, 10), origin=(0, 0, 0))
        m.integrate_scan([0.05, 0.55, 0.55], [[1.05, 0.55, 0.55]], 5.0)
        # a later ray straight through the hit must not carve it
        m.integrate_scan([0.05, 0.55, 0.55], [[3.05, 0.55, 0.55]], 5.0)
        assert m.cells[10, 5, 5] == OCCUPIED
        assert m.cells[30, 5, 5] == OCCUPIED

    def test_miss_carves_to_max_range(self):
        m = OccupancyMap(0.1, (40, 10, 10), origin=(0, 0, 0))
        m.integrate_scan([0.05, 0.55, 0.55], np.zeros((0, 3)), 2.0, misses=[[1, 0, 0]])
        row = m.cells[:, 5, 5]
        assert np.all(row[:21] == FREE) and np.all(row[21:] == UNKNOWN)

    def test_random_rays_match_slab_oracle(self):
        rng = np.random.default_rng(7)
        dims = (24, 24, 24)
        res = 0.1
        for _ in range(150):
            m = OccupancyMap(res, dims, origin=(0, 0, 0))
            a = rng.uniform(0.05, 2.35, 3)
            b = rng.uniform(0.05, 2.35, 3)
            m.integrate_scan(a, [b], 10.0)
            expect = crossed_voxels(a, b, res, dims)
            end = tuple(np.floor(b / res).astype(int))
            got_free = {tuple(v) for v in np.argwhere(m.cells == FREE)}
            got_occ = {tuple(v) for v in np.argwhere(m.cells == OCCUPIED)}
            assert got_occ == {end}
            assert got_free | got_occ == expect | {end}

    def test_gap_world_scan(self):
        res = 0.1
        world = make_gap_world(0.4, res)
        m = world.make_map(res, margin=0.5, offset=(0.013, 0.021, 0.007))
        pose = Pose([8.0, 4.0, 2.0], 0.0, "L")
        scan = simulate_lidar(world, pose, LidarSpec())
        assert LidarSpec().shape == (256, 32)
        m.integrate_scan(scan.origin, scan.hits, 20.0, scan.misses)
        occ = m.center_of(np.argwhere(m.cells == OCCUPIED))
        # every occupied voxel lies within res*sqrt(3) of true geometry
        assert np.all(world.distance(occ) <= res * math.sqrt(3) + 1e-9)
        # the voxel holding each return is occupied
        assert np.all(m.states(scan.hits) == OCCUPIED)
        # rays through the gap carve it: the gap centre line at sensor height
        gx = np.arange(9.85, 10.16, 0.02)
        pts = np.column_stack([gx, np.full_like(gx, 4.0), np.full_like(gx, 2.0)])
        assert np.all(m.states(pts) == FREE)
        # the divider either side of the gap is seen occupied somewhere
        ys, zs = np.meshgrid(np.arange(0.5, 3.3, 0.1), np.arange(1.0, 3.0, 0.1))
        face = np.column_stack([np.full(ys.size, 9.9), ys.ravel(), zs.ravel()])
        assert np.mean(m.states(face) == OCCUPIED) > 0.5

    def test_origin_outside_rejected(self):
        m = OccupancyMap(0.1, (4, 4, 4), origin=(0, 0, 0))
        with pytest.raises(ValueError):
            m.integrate_scan([5, 5, 5], [[0.1, 0.1, 0.1]], 1.0)

    def test_rolling_recenter(self):
        m = OccupancyMap(0.1, (40, 40, 10), center=(0, 0, 0.5), rolling=True)
        m.integrate_scan([0.05, 0.05, 0.55], [[0.55, 0.05, 0.55]], 2.0)
        hit = np.array([0.55, 0.05, 0.55])
        assert m.state(hit) == CellState.OCCUPIED
        m.integrate_scan([1.55, 0.05, 0.55], np.zeros((0, 3)), 0.0)  # beyond extent/4
        assert np.allclose(m.center[:2], [1.5, 0.0], atol=0.1 + 1e-9)
        assert m.state(hit) == CellState.OCCUPIED  # still inside: kept
        m.integrate_scan([3.05, 0.05, 0.55], np.zeros((0, 3)), 0.0)
        assert m.state(hit) == CellState.UNKNOWN   # left the region: discarded


class TestObstacleBox:
    def test_table_values(self):
        m = OccupancyMap(0.1, (40, 40, 120), origin=(0, 0, 0))
        m.cells[:] = FREE
        c = m.center_of((20, 20, 60))
        out = add_obstacle_box(m, c, 1.5, 10.0)
        occ = np.argwhere(out.cells == OCCUPIED)
        assert len(occ) == 15 * 15 * 100
        assert np.all(occ.max(axis=0) - occ.min(axis=0) + 1 == [15, 15, 100])
        assert np.all(m.cells == FREE)  # original untouched

    def test_single_voxel(self):
        m = OccupancyMap(0.1, (10, 10, 10), origin=(0, 0, 0))
        m.cells[:] = FREE
        out = add_obstacle_box(m, m.center_of((4, 5, 5)), 0.1, 0.3)
        assert {tuple(v) for v in np.argwhere(out.cells == OCCUPIED)} == {(4, 5, 4), (4, 5, 5), (4, 5, 6)}

    def test_copy_independence(self):
        m = OccupancyMap(0.1, (10, 10, 10), origin=(0, 0, 0))
        out = add_obstacle_box(m, [0.5, 0.5, 0.5], 0.2, 0.2)
        out.cells[0, 0, 0] = FREE
        assert m.cells[0, 0, 0] == UNKNOWN

    def test_never_frees(self):
        rng = np.random.default_rng(3)
        m = OccupancyMap(0.1, (20, 20, 20), origin=(0, 0, 0))
        m.cells[:] = rng.integers(0, 3, m.dims)
        out = add_obstacle_box(m, [1.0, 1.0, 1.0], 0.7, 0.5)
        assert np.all(out.cells[m.cells == OCCUPIED] == OCCUPIED)

    def test_incremental_distance_field_is_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            m = OccupancyMap(0.1, (24, 24, 24), origin=(0, 0, 0))
            m.cells[:] = FREE
            m.cells[rng.random(m.dims) < 0.003] = OCCUPIED
            m.distance_field()  # populate the cache so the fast path is taken
            out = add_obstacle_box(m, rng.uniform(0.3, 2.1, 3), rng.uniform(0.1, 0.8), rng.uniform(0.1, 0.8))
            fast = out.distance_field().copy()
            out.touch()
            assert np.allclose(fast, out.distance_field(), atol=1e-12)


class TestRaycast:
    def test_clear_returns_end(self):
        m = OccupancyMap(0.1, (80, 20, 20), origin=(0, 0, 0))
        m.cells[:] = FREE
        assert np.array_equal(m.raycast([0.15, 1.0, 1.0], [6.15, 1.0, 1.0]), [6.15, 1.0, 1.0])

    def test_wall(self):
        res = 0.1
        world = World([(2.0, -5, -5, 2.3, 5, 5)], bounds=((0, 0, 0), (8, 2, 2)))
        m = world.make_map(res, margin=0.0, offset=(0.0, 0.0, 0.0))
        world.rasterize(m)
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = np.array([rng.uniform(0.1, 0.5), rng.uniform(0.3, 1.7), rng.uniform(0.3, 1.7)])
            d = np.array([1.0, rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)])
            d /= np.linalg.norm(d)
            b = a + 6.0 * d
            if not m.contains(b):
                b = a + 5.0 * d
            hit = m.raycast(a, b)
            t = (2.0 - a[0]) / d[0]
            exact = a + t * d
            assert abs(hit[0] - exact[0]) <= res / 2 + 1e-9
            assert np.linalg.norm(hit - exact) <= res * math.sqrt(3)

    def test_start_inside_occupied(self):
        m = OccupancyMap(0.1, (10, 10, 10), origin=(0, 0, 0))
        m.cells[:] = FREE
        m.cells[2, 2, 2] = OCCUPIED
        assert np.allclose(m.raycast([0.21, 0.22, 0.23], [0.9, 0.9, 0.9]), m.center_of((2, 2, 2)))

    def test_hit_lies_on_segment_with_clear_prefix(self):
        rng = np.random.default_rng(11)
        m = OccupancyMap(0.1, (30, 30, 30), origin=(0, 0, 0))
        m.cells[:] = FREE
        m.cells[rng.random(m.dims) < 0.01] = OCCUPIED
        for _ in range(300):
            a, b = rng.uniform(0.01, 2.99, 3), rng.uniform(0.01, 2.99, 3)
            h = m.raycast(a, b)
            d = b - a
            t = np.clip(np.dot(h - a, d) / np.dot(d, d), 0, 1)
            assert np.linalg.norm(a + t * d - h) <= 0.1 * math.sqrt(3) / 2 + 1e-9
            # the prefix before the hit contains no occupied voxel
            ts = np.linspace(0, 1, 2000)
            pts = a + ts[:, None] * d
            vox = m.index_of(pts)
            occ = m.cells[vox[:, 0], vox[:, 1], vox[:, 2]] == OCCUPIED
            if occ.any():
                first = vox[np.argmax(occ)]
                # sampling can skip corner clips, so the walk may stop earlier, never later
                idx = m.index_of(h)
                assert m.cells[tuple(idx)] == OCCUPIED
                assert np.dot(m.center_of(idx) - a, d) <= np.dot(m.center_of(first) - a, d) + 0.1 * math.sqrt(3)
            else:
                ok = np.array_equal(h, b) or m.cells[tuple(m.index_of(h))] == OCCUPIED
                assert ok


class TestObsDist:
    def test_no_obstacles(self):
        m = OccupancyMap(0.1, (8, 8, 8), origin=(0, 0, 0))
        assert m.obs_dist([0.4, 0.4, 0.4]) == math.inf

    def test_axis(self):
        m = OccupancyMap(0.1, (30, 5, 5), origin=(0, 0, 0))
        m.cells[:] = FREE
        m.cells[15, 2, 2] = OCCUPIED
        assert m.obs_dist(m.center_of((5, 2, 2))) == pytest.approx(1.0)

    def test_random_maps_match_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            m = OccupancyMap(0.1, (32, 32, 32), origin=(0, 0, 0))
            m.cells[:] = rng.choice([FREE, UNKNOWN], size=m.dims)
            m.cells[rng.random(m.dims) < rng.uniform(0.0005, 0.02)] = OCCUPIED
            occ = np.argwhere(m.cells == OCCUPIED)
            idx = rng.integers(0, 32, (40, 3))
            got = m.obs_dists(m.center_of(idx))
            expect = [brute_nearest(occ, i, 0.1) for i in idx]
            assert np.allclose(got, expect, rtol=0, atol=1e-12)

    def test_lipschitz(self):
        rng = np.random.default_rng(9)
        m = OccupancyMap(0.1, (20, 20, 20), origin=(0, 0, 0))
        m.cells[:] = FREE
        m.cells[rng.random(m.dims) < 0.01] = OCCUPIED
        f = m.distance_field()
        bound = 0.1 * math.sqrt(3) + 1e-12
        for ax in range(3):
            assert np.all(np.abs(np.diff(f, axis=ax)) <= bound)

    def test_cache_invalidated_on_mutation(self):
        m = OccupancyMap(0.1, (10, 10, 10), origin=(0, 0, 0))
        m.cells[:] = FREE
        assert m.obs_dist([0.05, 0.05, 0.05]) == math.inf
        m.integrate_scan([0.05, 0.05, 0.05], [[0.55, 0.05, 0.05]], 1.0)
        assert m.obs_dist([0.05, 0.05, 0.05]) == pytest.approx(0.5)

    def test_outside_raises(self):
        m = OccupancyMap(0.1, (4, 4, 4), origin=(0, 0, 0))
        with pytest.raises(ValueError):
            m.obs_dist([1, 1, 1])
        assert np.isnan(m.obs_dists([[1, 1, 1]])[0])


class TestDump:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        m = OccupancyMap(0.1, (7, 5, 3), origin=(-0.7, 0.1 + 0.2, 3.0))
        m.cells[:] = rng.integers(0, 3, m.dims)
        buf = io.StringIO()
        m.dump(buf)
        text = buf.getvalue()
        head = text.splitlines()[0].split()
        assert head[:2] == ["voxmap", "v1"]
        assert [float(v) for v in head[2:6]] == [0.1, -0.7, 0.1 + 0.2, 3.0]
        assert head[6:] == ["7", "5", "3"]
        assert len(text.splitlines()) == 1 + np.count_nonzero(m.cells != UNKNOWN)
        back = OccupancyMap.load(io.StringIO(text))
        assert np.array_equal(back.cells, m.cells)
        assert np.array_equal(back.origin, m.origin) and back.resolution == m.resolution

    def test_rows_are_integers(self):
        m = OccupancyMap(0.5, (2, 2, 2), origin=(0, 0, 0))
        m.cells[1, 0, 1] = OCCUPIED
        buf = io.StringIO()
        m.dump(buf)
        assert buf.getvalue().splitlines()[1] == "1 0 1 1"

    @pytest.mark.parametrize("text", ["nope\n", "voxmap v1 0.1 0 0 0 2 2 2\n5 0 0 1\n",
                                      "voxmap v1 0.1 0 0 0 2 2 2\n0 0 0 7\n"])
    def test_bad_files(self, text):
        with pytest.raises(ValueError):
            OccupancyMap.load(io.StringIO(text))


def test_python_traversal_tie_rule():
    # the walk visits the larger-index voxel first at an exact face crossing
    cells, inside = _pykernels._traverse([0.5, 0.5, 0.5], [2.0, 0.5, 0.5], (4, 4, 4))
    assert cells == [(0, 0, 0), (1, 0, 0), (2, 0, 0)] and inside
