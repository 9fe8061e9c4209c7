import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopguide.frames import (FrameMismatchError, Path, Pose, Transform4DOF, apply_path,
                              compose, invert, wrap_angle)


def homogeneous(t: Transform4DOF) -> np.ndarray:
    # built from scratch, independent of Transform4DOF.matrix()
    c, s = math.cos(t.yaw), math.sin(t.yaw)
    x, y, z = t.translation
    return np.array([[c, -s, 0, x], [s, c, 0, y], [0, 0, 1, z], [0, 0, 0, 1]], float)


finite = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-20, 20, allow_nan=False)


def tf(draw_xyz, yaw, src="A", dst="B"):
    return Transform4DOF(np.array(draw_xyz), yaw, src, dst)


class TestWrap:
    def test_pi_maps_to_minus_pi(self):
        assert wrap_angle(math.pi) == -math.pi
        assert wrap_angle(np.array([math.pi]))[0] == -math.pi

    def test_in_range_untouched(self):
        for a in (-math.pi, -1.0, 0.0, 3.0):
            assert wrap_angle(a) == a

    @given(angle)
    def test_range(self, a):
        w = wrap_angle(a)
        assert -math.pi <= w < math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)

    def test_array_matches_scalar(self):
        a = np.linspace(-30, 30, 1001)
        v = wrap_angle(a)
        assert np.all((v >= -math.pi) & (v < math.pi))
        assert np.allclose(np.cos(v), np.cos(a)) and np.allclose(np.sin(v), np.sin(a))


class TestCompose:
    def test_identity(self):
        t = tf((1, 2, 3), 0.7)
        assert np.allclose(compose(Transform4DOF.identity("B"), t).translation, t.translation)
        assert compose(Transform4DOF.identity("B"), t).yaw == t.yaw

    def test_hand_evaluated(self):
        a = Transform4DOF([1, 0, 0], math.pi / 2, "B", "C")
        b = Transform4DOF([1, 0, 0], 0.0, "A", "B")
        c = compose(a, b)
        assert np.allclose(c.translation, [1, 1, 0], atol=1e-12)
        assert c.yaw == pytest.approx(math.pi / 2)
        assert (c.src, c.dst) == ("A", "C")

    def test_frame_mismatch(self):
        with pytest.raises(FrameMismatchError):
            compose(tf((0, 0, 0), 0, "A", "B"), tf((0, 0, 0), 0, "A", "B"))

    def test_inverse_is_identity(self):
        t = tf((3, -2, 1), 2.5)
        i = compose(t, invert(t))
        assert np.allclose(i.translation, 0, atol=1e-12) and abs(i.yaw) < 1e-12

    @settings(max_examples=200)
    @given(st.tuples(finite, finite, finite), angle, st.tuples(finite, finite, finite), angle,
           st.tuples(finite, finite, finite), angle)
    def test_associative_and_matches_matrices(self, ta, ya, tb, yb, tc, yc):
        a = tf(ta, ya, "C", "D")
        b = tf(tb, yb, "B", "C")
        c = tf(tc, yc, "A", "B")
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert np.allclose(left.translation, right.translation, atol=1e-9)
        assert abs(wrap_angle(left.yaw - right.yaw)) < 1e-12
        m = homogeneous(a) @ homogeneous(b) @ homogeneous(c)
        assert np.allclose(homogeneous(left), m, atol=1e-9)


class TestInvert:
    def test_identity(self):
        i = invert(Transform4DOF.identity("A"))
        assert np.all(i.translation == 0) and i.yaw == 0

    def test_pure_translation(self):
        i = invert(tf((2, 0, 0), 0))
        assert np.allclose(i.translation, [-2, 0, 0]) and i.yaw == 0
        assert (i.src, i.dst) == ("B", "A")

    def test_matrix_inverse_oracle(self):
        i = invert(tf((1, 1, 0), math.pi / 2))
        assert np.allclose(i.translation, [-1, 1, 0], atol=1e-12)
        assert i.yaw == pytest.approx(-math.pi / 2)
        assert np.allclose(homogeneous(i), np.linalg.inv(homogeneous(tf((1, 1, 0), math.pi / 2))))

    @given(st.tuples(finite, finite, finite), angle)
    def test_round_trip(self, t, y):
        T = tf(t, y)
        c = compose(invert(T), T)
        assert np.allclose(c.translation, 0, atol=1e-9)
        assert abs(c.yaw) < 1e-12


class TestApplyPath:
    def test_identity(self):
        p = Path(np.random.default_rng(0).normal(size=(5, 3)), np.linspace(-3, 3, 5), "A")
        assert apply_path(Transform4DOF.identity("A"), p) == p

    def test_half_turn(self):
        p = Path([[1, 0, 0]], [0.0], "A")
        q = apply_path(tf((0, 0, 0), math.pi), p)
        assert np.allclose(q.positions, [[-1, 0, 0]], atol=1e-12)
        assert q.headings[0] == -math.pi
        assert q.frame == "B"

    def test_matrix_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            T = tf(rng.uniform(-10, 10, 3), rng.uniform(-4, 4))
            p = Path(rng.uniform(-5, 5, (5, 3)), rng.uniform(-3, 3, 5), "A")
            q = apply_path(T, p)
            H = homogeneous(T)
            expect = (H @ np.column_stack([p.positions, np.ones(5)]).T).T[:, :3]
            assert np.allclose(q.positions, expect, atol=1e-9)
            d = (q.headings - p.headings - T.yaw + math.pi) % (2 * math.pi) - math.pi
            assert np.allclose(d, 0, atol=1e-12)
            assert np.all((q.headings >= -math.pi) & (q.headings < math.pi))

    @given(st.tuples(finite, finite, finite), angle,
           st.lists(st.tuples(finite, finite, finite, angle), min_size=1, max_size=8))
    def test_round_trip(self, t, y, poses):
        T = tf(t, y)
        arr = np.array(poses)
        p = Path(arr[:, :3], arr[:, 3], "A")
        back = apply_path(invert(T), apply_path(T, p))
        assert np.allclose(back.positions, p.positions, atol=1e-9)
        assert np.allclose(np.cos(back.headings), np.cos(p.headings), atol=1e-9)
        assert np.allclose(np.sin(back.headings), np.sin(p.headings), atol=1e-9)

    def test_composition_consistency(self):
        rng = np.random.default_rng(1)
        a = tf(rng.normal(size=3), 1.1, "B", "C")
        b = tf(rng.normal(size=3), -2.0, "A", "B")
        p = Path(rng.normal(size=(4, 3)), rng.uniform(-3, 3, 4), "A")
        one = apply_path(compose(a, b), p)
        two = apply_path(a, apply_path(b, p))
        assert np.allclose(one.positions, two.positions, atol=1e-9)

    def test_frame_checked(self):
        with pytest.raises(FrameMismatchError):
            apply_path(tf((0, 0, 0), 0, "A", "B"), Path([[0, 0, 0]], [0], "B"))

    def test_empty(self):
        q = apply_path(tf((1, 2, 3), 1.0), Path.empty("A"))
        assert len(q) == 0 and q.frame == "B"


class TestTypes:
    def test_pose_normalises_heading(self):
        assert Pose([0, 0, 0], 3 * math.pi, "L").heading == -math.pi

    def test_pose_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Pose([0, np.nan, 0], 0, "L")

    def test_immutable(self):
        p = Pose([1, 2, 3], 0.0, "L")
        with pytest.raises(ValueError):
            p.position[0] = 5.0

    def test_path_from_poses_checks_frames(self):
        with pytest.raises(FrameMismatchError):
            Path.from_poses([Pose([0, 0, 0], 0, "L"), Pose([1, 0, 0], 0, "S")])

    def test_length(self):
        p = Path([[0, 0, 0], [3, 4, 0], [3, 4, 1]], [0, 0, 0], "L")
        assert p.length() == pytest.approx(6.0)
