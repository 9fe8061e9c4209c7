"""Gravity-aligned reference frames, poses, paths and 4-DOF transforms.

Every frame shares the vertical axis, so a transform between two frames is a
translation plus a rotation about z.  Frame labels are carried by every value
and checked by every operation; a mismatch raises :class:`FrameMismatchError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Conventional labels.  Scenario code may use any other string.
WORLD = "W"
LOCAL = "L"
VIO = "V"
PRIMARY = "P"
SECONDARY = "S"


class FrameMismatchError(ValueError):
    """Raised when values expressed in different frames are combined."""


def wrap_angle(a):
    """Wrap an angle (scalar or array) into the half-open interval [-pi, pi)."""
    # in-range values pass through untouched so that wrapping is bit-exact
    if isinstance(a, np.ndarray):
        w = np.array(a, dtype=float)
        out = ~((w >= -math.pi) & (w < math.pi))
        if out.any():
            v = np.mod(w[out] + math.pi, TWO_PI) - math.pi
            # mod can round up to 2*pi for inputs just below -pi
            v[v >= math.pi] -= TWO_PI
            w[out] = v
        return w
    if -math.pi <= a < math.pi:
        return float(a)
    w = math.fmod(a + math.pi, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    w -= math.pi
    if w >= math.pi:
        w -= TWO_PI
    return w


def _frozen_vec(v, n: int = 3) -> np.ndarray:
    arr = np.array(v, dtype=float).reshape(n)
    arr.setflags(write=False)
    return arr


def _check(expected: str, got: str, what: str) -> None:
    if expected != got:
        raise FrameMismatchError(f"{what}: expected frame {expected!r}, got {got!r}")


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    heading: float
    frame: str

    def __post_init__(self):
        pos = _frozen_vec(self.position)
        if not np.all(np.isfinite(pos)):
            raise ValueError("pose position must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (
            self.frame == other.frame
            and self.heading == other.heading
            and np.array_equal(self.position, other.position)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def x(self) -> float:
        return float(self.position[0])

    @property
    def y(self) -> float:
        return float(self.position[1])

    @property
    def z(self) -> float:
        return float(self.position[2])

    def distance_to(self, other: "Pose | np.ndarray") -> float:
        p = other.position if isinstance(other, Pose) else np.asarray(other, float)
        return float(np.linalg.norm(self.position - p))


@dataclass(frozen=True)
class Path:
    """An ordered sequence of poses in a single frame.

    Stored column-wise: ``positions`` is (N, 3) and ``headings`` is (N,).
    """

    positions: np.ndarray
    headings: np.ndarray
    frame: str

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        hdg = wrap_angle(np.array(self.headings, dtype=float).reshape(-1))
        if len(pos) != len(hdg):
            raise ValueError("positions and headings differ in length")
        if not np.all(np.isfinite(pos)):
            raise ValueError("path positions must be finite")
        pos.setflags(write=False)
        hdg.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "headings", hdg)

    @classmethod
    def from_poses(cls, poses: Sequence[Pose], frame: str | None = None) -> "Path":
        if not poses:
            if frame is None:
                raise ValueError("frame is required for an empty path")
            return cls.empty(frame)
        fr = poses[0].frame if frame is None else frame
        for p in poses:
            _check(fr, p.frame, "Path.from_poses")
        return cls(
            np.array([p.position for p in poses]),
            np.array([p.heading for p in poses]),
            fr,
        )

    @classmethod
    def empty(cls, frame: str) -> "Path":
        return cls(np.zeros((0, 3)), np.zeros(0), frame)

    def __len__(self) -> int:
        return len(self.headings)

    def __iter__(self) -> Iterator[Pose]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Path(self.positions[i], self.headings[i], self.frame)
        return Pose(self.positions[i], self.headings[i], self.frame)

    def __eq__(self, other):
        if not isinstance(other, Path):
            return NotImplemented
        return (
            self.frame == other.frame
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.headings, other.headings)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def poses(self) -> list[Pose]:
        return list(self)

    def length(self) -> float:
        """Arc length of the polyline through the positions."""
        if len(self) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(self.positions, axis=0), axis=1)))


@dataclass(frozen=True, eq=False)
class Transform4DOF:
    """Maps coordinates expressed in ``src`` into ``dst``: p' = Rz(yaw) p + t."""

    translation: np.ndarray
    yaw: float
    src: str
    dst: str
    _rot: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "translation", _frozen_vec(self.translation))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        rot.setflags(write=False)
        object.__setattr__(self, "_rot", rot)

    @classmethod
    def identity(cls, src: str, dst: str | None = None) -> "Transform4DOF":
        return cls(np.zeros(3), 0.0, src, src if dst is None else dst)

    @classmethod
    def from_pose(cls, pose: Pose, body: str) -> "Transform4DOF":
        """Transform from a body frame into the frame the pose is expressed in."""
        return cls(pose.position, pose.heading, body, pose.frame)

    def to_pose(self) -> Pose:
        """The pose of the ``src`` origin expressed in ``dst``."""
        return Pose(self.translation, self.yaw, self.dst)

    @property
    def rotation(self) -> np.ndarray:
        return self._rot

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self._rot
        m[:3, 3] = self.translation
        return m

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self._rot.T + self.translation

    def apply_pose(self, pose: Pose) -> Pose:
        _check(self.src, pose.frame, "apply_pose")
        return Pose(
            self.apply_points(pose.position), pose.heading + self.yaw, self.dst
        )

    def __matmul__(self, other: "Transform4DOF") -> "Transform4DOF":
        return compose(self, other)


def compose(a: Transform4DOF, b: Transform4DOF) -> Transform4DOF:
    """``a`` after ``b``: maps ``b.src`` into ``a.dst``."""
    _check(a.src, b.dst, "compose")
    t = a.rotation @ b.translation + a.translation
    return Transform4DOF(t, a.yaw + b.yaw, b.src, a.dst)


def invert(t: Transform4DOF) -> Transform4DOF:
    c, s = math.cos(t.yaw), math.sin(t.yaw)
    x, y, z = t.translation
    # R^T applied to -t
    return Transform4DOF(
        [-(c * x + s * y), -(-s * x + c * y), -z], -t.yaw, t.dst, t.src
    )


def apply_path(t: Transform4DOF, p: Path) -> Path:
    _check(t.src, p.frame, "apply_path")
    if len(p) == 0:
        return Path.empty(t.dst)
    return Path(t.apply_points(p.positions), p.headings + t.yaw, t.dst)


def path_from_arrays(xyz: Iterable, headings: Iterable, frame: str) -> Path:
    return Path(np.asarray(list(xyz), float), np.asarray(list(headings), float), frame)
