"""Spinning-LiDAR model with analytic ray casting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..frames import Pose
from .world import World


@dataclass(frozen=True)
class LidarSpec:
    h_beams: int = 1024
    v_beams: int = 128
    v_fov: float = math.pi / 2.0
    rate: float = 10.0
    max_range: float = 20.0
    h_downsample: int = 4
    v_downsample: int = 4

    def __post_init__(self):
        if min(self.h_beams, self.v_beams, self.h_downsample, self.v_downsample) < 1:
            raise ValueError("beam counts and downsample factors must be >= 1")
        if self.max_range <= 0 or self.rate <= 0:
            raise ValueError("max_range and rate must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.h_beams // self.h_downsample, self.v_beams // self.v_downsample


@lru_cache(maxsize=16)
def _body_dirs(spec: LidarSpec) -> np.ndarray:
    nh, nv = spec.shape
    az = np.arange(nh) * (2.0 * math.pi / nh)
    if nv == 1:
        el = np.zeros(1)
    else:
        el = np.linspace(-spec.v_fov / 2.0, spec.v_fov / 2.0, nv)
    A, E = np.meshgrid(az, el, indexing="ij")
    d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)
    d.setflags(write=False)
    return d


def beam_directions(spec: LidarSpec, heading: float = 0.0) -> np.ndarray:
    """Unit beam directions in the sensor's parent frame."""
    d = _body_dirs(spec)
    c, s = math.cos(heading), math.sin(heading)
    out = d.copy()
    out[:, 0] = c * d[:, 0] - s * d[:, 1]
    out[:, 1] = s * d[:, 0] + c * d[:, 1]
    return out


@dataclass
class Scan:
    origin: np.ndarray
    hits: np.ndarray     # (n, 3) return points
    misses: np.ndarray   # (m, 3) unit directions without a return


def simulate_lidar(world: World, pose: Pose, spec: LidarSpec = LidarSpec()) -> Scan:
    dirs = beam_directions(spec, pose.heading)
    t = world.ray_hits(pose.position, dirs, spec.max_range)
    hit = np.isfinite(t)
    pts = pose.position + dirs[hit] * t[hit, None]
    return Scan(pose.position.copy(), pts, dirs[~hit])
