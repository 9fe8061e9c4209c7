"""Localization stand-ins: noisy relative localization and drifting odometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..frames import Pose, Transform4DOF, wrap_angle

# E|N(0, s^2 I_3)| = s * sqrt(8 / pi)
MEAN_NORM_FACTOR = math.sqrt(8.0 / math.pi)


@dataclass(frozen=True)
class LocalizationModel:
    mode: str = "noisy"              # "ground_truth" or "noisy"
    rel_mae: float = 0.10
    rel_yaw_sigma: float = 0.02
    vio_pos_drift: float = 0.03      # m / sqrt(s)
    vio_yaw_drift: float = 0.005     # rad / sqrt(s)
    correlation_time: float = 1.0    # s, relative-error correlation time

    def __post_init__(self):
        if self.mode not in ("ground_truth", "noisy"):
            raise ValueError(f"unknown localization mode {self.mode!r}")
        if self.rel_mae < 0 or self.vio_pos_drift < 0 or self.vio_yaw_drift < 0:
            raise ValueError("noise magnitudes must be non-negative")

    @property
    def sigma(self) -> float:
        return self.rel_mae / MEAN_NORM_FACTOR


def _rel_noise(model: LocalizationModel, rng: np.random.Generator) -> np.ndarray:
    return np.array([*rng.normal(0.0, model.sigma, 3), rng.normal(0.0, model.rel_yaw_sigma)])


def relative_loc_sample(true_T: Transform4DOF, model: LocalizationModel,
                        rng: np.random.Generator) -> Transform4DOF:
    """One independent noisy relative-pose measurement."""
    if model.mode == "ground_truth":
        return true_T
    e = _rel_noise(model, rng)
    return Transform4DOF(true_T.translation + e[:3], true_T.yaw + e[3], true_T.src, true_T.dst)


class RelativeEstimator:
    """Time-correlated relative-pose error with a stationary law equal to
    :func:`relative_loc_sample`.

    The error follows ``e <- rho e + sqrt(1 - rho^2) xi`` at each update, with
    ``rho = exp(-dt / correlation_time)`` and ``xi`` drawn like a single
    measurement's error.  While the line of sight is blocked the estimate is
    propagated with the secondary's own odometry instead.
    """

    def __init__(self, model: LocalizationModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng
        self.err = _rel_noise(model, rng) if model.mode == "noisy" else np.zeros(4)
        self.estimate: Pose | None = None
        self._odom_ref: Pose | None = None

    def update(self, true_pose: Pose, odom: Pose, dt: float, visible: bool) -> Pose:
        m = self.model
        if m.mode == "ground_truth":
            self.estimate = true_pose
        elif visible or self.estimate is None:
            rho = math.exp(-dt / m.correlation_time) if m.correlation_time > 0 else 0.0
            self.err = rho * self.err + math.sqrt(1.0 - rho * rho) * _rel_noise(m, self.rng)
            self.estimate = Pose(true_pose.position + self.err[:3], true_pose.heading + self.err[3],
                                 true_pose.frame)
        else:
            self.estimate = dead_reckon(self.estimate, self._odom_ref, odom)
        self._odom_ref = odom
        return self.estimate


def dead_reckon(est: Pose, odom_prev: Pose, odom_now: Pose) -> Pose:
    """Apply the odometry increment (expressed in the body frame) to ``est``."""
    c, s = math.cos(odom_prev.heading), math.sin(odom_prev.heading)
    d = odom_now.position - odom_prev.position
    body = np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]])
    ce, se = math.cos(est.heading), math.sin(est.heading)
    step = np.array([ce * body[0] - se * body[1], se * body[0] + ce * body[1], body[2]])
    return Pose(est.position + step, est.heading + (odom_now.heading - odom_prev.heading), est.frame)


@dataclass
class VioState:
    estimate: Pose


def vio_step(state: VioState, true_delta, dt: float, model: LocalizationModel,
             rng: np.random.Generator) -> VioState:
    """Accumulate a body-frame motion increment ``(dx, dy, dz, dyaw)`` plus
    random-walk drift."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    dx, dy, dz, dyaw = (float(v) for v in true_delta)
    e = state.estimate
    c, s = math.cos(e.heading), math.sin(e.heading)
    pos = e.position + [c * dx - s * dy, s * dx + c * dy, dz]
    yaw = e.heading + dyaw
    if model.vio_pos_drift > 0 or model.vio_yaw_drift > 0:
        sd = math.sqrt(dt)
        pos = pos + rng.normal(0.0, model.vio_pos_drift * sd, 3)
        yaw = yaw + rng.normal(0.0, model.vio_yaw_drift * sd)
    return VioState(Pose(pos, wrap_angle(yaw), e.frame))
