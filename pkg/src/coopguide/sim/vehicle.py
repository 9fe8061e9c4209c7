"""Kinematic waypoint follower."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..frames import Path, Pose, wrap_angle

CONSUME_RADIUS = 0.05
MAX_YAW_RATE = math.pi


@dataclass
class UavState:
    pose: Pose
    path: Path | None = None
    index: int = 0

    @property
    def done(self) -> bool:
        return self.path is None or self.index >= len(self.path)

    def target(self):
        return None if self.done else self.path[self.index]


def _slew(h: float, target: float, max_step: float) -> float:
    d = wrap_angle(target - h)
    d = max(-max_step, min(max_step, d))
    return wrap_angle(h + d)


def uav_step(state: UavState, speed: float, dt: float) -> UavState:
    """Advance one step of constant-speed pursuit along ``state.path``.

    The vehicle flies straight at the current waypoint, lands exactly on it
    when it is within one step, and consumes it once within 5 cm.  Heading
    slews toward the waypoint heading at no more than pi rad/s.
    """
    if speed <= 0 or dt <= 0:
        raise ValueError("speed and dt must be positive")
    if state.done:
        return state
    pose = state.pose
    idx = state.index
    tgt = state.path[idx]
    v = tgt.position - pose.position
    dist = float(np.linalg.norm(v))
    step = speed * dt
    pos = tgt.position.copy() if dist <= step else pose.position + v * (step / dist)
    heading = _slew(pose.heading, tgt.heading, MAX_YAW_RATE * dt)
    if np.linalg.norm(tgt.position - pos) < CONSUME_RADIUS:
        idx += 1
    return UavState(Pose(pos, heading, pose.frame), state.path, idx)


@dataclass
class Follower:
    """Secondary-side path handling.

    Paths arrive in the body frame and are anchored in the odometry frame
    using the odometry pose at receipt.  An empty message leaves the current
    path untouched.  The sender prunes waypoints it believes are within
    ``delta``; its belief comes from a noisy relative estimate, so the
    follower splices: unconsumed waypoints that precede the point where the
    new path resumes, and lie within ``2 * delta``, are kept in front of it.
    Pruned corners are then flown through rather than cut.
    """

    delta: float = 0.5
    path: Path | None = None
    index: int = 0
    received: int = field(default=0)

    def receive(self, body_path: Path, odom_pose: Pose) -> None:
        self.received += 1
        if len(body_path) == 0:
            return
        c, s = math.cos(odom_pose.heading), math.sin(odom_pose.heading)
        bp = body_path.positions
        pos = np.column_stack([
            odom_pose.position[0] + c * bp[:, 0] - s * bp[:, 1],
            odom_pose.position[1] + s * bp[:, 0] + c * bp[:, 1],
            odom_pose.position[2] + bp[:, 2],
        ])
        hdg = body_path.headings + odom_pose.heading
        if self.path is not None and self.index < len(self.path):
            rest = self.path.positions[self.index:]
            gap = np.linalg.norm(rest - pos[0], axis=1)
            j = int(np.argmin(gap))
            if gap[j] < 0.5 * self.delta:
                # the new path resumes at rest[j]; rest[:j] were pruned as visited
                cand = range(j)
            else:
                cand = (i for i in range(len(rest))
                        if np.min(np.linalg.norm(pos - rest[i], axis=1)) > 0.5 * self.delta)
            keep = []
            for i in cand:
                if i != len(keep) or np.linalg.norm(rest[i] - odom_pose.position) >= 2.0 * self.delta:
                    break
                keep.append(i)
            if keep:
                idx = [self.index + i for i in keep]
                pos = np.vstack([self.path.positions[idx], pos])
                hdg = np.concatenate([self.path.headings[idx], hdg])
        self.path = Path(pos, hdg, odom_pose.frame)
        self.index = 0
