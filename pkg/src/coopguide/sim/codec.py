"""Compact little-endian wire format for paths and odometry.

Header (11 bytes): magic ``b"CGP1"``, kind (u8), sequence number (u32),
pose count (u16).  Each pose follows as four float64 values
``x, y, z, heading`` (32 bytes).
"""

from __future__ import annotations

import struct

import numpy as np

from ..frames import Path, Pose

MAGIC = b"CGP1"
KIND_ODOMETRY = 1
KIND_PATH = 2
HEADER = struct.Struct("<4sBIH")
HEADER_SIZE = HEADER.size  # 11
POSE_SIZE = 32
MAX_POSES = 0xFFFF
_POSE_DTYPE = np.dtype("<f8")


class DecodeError(ValueError):
    pass


def message_size(n_poses: int) -> int:
    return HEADER_SIZE + POSE_SIZE * n_poses


def _encode(kind: int, seq: int, pos: np.ndarray, hdg: np.ndarray) -> bytes:
    n = len(hdg)
    if n > MAX_POSES:
        raise ValueError(f"at most {MAX_POSES} poses per message")
    body = np.column_stack([pos, hdg]).astype(_POSE_DTYPE, copy=False)
    return HEADER.pack(MAGIC, kind, seq & 0xFFFFFFFF, n) + body.tobytes()


def encode_path(path: Path, seq: int = 0) -> bytes:
    return _encode(KIND_PATH, seq, path.positions.reshape(-1, 3), path.headings)


def encode_odometry(pose: Pose, seq: int = 0) -> bytes:
    return _encode(KIND_ODOMETRY, seq, pose.position.reshape(1, 3), np.array([pose.heading]))


def decode(data: bytes) -> tuple[int, int, np.ndarray]:
    """Return ``(kind, seq, poses)`` where poses is an (n, 4) float array."""
    if len(data) < HEADER_SIZE:
        raise DecodeError("truncated header")
    magic, kind, seq, n = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError("bad magic")
    if kind not in (KIND_ODOMETRY, KIND_PATH):
        raise DecodeError(f"unknown message kind {kind}")
    if len(data) != message_size(n):
        raise DecodeError("length does not match pose count")
    poses = np.frombuffer(data, dtype=_POSE_DTYPE, offset=HEADER_SIZE).reshape(n, 4)
    return kind, seq, poses


def decode_path(data: bytes, frame: str) -> tuple[Path, int]:
    kind, seq, p = decode(data)
    if kind != KIND_PATH:
        raise DecodeError("not a path message")
    # headings are stored already wrapped, so Path keeps them bit-exact
    return Path(p[:, :3].copy(), p[:, 3].copy(), frame), seq


def decode_odometry(data: bytes, frame: str) -> tuple[Pose, int]:
    kind, seq, p = decode(data)
    if kind != KIND_ODOMETRY or len(p) != 1:
        raise DecodeError("not an odometry message")
    return Pose(p[0, :3], p[0, 3], frame), seq


class BandwidthMeter:
    """Byte and message counters per channel."""

    def __init__(self):
        self.bytes: dict[str, int] = {}
        self.count: dict[str, int] = {}
        self.sizes: dict[str, list] = {}

    def record(self, channel: str, msg: bytes) -> None:
        self.bytes[channel] = self.bytes.get(channel, 0) + len(msg)
        self.count[channel] = self.count.get(channel, 0) + 1
        self.sizes.setdefault(channel, []).append(len(msg))

    def kbps(self, channel: str, duration: float) -> float:
        """Kilobytes (1000 B) per second over ``duration`` seconds."""
        if duration <= 0:
            return 0.0
        return self.bytes.get(channel, 0) / duration / 1000.0
