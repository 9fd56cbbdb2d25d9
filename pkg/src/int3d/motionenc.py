"""Sparse motion inputs: windows, finite-difference velocities, temporal DCT, joint graphs."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ArgumentError

JOINTS = ("head", "left_hand", "right_hand")


@dataclass
class SparseMotionWindow:
    """``T`` frames of head/left/right-hand positions and velocities plus head facing.

    positions, velocities : (T, 3, 3) arrays, joints ordered as ``JOINTS``
    head_orientations : (T, 3) unit vectors
    frame_interval : seconds between frames
    """

    positions: np.ndarray
    velocities: np.ndarray
    head_orientations: np.ndarray
    frame_interval: float

    @property
    def num_frames(self) -> int:
        return int(self.positions.shape[0])

    def validate(self, min_frames: int = 2) -> "SparseMotionWindow":
        t = self.num_frames
        if self.positions.shape != (t, 3, 3) or self.velocities.shape != (t, 3, 3):
            raise ArgumentError("positions and velocities must both be (T, 3, 3)")
        if self.head_orientations.shape != (t, 3):
            raise ArgumentError("head_orientations must be (T, 3)")
        if t < min_frames:
            raise ArgumentError(f"window needs at least {min_frames} frames, has {t}")
        if not self.frame_interval > 0:
            raise ArgumentError("frame_interval must be positive")
        for name in ("positions", "velocities", "head_orientations"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ArgumentError(f"{name} contains non-finite values")
        norms = np.linalg.norm(self.head_orientations, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise ArgumentError("head orientations must be unit vectors")
        return self

    @classmethod
    def from_positions(cls, positions, head_orientations, frame_interval: float) -> "SparseMotionWindow":
        pos = np.asarray(positions, dtype=np.float64)
        return cls(pos, finite_diff_velocity(pos, frame_interval),
                   np.asarray(head_orientations, dtype=np.float64), float(frame_interval))


def finite_diff_velocity(positions, frame_interval: float) -> np.ndarray:
    """Backward differences along axis 0; the first frame copies the second."""
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape[0] < 2:
        raise ArgumentError("need at least two frames to difference")
    if not frame_interval > 0:
        raise ArgumentError("frame_interval must be positive")
    vel = np.empty_like(pos)
    vel[1:] = (pos[1:] - pos[:-1]) / frame_interval
    vel[0] = vel[1]
    return vel


@lru_cache(maxsize=64)
def _dct_basis(t: int) -> np.ndarray:
    k = np.arange(t)[:, None]
    n = np.arange(t)[None, :]
    basis = np.cos(np.pi / t * (n + 0.5) * k)
    basis.setflags(write=False)
    return basis


def dct_matrix(t: int) -> np.ndarray:
    """``(T, T)`` matrix ``C`` with ``C[k, t] = cos(pi/T * (t + 1/2) * k)``."""
    if t < 1:
        raise ArgumentError("DCT length must be positive")
    return _dct_basis(int(t))


def dct(sequence) -> np.ndarray:
    """Unnormalized DCT-II along the first (time) axis; other axes are independent columns."""
    z = np.asarray(sequence, dtype=np.float64)
    if z.ndim == 0 or z.shape[0] < 1:
        raise ArgumentError("sequence must have at least one frame")
    return np.tensordot(dct_matrix(z.shape[0]), z, axes=(1, 0))


def assemble_motion_array(window: SparseMotionWindow) -> np.ndarray:
    """``(T, 3, 6)`` array: per joint, position xyz followed by velocity xyz."""
    return np.concatenate([window.positions, window.velocities], axis=-1)


def split_motion_array(motion):
    m = np.asarray(motion)
    return m[..., :3], m[..., 3:]


@lru_cache(maxsize=16)
def _adjacency(num_nodes: int) -> np.ndarray:
    a = np.ones((num_nodes, num_nodes))  # complete graph + self-loops
    d = 1.0 / np.sqrt(a.sum(axis=1))
    out = d[:, None] * a * d[None, :]
    out.setflags(write=False)
    return out


def normalized_adjacency(num_nodes: int) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` for the complete graph on ``num_nodes`` joints."""
    if num_nodes < 1:
        raise ArgumentError("graph needs at least one node")
    return _adjacency(int(num_nodes))
