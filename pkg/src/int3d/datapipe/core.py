"""Sessions, window extraction, Gaussian ground truth, scene-exclusive splits."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import pointcloud
from ..errors import ArgumentError, SplitError
from ..motionenc import SparseMotionWindow, finite_diff_velocity

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class InteractionEvent:
    time: float
    goal: np.ndarray
    kind: str = "grasp"  # or "place"


@dataclass
class Session:
    """Continuous recording of one user in one scene.

    ``head``, ``left_hand``, ``right_hand`` and ``head_orientation`` are
    ``(F, 3)`` arrays sampled at ``timestamps`` (strictly increasing seconds).
    ``scene`` is the dense pre-subsampling cloud in world coordinates.
    """

    timestamps: np.ndarray
    head: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    head_orientation: np.ndarray
    events: list
    scene: np.ndarray
    scene_id: str
    session_id: str = ""
    mesh_ref: str = ""

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if ts.ndim != 1 or ts.size < 2 or np.any(np.diff(ts) <= 0):
            raise ArgumentError("session timestamps must be strictly increasing")
        for ev in self.events:
            if not np.all(np.isfinite(ev.goal)):
                raise ArgumentError("event goal must be finite")

    @property
    def joints(self) -> np.ndarray:
        """``(F, 3, 3)`` head/left/right positions."""
        return np.stack([self.head, self.left_hand, self.right_hand], axis=1)


@dataclass
class GtConfig:
    sigma: float = 0.2
    tau: float = 0.5

    def __post_init__(self):
        if not self.sigma > 0:
            raise ArgumentError("sigma must be positive")
        if not 0 < self.tau < 1:
            raise ArgumentError("tau must lie in (0, 1)")


@dataclass
class GroundTruth:
    heatmap: np.ndarray
    mask: np.ndarray


def gaussian_gt(cloud, goal, config: GtConfig = GtConfig()) -> GroundTruth:
    """Isotropic Gaussian around ``goal`` and its thresholded mask."""
    pts = pointcloud.as_cloud(cloud)
    d2 = np.sum((pts - np.asarray(goal, dtype=np.float64)) ** 2, axis=1)
    heat = np.exp(-d2 / (2.0 * config.sigma ** 2))
    return GroundTruth(heat, (heat >= config.tau).astype(np.uint8))


@dataclass
class ExtractedWindow:
    """A world-frame motion window preceding one interaction event."""

    window: SparseMotionWindow
    event: InteractionEvent
    horizon_ms: int
    times: np.ndarray
    future: Optional[np.ndarray] = None  # (F, 3, 3) joint positions after the window


def _slerp_rows(a, b, t):
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    b = b / np.linalg.norm(b, axis=1, keepdims=True)
    dot = np.clip(np.sum(a * b, axis=1), -1.0, 1.0)
    omega = np.arccos(dot)
    out = np.empty_like(a)
    small = omega < 1e-6
    out[small] = a[small] + t[small, None] * (b[small] - a[small])
    big = ~small
    s = np.sin(omega[big])
    out[big] = (np.sin((1 - t[big]) * omega[big])[:, None] * a[big]
                + np.sin(t[big] * omega[big])[:, None] * b[big]) / s[:, None]
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def resample_joints(session: Session, times) -> np.ndarray:
    ts = session.timestamps
    joints = session.joints
    out = np.empty((len(times), 3, 3))
    for j in range(3):
        for c in range(3):
            out[:, j, c] = np.interp(times, ts, joints[:, j, c])
    return out


def resample_orientation(session: Session, times) -> np.ndarray:
    ts = session.timestamps
    times = np.asarray(times, dtype=np.float64)
    hi = np.clip(np.searchsorted(ts, times, side="right"), 1, len(ts) - 1)
    lo = hi - 1
    frac = np.clip((times - ts[lo]) / (ts[hi] - ts[lo]), 0.0, 1.0)
    h = session.head_orientation
    return _slerp_rows(h[lo], h[hi], frac)


_TIME_TOL = 1e-9


def extract_windows(session: Session, horizon_ms: int, num_frames: int, frame_rate: float,
                    future_frames: int = 0) -> list:
    """One ``num_frames`` window per event, ending ``horizon_ms`` before the event.

    Positions are linearly interpolated and head orientations slerped onto a
    grid of spacing ``1 / frame_rate``. Events without enough history are
    skipped. With ``future_frames > 0`` the joint positions on the continuation
    of the grid are attached when the session covers them.
    """
    if horizon_ms < 0:
        raise ArgumentError("horizon must be non-negative")
    if num_frames < 2 or not frame_rate > 0:
        raise ArgumentError("need num_frames >= 2 and a positive frame rate")
    dt = 1.0 / frame_rate
    ts = session.timestamps
    out = []
    for ev in session.events:
        end = ev.time - horizon_ms / 1000.0
        times = end - dt * np.arange(num_frames - 1, -1, -1)
        if times[0] < ts[0] - _TIME_TOL:
            log.info("skipping %s event at %.3fs: window starts before session (%.3fs)",
                     session.session_id or session.scene_id, ev.time, times[0])
            continue
        if end > ts[-1] + _TIME_TOL:
            log.info("skipping event at %.3fs: window ends after session", ev.time)
            continue
        times = np.clip(times, ts[0], ts[-1])
        pos = resample_joints(session, times)
        heads = resample_orientation(session, times)
        win = SparseMotionWindow(pos, finite_diff_velocity(pos, dt), heads, dt)
        future = None
        if future_frames > 0:
            ftimes = end + dt * np.arange(1, future_frames + 1)
            if ftimes[-1] <= ts[-1] + _TIME_TOL:
                future = resample_joints(session, np.clip(ftimes, ts[0], ts[-1]))
        out.append(ExtractedWindow(win, ev, int(horizon_ms), times, future))
    return out


@dataclass
class Sample:
    cloud: np.ndarray               # (N, 3) float32, body frame
    window: SparseMotionWindow      # float32 arrays, body frame
    gt: GroundTruth                 # heatmap float32, mask uint8
    horizon_ms: int
    scene_id: str
    sample_id: str
    goal: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.float32))
    future: Optional[np.ndarray] = None  # (F, 3, 3) float32, body frame

    @property
    def num_points(self) -> int:
        return int(self.cloud.shape[0])


def build_sample(session: Session, ext: ExtractedWindow, num_points: int, gt_config: GtConfig,
                 seed: int, sample_id: str) -> Sample:
    """Subsample near the user, move everything into the body frame, label with the Gaussian GT."""
    win = ext.window
    head_last = win.positions[-1, 0]
    idx = pointcloud.distance_weighted_indices(session.scene, head_last, num_points, seed)
    frame = pointcloud.body_frame(head_last, win.head_orientations[-1])
    cloud, aligned = pointcloud.align_to_body_frame(session.scene[idx], win)
    goal = frame.apply_points(ext.event.goal[None])[0]
    future = None
    if ext.future is not None:
        future = frame.apply_points(ext.future.reshape(-1, 3)).reshape(ext.future.shape).astype(np.float32)

    cloud32 = cloud.astype(np.float32)
    gt = gaussian_gt(cloud32, goal.astype(np.float32), gt_config)
    heat32 = gt.heatmap.astype(np.float32)
    mask = (heat32 >= np.float32(gt_config.tau)).astype(np.uint8)
    heads = aligned.head_orientations
    heads = heads / np.linalg.norm(heads, axis=1, keepdims=True)
    window32 = SparseMotionWindow(
        aligned.positions.astype(np.float32),
        aligned.velocities.astype(np.float32),
        heads.astype(np.float32),
        float(aligned.frame_interval),
    )
    return Sample(cloud32, window32, GroundTruth(heat32, mask), ext.horizon_ms,
                  session.scene_id, sample_id, goal.astype(np.float32), future)


def scene_split(samples, test_fraction: float, seed: int):
    """Partition samples so that no scene appears on both sides.

    Scenes are shuffled with ``seed`` and moved to the test side until it
    holds at least ``test_fraction`` of all samples.
    """
    if not 0 < test_fraction < 1:
        raise ArgumentError("test_fraction must lie in (0, 1)")
    scene_ids = sorted({s.scene_id for s in samples})
    if len(scene_ids) < 2:
        raise SplitError("scene split needs at least two distinct scenes")
    counts = {sid: 0 for sid in scene_ids}
    for s in samples:
        counts[s.scene_id] += 1
    order = np.random.default_rng(seed).permutation(len(scene_ids))
    target = test_fraction * len(samples) - 1e-9
    test_scenes, n_test = set(), 0
    for i in order[:-1]:  # keep at least one training scene
        if n_test >= target:
            break
        test_scenes.add(scene_ids[i])
        n_test += counts[scene_ids[i]]
    train = [s for s in samples if s.scene_id not in test_scenes]
    test = [s for s in samples if s.scene_id in test_scenes]
    return train, test
