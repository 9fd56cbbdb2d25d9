"""Desk-scale synthetic reach-to-target sessions.

Each scene is a floor plus axis-aligned box furniture with small target
objects on top; cluttered scenes add occluding boxes in front of the targets.
Each session is one reach: the head turns toward the target a little before
the hand starts a minimum-jerk reach, and the event fires on hand contact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import pointcloud
from ..errors import ArgumentError
from .core import InteractionEvent, Session

ROOM_HALF = 2.0
SESSION_RATE = 60.0


@dataclass
class SynthConfig:
    num_scenes: int = 4
    samples_per_scene: int = 5
    points_per_scene: int = 16000
    num_targets_per_scene: int = 4
    clutter_level: str = "cluttered"
    post_event_hold: float = 1.6  # seconds recorded after contact

    def __post_init__(self):
        for name in ("num_scenes", "samples_per_scene", "points_per_scene", "num_targets_per_scene"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be positive")
        if self.clutter_level not in ("simple", "cluttered"):
            raise ArgumentError("clutter_level must be 'simple' or 'cluttered'")


def min_jerk(tau):
    """Minimum-jerk blend ``10 t^3 - 15 t^4 + 6 t^5`` on ``t`` clipped to [0, 1]."""
    t = np.clip(np.asarray(tau, dtype=np.float64), 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def min_jerk_rate(tau):
    """d/dt of ``min_jerk``; zero at both ends."""
    t = np.clip(np.asarray(tau, dtype=np.float64), 0.0, 1.0)
    return 30.0 * t * t * (1.0 - t) ** 2


def box_triangles(lo, hi, bottom=False) -> np.ndarray:
    """Triangles of an axis-aligned box between corners ``lo`` and ``hi``."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
                  [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]])
    quads = [(4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
    if bottom:
        quads.append((0, 3, 2, 1))
    tris = []
    for a, b, c, d in quads:
        tris.append(v[[a, b, c]])
        tris.append(v[[a, c, d]])
    return np.array(tris)


@dataclass
class SyntheticScene:
    scene_id: str
    triangles: np.ndarray
    cloud: np.ndarray
    furniture: list   # (lo, hi) boxes
    targets: list     # goal positions (object centers)


def _make_scene(index: int, config: SynthConfig, seed: int) -> SyntheticScene:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index, 0xA11]))
    tris = [np.array([[[-ROOM_HALF, -ROOM_HALF, 0], [ROOM_HALF, -ROOM_HALF, 0], [ROOM_HALF, ROOM_HALF, 0]],
                      [[-ROOM_HALF, -ROOM_HALF, 0], [ROOM_HALF, ROOM_HALF, 0], [-ROOM_HALF, ROOM_HALF, 0]]],
                     dtype=np.float64)]
    cluttered = config.clutter_level == "cluttered"
    n_furn = 4 if cluttered else 3
    furniture = []
    phase = rng.uniform(0, 2 * np.pi)
    for k in range(n_furn):
        ang = phase + 2 * np.pi * k / n_furn + rng.uniform(-0.3, 0.3)
        r = rng.uniform(1.2, 1.5)
        cx, cy = r * np.cos(ang), r * np.sin(ang)
        if rng.random() < 0.6:  # table
            sx, sy, h = rng.uniform(0.8, 1.3), rng.uniform(0.5, 0.8), rng.uniform(0.7, 0.8)
        else:  # shelf
            sx, sy, h = rng.uniform(0.6, 1.0), rng.uniform(0.3, 0.45), rng.uniform(1.0, 1.5)
        if abs(np.cos(ang)) > abs(np.sin(ang)):  # long side faces the room center
            sx, sy = sy, sx
        lo = np.array([np.clip(cx - sx / 2, -ROOM_HALF, ROOM_HALF - sx), np.clip(cy - sy / 2, -ROOM_HALF, ROOM_HALF - sy), 0.0])
        hi = lo + np.array([sx, sy, h])
        furniture.append((lo, hi))
        tris.append(box_triangles(lo, hi))

    targets = []
    for k in range(config.num_targets_per_scene):
        lo, hi = furniture[k % n_furn] if k < n_furn else furniture[rng.integers(n_furn)]
        size = rng.uniform(0.06, 0.12, size=2)
        height = rng.uniform(0.08, 0.2)
        margin = size / 2 + 0.05
        cxy = rng.uniform(lo[:2] + margin, hi[:2] - margin)
        olo = np.array([cxy[0] - size[0] / 2, cxy[1] - size[1] / 2, hi[2]])
        ohi = np.array([cxy[0] + size[0] / 2, cxy[1] + size[1] / 2, hi[2] + height])
        tris.append(box_triangles(olo, ohi))
        targets.append((olo + ohi) / 2)

    if cluttered:
        # occluders on the room-facing half of each furniture top, plus floor clutter
        for lo, hi in furniture:
            for _ in range(2):
                center = (lo[:2] + hi[:2]) / 2
                toward = -center / max(np.linalg.norm(center), 1e-9)
                half = (hi[:2] - lo[:2]) / 2
                pos = center + toward * half * rng.uniform(0.3, 0.8) + rng.uniform(-half, half) * 0.5
                size = rng.uniform(0.12, 0.3, size=2)
                h = rng.uniform(0.2, 0.45)
                pos = np.clip(pos, lo[:2] + size / 2, hi[:2] - size / 2)
                tris.append(box_triangles(np.array([*(pos - size / 2), hi[2]]),
                                          np.array([*(pos + size / 2), hi[2] + h])))
        for _ in range(3):
            ang = rng.uniform(0, 2 * np.pi)
            r = rng.uniform(0.7, 1.0)
            size = rng.uniform(0.2, 0.4, size=2)
            h = rng.uniform(0.3, 0.6)
            c = np.array([r * np.cos(ang), r * np.sin(ang)])
            tris.append(box_triangles(np.array([*(c - size / 2), 0.0]), np.array([*(c + size / 2), h])))

    triangles = np.concatenate(tris, axis=0)
    cloud = pointcloud.sample_mesh_surface(triangles, config.points_per_scene,
                                           int(rng.integers(2 ** 31)))
    return SyntheticScene(f"scene{index:03d}", triangles, cloud, furniture, targets)


def _rotz(v, angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]])


def _direction(yaw, pitch):
    return np.array([np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), np.sin(pitch)])


def _angles(vec):
    return np.arctan2(vec[..., 1], vec[..., 0]), np.arctan2(vec[..., 2], np.hypot(vec[..., 0], vec[..., 1]))


def _make_session(scene: SyntheticScene, index: int, sample_index: int, config: SynthConfig, seed: int) -> Session:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index, sample_index]))
    goal = scene.targets[sample_index % len(scene.targets)]

    # stand between the target and the room center
    toward_center = -goal[:2] / max(np.linalg.norm(goal[:2]), 1e-9)
    approach = _rotz(np.array([*toward_center, 0.0]), rng.uniform(-0.4, 0.4))[:2]
    base = goal[:2] + approach * rng.uniform(0.55, 0.8)
    to_goal = goal[:2] - base
    body_yaw = np.arctan2(to_goal[1], to_goal[0]) + rng.uniform(-0.35, 0.35)
    stature = rng.uniform(1.55, 1.8)
    head0 = np.array([*(base + 0.08 * np.array([np.cos(body_yaw), np.sin(body_yaw)])), stature])

    rest_left = np.array([*base, 0.0]) + _rotz(np.array([0.05, 0.22, 0.55 * stature]), body_yaw)
    rest_right = np.array([*base, 0.0]) + _rotz(np.array([0.05, -0.22, 0.55 * stature]), body_yaw)
    fwd = np.array([np.cos(body_yaw), np.sin(body_yaw)])
    side = fwd[0] * to_goal[1] - fwd[1] * to_goal[0]
    use_left = side > 0.05 or (abs(side) <= 0.05 and rng.random() < 0.3)

    t_reach = rng.uniform(1.6, 2.4)
    duration = rng.uniform(1.5, 2.5)
    lead = rng.uniform(0.2, 0.4)
    t_event = t_reach + duration
    t_end = t_event + config.post_event_hold
    ts = np.arange(0.0, t_end + 1e-9, 1.0 / SESSION_RATE)
    if ts[-1] < t_event:
        ts = np.append(ts, t_event)
    # make the contact instant an exact sample
    ts = np.unique(np.append(ts, t_event))

    s_hand = min_jerk((ts - t_reach) / duration)
    reach_from = rest_left if use_left else rest_right
    active = reach_from[None] + s_hand[:, None] * (goal - reach_from)[None]
    other_rest = rest_right if use_left else rest_left
    drift = 0.01 * np.sin(2 * np.pi * rng.uniform(0.2, 0.5) * ts + rng.uniform(0, 6.3))
    passive = other_rest[None] + np.stack([drift, drift * 0.5, drift * 0.3], axis=1)
    left, right = (active, passive) if use_left else (passive, active)

    # head leans toward the goal, slightly ahead of the hand
    lean = rng.uniform(0.12, 0.25)
    s_head = min_jerk((ts - (t_reach - 0.5 * lead)) / (0.8 * duration))
    offset = lean * np.array([*(goal[:2] - head0[:2]), 0.0])
    offset[2] = -0.05 * lean
    sway = 0.006 * np.sin(2 * np.pi * rng.uniform(0.1, 0.3) * ts[:, None] + rng.uniform(0, 6.3, size=3))
    head = head0[None] + s_head[:, None] * offset[None] + sway

    # head orientation: from an unrelated direction toward the goal, with a fixation bias
    look0_yaw = np.arctan2(to_goal[1], to_goal[0]) + rng.choice([-1, 1]) * rng.uniform(0.7, 1.7)
    look0_pitch = rng.uniform(-0.35, 0.05)
    bias_yaw = rng.vonmises(0.0, 150.0)
    bias_pitch = rng.vonmises(0.0, 150.0)
    to_target = goal[None] - head
    goal_yaw, goal_pitch = _angles(to_target)
    goal_yaw = goal_yaw + bias_yaw
    goal_pitch = goal_pitch + bias_pitch
    wander = 0.08 * np.sin(2 * np.pi * rng.uniform(0.1, 0.25) * ts + rng.uniform(0, 6.3))
    start_yaw = look0_yaw + wander
    # a slow turn that is still settling shortly before contact
    turn_start = t_event - rng.uniform(2.1, 2.7)
    turn_end = t_event - rng.uniform(0.15, 0.35)
    s_turn = min_jerk((ts - turn_start) / (turn_end - turn_start))
    # the head covers only part of a gaze shift; the eyes do the rest
    yaw_gain = rng.uniform(0.65, 0.9)
    pitch_gain = rng.uniform(0.45, 0.75)
    dyaw = np.angle(np.exp(1j * (goal_yaw - start_yaw)))
    yaw = start_yaw + s_turn * yaw_gain * dyaw
    pitch = look0_pitch + s_turn * pitch_gain * (goal_pitch - look0_pitch)
    jitter_yaw = np.convolve(rng.vonmises(0.0, 2500.0, size=ts.size), np.ones(5) / 5, mode="same")
    jitter_pitch = np.convolve(rng.vonmises(0.0, 2500.0, size=ts.size), np.ones(5) / 5, mode="same")
    orient = _direction(yaw + jitter_yaw, pitch + jitter_pitch).T
    orient /= np.linalg.norm(orient, axis=1, keepdims=True)

    return Session(
        timestamps=ts,
        head=head,
        left_hand=left,
        right_hand=right,
        head_orientation=orient,
        events=[InteractionEvent(float(t_event), goal.copy(), "grasp")],
        scene=scene.cloud,
        scene_id=scene.scene_id,
        session_id=f"{scene.scene_id}_{sample_index:03d}",
        mesh_ref=f"synthetic:{scene.scene_id}",
    )


def gen_synthetic(config: SynthConfig, seed: int) -> list:
    """Generate ``num_scenes * samples_per_scene`` single-reach sessions."""
    sessions = []
    for i in range(config.num_scenes):
        scene = _make_scene(i, config, seed)
        for j in range(config.samples_per_scene):
            sessions.append(_make_session(scene, i, j, config, seed))
    return sessions


def make_scene(index: int, config: SynthConfig, seed: int) -> SyntheticScene:
    return _make_scene(index, config, seed)
