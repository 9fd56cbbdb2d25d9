import json
import math

import numpy as np
import pytest

from int3d.datapipe import (
    GtConfig, InteractionEvent, Session, SynthConfig, build_dataset, extract_windows, gaussian_gt,
    gen_synthetic, load_split, read_checkpoint, read_sample, scene_split, write_checkpoint, write_sample,
)
from int3d.datapipe.build import build_samples
from int3d.datapipe.synthetic import make_scene, min_jerk, min_jerk_rate
from int3d.errors import ArgumentError, FormatError, SplitError


def linear_session(duration=12.0, rate=30.0, events=(10.0,)):
    ts = np.arange(0, duration + 1e-9, 1 / rate)
    head = np.stack([ts, np.zeros_like(ts), np.full_like(ts, 1.6)], axis=1)
    left = head + [0.2, 0.3, -0.6]
    right = head + [0.2, -0.3, -0.6]
    orient = np.tile([1.0, 0.0, 0.0], (len(ts), 1))
    evs = [InteractionEvent(t, np.array([t, 0.0, 1.0])) for t in events]
    cloud = np.random.default_rng(0).uniform(-1, 13, size=(500, 3))
    return Session(ts, head, left, right, orient, evs, cloud, "sceneA", "sessA")


# -- windows -------------------------------------------------------------------

def test_window_grid_arithmetic():
    s = linear_session()
    (ext,) = extract_windows(s, 500, 15, 30.0)
    expected = 9.5 - np.arange(14, -1, -1) / 30
    np.testing.assert_allclose(ext.times, expected, atol=1e-12)
    # head x equals time on this track
    np.testing.assert_allclose(ext.window.positions[:, 0, 0], expected, atol=1e-9)
    np.testing.assert_allclose(ext.window.velocities[:, 0, 0], 1.0, atol=1e-9)


def test_window_boundary_and_skip():
    s = linear_session(duration=14 / 30, events=(14 / 30,))
    (ext,) = extract_windows(s, 0, 15, 30.0)
    np.testing.assert_allclose(ext.window.positions[-1], s.joints[-1], atol=1e-12)
    late = linear_session(events=(0.4,))
    assert extract_windows(late, 500, 15, 30.0) == []
    empty = linear_session(events=())
    assert extract_windows(empty, 500, 15, 30.0) == []


def test_window_orientation_slerp_stays_unit():
    s = linear_session()
    ang = np.linspace(0, 2.0, len(s.timestamps))
    s.head_orientation = np.stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)], axis=1)
    (ext,) = extract_windows(s, 733, 15, 25.0)
    np.testing.assert_allclose(np.linalg.norm(ext.window.head_orientations, axis=1), 1.0, atol=1e-12)
    # constant angular rate -> slerp reproduces the exact heading angle
    t_ang = 2.0 * ext.times / s.timestamps[-1]
    np.testing.assert_allclose(np.arctan2(ext.window.head_orientations[:, 1], ext.window.head_orientations[:, 0]),
                               t_ang, atol=1e-9)


def test_window_future_frames():
    s = linear_session()
    (ext,) = extract_windows(s, 1000, 15, 30.0, future_frames=30)
    assert ext.future.shape == (30, 3, 3)
    np.testing.assert_allclose(ext.future[-1, 0, 0], 9.0 + 30 / 30, atol=1e-9)


# -- ground truth ----------------------------------------------------------------

def test_gaussian_gt_examples():
    goal = np.array([1.0, 2.0, 0.5])
    pts = np.array([goal, goal + [0.2, 0, 0], goal + [0, 1.0, 0]])
    gt = gaussian_gt(pts, goal)
    assert gt.heatmap[0] == 1.0 and gt.mask[0] == 1
    assert gt.heatmap[1] == pytest.approx(math.exp(-0.5), abs=1e-12) and gt.mask[1] == 1
    assert gt.heatmap[2] < 4e-6 and gt.mask[2] == 0
    with pytest.raises(ArgumentError):
        GtConfig(sigma=0)


def test_gt_mask_is_distance_prefix():
    rng = np.random.default_rng(1)
    for _ in range(50):
        pts = rng.normal(size=(200, 3)) * 0.4
        goal = rng.normal(size=3) * 0.2
        gt = gaussian_gt(pts, goal, GtConfig(sigma=float(rng.uniform(0.05, 0.5)), tau=float(rng.uniform(0.1, 0.9))))
        order = np.argsort(np.linalg.norm(pts - goal, axis=1), kind="stable")
        m = gt.mask[order]
        assert np.all(np.diff(m.astype(int)) <= 0)


# -- split -----------------------------------------------------------------------

class _S:
    def __init__(self, scene_id):
        self.scene_id = scene_id


def test_scene_split_examples():
    two = [_S("a")] * 3 + [_S("b")] * 3
    tr, te = scene_split(two, 0.5, 0)
    assert {s.scene_id for s in tr} | {s.scene_id for s in te} == {"a", "b"}
    assert not {s.scene_id for s in tr} & {s.scene_id for s in te}
    ten = [_S(f"s{i}") for i in range(10) for _ in range(4)]
    for seed in range(10):
        tr, te = scene_split(ten, 0.3, seed)
        assert len({s.scene_id for s in te}) == 3
        tr2, te2 = scene_split(ten, 0.3, seed)
        assert [s.scene_id for s in te2] == [s.scene_id for s in te]
    with pytest.raises(SplitError):
        scene_split([_S("a")] * 4, 0.5, 0)


def test_scene_split_partition_property():
    rng = np.random.default_rng(2)
    for _ in range(100):
        k = int(rng.integers(2, 12))
        samples = [_S(f"s{rng.integers(k)}") for _ in range(int(rng.integers(2, 60)))]
        if len({s.scene_id for s in samples}) < 2:
            continue
        frac = float(rng.uniform(0.05, 0.95))
        tr, te = scene_split(samples, frac, int(rng.integers(1000)))
        assert len(tr) + len(te) == len(samples)
        assert not {s.scene_id for s in tr} & {s.scene_id for s in te}
        assert tr  # a training scene always remains


# -- synthetic generator ------------------------------------------------------------

def test_min_jerk_profile():
    assert min_jerk(0.0) == 0.0 and min_jerk(1.0) == 1.0
    assert abs(min_jerk_rate(0.0)) < 1e-6 and abs(min_jerk_rate(1.0)) < 1e-6
    t = np.linspace(0.01, 0.99, 99)
    h = 1e-6
    np.testing.assert_allclose(min_jerk_rate(t), (min_jerk(t + h) - min_jerk(t - h)) / (2 * h), atol=1e-6)


def test_synthetic_determinism_and_contact():
    cfg = SynthConfig(num_scenes=2, samples_per_scene=3, points_per_scene=3000)
    a = gen_synthetic(cfg, 5)
    b = gen_synthetic(cfg, 5)
    for x, y in zip(a, b):
        assert x.timestamps.tobytes() == y.timestamps.tobytes()
        assert x.head_orientation.tobytes() == y.head_orientation.tobytes()
        assert x.scene.tobytes() == y.scene.tobytes()
    for s in a:
        (ev,) = s.events
        i = int(np.flatnonzero(s.timestamps == ev.time)[0])
        hand = min(np.linalg.norm(s.left_hand[i] - ev.goal), np.linalg.norm(s.right_hand[i] - ev.goal))
        assert hand < 0.02
        np.testing.assert_allclose(np.linalg.norm(s.head_orientation, axis=1), 1.0, atol=1e-12)
    assert gen_synthetic(cfg, 6)[0].scene.tobytes() != a[0].scene.tobytes()


def test_synthetic_clutter_adds_geometry():
    simple = make_scene(0, SynthConfig(clutter_level="simple"), 1)
    busy = make_scene(0, SynthConfig(clutter_level="cluttered"), 1)
    assert len(busy.triangles) > len(simple.triangles)
    with pytest.raises(ArgumentError):
        SynthConfig(clutter_level="messy")


def _ray_miss(origin, direction, goal):
    rel = goal - origin
    along = max(float(rel @ direction), 0.0)
    return float(np.linalg.norm(rel - along * direction))


def test_synthetic_head_converges_toward_goal():
    sessions = gen_synthetic(SynthConfig(num_scenes=10, samples_per_scene=12, points_per_scene=2000), 21)
    closer, total = 0, 0
    for s in sessions:
        for ext in (e for h in (500, 1000, 1500) for e in extract_windows(s, h, 15, 30.0)):
            w, goal = ext.window, ext.event.goal
            first = _ray_miss(w.positions[0, 0], w.head_orientations[0], goal)
            last = _ray_miss(w.positions[-1, 0], w.head_orientations[-1], goal)
            closer += last < first
            total += 1
    assert total >= 300
    assert closer / total >= 0.9


# -- built samples ------------------------------------------------------------------

def test_built_samples_satisfy_invariants(small_samples):
    assert small_samples
    for s in small_samples:
        assert s.cloud.dtype == np.float32 and s.cloud.shape == (1024, 3)
        assert s.window.num_frames == 15
        s.window.validate()
        assert s.gt.heatmap.shape == (1024,) and s.gt.mask.any()
        np.testing.assert_array_equal(s.gt.mask, (s.gt.heatmap >= np.float32(0.5)).astype(np.uint8))
        # body frame: last head on the vertical axis, facing +x horizontally
        np.testing.assert_allclose(s.window.positions[-1, 0, :2], 0, atol=1e-5)
        assert abs(s.window.head_orientations[-1, 1]) < 1e-5 and s.window.head_orientations[-1, 0] > 0


def test_sample_roundtrip_bit_exact(small_samples, tmp_path):
    s = small_samples[0]
    d = write_sample(s, tmp_path / "x")
    r = read_sample(d)
    assert r.cloud.tobytes() == s.cloud.tobytes()
    assert r.window.positions.tobytes() == s.window.positions.tobytes()
    assert r.window.velocities.tobytes() == s.window.velocities.tobytes()
    assert r.window.head_orientations.tobytes() == s.window.head_orientations.tobytes()
    assert r.gt.heatmap.tobytes() == s.gt.heatmap.tobytes() and r.gt.mask.tobytes() == s.gt.mask.tobytes()
    assert r.future.tobytes() == s.future.tobytes()
    assert (r.sample_id, r.scene_id, r.horizon_ms) == (s.sample_id, s.scene_id, s.horizon_ms)
    assert r.window.frame_interval == s.window.frame_interval
    assert r.goal.tobytes() == s.goal.tobytes()


def test_sample_format_errors(small_samples, tmp_path):
    d = write_sample(small_samples[0], tmp_path / "x")
    raw = (d / "points.f32").read_bytes()
    (d / "points.f32").write_bytes(raw[:100])
    with pytest.raises(FormatError) as e:
        read_sample(d)
    assert e.value.offset == 100 and "points.f32" in str(e.value)
    (d / "points.f32").write_bytes(raw)
    m = json.loads((d / "manifest.json").read_text())
    m["num_points"] = 1000
    (d / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(FormatError) as e:
        read_sample(d)
    assert e.value.offset == 1000 * 12


def test_checkpoint_roundtrip_and_errors(tmp_path):
    rng = np.random.default_rng(3)
    params = {"a.weight": rng.normal(size=(3, 4)).astype(np.float32), "b": np.float32(rng.normal(size=5))}
    p = write_checkpoint(tmp_path / "m.ckpt", params)
    back = read_checkpoint(p)
    assert list(back) == ["a.weight", "b"]
    assert all(back[k].tobytes() == np.asarray(params[k], np.float32).tobytes() for k in params)
    raw = p.read_bytes()
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError) as e:
        read_checkpoint(p)
    assert e.value.offset == 0


def test_build_dataset_layout(tmp_path):
    sessions = gen_synthetic(SynthConfig(num_scenes=3, samples_per_scene=2, points_per_scene=3000), 4)
    train, test = build_dataset(sessions, tmp_path, horizons=(500,), num_points=512, seed=4)
    assert (tmp_path / "train.txt").exists() and (tmp_path / "test.txt").exists()
    loaded = load_split(tmp_path, "test")
    assert [s.sample_id for s in loaded] == [s.sample_id for s in test]
    assert not {s.scene_id for s in train} & {s.scene_id for s in test}
    again = build_samples(sessions, horizons=(500,), num_points=512, seed=4)
    assert [s.cloud.tobytes() for s in again] == [s.cloud.tobytes() for s in train + test] or \
        sorted(s.sample_id for s in again) == sorted(s.sample_id for s in train + test)
