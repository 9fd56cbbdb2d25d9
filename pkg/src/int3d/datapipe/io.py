"""On-disk formats: sample directories, dataset split files, and checkpoints.

All payloads are little-endian and row-major. Readers validate sizes and
values and raise ``FormatError`` naming the file and the first offending
byte offset.
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..motionenc import SparseMotionWindow
from .core import FORMAT_VERSION, GroundTruth, Sample

F32 = np.dtype("<f4")
U8 = np.dtype("u1")

_MANIFEST_KEYS = ("sample_id", "scene_id", "horizon_ms", "num_points", "num_frames",
                  "frame_interval", "goal", "format_version")


def _write_array(path: Path, arr, dtype):
    path.write_bytes(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def write_sample(sample: Sample, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "sample_id": sample.sample_id,
        "scene_id": sample.scene_id,
        "horizon_ms": int(sample.horizon_ms),
        "num_points": sample.num_points,
        "num_frames": sample.window.num_frames,
        "frame_interval": float(sample.window.frame_interval),
        "goal": [float(v) for v in np.asarray(sample.goal, dtype=np.float32)],
        "format_version": FORMAT_VERSION,
    }
    if sample.future is not None:
        manifest["num_future_frames"] = int(sample.future.shape[0])
        _write_array(d / "future.f32", sample.future, F32)
    _write_array(d / "points.f32", sample.cloud, F32)
    motion = np.concatenate([sample.window.positions, sample.window.velocities], axis=-1)
    _write_array(d / "motion.f32", motion, F32)
    _write_array(d / "head.f32", sample.window.head_orientations, F32)
    _write_array(d / "gt_heatmap.f32", sample.gt.heatmap, F32)
    _write_array(d / "gt_mask.u8", sample.gt.mask, U8)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return d


def read_payload(path: Path, dtype, shape):
    if not path.exists():
        raise FormatError(path, None, "file is missing")
    raw = path.read_bytes()
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) < expected:
        raise FormatError(path, len(raw), f"truncated payload: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise FormatError(path, expected, f"{len(raw) - expected} unexpected trailing bytes")
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
    if dtype.kind == "f":
        bad = np.flatnonzero(~np.isfinite(arr.ravel()))
        if bad.size:
            raise FormatError(path, int(bad[0]) * dtype.itemsize, "non-finite value")
    return arr.astype(dtype.newbyteorder("="))


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise FormatError(path, None, "file is missing")
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(path, exc.start, "manifest is not UTF-8") from None
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, len(text[: exc.pos].encode("utf-8")), f"invalid JSON: {exc.msg}") from None
    if not isinstance(manifest, dict):
        raise FormatError(path, 0, "manifest must be a JSON object")
    missing = [k for k in _MANIFEST_KEYS if k not in manifest]
    if missing:
        raise FormatError(path, None, f"manifest lacks keys {missing}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise FormatError(path, None, f"unsupported format_version {manifest['format_version']!r}")
    for key in ("num_points", "num_frames"):
        if not isinstance(manifest[key], int) or manifest[key] < 1:
            raise FormatError(path, None, f"{key} must be a positive integer")
    if not isinstance(manifest["goal"], list) or len(manifest["goal"]) != 3:
        raise FormatError(path, None, "goal must be a list of 3 reals")
    return manifest


def read_sample(directory) -> Sample:
    d = Path(directory)
    m = read_manifest(d)
    n, t = m["num_points"], m["num_frames"]
    points = read_payload(d / "points.f32", F32, (n, 3))
    motion = read_payload(d / "motion.f32", F32, (t, 3, 6))
    head = read_payload(d / "head.f32", F32, (t, 3))
    heat = read_payload(d / "gt_heatmap.f32", F32, (n,))
    mask = read_payload(d / "gt_mask.u8", U8, (n,))
    bad = np.flatnonzero(mask > 1)
    if bad.size:
        raise FormatError(d / "gt_mask.u8", int(bad[0]), f"mask value {int(mask[bad[0]])} is not 0 or 1")
    norms = np.linalg.norm(head.astype(np.float64), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-4)
    if bad.size:
        raise FormatError(d / "head.f32", int(bad[0]) * 12, "head orientation is not a unit vector")
    future = None
    if "num_future_frames" in m:
        future = read_payload(d / "future.f32", F32, (m["num_future_frames"], 3, 3))
    window = SparseMotionWindow(motion[..., :3].copy(), motion[..., 3:].copy(), head, float(m["frame_interval"]))
    return Sample(points, window, GroundTruth(heat, mask), int(m["horizon_ms"]), str(m["scene_id"]),
                  str(m["sample_id"]), np.asarray(m["goal"], dtype=np.float32), future)


# ---------------------------------------------------------------------------
# dataset roots

def write_split(root, name: str, sample_dirs) -> Path:
    root = Path(root)
    path = root / f"{name}.txt"
    lines = [str(Path(p).relative_to(root)) if Path(p).is_absolute() else str(p) for p in sample_dirs]
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return path


def read_split(root, name: str) -> list:
    root = Path(root)
    path = root / f"{name}.txt"
    if not path.exists():
        raise FormatError(path, None, "split file is missing")
    return [root / line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def load_split(root, name: str) -> list:
    return [read_sample(p) for p in read_split(root, name)]


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"I3DN"
CKPT_VERSION = 1


def write_checkpoint(path, params) -> Path:
    """Serialize ``{name: array}`` as float32 records after an ``I3DN`` header."""
    chunks = [MAGIC, struct.pack("<II", CKPT_VERSION, len(params))]
    for name, value in params.items():
        arr = value.detach().cpu().numpy() if hasattr(value, "detach") else np.asarray(value)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=F32).tobytes())
    path = Path(path)
    path.write_bytes(b"".join(chunks))
    return path


class _Reader:
    def __init__(self, path, data):
        self.path, self.data, self.pos = path, data, 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(self.path, len(self.data), f"file ends inside {what} (needs {n} bytes at offset {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def read_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    path = Path(path)
    r = _Reader(path, path.read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise FormatError(path, 0, "bad magic bytes (expected b'I3DN')")
    version, count = struct.unpack("<II", r.take(8, "header"))
    if version != CKPT_VERSION:
        raise FormatError(path, 4, f"unsupported checkpoint version {version}")
    params = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2, "name length"))
        name_at = r.pos
        raw = r.take(name_len, "record name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(path, name_at + exc.start, "record name is not UTF-8") from None
        if name in params:
            raise FormatError(path, name_at, f"duplicate record {name!r}")
        (rank,) = struct.unpack("<B", r.take(1, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name}"))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload_at = r.pos
        arr = np.frombuffer(r.take(4 * size, f"payload of {name}"), dtype=F32).reshape(dims)
        bad = np.flatnonzero(~np.isfinite(arr.ravel()))
        if bad.size:
            raise FormatError(path, payload_at + 4 * int(bad[0]), f"non-finite value in {name}")
        params[name] = arr.astype(np.float32)
    if r.pos != len(r.data):
        raise FormatError(path, r.pos, f"{len(r.data) - r.pos} unexpected trailing bytes")
    return params
