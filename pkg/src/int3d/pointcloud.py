"""Point-cloud geometry kernels: sampling, grouping, interpolation, alignment, projection.

Clouds are plain ``(N, 3)`` float arrays in meters, z pointing up. Every
routine breaks ties toward the lowest index so results are reproducible
under permutation of the input.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, DegenerateInputError, FormatError


def as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ArgumentError(f"expected an (N, 3) point array, got shape {pts.shape}")
    if pts.shape[0] < 1:
        raise ArgumentError("point cloud is empty")
    if not np.all(np.isfinite(pts)):
        raise ArgumentError("point cloud contains non-finite coordinates")
    return pts


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # explicit differences (not the |a|^2 - 2ab + |b|^2 expansion) so each
    # entry is independent of the rest of the cloud
    diff = centers[:, None, :] - points[None, :, :]
    return np.einsum("mnk,mnk->mn", diff, diff)


def farthest_point_sample(points, m: int, start_index: int = 0) -> np.ndarray:
    """Greedy max-min subset of ``m`` indices, starting from ``start_index``."""
    pts = as_cloud(points)
    n = pts.shape[0]
    if not 1 <= m <= n:
        raise ArgumentError(f"cannot sample m={m} points from a cloud of {n}")
    if not 0 <= start_index < n:
        raise ArgumentError(f"start_index {start_index} out of range for {n} points")
    selected = np.empty(m, dtype=np.int64)
    selected[0] = start_index
    d = pts - pts[start_index]
    min_d2 = np.einsum("nk,nk->n", d, d)
    for i in range(1, m):
        nxt = int(np.argmax(min_d2))  # first maximum -> lowest index
        selected[i] = nxt
        d = pts - pts[nxt]
        np.minimum(min_d2, np.einsum("nk,nk->n", d, d), out=min_d2)
    return selected


def lexicographic_start(points) -> int:
    """Index of the lexicographically smallest point (x, then y, then z).

    Used as the FPS seed inside the scene encoder: unlike a fixed index it
    follows the geometry under re-ordering of the cloud.
    """
    pts = np.asarray(points)
    order = np.lexsort((np.arange(len(pts)), pts[:, 2], pts[:, 1], pts[:, 0]))
    return int(order[0])


@dataclass
class BallQueryResult:
    groups: list
    fallback: np.ndarray

    def padded(self, k_max: int) -> np.ndarray:
        """``(M, k_max)`` index array; short groups repeat their first member."""
        out = np.empty((len(self.groups), k_max), dtype=np.int64)
        for i, g in enumerate(self.groups):
            out[i, : len(g)] = g
            out[i, len(g):] = g[0]
        return out


def ball_query(points, centers, radius: float, k_max: int) -> BallQueryResult:
    """Group up to ``k_max`` nearest cloud points within ``radius`` of each center.

    Groups are sorted by ascending distance, then index. A center with no
    point inside the ball gets the globally nearest point instead and is
    flagged in ``fallback``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ArgumentError("ball_query needs a non-empty cloud")
    if radius <= 0:
        raise ArgumentError("radius must be positive")
    if k_max < 1:
        raise ArgumentError("k_max must be positive")
    ctr = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    d2 = _sq_dists(pts, ctr)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k_max]
    near = np.take_along_axis(d2, order, axis=1)
    inside = near <= radius * radius
    groups = []
    fallback = np.zeros(len(ctr), dtype=bool)
    for i in range(len(ctr)):
        g = order[i][inside[i]]
        if g.size == 0:
            g = order[i, :1]
            fallback[i] = True
        groups.append(g)
    return BallQueryResult(groups, fallback)


def interpolation_weights(coarse_points, fine_points, k: int = 3):
    """Neighbor indices ``(N, k)`` and normalized weights for inverse-distance interpolation.

    Weights are ``1 / (d^2 + 1e-8)`` renormalized over the ``k`` nearest coarse
    points. A fine point that coincides exactly with coarse points copies
    them (the zero-distance limit of the same weighting).
    """
    coarse = np.asarray(coarse_points, dtype=np.float64)
    fine = np.asarray(fine_points, dtype=np.float64)
    if coarse.ndim != 2 or coarse.shape[0] == 0:
        raise ArgumentError("no coarse points to interpolate from")
    if not 1 <= k <= coarse.shape[0]:
        raise ArgumentError(f"k={k} must be in [1, {coarse.shape[0]}]")
    d2 = _sq_dists(coarse, fine)
    idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    nd2 = np.take_along_axis(d2, idx, axis=1)
    w = 1.0 / (nd2 + 1e-8)
    exact = nd2 == 0.0
    hit = exact.any(axis=1)
    w[hit] = exact[hit].astype(np.float64)
    w /= w.sum(axis=1, keepdims=True)
    return idx, w


def inverse_distance_interpolate(coarse_points, coarse_features, fine_points, k: int = 3) -> np.ndarray:
    feats = np.asarray(coarse_features, dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    if feats.shape[0] != np.asarray(coarse_points).shape[0]:
        raise ArgumentError("coarse_features rows must match coarse_points")
    if feats.shape[1] < 1:
        raise ArgumentError("features need at least one channel")
    idx, w = interpolation_weights(coarse_points, fine_points, k)
    return np.einsum("nk,nkd->nd", w, feats[idx])


def distance_weights(points, origin) -> np.ndarray:
    d = np.linalg.norm(np.asarray(points, dtype=np.float64) - np.asarray(origin, dtype=np.float64), axis=1)
    return 1.0 / (1.0 + d) ** 2


def distance_weighted_indices(points, origin, n: int, seed: int) -> np.ndarray:
    pts = as_cloud(points)
    if not 1 <= n <= pts.shape[0]:
        raise ArgumentError(f"cannot subsample {n} points from a cloud of {pts.shape[0]}")
    if n == pts.shape[0]:
        return np.arange(n)
    w = distance_weights(pts, origin)
    rng = np.random.default_rng(seed)
    idx = rng.choice(pts.shape[0], size=n, replace=False, p=w / w.sum())
    return np.sort(idx)


def distance_weighted_subsample(points, origin, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points without replacement, favoring those near ``origin``.

    Selection weight is ``1 / (1 + d)^2``. The result keeps original index order.
    """
    pts = as_cloud(points)
    return pts[distance_weighted_indices(pts, origin, n, seed)]


@dataclass(frozen=True)
class BodyFrame:
    """Yaw rotation plus horizontal translation taking world to body coordinates."""

    rotation: np.ndarray
    origin: np.ndarray

    def apply_points(self, pts) -> np.ndarray:
        return (np.asarray(pts, dtype=np.float64) - self.origin) @ self.rotation.T

    def apply_vectors(self, vec) -> np.ndarray:
        return np.asarray(vec, dtype=np.float64) @ self.rotation.T


def body_frame(head_position, head_orientation) -> BodyFrame:
    h = np.asarray(head_orientation, dtype=np.float64)
    r = float(np.hypot(h[0], h[1]))
    if r < 1e-6:
        raise DegenerateInputError("head orientation is (nearly) vertical; yaw undefined")
    c, s = h[0] / r, h[1] / r
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    p = np.asarray(head_position, dtype=np.float64)
    return BodyFrame(rot, np.array([p[0], p[1], 0.0]))


def align_to_body_frame(points, window):
    """Re-express a cloud and motion window in the body frame of the last observed frame.

    The head's final position lands on the vertical axis and the horizontal
    part of its final facing direction on +x. Returns ``(points, window)``.
    """
    from .motionenc import SparseMotionWindow

    if window.num_frames < 1:
        raise ArgumentError("motion window has no frames")
    frame = body_frame(window.positions[-1, 0], window.head_orientations[-1])
    aligned = SparseMotionWindow(
        positions=frame.apply_points(window.positions.reshape(-1, 3)).reshape(window.positions.shape),
        velocities=frame.apply_vectors(window.velocities.reshape(-1, 3)).reshape(window.velocities.shape),
        head_orientations=frame.apply_vectors(window.head_orientations),
        frame_interval=window.frame_interval,
    )
    return frame.apply_points(points), aligned


def triangle_areas(triangles) -> np.ndarray:
    tri = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def sample_mesh_surface(triangles, n: int, seed: int) -> np.ndarray:
    """Area-weighted uniform samples on a triangle soup of shape ``(F, 3, 3)``."""
    if n < 1:
        raise ArgumentError("need at least one sample")
    tri = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    areas = triangle_areas(tri)
    total = areas.sum()
    if not total > 0:
        raise DegenerateInputError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    face = rng.choice(len(tri), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = tri[face, 0], tri[face, 1], tri[face, 2]
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c


def read_triangle_list(path) -> np.ndarray:
    """Minimal mesh reader: one triangle per line, 9 whitespace-separated reals."""
    tris = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = line.split()
            if len(vals) != 9:
                raise FormatError(path, None, f"line {lineno}: expected 9 values, got {len(vals)}")
            try:
                tris.append([float(v) for v in vals])
            except ValueError as exc:
                raise FormatError(path, None, f"line {lineno}: {exc}") from None
    return np.array(tris, dtype=np.float64).reshape(-1, 3, 3)


@dataclass
class CameraModel:
    extrinsic: np.ndarray  # 4x4 world -> camera
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.extrinsic = np.asarray(self.extrinsic, dtype=np.float64).reshape(4, 4)
        rot = self.extrinsic[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6) or np.linalg.det(rot) < 0:
            raise ArgumentError("extrinsic rotation is not a proper rotation")
        if self.fx <= 0 or self.fy <= 0:
            raise ArgumentError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ArgumentError("principal point lies outside the image")

    def to_camera(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.extrinsic[:3, :3].T + self.extrinsic[:3, 3]


_CAMERA_KEYS = ("extrinsic", "fx", "fy", "cx", "cy", "width", "height")


def read_camera(path) -> CameraModel:
    """Parse a ``key = value`` camera manifest (extrinsic is 16 row-major reals)."""
    path = Path(path)
    vals = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(path, None, f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CAMERA_KEYS:
            raise FormatError(path, None, f"line {lineno}: unknown key {key!r}")
        vals[key] = val
    missing = [k for k in _CAMERA_KEYS if k not in vals]
    if missing:
        raise FormatError(path, None, f"missing keys {missing}")
    try:
        ext = [float(v) for v in vals["extrinsic"].replace(",", " ").split()]
        if len(ext) != 16:
            raise FormatError(path, None, f"extrinsic needs 16 values, got {len(ext)}")
        return CameraModel(
            np.array(ext), float(vals["fx"]), float(vals["fy"]), float(vals["cx"]),
            float(vals["cy"]), int(vals["width"]), int(vals["height"]),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(path, None, str(exc)) from None


def write_camera(camera: CameraModel, path) -> None:
    ext = " ".join(repr(float(v)) for v in camera.extrinsic.ravel())
    lines = [
        f"extrinsic = {ext}",
        f"fx = {camera.fx!r}",
        f"fy = {camera.fy!r}",
        f"cx = {camera.cx!r}",
        f"cy = {camera.cy!r}",
        f"width = {camera.width}",
        f"height = {camera.height}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def project_intention_to_image(points, logits, camera: CameraModel, score_threshold: float):
    """Pixel bounding box ``(u_min, v_min, u_max, v_max)`` of confident points, or None.

    Points are kept when ``sigmoid(logit) >= score_threshold`` and they lie in
    front of the camera. Visibility is not checked.
    """
    pts = np.asarray(points, dtype=np.float64)
    s = np.asarray(logits, dtype=np.float64)
    if s.shape != (pts.shape[0],):
        raise ArgumentError("one score per point required")
    prob = 0.5 * (1.0 + np.tanh(0.5 * s))
    cam = camera.to_camera(pts[prob >= score_threshold])
    cam = cam[cam[:, 2] > 0]
    if cam.size == 0:
        return None
    u = camera.fx * cam[:, 0] / cam[:, 2] + camera.cx
    v = camera.fy * cam[:, 1] / cam[:, 2] + camera.cy
    inside = (u >= 0) & (u <= camera.width) & (v >= 0) & (v <= camera.height)
    if not inside.any():
        return None
    u, v = u[inside], v[inside]
    box = (
        float(np.clip(u.min(), 0, camera.width)),
        float(np.clip(v.min(), 0, camera.height)),
        float(np.clip(u.max(), 0, camera.width)),
        float(np.clip(v.max(), 0, camera.height)),
    )
    return box
