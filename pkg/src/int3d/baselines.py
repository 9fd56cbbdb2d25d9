"""Non-learned and forecasting baselines.

``head_ray_scores`` scores points by their distance to the final head ray.
The motion-forecast baseline predicts future joint positions with a small
DCT-domain graph network and scores points around the predicted wrist of
the hand that moves most.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import torch

from . import motionenc
from .errors import ArgumentError, UsageError


@dataclass(frozen=True)
class RayScorerConfig:
    sigma_ray: float = 0.15
    behind_score: float = 0.0

    def __post_init__(self):
        if not self.sigma_ray > 0:
            raise ArgumentError("sigma_ray must be positive")


def head_ray_scores(cloud, window, config: RayScorerConfig = RayScorerConfig()) -> np.ndarray:
    """Gaussian falloff of perpendicular distance to the last head ray; zero behind the head."""
    pts = np.asarray(cloud, dtype=np.float64)
    origin = np.asarray(window.positions[-1, 0], dtype=np.float64)
    direction = np.asarray(window.head_orientations[-1], dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    rel = pts - origin
    along = rel @ direction
    perp2 = np.maximum(np.sum(rel * rel, axis=1) - along ** 2, 0.0)
    scores = np.exp(-perp2 / (2.0 * config.sigma_ray ** 2))
    return np.where(along > 0, scores, config.behind_score)


# ---------------------------------------------------------------------------
# motion forecaster

@dataclass(frozen=True)
class ForecastConfig:
    horizon_frames: int = 45
    num_frames: int = 15
    feature_dim: int = 32
    gcn_layers: int = 2
    sigma_wrist: float = 0.2

    def __post_init__(self):
        if self.horizon_frames < 1:
            raise ArgumentError("horizon_frames must be >= 1")
        if not self.sigma_wrist > 0:
            raise ArgumentError("sigma_wrist must be positive")


def forecast_param_shapes(config: ForecastConfig):
    shapes = OrderedDict()
    c = 6
    for i in range(config.gcn_layers):
        shapes[f"forecast.enc{i}.temporal"] = (config.num_frames, config.num_frames)
        shapes[f"forecast.enc{i}.linear.0.weight"] = (config.feature_dim, 2 * c)
        shapes[f"forecast.enc{i}.linear.0.bias"] = (config.feature_dim,)
        c = config.feature_dim
    shapes["forecast.time.weight"] = (config.horizon_frames, config.num_frames)
    shapes["forecast.out.weight"] = (3, config.feature_dim)
    shapes["forecast.out.bias"] = (3,)
    return shapes


def init_forecast_params(config: ForecastConfig, seed: int, dtype=torch.float32):
    gen = torch.Generator().manual_seed(int(seed))
    params = OrderedDict()
    for name, shape in forecast_param_shapes(config).items():
        if name.endswith(".bias"):
            params[name] = torch.zeros(shape, dtype=dtype)
            continue
        bound = math.sqrt(6.0 / sum(shape))
        params[name] = (torch.rand(shape, generator=gen, dtype=torch.float64) * 2 * bound - bound).to(dtype)
    return params


def _forecast_net(motion, params, config: ForecastConfig) -> torch.Tensor:
    # motion: (B, T, 3, 6) -> displacement from the last observed position, (B, H, 3, 3)
    dtype = next(iter(params.values())).dtype
    x = torch.einsum("kt,btjc->bkjc", torch.tensor(motionenc.dct_matrix(config.num_frames), dtype=dtype), motion)
    x = x / config.num_frames
    adj = torch.tensor(motionenc.normalized_adjacency(3), dtype=dtype)
    for i in range(config.gcn_layers):
        x = torch.cat([torch.einsum("ij,btjc->btic", adj, x), x], dim=-1)
        x = torch.einsum("st,btjc->bsjc", params[f"forecast.enc{i}.temporal"], x)
        x = torch.relu(torch.nn.functional.linear(
            x, params[f"forecast.enc{i}.linear.0.weight"], params[f"forecast.enc{i}.linear.0.bias"]))
    x = torch.einsum("ht,btjc->bhjc", params["forecast.time.weight"], x)
    return torch.nn.functional.linear(x, params["forecast.out.weight"], params["forecast.out.bias"])


def _motion_batch(windows, dtype):
    arr = np.stack([motionenc.assemble_motion_array(w) for w in windows]).astype(np.float64)
    return torch.as_tensor(arr, dtype=dtype)


def _check_window(window, config):
    if window.num_frames != config.num_frames:
        raise ArgumentError(f"forecaster expects {config.num_frames} frames, got {window.num_frames}")


def forecast_future_joints(window, params, config: ForecastConfig) -> np.ndarray:
    """Predicted ``(horizon_frames, 3, 3)`` joint positions following ``window``."""
    if not params:
        raise UsageError("forecaster parameters are missing; train the forecaster first")
    if set(params) != set(forecast_param_shapes(config)):
        raise UsageError("forecaster parameters do not match the configuration")
    _check_window(window, config)
    dtype = next(iter(params.values())).dtype
    with torch.no_grad():
        disp = _forecast_net(_motion_batch([window], dtype), params, config)[0]
    return np.asarray(window.positions[-1], dtype=np.float64)[None] + disp.double().numpy()


def train_forecaster(windows, futures, config: ForecastConfig, steps: int = 600, lr: float = 3e-3,
                     seed: int = 0, batch_size: int = 32):
    """Fit the forecaster with mean squared position error. Returns ``(params, final_loss)``."""
    if len(windows) == 0 or len(windows) != len(futures):
        raise ArgumentError("need matching, non-empty windows and futures")
    for w in windows:
        _check_window(w, config)
    params = init_forecast_params(config, seed)
    leaves = [p.requires_grad_(True) for p in params.values()]
    motion = _motion_batch(windows, torch.float32)
    last = torch.as_tensor(np.stack([np.asarray(w.positions[-1], dtype=np.float64) for w in windows]),
                           dtype=torch.float32)
    target = torch.as_tensor(np.stack([np.asarray(f, dtype=np.float64)[: config.horizon_frames] for f in futures]),
                             dtype=torch.float32) - last[:, None]
    if target.shape[1] != config.horizon_frames:
        raise ArgumentError("futures shorter than horizon_frames")
    opt = torch.optim.Adam(leaves, lr=lr)
    gen = torch.Generator().manual_seed(int(seed))
    loss = torch.tensor(float("nan"))
    for _ in range(steps):
        idx = torch.randperm(len(windows), generator=gen)[:batch_size]
        pred = _forecast_net(motion[idx], params, config)
        loss = ((pred - target[idx]) ** 2).sum(dim=-1).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    return OrderedDict((k, v.detach()) for k, v in params.items()), float(loss.detach())


def interacting_hand(predicted, current) -> int:
    """Joint index (1 = left, 2 = right) of the hand with the larger final displacement; ties go left."""
    disp = np.linalg.norm(np.asarray(predicted)[-1, 1:] - np.asarray(current)[1:], axis=1)
    return 1 if disp[0] >= disp[1] else 2


def wrist_scores(cloud, wrist, sigma: float) -> np.ndarray:
    d2 = np.sum((np.asarray(cloud, dtype=np.float64) - np.asarray(wrist, dtype=np.float64)) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * sigma ** 2))


def motion_forecast_scores(cloud, window, params, config: ForecastConfig, horizon_frames=None) -> np.ndarray:
    """Gaussian around the predicted wrist at ``horizon_frames`` (default: the last forecast frame)."""
    pred = forecast_future_joints(window, params, config)
    h = config.horizon_frames if horizon_frames is None else int(horizon_frames)
    if not 1 <= h <= config.horizon_frames:
        raise ArgumentError(f"horizon of {h} frames exceeds the forecaster's {config.horizon_frames}")
    pred = pred[:h]
    hand = interacting_hand(pred, window.positions[-1])
    return wrist_scores(cloud, pred[-1, hand], config.sigma_wrist)


def probability_to_logit(p) -> np.ndarray:
    """Map baseline probabilities onto the logit scale the metrics expect (order-preserving)."""
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-300, 1.0 - 1e-16)
    return np.log(p) - np.log1p(-p)
