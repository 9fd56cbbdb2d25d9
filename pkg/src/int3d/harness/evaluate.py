"""Evaluation of trained networks and baselines across prediction horizons."""
from __future__ import annotations

import logging

import numpy as np
import torch

from .. import metrics, network
from ..baselines import RayScorerConfig, head_ray_scores, motion_forecast_scores, probability_to_logit
from ..datapipe.io import load_split
from ..errors import ArgumentError, UsageError
from .models import load_model

log = logging.getLogger(__name__)

# method name -> network variant it requires, or None for training-free / forecaster methods
METHODS = {
    "ours": "full",
    "head_scene": "head_scene",
    "scene_only": "scene_only",
    "mlp_fusion": "mlp_fusion",
    "motion_query": "motion_query",
    "head": None,
    "motion_forecast": None,
}


def horizon_frames(horizon_ms: int, frame_interval: float) -> int:
    return int(round(horizon_ms / 1000.0 / frame_interval))


def make_predictor(method: str, checkpoint=None, ray_config: RayScorerConfig = RayScorerConfig()):
    """Return ``predict(sample) -> (logits ndarray, attention weights or None)`` for ``method``."""
    if method not in METHODS:
        raise ArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "head":
        return lambda s: (probability_to_logit(head_ray_scores(s.cloud, s.window, ray_config)), None)
    if checkpoint is None:
        raise UsageError(f"method {method!r} needs a checkpoint")
    kind, params, config = load_model(checkpoint)
    if method == "motion_forecast":
        if kind != "forecaster":
            raise UsageError(f"{checkpoint} is not a forecaster checkpoint")

        def predict_forecast(s):
            h = horizon_frames(s.horizon_ms, s.window.frame_interval)
            h = min(max(h, 1), config.horizon_frames)
            return probability_to_logit(motion_forecast_scores(s.cloud, s.window, params, config, h)), None

        return predict_forecast
    if kind != "int3dnet":
        raise UsageError(f"{checkpoint} is not an Int3DNet checkpoint")
    if config.variant != METHODS[method]:
        raise UsageError(f"method {method!r} expects variant {METHODS[method]!r}, checkpoint has {config.variant!r}")
    return network_predictor(params, config)


def network_predictor(params, config):
    def predict(s):
        with torch.no_grad():
            logits, bundle = network.forward(s.cloud, s.window, params, config)
        w = bundle.attention_weights
        return logits.double().numpy(), (None if w is None else w.double().numpy())

    return predict


def _mean(values):
    return float(np.mean(values)) if values else None


def evaluate_samples(samples, predict, method: str, horizons, with_srcc: bool = False) -> metrics.EvalReport:
    """Per-horizon metric means plus an ``avg`` row over the horizons that have samples.

    Horizons with no samples produce rows with empty cells and count 0.
    """
    horizons = sorted({int(h) for h in horizons})
    if not horizons:
        raise ArgumentError("at least one horizon is required")
    if not samples:
        raise ArgumentError("test split is empty")
    per_h = {h: {"sim": [], "auc": [], "miou": [], "dice": []} for h in horizons}
    srcc_rows = []
    for s in samples:
        if s.horizon_ms not in per_h:
            continue
        logits, weights = predict(s)
        m = metrics.all_metrics(logits, s.gt.heatmap, s.gt.mask)
        for k, v in m.items():
            per_h[s.horizon_ms][k].append(v)
        if with_srcc and weights is not None:
            srcc_rows.append(metrics.attention_intention_srcc(weights, s.gt.heatmap))
    rows = []
    for h in horizons:
        cell = per_h[h]
        rows.append(metrics.ReportRow(method, str(h), _mean(cell["sim"]), _mean(cell["auc"]),
                                      _mean(cell["miou"]), _mean(cell["dice"]), len(cell["sim"])))
    present = [r for r in rows if r.count]
    rows.append(metrics.ReportRow(
        method, "avg",
        *[_mean([getattr(r, k) for r in present]) for k in ("sim", "auc", "miou", "dice")],
        sum(r.count for r in present)))
    srcc = None
    if with_srcc and srcc_rows:
        stacked = np.vstack(srcc_rows)
        srcc = []
        for col in stacked.T:
            ok = col[~np.isnan(col)]
            srcc.append(float(ok.mean()) if ok.size else float("nan"))
    return metrics.EvalReport(rows, srcc)


def evaluate(dataset_root, method: str, checkpoint=None, horizons=(500, 1000, 1500)) -> metrics.EvalReport:
    """Evaluate ``method`` on the test split of ``dataset_root``. Reads files only."""
    predict = make_predictor(method, checkpoint)
    samples = load_split(dataset_root, "test")
    return evaluate_samples(samples, predict, method, horizons, with_srcc=(method == "ours"))
