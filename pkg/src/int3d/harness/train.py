"""Training loop for Int3DNet variants and the forecasting baseline."""
from __future__ import annotations

import logging
import math
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch

from .. import metrics, network
from ..baselines import train_forecaster
from ..datapipe.io import load_split
from ..errors import ArgumentError, NumericError
from ..objective import LossConfig, dataset_class_weight, total_loss
from .config import TrainConfig
from .models import save_model

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    parts: dict
    val_dice: float
    val_auc: float
    seconds: float
    updates: int


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0

    def to_table(self) -> str:
        lines = ["epoch\tloss\tbce\tfocal\tdice_loss\tval_dice\tval_auc\tseconds"]
        for e in self.epochs:
            lines.append("\t".join([
                str(e.epoch), f"{e.loss:.5f}", f"{e.parts.get('bce', float('nan')):.5f}",
                f"{e.parts.get('focal', float('nan')):.5f}", f"{e.parts.get('dice', float('nan')):.5f}",
                f"{e.val_dice:.4f}", f"{e.val_auc:.2f}", f"{e.seconds:.1f}",
            ]))
        return "\n".join(lines) + "\n"


class PreparedSample:
    """A sample plus its cached scene geometry and label tensor."""

    def __init__(self, sample, config: network.NetworkConfig):
        self.sample = sample
        self.geometry = network.scene_geometry(sample.cloud, config)
        self.mask = torch.as_tensor(sample.gt.mask.astype(np.float32))


def prepare(samples, config: network.NetworkConfig):
    return [PreparedSample(s, config) for s in samples]


def predict_logits(prepared: PreparedSample, params, config) -> torch.Tensor:
    with torch.no_grad():
        logits, _ = network.forward(prepared.sample.cloud, prepared.sample.window, params, config, prepared.geometry)
    return logits


def score_samples(prepared, params, config):
    """Mean Dice score and AUC of the network over prepared samples."""
    dice, auc = [], []
    for p in prepared:
        logits = predict_logits(p, params, config)
        dice.append(metrics.dice_score(logits, p.sample.gt.mask))
        auc.append(metrics.auc(logits, p.sample.gt.mask))
    return float(np.mean(dice)), float(np.mean(auc))


def _carve_validation(samples, fraction, seed):
    if fraction <= 0 or len(samples) < 2:
        return samples, []
    rng = np.random.default_rng([seed, 0x7A1])
    n_val = max(1, int(round(fraction * len(samples))))
    order = rng.permutation(len(samples))
    val_idx = set(order[:n_val].tolist())
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def train_on_samples(train_samples, config: TrainConfig, val_samples=None, progress=None):
    """Adam on the total loss; returns ``(best_params, TrainLog)``.

    Without validation samples the training set doubles as the selection set.
    """
    if not train_samples:
        raise ArgumentError("training split is empty")
    torch.manual_seed(config.seed)
    net_cfg = config.network
    train = prepare(train_samples, net_cfg)
    val = prepare(val_samples, net_cfg) if val_samples else train

    loss_cfg = config.loss
    if loss_cfg.class_weight_mode == "dataset" and loss_cfg.dataset_class_weight is None:
        w = dataset_class_weight([p.mask for p in train])
        loss_cfg = LossConfig(loss_cfg.alpha, loss_cfg.gamma, loss_cfg.epsilon, loss_cfg.enabled_terms, "dataset", w)

    params = network.init_params(net_cfg, config.seed)
    leaves = list(params.values())
    for p in leaves:
        p.requires_grad_(True)
    opt = torch.optim.Adam(leaves, lr=config.learning_rate, betas=(config.beta1, config.beta2), eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)
    sched = None
    if config.lr_schedule == "cosine":
        budget = config.max_epochs * math.ceil(len(train) / config.batch_size)
        if config.max_updates is not None:
            budget = min(budget, config.max_updates)
        sched = torch.optim.lr_scheduler.LambdaLR(
            opt, lambda u: 0.5 * (1.0 + math.cos(math.pi * min(u, budget) / budget)))

    history = TrainLog()
    best_dice, best_params, stale = -math.inf, None, 0
    updates, step = 0, 0
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train))
        sums, count, pending = {}, 0, 0
        total_sum = 0.0
        opt.zero_grad()
        for i in order:
            p = train[i]
            logits, _ = network.forward(p.sample.cloud, p.sample.window, params, net_cfg, p.geometry)
            loss, parts = total_loss(logits, p.mask, loss_cfg)
            step += 1
            if not math.isfinite(float(loss.detach())):
                raise NumericError(f"non-finite loss at step {step} (sample {p.sample.sample_id})")
            (loss / config.batch_size).backward()
            pending += 1
            total_sum += float(loss.detach())
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
            if pending == config.batch_size:
                opt.step()
                opt.zero_grad()
                if sched:
                    sched.step()
                pending = 0
                updates += 1
                if config.max_updates is not None and updates >= config.max_updates:
                    break
        if pending:
            opt.step()
            opt.zero_grad()
            if sched:
                sched.step()
            updates += 1
        last = (epoch == config.max_epochs
                or (config.max_updates is not None and updates >= config.max_updates))
        scored = last or epoch % config.val_interval == 0
        val_dice, val_auc = score_samples(val, params, net_cfg) if scored else (math.nan, math.nan)
        rec = EpochRecord(epoch, total_sum / count, {k: v / count for k, v in sums.items()},
                          val_dice, val_auc, time.perf_counter() - t0, updates)
        history.epochs.append(rec)
        if progress:
            progress(rec)
        log.info("epoch %d loss %.4f val dice %.4f auc %.2f", epoch, rec.loss, val_dice, val_auc)
        if not scored:
            continue
        if val_dice > best_dice:
            best_dice, stale = val_dice, 0
            best_params = OrderedDict((k, v.detach().clone()) for k, v in params.items())
            history.best_epoch = epoch
        else:
            stale += 1
        if stale >= config.early_stop_patience:
            break
        if config.max_updates is not None and updates >= config.max_updates:
            break
    return best_params, history


def train(dataset_root, config: TrainConfig, out_path, progress=None):
    """Train on ``train.txt`` of a dataset root and write the best checkpoint to ``out_path``."""
    samples = load_split(dataset_root, "train")
    if not samples:
        raise ArgumentError(f"{dataset_root}: training split is empty")
    if config.model == "forecaster":
        return train_forecaster_from_samples(samples, config, out_path)
    train_s, val_s = _carve_validation(samples, config.val_fraction, config.seed)
    params, history = train_on_samples(train_s, config, val_s, progress)
    return save_model(out_path, params, config.network), history


def train_forecaster_from_samples(samples, config: TrainConfig, out_path):
    fc = config.forecast
    usable = [s for s in samples if s.future is not None and s.future.shape[0] >= fc.horizon_frames]
    if not usable:
        raise ArgumentError("no training samples carry enough future frames for the forecaster")
    params, final = train_forecaster([s.window for s in usable], [s.future for s in usable], fc,
                                     steps=config.forecast_steps, seed=config.seed)
    history = TrainLog([EpochRecord(1, final, {"mse": final}, float("nan"), float("nan"), 0.0,
                                    config.forecast_steps)], 1)
    return save_model(out_path, params, fc, kind="forecaster"), history


__all__ = ["EpochRecord", "PreparedSample", "TrainLog", "prepare", "score_samples", "train",
           "train_on_samples"]
