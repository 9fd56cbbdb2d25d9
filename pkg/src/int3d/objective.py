"""Composite training objective: class-weighted BCE + focal + soft dice.

All terms take raw logits and use log-sigmoid forms, so nothing overflows for
large ``|x|``. BCE and focal are averaged over points.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F

from .errors import ArgumentError, DegenerateLabelError, NumericError

TERMS = ("bce", "focal", "dice")
DICE_EPS = 1e-6


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    epsilon: float = DICE_EPS
    enabled_terms: tuple = TERMS
    # "sample": w from each sample's own mask; "dataset": use dataset_class_weight
    class_weight_mode: str = "sample"
    dataset_class_weight: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "enabled_terms", tuple(self.enabled_terms))
        if not 0 < self.alpha <= 1:
            raise ArgumentError("alpha must lie in (0, 1]")
        if self.gamma < 0:
            raise ArgumentError("gamma must be non-negative")
        if self.epsilon != DICE_EPS:
            raise ArgumentError("dice epsilon is fixed at 1e-6")
        if not self.enabled_terms or any(t not in TERMS for t in self.enabled_terms):
            raise ArgumentError(f"enabled_terms must be a non-empty subset of {TERMS}")
        if self.class_weight_mode not in ("sample", "dataset"):
            raise ArgumentError("class_weight_mode must be 'sample' or 'dataset'")
        if self.class_weight_mode == "dataset" and not (self.dataset_class_weight or 0) > 0:
            raise ArgumentError("dataset mode needs a positive dataset_class_weight")


def _pair(logits, mask):
    x = torch.as_tensor(logits)
    if not x.is_floating_point():
        x = x.to(torch.float64)
    y = torch.as_tensor(mask).to(x.dtype)
    if x.shape != y.shape:
        raise ArgumentError(f"logits {tuple(x.shape)} and mask {tuple(y.shape)} differ in shape")
    if not bool(torch.isfinite(x).all()):
        raise NumericError("non-finite logits")
    return x, y


def class_weight(mask) -> float:
    """Negative-to-positive count ratio of a binary mask."""
    y = torch.as_tensor(mask)
    pos = int((y == 1).sum())
    if pos == 0:
        raise DegenerateLabelError("mask has no positive points")
    return (y.numel() - pos) / pos


def dataset_class_weight(masks) -> float:
    pos = sum(int((torch.as_tensor(m) == 1).sum()) for m in masks)
    total = sum(torch.as_tensor(m).numel() for m in masks)
    if pos == 0:
        raise DegenerateLabelError("dataset has no positive points")
    return (total - pos) / pos


def weighted_bce(logits, mask, w: float):
    x, y = _pair(logits, mask)
    if not w > 0:
        raise ArgumentError("class weight must be positive")
    # -log sigmoid(x) = softplus(-x); -log(1 - sigmoid(x)) = softplus(x)
    return (w * y * F.softplus(-x) + (1 - y) * F.softplus(x)).mean()


def focal_loss(logits, mask, alpha: float = 0.25, gamma: float = 2.0):
    x, y = _pair(logits, mask)
    log_pt = -F.softplus(torch.where(y > 0, -x, x))
    one_minus_pt = -torch.expm1(log_pt)
    return (-alpha * one_minus_pt.pow(gamma) * log_pt).mean()


def dice_loss(logits, mask, epsilon: float = DICE_EPS):
    x, y = _pair(logits, mask)
    p = torch.sigmoid(x)
    return 1 - (2 * (p * y).sum() + epsilon) / (p.sum() + y.sum() + epsilon)


def total_loss(logits, mask, config: LossConfig = LossConfig(), weight: Optional[float] = None):
    """Unweighted sum of the enabled terms and a ``{term: float}`` breakdown.

    ``weight`` overrides the configured BCE class weight when given.
    """
    parts = {}
    if "bce" in config.enabled_terms:
        if weight is not None:
            w = weight
        elif config.class_weight_mode == "dataset":
            w = config.dataset_class_weight
        else:
            w = class_weight(mask)
        parts["bce"] = weighted_bce(logits, mask, w)
    if "focal" in config.enabled_terms:
        parts["focal"] = focal_loss(logits, mask, config.alpha, config.gamma)
    if "dice" in config.enabled_terms:
        parts["dice"] = dice_loss(logits, mask, config.epsilon)
    total = sum(parts.values())
    return total, {k: float(v.detach()) for k, v in parts.items()}
