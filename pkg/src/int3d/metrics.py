"""Heatmap evaluation: SIM, AUC, mIoU, Dice score and Spearman attention analysis.

Every metric takes raw logits and applies the sigmoid itself.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .errors import ArgumentError, DegenerateInputError, DegenerateLabelError

MIOU_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(1, 10))
DICE_THRESHOLD = 0.5


def _vec(x, name="input"):
    a = np.asarray(x.detach().cpu().numpy() if hasattr(x, "detach") else x, dtype=np.float64).ravel()
    return a


def _check_len(a, b):
    if a.shape != b.shape:
        raise ArgumentError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def sim(pred_logits, gt_heatmap) -> float:
    """Histogram intersection of the sum-normalized prediction and ground truth."""
    p = expit(_vec(pred_logits))
    g = _vec(gt_heatmap)
    _check_len(p, g)
    if not g.sum() > 0:
        raise DegenerateLabelError("ground-truth heatmap sums to zero")
    return float(np.minimum(p / p.sum(), g / g.sum()).sum())


def auc(pred_logits, mask) -> float:
    """Rank-based ROC AUC in percent; ties count one half."""
    s = _vec(pred_logits)
    y = _vec(mask) > 0.5
    _check_len(s, y)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelError("AUC needs both positive and negative labels")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return 100.0 * u / (n_pos * n_neg)


def _binary_iou(pred, gt) -> float:
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return np.logical_and(pred, gt).sum() / union


def miou(pred_logits, mask, thresholds=MIOU_THRESHOLDS) -> float:
    """Mean IoU (percent) of ``sigmoid(pred) >= t`` against the mask over ``thresholds``."""
    p = expit(_vec(pred_logits))
    y = _vec(mask) > 0.5
    _check_len(p, y)
    thresholds = tuple(thresholds)
    if not thresholds or any(not 0 < t < 1 for t in thresholds):
        raise ArgumentError("thresholds must be a non-empty list inside (0, 1)")
    return 100.0 * float(np.mean([_binary_iou(p >= t, y) for t in thresholds]))


def dice_score(pred_logits, mask, tau: float = DICE_THRESHOLD) -> float:
    p = expit(_vec(pred_logits))
    y = _vec(mask) > 0.5
    _check_len(p, y)
    if not 0 < tau < 1:
        raise ArgumentError("tau must lie in (0, 1)")
    x = p >= tau
    denom = x.sum() + y.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(x, y).sum() / denom)


def srcc(a, b) -> float:
    """Spearman correlation: Pearson correlation of mid-ranks."""
    a, b = _vec(a), _vec(b)
    _check_len(a, b)
    if a.size < 2:
        raise ArgumentError("need at least two observations")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateInputError("constant vector has no rank correlation")
    ra = rankdata(a) - (a.size + 1) / 2.0
    rb = rankdata(b) - (b.size + 1) / 2.0
    return float(np.dot(ra, rb) / math.sqrt(np.dot(ra, ra) * np.dot(rb, rb)))


def attention_intention_srcc(weights, gt_heatmap) -> np.ndarray:
    """Per-frame SRCC between attention columns and the GT heatmap; NaN marks undefined frames."""
    w = np.asarray(weights.detach().cpu().numpy() if hasattr(weights, "detach") else weights, dtype=np.float64)
    g = _vec(gt_heatmap)
    if w.ndim != 2 or w.shape[0] != g.size:
        raise ArgumentError(f"weights {w.shape} do not match heatmap length {g.size}")
    out = np.full(w.shape[1], np.nan)
    for j in range(w.shape[1]):
        try:
            out[j] = srcc(w[:, j], g)
        except DegenerateInputError:
            pass
    return out


def all_metrics(pred_logits, gt_heatmap, mask) -> dict:
    return {
        "sim": sim(pred_logits, gt_heatmap),
        "auc": auc(pred_logits, mask),
        "miou": miou(pred_logits, mask),
        "dice": dice_score(pred_logits, mask),
    }


@dataclass
class ReportRow:
    method: str
    horizon: str  # milliseconds, or "avg"
    sim: Optional[float]
    auc: Optional[float]
    miou: Optional[float]
    dice: Optional[float]
    count: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    srcc: Optional[list] = None  # per input frame, averaged over samples

    def row(self, method, horizon):
        for r in self.rows:
            if r.method == method and r.horizon == str(horizon):
                return r
        raise KeyError((method, horizon))

    def to_table(self) -> str:
        def fmt(v, digits):
            return "-" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"

        lines = ["method\thorizon_ms\tsim\tauc\tmiou\tdice\tn"]
        for r in self.rows:
            lines.append("\t".join([r.method, r.horizon, fmt(r.sim, 4), fmt(r.auc, 2),
                                    fmt(r.miou, 2), fmt(r.dice, 4), str(r.count)]))
        if self.srcc is not None:
            lines.append("srcc\t" + "\t".join(fmt(v, 4) for v in self.srcc))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        doc = {
            "rows": [{k: clean(v) for k, v in asdict(r).items()} for r in self.rows],
            "srcc": None if self.srcc is None else [clean(float(v)) for v in self.srcc],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls([ReportRow(**r) for r in doc["rows"]], doc.get("srcc"))
