"""Training configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..baselines import ForecastConfig
from ..errors import ArgumentError
from ..network import NetworkConfig, SALevel
from ..objective import LossConfig


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lr_schedule: str = "constant"  # or "cosine", annealed to zero over the update budget
    max_epochs: int = 30
    max_updates: Optional[int] = None
    batch_size: int = 1
    seed: int = 0
    early_stop_patience: int = 10
    val_fraction: float = 0.1
    val_interval: int = 1  # score the validation set every this many epochs (and after the last)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    model: str = "int3dnet"  # or "forecaster"
    forecast_steps: int = 800
    loss: LossConfig = field(default_factory=LossConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ArgumentError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ArgumentError("max_epochs must be >= 1")
        if self.max_updates is not None and self.max_updates < 1:
            raise ArgumentError("max_updates must be >= 1")
        if self.val_interval < 1:
            raise ArgumentError("val_interval must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ArgumentError("val_fraction must lie in [0, 1)")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ArgumentError("lr_schedule must be 'constant' or 'cosine'")
        if self.model not in ("int3dnet", "forecaster"):
            raise ArgumentError("model must be 'int3dnet' or 'forecaster'")


def _ints(text):
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _levels(text):
    # "512:0.4:32:32-32-64;128:0.8:32:64-64-128"
    levels = []
    for chunk in text.split(";"):
        parts = chunk.strip().split(":")
        if len(parts) != 4:
            raise ValueError(f"bad set-abstraction level {chunk!r}")
        levels.append(SALevel(int(parts[0]), float(parts[1]), int(parts[2]),
                              tuple(int(w) for w in parts[3].split("-"))))
    return tuple(levels)


def _optional_int(text):
    return None if text.lower() in ("", "none") else int(text)


_TOP = {
    "learning_rate": float, "lr_schedule": str, "max_epochs": int, "max_updates": _optional_int, "batch_size": int,
    "seed": int, "early_stop_patience": int, "val_fraction": float, "val_interval": int, "model": str,
    "forecast_steps": int,
}
_LOSS = {
    "alpha": float, "gamma": float, "class_weight_mode": str,
    "enabled_terms": lambda s: tuple(t.strip() for t in s.split(",") if t.strip()),
}
_NET = {
    "feature_dim": int, "num_frames": int, "gcn_layers": int, "variant": str, "attention_kernel": str,
    "sa_levels": _levels, "head_mlp_widths": _ints, "output_mlp_widths": _ints, "interp_k": int,
}
_FORECAST = {
    "horizon_frames": int, "forecast_feature_dim": int, "sigma_wrist": float,
}


def parse_config_text(text: str, source="<config>") -> TrainConfig:
    top, loss, net, fc = {}, {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        for table, dest in ((_TOP, top), (_LOSS, loss), (_NET, net), (_FORECAST, fc)):
            if key in table:
                try:
                    dest[key] = table[key](value)
                except ValueError as exc:
                    raise ArgumentError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
                break
        else:
            raise ArgumentError(f"{source}:{lineno}: unknown key {key!r}")
    if "forecast_feature_dim" in fc:
        fc["feature_dim"] = fc.pop("forecast_feature_dim")
    if "num_frames" in net:
        fc["num_frames"] = net["num_frames"]
    return TrainConfig(loss=LossConfig(**loss), network=NetworkConfig(**net), forecast=ForecastConfig(**fc), **top)


def load_config(path) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ArgumentError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def network_to_dict(cfg: NetworkConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["sa_levels"] = [list(dataclasses.astuple(lv)) for lv in cfg.sa_levels]
    return d


def network_from_dict(d: dict) -> NetworkConfig:
    d = dict(d)
    d["sa_levels"] = tuple(SALevel(int(a), float(b), int(c), tuple(w)) for a, b, c, w in d["sa_levels"])
    return NetworkConfig(**d)
