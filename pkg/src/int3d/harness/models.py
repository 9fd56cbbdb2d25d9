"""Checkpoint + sidecar handling for trained networks and forecasters."""
from __future__ import annotations

import dataclasses
import json
from collections import OrderedDict
from pathlib import Path

import torch

from ..baselines import ForecastConfig, forecast_param_shapes
from ..datapipe.io import read_checkpoint, write_checkpoint
from ..errors import FormatError
from ..network import check_params
from .config import network_from_dict, network_to_dict


def sidecar_path(checkpoint) -> Path:
    return Path(str(checkpoint) + ".json")


def save_model(path, params, config, kind="int3dnet") -> Path:
    """Write the binary checkpoint and a JSON sidecar describing its architecture."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_checkpoint(path, params)
    if kind == "int3dnet":
        meta = {"model": kind, "network": network_to_dict(config)}
    else:
        meta = {"model": kind, "forecast": dataclasses.asdict(config)}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_model(path, dtype=torch.float32):
    """Return ``(kind, params, config)`` for a checkpoint written by ``save_model``."""
    path = Path(path)
    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(side, None, "checkpoint sidecar is missing")
    try:
        meta = json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(side, exc.pos, f"invalid JSON: {exc.msg}") from None
    arrays = read_checkpoint(path)
    params = OrderedDict((k, torch.from_numpy(v.copy()).to(dtype)) for k, v in arrays.items())
    kind = meta.get("model")
    if kind == "int3dnet":
        config = network_from_dict(meta["network"])
        try:
            check_params(params, config)
        except ValueError as exc:
            raise FormatError(path, None, str(exc)) from None
    elif kind == "forecaster":
        config = ForecastConfig(**meta["forecast"])
        if set(params) != set(forecast_param_shapes(config)):
            raise FormatError(path, None, "forecaster records do not match the sidecar configuration")
    else:
        raise FormatError(side, None, f"unknown model kind {kind!r}")
    return kind, params, config
