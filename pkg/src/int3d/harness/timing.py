"""Forward-pass latency measurement."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch

from .. import network
from ..errors import ArgumentError


@dataclass
class TimingResult:
    mean_ms: float
    std_ms: float
    min_ms: float
    max_ms: float
    repetitions: int
    warmup: int

    def summary(self) -> str:
        return (f"forward latency over {self.repetitions} runs (after {self.warmup} warm-up): "
                f"mean {self.mean_ms:.2f} ms, std {self.std_ms:.2f} ms, min {self.min_ms:.2f} ms")


def timing_probe(params, config, sample, repetitions: int = 200, warmup: int = 10) -> TimingResult:
    """Time full forward passes, scene grouping included; warm-up runs are discarded."""
    if repetitions < 1:
        raise ArgumentError("repetitions must be >= 1")
    if warmup < 0:
        raise ArgumentError("warmup must be >= 0")
    times = []
    with torch.no_grad():
        for i in range(warmup + repetitions):
            t0 = time.perf_counter()
            network.forward(sample.cloud, sample.window, params, config)
            if i >= warmup:
                times.append((time.perf_counter() - t0) * 1000.0)
    arr = np.asarray(times)
    return TimingResult(float(arr.mean()), float(arr.std()), float(arr.min()), float(arr.max()),
                        repetitions, warmup)
