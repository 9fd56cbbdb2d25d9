"""Dataset construction: windows, ground truth, splits, synthetic sessions, file formats."""
from .core import (
    ExtractedWindow, GroundTruth, GtConfig, InteractionEvent, Sample, Session,
    build_sample, extract_windows, gaussian_gt, scene_split,
)
from .io import (
    load_split, read_checkpoint, read_sample, read_split, write_checkpoint, write_sample, write_split,
)
from .synthetic import SynthConfig, gen_synthetic, min_jerk
from .build import build_dataset

__all__ = [
    "ExtractedWindow", "GroundTruth", "GtConfig", "InteractionEvent", "Sample", "Session",
    "SynthConfig", "build_dataset", "build_sample", "extract_windows", "gaussian_gt", "gen_synthetic",
    "load_split", "min_jerk", "read_checkpoint", "read_sample", "read_split", "scene_split",
    "write_checkpoint", "write_sample", "write_split",
]
