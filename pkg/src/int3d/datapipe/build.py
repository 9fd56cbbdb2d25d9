"""Turn sessions into an on-disk dataset with scene-exclusive train/test splits."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .core import GtConfig, build_sample, extract_windows, scene_split
from .io import write_sample, write_split

log = logging.getLogger(__name__)

DEFAULT_HORIZONS = (500, 1000, 1500)


def sample_seed(master_seed: int, session_index: int, horizon_ms: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), int(session_index), int(horizon_ms)])
    return int(ss.generate_state(1)[0])


def build_samples(sessions, horizons=DEFAULT_HORIZONS, num_points=2048, num_frames=15, frame_rate=30.0,
                  gt_config=GtConfig(), seed=0, future_frames=None):
    """Window, subsample, align and label every (session, event, horizon).

    Samples whose ground truth has no positive point are dropped.
    """
    if future_frames is None:
        future_frames = int(round(max(horizons) / 1000.0 * frame_rate))
    samples = []
    for si, session in enumerate(sessions):
        for h in horizons:
            for ei, ext in enumerate(extract_windows(session, h, num_frames, frame_rate, future_frames)):
                sid = f"{session.session_id or session.scene_id + '_' + str(si)}_e{ei}_h{h}"
                s = build_sample(session, ext, num_points, gt_config, sample_seed(seed, si * 64 + ei, h), sid)
                if not s.gt.mask.any():
                    log.info("dropping %s: no point inside the ground-truth area", sid)
                    continue
                samples.append(s)
    return samples


def build_dataset(sessions, root, horizons=DEFAULT_HORIZONS, num_points=2048, num_frames=15,
                  frame_rate=30.0, gt_config=GtConfig(), test_fraction=0.3, seed=0):
    """Write samples under ``root/samples`` plus ``train.txt`` and ``test.txt``."""
    root = Path(root)
    samples = build_samples(sessions, horizons, num_points, num_frames, frame_rate, gt_config, seed)
    train, test = scene_split(samples, test_fraction, seed)
    dirs = {}
    for s in samples:
        dirs[s.sample_id] = write_sample(s, root / "samples" / s.sample_id)
    write_split(root, "train", [dirs[s.sample_id].relative_to(root) for s in train])
    write_split(root, "test", [dirs[s.sample_id].relative_to(root) for s in test])
    return train, test
