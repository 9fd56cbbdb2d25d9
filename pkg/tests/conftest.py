import numpy as np
import pytest
import torch

from int3d import network
from int3d.datapipe import SynthConfig, gen_synthetic
from int3d.datapipe.build import build_samples
from int3d.motionenc import SparseMotionWindow


def random_window(rng, t=15, dt=1 / 30):
    pos = rng.normal(size=(t, 3, 3))
    vel = rng.normal(size=(t, 3, 3))
    head = rng.normal(size=(t, 3))
    head[:, 2] *= 0.3
    head /= np.linalg.norm(head, axis=1, keepdims=True)
    return SparseMotionWindow(pos, vel, head, dt)


def micro_config(variant="full", **kw):
    base = dict(
        feature_dim=8, num_frames=5, variant=variant,
        sa_levels=(network.SALevel(16, 0.5, 8, (8, 8)), network.SALevel(4, 1.0, 8, (8, 8))),
        head_mlp_widths=(8,), output_mlp_widths=(16, 8), gcn_layers=2,
    )
    base.update(kw)
    return network.NetworkConfig(**base)


@pytest.fixture(scope="session")
def small_samples():
    """A handful of real pipeline samples (2 scenes, 500 ms horizon)."""
    sessions = gen_synthetic(SynthConfig(num_scenes=2, samples_per_scene=3, points_per_scene=6000), seed=11)
    return build_samples(sessions, horizons=(500, 1000), num_points=1024, seed=11)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield


# one line per acceptance criterion, shown after the run whatever the capture mode
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
