import hashlib
import json
import math

import numpy as np
import pytest

from int3d import metrics
from int3d.datapipe import SynthConfig, build_dataset, gen_synthetic, load_split, read_sample
from int3d.datapipe.build import build_samples
from int3d.errors import ArgumentError, UsageError
from int3d.harness import (
    TrainConfig, evaluate, load_model, parse_config_text, save_model, timing_probe, train, train_on_samples,
)
from int3d.harness.cli import main
from int3d.harness.evaluate import evaluate_samples, make_predictor
from int3d.harness.models import sidecar_path
from int3d.motionenc import SparseMotionWindow
from int3d import network

SMALL_NET = """
feature_dim = 16
sa_levels = 64:0.4:16:16-16;16:0.8:16:16-16
head_mlp_widths = 16
output_mlp_widths = 32,16
"""


def small_config(extra="", **kw) -> TrainConfig:
    cfg = parse_config_text(SMALL_NET + extra)
    return TrainConfig(**{**cfg.__dict__, **kw})


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    sessions = gen_synthetic(SynthConfig(num_scenes=3, samples_per_scene=2, points_per_scene=3000), 8)
    build_dataset(sessions, root, horizons=(500, 1000), num_points=256, test_fraction=0.34, seed=8)
    return root


@pytest.fixture(scope="module")
def overfit_set():
    sessions = gen_synthetic(SynthConfig(num_scenes=2, samples_per_scene=4, points_per_scene=3000), 3)
    return build_samples(sessions, horizons=(500,), num_points=256, seed=3)[:8]


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# -- config ---------------------------------------------------------------------

def test_config_parsing():
    cfg = parse_config_text("""
        # comment line
        learning_rate = 0.002
        batch_size = 4
        lr_schedule = cosine
        max_updates = none
        variant = mlp_fusion
        enabled_terms = bce, dice
        sa_levels = 256:0.2:32:32-32-64;64:0.6:32:64-64-128
    """)
    assert cfg.learning_rate == 0.002 and cfg.batch_size == 4 and cfg.max_updates is None
    assert cfg.network.variant == "mlp_fusion" and cfg.loss.enabled_terms == ("bce", "dice")
    assert cfg.network.sa_levels[1].widths == (64, 64, 128)
    assert TrainConfig().learning_rate == 1e-3


@pytest.mark.parametrize("text", ["bogus = 1", "learning_rate", "batch_size = two", "batch_size = 0",
                                  "variant = huge", "lr_schedule = step"])
def test_config_errors(text):
    with pytest.raises(ArgumentError):
        parse_config_text(text)


def test_model_roundtrip(tmp_path):
    cfg = small_config().network
    params = network.init_params(cfg, 1)
    p = save_model(tmp_path / "m.ckpt", params, cfg)
    kind, back, cfg2 = load_model(p)
    assert kind == "int3dnet" and cfg2 == cfg
    assert all(back[k].numpy().tobytes() == params[k].numpy().tobytes() for k in params)
    sidecar_path(p).unlink()
    with pytest.raises(Exception) as e:
        load_model(p)
    assert "sidecar" in str(e.value)


# -- training ----------------------------------------------------------------------

def test_training_loss_decreases(overfit_set):
    cfg = small_config(max_epochs=5, early_stop_patience=100, learning_rate=3e-3)
    _, log = train_on_samples(overfit_set, cfg)
    assert [e.epoch for e in log.epochs] == [1, 2, 3, 4, 5]
    assert log.epochs[4].loss < log.epochs[0].loss
    assert log.epochs[-1].updates == 40
    table = log.to_table().splitlines()
    assert len(table) == 6 and table[0].startswith("epoch\t")


def test_training_is_deterministic(dataset, tmp_path):
    cfg = small_config(max_epochs=2, batch_size=2, lr_schedule="cosine")
    a, _ = train(dataset, cfg, tmp_path / "a.ckpt")
    b, _ = train(dataset, cfg, tmp_path / "b.ckpt")
    assert a.read_bytes() == b.read_bytes()
    c, _ = train(dataset, small_config(max_epochs=2, batch_size=2, seed=5), tmp_path / "c.ckpt")
    assert c.read_bytes() != a.read_bytes()


def test_max_updates_and_patience(overfit_set):
    _, log = train_on_samples(overfit_set, small_config(max_epochs=10, max_updates=11, batch_size=2))
    assert log.epochs[-1].updates == 11 and len(log.epochs) == 3
    _, log = train_on_samples(overfit_set, small_config(max_epochs=30, early_stop_patience=1, learning_rate=1e-7))
    assert len(log.epochs) < 30


def test_scene_only_ignores_motion(dataset, tmp_path):
    samples = load_split(dataset, "train")
    cfg = small_config("variant = scene_only\n", max_epochs=2)
    a, _ = train_on_samples(samples, cfg)
    # motion files gone after loading; every window replaced by noise
    rng = np.random.default_rng(0)
    for d in (dataset / "samples").iterdir():
        if (d / "motion.f32").exists():
            (d / "motion.f32").rename(d / "motion.f32.bak")
    try:
        for s in samples:
            w = s.window
            s.window = SparseMotionWindow(rng.normal(size=w.positions.shape), rng.normal(size=w.velocities.shape),
                                          w.head_orientations[::-1].copy(), w.frame_interval)
        b, _ = train_on_samples(samples, cfg)
    finally:
        for d in (dataset / "samples").iterdir():
            if (d / "motion.f32.bak").exists():
                (d / "motion.f32.bak").rename(d / "motion.f32")
    assert all(a[k].numpy().tobytes() == b[k].numpy().tobytes() for k in a)


def test_empty_split_is_an_error(tmp_path):
    (tmp_path / "train.txt").write_text("")
    with pytest.raises(ArgumentError):
        train(tmp_path, small_config(), tmp_path / "x.ckpt")


# -- evaluation ----------------------------------------------------------------------

def test_oracle_predictions_score_perfectly(dataset):
    samples = load_split(dataset, "test")

    def oracle(s):
        g = np.clip(s.gt.heatmap.astype(np.float64), 1e-4, 1 - 1e-4)
        return np.log(g) - np.log1p(-g), None

    rep = evaluate_samples(samples, oracle, "oracle", (500, 1000))
    for r in rep.rows:
        # the 1e-4 floor spreads a little mass over the far points
        assert r.sim > 0.99 and r.auc == 100.0 and r.dice == 1.0
    assert [r.horizon for r in rep.rows] == ["500", "1000", "avg"]


def test_absent_horizon_cells(dataset):
    rep = evaluate(dataset, "head", horizons=(1000, 500, 1500))
    assert [r.horizon for r in rep.rows] == ["500", "1000", "1500", "avg"]
    assert rep.row("head", 1500).count == 0 and rep.row("head", 1500).auc is None
    avg = rep.row("head", "avg")
    assert avg.auc == pytest.approx((rep.row("head", 500).auc + rep.row("head", 1000).auc) / 2)


def test_evaluate_is_read_only_and_reproducible(dataset, tmp_path):
    ckpt, _ = train(dataset, small_config(max_epochs=1), tmp_path / "m.ckpt")
    before = tree_digest(dataset), ckpt.read_bytes()
    r1 = evaluate(dataset, "ours", ckpt, (500, 1000))
    r2 = evaluate(dataset, "ours", ckpt, (500, 1000))
    assert (tree_digest(dataset), ckpt.read_bytes()) == before
    assert r1.to_json() == r2.to_json() and r1.to_table() == r2.to_table()
    assert len(r1.srcc) == 15
    with pytest.raises(UsageError):
        evaluate(dataset, "mlp_fusion", ckpt)
    with pytest.raises(UsageError):
        evaluate(dataset, "ours")
    with pytest.raises(ArgumentError):
        make_predictor("nope")


def test_forecaster_method(dataset, tmp_path):
    cfg = small_config("model = forecaster\nforecast_steps = 50\nhorizon_frames = 30\n")
    ckpt, log = train(dataset, cfg, tmp_path / "f.ckpt")
    rep = evaluate(dataset, "motion_forecast", ckpt, (500,))
    assert 0 <= rep.row("motion_forecast", 500).auc <= 100
    assert rep.srcc is None


# -- timing -----------------------------------------------------------------------------

def test_timing_probe(dataset):
    cfg = small_config().network
    params = network.init_params(cfg, 0)
    sample = load_split(dataset, "test")[0]
    res = timing_probe(params, cfg, sample, repetitions=5, warmup=1)
    assert res.repetitions == 5 and res.mean_ms >= res.min_ms > 0 and res.max_ms >= res.mean_ms
    with pytest.raises(ArgumentError):
        timing_probe(params, cfg, sample, repetitions=0)


# -- CLI ---------------------------------------------------------------------------------

def test_cli_end_to_end(dataset, tmp_path, capsys):
    conf = tmp_path / "train.cfg"
    conf.write_text(SMALL_NET + "max_epochs = 1\n")
    ckpt = tmp_path / "m.ckpt"
    assert main(["train", "--data", str(dataset), "--config", str(conf), "--out", str(ckpt),
                 "--log", str(tmp_path / "log.tsv")]) == 0
    assert (tmp_path / "log.tsv").read_text().startswith("epoch")
    report = tmp_path / "r.json"
    assert main(["eval", "--data", str(dataset), "--method", "ours", "--ckpt", str(ckpt),
                 "--horizons", "500,1000", "--report", str(report)]) == 0
    assert json.loads(report.read_text())["rows"]
    sample_dir = dataset / (dataset / "test.txt").read_text().split()[0]
    heat = tmp_path / "h.f32"
    assert main(["predict", "--sample", str(sample_dir), "--ckpt", str(ckpt), "--out", str(heat)]) == 0
    assert heat.stat().st_size == 4 * read_sample(sample_dir).num_points
    camera = tmp_path / "cam.txt"
    camera.write_text("extrinsic = " + " ".join(map(str, np.eye(4).ravel())) +
                      "\nfx = 500\nfy = 500\ncx = 320\ncy = 240\nwidth = 640\nheight = 480\n")
    capsys.readouterr()
    assert main(["project", "--sample", str(sample_dir), "--heatmap", str(heat), "--camera", str(camera)]) == 0
    assert "box" in json.loads(capsys.readouterr().out)
    assert main(["timing", "--ckpt", str(ckpt), "--sample", str(sample_dir), "--reps", "2", "--warmup", "0"]) == 0


def test_cli_exit_codes(dataset, tmp_path):
    assert main([]) == 2
    assert main(["eval", "--data", str(dataset), "--method", "bogus"]) == 2
    assert main(["eval", "--data", str(dataset), "--method", "ours"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 3\n")
    assert main(["train", "--data", str(dataset), "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["eval", "--data", str(tmp_path / "missing"), "--method", "head"]) == 2
    heat = tmp_path / "short.f32"
    heat.write_bytes(b"\0" * 10)
    sample_dir = dataset / (dataset / "test.txt").read_text().split()[0]
    assert main(["project", "--sample", str(sample_dir), "--heatmap", str(heat), "--camera", str(bad)]) == 2
