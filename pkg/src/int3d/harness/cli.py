"""Command-line entry point: ``int3d <command> ...``.

Exit status is 0 on success, 2 for argument and format errors, 3 for
numeric failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import pointcloud
from ..datapipe import SynthConfig, build_dataset, gen_synthetic
from ..datapipe.io import read_payload, read_sample
from ..errors import Int3DError, UsageError
from .config import TrainConfig, load_config
from .evaluate import METHODS, evaluate, network_predictor
from .models import load_model
from .timing import timing_probe
from .train import train


def _horizons(text):
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {text!r}") from None
    if not out or any(h <= 0 for h in out):
        raise argparse.ArgumentTypeError("horizons must be positive integers")
    return out


def _network_checkpoint(path):
    kind, params, config = load_model(path)
    if kind != "int3dnet":
        raise UsageError(f"{path} is not an Int3DNet checkpoint")
    return params, config


def cmd_gen_synth(args):
    sessions = gen_synthetic(SynthConfig(num_scenes=args.scenes, samples_per_scene=args.samples_per_scene,
                                         clutter_level=args.clutter), args.seed)
    train_s, test_s = build_dataset(sessions, args.out, horizons=args.horizons, num_points=args.points,
                                    test_fraction=args.test_fraction, seed=args.seed)
    print(f"wrote {len(train_s)} train and {len(test_s)} test samples to {args.out}")


def cmd_train(args):
    config = load_config(args.config) if args.config else TrainConfig()

    def progress(rec):
        print(f"epoch {rec.epoch}: loss {rec.loss:.4f} val dice {rec.val_dice:.4f} "
              f"val auc {rec.val_auc:.2f} ({rec.seconds:.1f} s)", flush=True)

    ckpt, history = train(args.data, config, args.out, progress=progress)
    if args.log:
        Path(args.log).write_text(history.to_table(), encoding="utf-8")
    print(f"best epoch {history.best_epoch}; checkpoint written to {ckpt}")


def cmd_eval(args):
    report = evaluate(args.data, args.method, args.ckpt, args.horizons)
    text = report.to_json() if str(args.report).endswith(".json") else report.to_table()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write(report.to_table())


def cmd_predict(args):
    params, config = _network_checkpoint(args.ckpt)
    sample = read_sample(args.sample)
    logits, _ = network_predictor(params, config)(sample)
    out = Path(args.out)
    out.write_bytes(logits.astype("<f4").tobytes())
    print(f"wrote {logits.size} logits to {out}")


def cmd_project(args):
    sample = read_sample(args.sample)
    logits = read_payload(Path(args.heatmap), np.dtype("<f4"), (sample.num_points,))
    camera = pointcloud.read_camera(args.camera)
    box = pointcloud.project_intention_to_image(sample.cloud, logits, camera, args.threshold)
    print(json.dumps({"box": None if box is None else list(box)}))


def cmd_timing(args):
    params, config = _network_checkpoint(args.ckpt)
    sample = read_sample(args.sample)
    result = timing_probe(params, config, sample, args.reps, args.warmup)
    print(result.summary())


def build_parser():
    p = argparse.ArgumentParser(prog="int3d", description="3D intention-area prediction from head and hand motion")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--scenes", type=int, default=4)
    g.add_argument("--samples-per-scene", type=int, default=5)
    g.add_argument("--clutter", choices=("simple", "cluttered"), default="cluttered")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizons", type=_horizons, default=[500, 1000, 1500])
    g.add_argument("--points", type=int, default=2048)
    g.add_argument("--test-fraction", type=float, default=0.3)
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train a network or the forecasting baseline")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--log", help="write the per-epoch log as TSV")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a method on the test split")
    e.add_argument("--data", required=True)
    e.add_argument("--method", required=True, choices=tuple(METHODS))
    e.add_argument("--ckpt")
    e.add_argument("--horizons", type=_horizons, default=[500, 1000, 1500])
    e.add_argument("--report", help="TSV, or JSON when the name ends in .json")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="write per-point logits for one sample")
    pr.add_argument("--sample", required=True)
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    pj = sub.add_parser("project", help="bounding box of the predicted area in a camera image")
    pj.add_argument("--sample", required=True)
    pj.add_argument("--heatmap", required=True)
    pj.add_argument("--camera", required=True)
    pj.add_argument("--threshold", type=float, default=0.5)
    pj.set_defaults(func=cmd_project)

    tm = sub.add_parser("timing", help="measure forward latency")
    tm.add_argument("--ckpt", required=True)
    tm.add_argument("--sample", required=True)
    tm.add_argument("--reps", type=int, default=200)
    tm.add_argument("--warmup", type=int, default=10)
    tm.set_defaults(func=cmd_timing)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except Int3DError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["build_parser", "main"]
