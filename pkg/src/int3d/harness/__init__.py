"""Training, evaluation, timing and the command-line interface."""
from .config import TrainConfig, load_config, parse_config_text
from .evaluate import METHODS, evaluate, evaluate_samples, make_predictor
from .models import load_model, save_model
from .timing import TimingResult, timing_probe
from .train import EpochRecord, TrainLog, train, train_on_samples

__all__ = [
    "METHODS", "EpochRecord", "TimingResult", "TrainConfig", "TrainLog", "evaluate", "evaluate_samples",
    "load_config", "load_model", "make_predictor", "parse_config_text", "save_model", "timing_probe",
    "train", "train_on_samples",
]
