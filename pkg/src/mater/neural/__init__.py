from .checkpoint import CheckpointError, load_model, save_model
from .losses import ccc, ccc_loss, class_weights, weighted_ce
from .model import PRESETS, Model, ModelConfig, build_model, forward, backward
from .train import History, TrainConfig, TrainingError, predict, train

__all__ = [
    "CheckpointError",
    "History",
    "Model",
    "ModelConfig",
    "PRESETS",
    "TrainConfig",
    "TrainingError",
    "backward",
    "build_model",
    "ccc",
    "ccc_loss",
    "class_weights",
    "forward",
    "load_model",
    "predict",
    "save_model",
    "train",
    "weighted_ce",
]
