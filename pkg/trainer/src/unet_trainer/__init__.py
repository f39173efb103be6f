"""Torch realization and training for exported architecture documents."""

from .data import RegressionData, diffusion_dataset, load_dataset, npz_dataset
from .flops import measure_flops
from .realize import DocumentNetwork, RealizationError, RealizedNetwork, \
    realize
from .training import TrainConfig, TrainingError, train_and_score

__all__ = [
    "DocumentNetwork",
    "RealizationError",
    "RealizedNetwork",
    "RegressionData",
    "TrainConfig",
    "TrainingError",
    "diffusion_dataset",
    "load_dataset",
    "measure_flops",
    "npz_dataset",
    "realize",
    "train_and_score",
]
