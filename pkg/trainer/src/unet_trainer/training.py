"""Training and scoring of realized networks.

``train_and_score`` runs Adam with cosine-annealed learning rate starting at
0.001 and returns the validation RMSE. The number of epochs is mapped from
the fidelity label by configuration (by default HF trains 25 epochs and LF
trains 5). A non-finite loss raises :class:`TrainingError` instead of
returning a score. All randomness (parameter-independent shuffling and any
torch-side sampling) is seeded, so a fixed seed reproduces the score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .data import RegressionData

DEFAULT_EPOCHS = {"HF": 25, "LF": 5}


class TrainingError(RuntimeError):
    """Training could not produce a trustworthy score."""


@dataclass(frozen=True)
class TrainConfig:
    epochs_by_fidelity: dict = field(
        default_factory=lambda: dict(DEFAULT_EPOCHS))
    learning_rate: float = 1e-3
    batch_size: int = 16
    seed: int = 0


def _batches(n: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(n, generator=generator)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_and_score(network: nn.Module, data: RegressionData, fidelity: str,
                    config: TrainConfig = TrainConfig()) -> float:
    """Train at the fidelity's epoch budget; return validation RMSE."""
    if fidelity not in config.epochs_by_fidelity:
        raise TrainingError(
            f"unknown fidelity {fidelity!r}; configured: "
            f"{sorted(config.epochs_by_fidelity)}")
    epochs = int(config.epochs_by_fidelity[fidelity])
    torch.manual_seed(config.seed)
    shuffler = torch.Generator().manual_seed(config.seed)
    optimizer = torch.optim.Adam(network.parameters(),
                                 lr=config.learning_rate)
    schedule = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(1, epochs))
    loss_fn = nn.MSELoss()
    n = data.x_train.shape[0]
    network.train()
    for epoch in range(epochs):
        for batch in _batches(n, config.batch_size, shuffler):
            optimizer.zero_grad()
            prediction = network(data.x_train[batch])
            loss = loss_fn(prediction, data.y_train[batch])
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingError(
                    f"training diverged: loss {value} at epoch {epoch + 1} "
                    f"of {epochs}")
            loss.backward()
            optimizer.step()
        schedule.step()
    network.eval()
    errors = []
    with torch.no_grad():
        for start in range(0, data.x_val.shape[0], config.batch_size):
            stop = start + config.batch_size
            prediction = network(data.x_val[start:stop])
            errors.append((prediction - data.y_val[start:stop]) ** 2)
    rmse = float(torch.cat(errors).mean().sqrt())
    if not math.isfinite(rmse):
        raise TrainingError(f"validation produced a non-finite score {rmse}")
    return rmse
