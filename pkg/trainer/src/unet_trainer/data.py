"""Datasets for trainer scoring.

The built-in dataset is a synthetic steady-diffusion regression problem at
desk scale: inputs are random smooth log-coefficient fields and targets are
the approximate solutions of ``-div(a grad u) = 1`` with zero boundary
values, produced by a fixed number of Jacobi iterations. Everything is
generated from a seed, so no downloads are needed and two builds with the
same seed are bit-identical.

Real datasets (e.g. Darcy-flow tensors or retinal-vessel patches exported as
arrays) plug in through the ``npz`` loader: an ``.npz`` file holding ``x``
and ``y`` arrays shaped ``(n, channels, height, width)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


@dataclass(frozen=True)
class RegressionData:
    name: str
    x_train: torch.Tensor
    y_train: torch.Tensor
    x_val: torch.Tensor
    y_val: torch.Tensor

    @property
    def channels(self) -> tuple[int, int]:
        return int(self.x_train.shape[1]), int(self.y_train.shape[1])

    @property
    def image_hw(self) -> tuple[int, int]:
        return int(self.x_train.shape[2]), int(self.x_train.shape[3])


def _smooth_fields(rng: np.random.Generator, n: int, size: int,
                   correlation: float) -> np.ndarray:
    """Random fields low-passed in Fourier space to ``correlation`` pixels."""
    noise = rng.standard_normal((n, size, size))
    fx = np.fft.fftfreq(size)
    radius2 = fx[None, :] ** 2 + fx[:, None] ** 2
    keep = np.exp(-2.0 * (np.pi * correlation) ** 2 * radius2)
    fields = np.fft.ifft2(np.fft.fft2(noise) * keep).real
    fields -= fields.mean(axis=(1, 2), keepdims=True)
    fields /= fields.std(axis=(1, 2), keepdims=True) + 1e-12
    return fields


def _diffusion_solutions(log_a: np.ndarray, iterations: int) -> np.ndarray:
    """Jacobi iterations for ``-div(a grad u) = 1``, zero Dirichlet edges."""
    a = np.exp(log_a)
    east = 0.5 * (a[:, 1:-1, 1:-1] + a[:, 1:-1, 2:])
    west = 0.5 * (a[:, 1:-1, 1:-1] + a[:, 1:-1, :-2])
    north = 0.5 * (a[:, 1:-1, 1:-1] + a[:, :-2, 1:-1])
    south = 0.5 * (a[:, 1:-1, 1:-1] + a[:, 2:, 1:-1])
    denom = east + west + north + south
    source = (1.0 / a.shape[-1]) ** 2
    u = np.zeros_like(a)
    for _ in range(iterations):
        u[:, 1:-1, 1:-1] = (
            source
            + east * u[:, 1:-1, 2:] + west * u[:, 1:-1, :-2]
            + north * u[:, :-2, 1:-1] + south * u[:, 2:, 1:-1]
        ) / denom
    return u


def _split(name: str, x: np.ndarray, y: np.ndarray,
           val_fraction: float) -> RegressionData:
    n = x.shape[0]
    n_val = max(1, int(round(n * val_fraction)))
    if n_val >= n:
        raise ValueError(
            f"validation fraction {val_fraction} leaves no training data "
            f"for {n} samples")
    cut = n - n_val
    to_tensor = lambda arr: torch.from_numpy(  # noqa: E731
        np.ascontiguousarray(arr, dtype=np.float32))
    return RegressionData(
        name=name,
        x_train=to_tensor(x[:cut]), y_train=to_tensor(y[:cut]),
        x_val=to_tensor(x[cut:]), y_val=to_tensor(y[cut:]))


def diffusion_dataset(n_samples: int = 200, size: int = 32, seed: int = 0,
                      val_fraction: float = 0.2, correlation: float = 4.0,
                      solver_iterations: int = 30) -> RegressionData:
    """The built-in synthetic coefficient-to-solution regression set."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    log_a = _smooth_fields(rng, n_samples, size, correlation)
    u = _diffusion_solutions(log_a, solver_iterations)
    u = (u - u.mean()) / (u.std() + 1e-12)
    return _split("diffusion", log_a[:, None], u[:, None], val_fraction)


def npz_dataset(path: str, val_fraction: float = 0.2) -> RegressionData:
    """Load ``x``/``y`` arrays of shape (n, c, h, w) from an ``.npz`` file."""
    with np.load(path) as archive:
        if "x" not in archive or "y" not in archive:
            raise ValueError(f"{path} must hold 'x' and 'y' arrays")
        x, y = archive["x"], archive["y"]
    if x.ndim != 4 or y.ndim != 4 or x.shape[0] != y.shape[0]:
        raise ValueError(
            f"{path}: x {x.shape} and y {y.shape} must both be "
            f"(n, c, h, w) with matching n")
    return _split(f"npz:{path}", x, y, val_fraction)


def load_dataset(config: dict) -> RegressionData:
    """Build a dataset from a config mapping with a ``name`` key."""
    cfg = dict(config)
    name = cfg.pop("name", "diffusion")
    if name == "diffusion":
        return diffusion_dataset(**cfg)
    if name == "npz":
        return npz_dataset(**cfg)
    raise ValueError(f"unknown dataset {name!r} (choose diffusion or npz)")
