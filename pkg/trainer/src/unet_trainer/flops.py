"""Instrumented forward-pass FLOPs counter.

Hooks every leaf module and charges it according to the realized tensor
shapes, with 1 multiply-accumulate = 2 FLOPs:

- ``Conv2d``: ``2 * (k_h * k_w * c_in / groups) * c_out * h_out * w_out``
- ``ConvTranspose2d``: ``2 * k_h * k_w * c_in * c_out * h_in * w_in`` — the
  kernel slides over the *input* grid, so the count uses input resolution
- ``Linear``: ``2 * in_features * out_features`` per sample
- ``BatchNorm2d``: 4 per output element (owns the batchnorm + ReLU cost)
- ``AvgPool2d`` / ``MaxPool2d``: 4 per output element
- node slot sums: one FLOP per element per extra addend

Upsampling, ReLU, sigmoid gates, the squeeze-excitation pooling and scale,
and all biases are uncounted, matching the analytic estimate the search side
attaches to the document.

Measure with a batch-one example so counts are per sample.
"""

from __future__ import annotations

import torch
from torch import nn

from .realize import _Sum


def _module_flops(module: nn.Module, inputs, output) -> int:
    if isinstance(module, nn.Conv2d):
        k_h, k_w = module.kernel_size
        per_out = k_h * k_w * module.in_channels // module.groups
        return 2 * per_out * output.numel()
    if isinstance(module, nn.ConvTranspose2d):
        k_h, k_w = module.kernel_size
        x = inputs[0]
        hw_in = x.shape[-2] * x.shape[-1]
        return 2 * k_h * k_w * module.in_channels * module.out_channels \
            * hw_in
    if isinstance(module, nn.Linear):
        return 2 * module.in_features * module.out_features \
            * (output.numel() // module.out_features)
    if isinstance(module, nn.BatchNorm2d):
        return 4 * output.numel()
    if isinstance(module, (nn.AvgPool2d, nn.MaxPool2d)):
        return 4 * output.numel()
    if isinstance(module, _Sum):
        return (len(inputs) - 1) * output.numel()
    return 0


def measure_flops(network: nn.Module, example: torch.Tensor) -> int:
    """Count FLOPs of one forward pass over ``example`` (use batch 1)."""
    total = 0
    handles = []

    def hook(module, inputs, output):
        nonlocal total
        total += _module_flops(module, inputs, output)

    for module in network.modules():
        if next(module.children(), None) is None or isinstance(module, _Sum):
            handles.append(module.register_forward_hook(hook))
    was_training = network.training
    network.eval()
    try:
        with torch.no_grad():
            network(example)
    finally:
        for h in handles:
            h.remove()
        network.train(was_training)
    return int(total)
