"""Turn an exported architecture document into an executable torch network.

The document (format ``mfmo-unet-architecture``, version 1) fully describes a
U-shaped cell network: a stem convolution, downsampling and upsampling cells
made of two-slot nodes, per-cell input adapters and skip concatenations, a
1x1 projection per cell, and an upsampling head. Realization walks the
document once, creates every operator instance exactly once, and builds an
execution plan whose steps both drive the forward pass and report the graph.

Named intermediate tensors follow a fixed canon so the realized graph can be
compared edge-for-edge against the document:

- ``input``, ``stem``, ``output``
- ``{cell}:in{k}``          adapted cell input k (k = 1, 2)
- ``{cell}:cin{k}``         cell input k after the skip concatenation
- ``{cell}:node{i}:slot{j}``  one operator application inside a node
- ``{cell}:node{i}``        the node's slot sum
- ``{cell}:cat``            concatenation of all node outputs
- ``{cell}:out``            the cell's projected output

Each plan step contributes edges ``(source, dest, label)`` where the label is
the operator name (``feed`` for an adapter-free input, ``skip_concat``,
``sum`` and ``concat`` for the structural joins, and ``{pool}+conv_1x1``
when a pooling slot carries a channel adapter).

Every node-slot operator is followed by batch normalization and a ReLU; the
stem, input adapters, pool channel adapters, cell projections and the head
are bare convolutions. Upsampling operators with a native transposed form
(plain and dilated 3x3) use ``ConvTranspose2d``; the separable and
squeeze-excitation upsampling operators and all 1x1 upsampling adapters are
realized as nearest-neighbour x2 upsampling followed by the normal operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

DOCUMENT_FORMAT = "mfmo-unet-architecture"
DOCUMENT_VERSION = 1


class RealizationError(ValueError):
    """The document cannot be realized into a consistent network."""


@dataclass(frozen=True)
class _Step:
    kind: str                     # "module" | "concat" | "alias"
    dest: str
    sources: tuple[str, ...]
    key: str | None               # ModuleDict key when kind == "module"
    label: str
    expect: tuple[int, int, int]  # (channels, height, width) per the document


@dataclass(frozen=True)
class RealizedNetwork:
    """An executable network plus the facts the caller needs to trust it."""

    network: "DocumentNetwork"
    parameter_count: int
    measured_flops: int
    document_flops: int
    edges: frozenset


class _Sum(nn.Module):
    """Elementwise sum of a node's slot outputs (kept as a module so the
    instrumented FLOPs counter can see it)."""

    def forward(self, *xs):
        out = xs[0]
        for x in xs[1:]:
            out = out + x
        return out


class _SqueezeExcite(nn.Module):
    """Channel gate: global average pool, two linear layers, sigmoid scale."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def forward(self, x):
        s = self.pool(x).flatten(1)
        s = torch.sigmoid(self.fc2(torch.relu(self.fc1(s))))
        return x * s[:, :, None, None]


def _bn_act(channels: int) -> nn.Sequential:
    return nn.Sequential(nn.BatchNorm2d(channels), nn.ReLU())


def _upsample() -> nn.Module:
    return nn.Upsample(scale_factor=2, mode="nearest")


def _leaf_op(op: str, c_in: int, c_out: int, stride: int,
             bias: bool) -> nn.Module:
    if op == "identity":
        if stride != 1 or c_in != c_out:
            raise RealizationError(
                f"identity cannot change shape (stride {stride}, "
                f"{c_in}->{c_out} channels)")
        return nn.Identity()
    if op == "conv_3x3":
        return nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=bias)
    if op == "dilated_conv_3x3":
        return nn.Conv2d(c_in, c_out, 3, stride=stride, padding=2,
                         dilation=2, bias=bias)
    if op == "sep_conv_3x3":
        return nn.Sequential(
            nn.Conv2d(c_in, c_in, 3, stride=stride, padding=1,
                      groups=c_in, bias=bias),
            nn.Conv2d(c_in, c_out, 1, bias=bias))
    if op == "se_conv_3x3":
        return nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=bias),
            _SqueezeExcite(c_out))
    if op == "avg_pool_2x2":
        return nn.AvgPool2d(2)
    if op == "max_pool_2x2":
        return nn.MaxPool2d(2)
    if op == "transposed_conv_3x3":
        return nn.ConvTranspose2d(c_in, c_out, 3, stride=2, padding=1,
                                  output_padding=1, bias=bias)
    if op == "transposed_dilated_conv_3x3":
        return nn.ConvTranspose2d(c_in, c_out, 3, stride=2, padding=2,
                                  dilation=2, output_padding=1, bias=bias)
    if op == "transposed_sep_conv_3x3":
        return nn.Sequential(
            _upsample(),
            nn.Conv2d(c_in, c_in, 3, padding=1, groups=c_in, bias=bias),
            nn.Conv2d(c_in, c_out, 1, bias=bias))
    if op == "transposed_se_conv_3x3":
        return nn.Sequential(
            _upsample(),
            nn.Conv2d(c_in, c_out, 3, padding=1, bias=bias),
            _SqueezeExcite(c_out))
    if op == "conv_1x1":
        return nn.Conv2d(c_in, c_out, 1, stride=stride, bias=bias)
    if op == "transposed_conv_1x1":
        return nn.Sequential(_upsample(), nn.Conv2d(c_in, c_out, 1, bias=bias))
    raise RealizationError(f"unknown operator {op!r}")


def _slot_module(slot: dict) -> nn.Module:
    """A node slot: the operator, an optional pool channel adapter, then
    batch normalization and ReLU over the slot's output channels."""
    parts = [_leaf_op(slot["op"], slot["c_in"], slot["c_out"],
                      slot["stride"], bias=False)]
    adapter = slot.get("pool_adapter")
    if adapter is not None:
        parts.append(nn.Conv2d(adapter["c_in"], adapter["c_out"], 1,
                               bias=True))
    parts.append(_bn_act(slot["c_out"]))
    return nn.Sequential(*parts)


def _adapter_module(adapter: dict) -> nn.Module:
    return _leaf_op(adapter["op"], adapter["c_in"], adapter["c_out"],
                    adapter["stride"], bias=True)


class DocumentNetwork(nn.Module):
    """Executes the plan compiled from one architecture document."""

    def __init__(self, document: dict):
        super().__init__()
        if document.get("format") != DOCUMENT_FORMAT or \
                document.get("version") != DOCUMENT_VERSION:
            raise RealizationError(
                f"unsupported document: format "
                f"{document.get('format')!r} version "
                f"{document.get('version')!r} (need {DOCUMENT_FORMAT!r} "
                f"version {DOCUMENT_VERSION})")
        try:
            space = document["space"]
            self.in_channels = int(space["in_channels"])
            self.input_hw = (int(space["height"]), int(space["width"]))
            modules, steps = _compile(document)
        except (KeyError, TypeError, IndexError) as exc:
            raise RealizationError(
                f"malformed architecture document: {exc!r}") from exc
        self.ops = nn.ModuleDict(modules)
        self.steps = steps

    def forward(self, x, validate: bool = False):
        tensors = {"input": x}
        for step in self.steps:
            if step.kind == "module":
                srcs = [tensors[s] for s in step.sources]
                tensors[step.dest] = self.ops[step.key](*srcs)
            elif step.kind == "concat":
                tensors[step.dest] = torch.cat(
                    [tensors[s] for s in step.sources], dim=1)
            else:  # alias
                tensors[step.dest] = tensors[step.sources[0]]
            if validate:
                got = tuple(tensors[step.dest].shape[1:])
                if got != step.expect:
                    join = " + ".join(step.sources)
                    raise RealizationError(
                        f"shape mismatch at {step.dest} "
                        f"({join} -> {step.label}): got "
                        f"{'x'.join(map(str, got))}, document says "
                        f"{'x'.join(map(str, step.expect))}")
        return tensors["output"]

    @property
    def edges(self) -> frozenset:
        return frozenset((src, step.dest, step.label)
                         for step in self.steps for src in step.sources)


def _compile(doc: dict) -> tuple[dict, list[_Step]]:
    modules: dict[str, nn.Module] = {}
    steps: list[_Step] = []

    def add_module_step(key, dest, sources, label, module, expect):
        if key in modules:
            raise RealizationError(f"duplicate operator instance {key!r}")
        modules[key] = module
        steps.append(_Step("module", dest, tuple(sources), key, label,
                           tuple(int(v) for v in expect)))

    stem = doc["stem"]
    add_module_step(
        "stem", "stem", ("input",), stem["op"],
        _leaf_op(stem["op"], stem["c_in"], stem["c_out"], 1, bias=True),
        (stem["c_out"], stem["h_out"], stem["w_out"]))
    out_tensor = {"stem": "stem"}

    for cell in doc["cells"]:
        name = cell["name"]
        in_shape = (cell["c_input"], cell["h_in"], cell["w_in"])
        cin_shape = (cell["c_input_effective"], cell["h_in"], cell["w_in"])
        out_shape = (cell["width"], cell["h_out"], cell["w_out"])
        cin: dict[int, str] = {}
        for inp in cell["inputs"]:
            k = inp["slot"]
            src = out_tensor[inp["source"]]
            dest = f"{name}:in{k}"
            adapter = inp["adapter"]
            if adapter is None:
                steps.append(_Step("alias", dest, (src,), None, "feed",
                                   in_shape))
            else:
                add_module_step(f"{name}/in{k}", dest, (src,), adapter["op"],
                                _adapter_module(adapter),
                                (adapter["c_out"], adapter["h_out"],
                                 adapter["w_out"]))
            cin[k] = dest
        if cell["skip"] is not None:
            skip_src = out_tensor[cell["skip"]["source"]]
            for k in (1, 2):
                dest = f"{name}:cin{k}"
                steps.append(_Step("concat", dest, (cin[k], skip_src), None,
                                   "skip_concat", cin_shape))
                cin[k] = dest
        for node in cell["nodes"]:
            i = node["index"]
            slot_tensors = []
            for j, slot in enumerate(node["slots"], start=1):
                pred = slot["pred"]
                src = cin[pred] if pred <= 2 else f"{name}:node{pred - 2}"
                label = slot["op"]
                if slot.get("pool_adapter") is not None:
                    label += "+conv_1x1"
                dest = f"{name}:node{i}:slot{j}"
                add_module_step(f"{name}/node{i}/slot{j}", dest, (src,),
                                label, _slot_module(slot),
                                (slot["c_out"], slot["h_out"],
                                 slot["w_out"]))
                slot_tensors.append(dest)
            add_module_step(f"{name}/node{i}/sum", f"{name}:node{i}",
                            slot_tensors, "sum", _Sum(), out_shape)
        node_tensors = [f"{name}:node{n['index']}" for n in cell["nodes"]]
        proj = cell["projection"]
        steps.append(_Step("concat", f"{name}:cat", tuple(node_tensors),
                           None, "concat",
                           (proj["c_in"], proj["h_out"], proj["w_out"])))
        add_module_step(f"{name}/projection", f"{name}:out",
                        (f"{name}:cat",), proj["op"],
                        _leaf_op(proj["op"], proj["c_in"], proj["c_out"], 1,
                                 bias=True),
                        (proj["c_out"], proj["h_out"], proj["w_out"]))
        out_tensor[name] = f"{name}:out"

    head = doc["head"]
    last = doc["cells"][-1]["name"] if doc["cells"] else "stem"
    add_module_step("head", "output", (out_tensor[last],), head["op"],
                    _leaf_op(head["op"], head["c_in"], head["c_out"], 1,
                             bias=True),
                    (head["c_out"], head["h_out"], head["w_out"]))
    return modules, steps


def realize(document: dict) -> RealizedNetwork:
    """Build the network, dry-run it with shape validation, and measure it.

    Raises :class:`RealizationError` when the document is malformed or a
    realized shape disagrees with the document (the error names the edge).
    """
    from .flops import measure_flops

    net = DocumentNetwork(document)
    h, w = net.input_hw
    example = torch.zeros(1, net.in_channels, h, w)
    net.eval()
    with torch.no_grad():
        net(example, validate=True)
    measured = measure_flops(net, example)
    return RealizedNetwork(
        network=net,
        parameter_count=sum(p.numel() for p in net.parameters()),
        measured_flops=measured,
        document_flops=int(document.get("flops", {}).get("total", 0)),
        edges=net.edges)
