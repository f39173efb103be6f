"""Real-vector encoding of generalized U-Net cell architectures.

Each cell is a small DAG of ``n_nodes`` nodes. A node has two input slots;
each slot picks a predecessor (1/2 = the cell's two inputs, 3+ = an earlier
node) and an operator. One real value encodes both choices: the integer part
selects the predecessor, the fractional part indexes the operator table that
the predecessor kind dictates (scale-changing table for cell inputs, normal
table for node inputs).

Assembly expands shared cell graphs into a typed network: a stem convolution,
``n_down`` downsampling cells that double width and halve resolution, then
``n_up = n_down - 1`` upsampling cells that mirror this and concatenate a
skip from the down cell at their input resolution, then a final 1x1
transposed projection back to full resolution. FLOPs are estimated
analytically per operator instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-6

DOWNSAMPLING_OPS = ("se_conv_3x3", "dilated_conv_3x3", "sep_conv_3x3",
                    "conv_3x3", "avg_pool_2x2", "max_pool_2x2")
UPSAMPLING_OPS = ("transposed_se_conv_3x3", "transposed_dilated_conv_3x3",
                  "transposed_sep_conv_3x3", "transposed_conv_3x3")
NORMAL_OPS = ("identity", "se_conv_3x3", "dilated_conv_3x3", "sep_conv_3x3",
              "conv_3x3")

OPERATOR_TABLES = {
    "downsampling": DOWNSAMPLING_OPS,
    "upsampling": UPSAMPLING_OPS,
    "normal": NORMAL_OPS,
}

_POOL_OPS = frozenset({"avg_pool_2x2", "max_pool_2x2"})


@dataclass(frozen=True)
class SlotChoice:
    pred: int       # 1-based: 1-2 cell inputs, 3+ earlier nodes
    op_index: int   # 1-based index into the applicable table
    op: str
    op_set: str


@dataclass(frozen=True)
class NodeChoice:
    slots: tuple[SlotChoice, SlotChoice]


@dataclass(frozen=True)
class CellGraph:
    kind: str  # "down" | "up"
    nodes: tuple[NodeChoice, ...]


@dataclass(frozen=True)
class SpaceConfig:
    n_down: int = 6
    n_up: int = 5
    n_nodes: int = 3
    shared_cells: bool = True
    base_width: int = 16
    in_channels: int = 1
    out_channels: int = 1
    height: int = 128
    width: int = 128

    def __post_init__(self):
        if self.n_down < 1:
            raise ValueError("need at least one downsampling cell")
        if self.n_up != self.n_down - 1:
            raise ValueError(
                "the U shape needs exactly one fewer up cell than down cells "
                f"(got {self.n_down} down, {self.n_up} up)")
        if self.n_nodes < 1:
            raise ValueError("cells need at least one node")
        if min(self.base_width, self.in_channels, self.out_channels) < 1:
            raise ValueError("channel counts must be positive")

    @property
    def cell_multiplicity(self) -> int:
        """Number of independently encoded cell graphs."""
        return 2 if self.shared_cells else self.n_down + self.n_up

    def to_dict(self) -> dict:
        return {
            "n_down": self.n_down, "n_up": self.n_up,
            "n_nodes": self.n_nodes, "shared_cells": self.shared_cells,
            "base_width": self.base_width, "in_channels": self.in_channels,
            "out_channels": self.out_channels, "height": self.height,
            "width": self.width,
        }


def _cell_block_names(config: SpaceConfig) -> list[tuple[str, str]]:
    """(block label, kind) per encoded cell graph, in vector order."""
    if config.shared_cells:
        return [("down", "down"), ("up", "up")]
    names = [(f"down{k}", "down") for k in range(1, config.n_down + 1)]
    names += [(f"up{j}", "up") for j in range(1, config.n_up + 1)]
    return names


def schema(config: SpaceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of the continuous encoding, two values per node per graph.

    Node i (counting cell inputs as positions 1-2, so nodes occupy
    3..n_nodes+2) contributes two coordinates bounded by [1, i - eps].
    """
    lower, upper = [], []
    for _label, _kind in _cell_block_names(config):
        for i in range(3, config.n_nodes + 3):
            lower += [1.0, 1.0]
            upper += [i - EPS, i - EPS]
    return np.array(lower), np.array(upper)


def schema_labels(config: SpaceConfig) -> list[str]:
    labels = []
    for label, _kind in _cell_block_names(config):
        for i in range(3, config.n_nodes + 3):
            labels += [f"{label}:node{i}:slot1", f"{label}:node{i}:slot2"]
    return labels


def discrete_schema(config: SpaceConfig) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of the index-pair encoding: four integers per node per graph."""
    lower, upper = [], []
    for _label, kind in _cell_block_names(config):
        scale_ops = len(OPERATOR_TABLES["downsampling" if kind == "down"
                                        else "upsampling"])
        for i in range(3, config.n_nodes + 3):
            op_hi = scale_ops if i == 3 else max(scale_ops, len(NORMAL_OPS))
            lower += [1, 1, 1, 1]
            upper += [i - 1, op_hi, i - 1, op_hi]
    return np.array(lower, dtype=np.int64), np.array(upper, dtype=np.int64)


def _slot_table(pred: int, kind: str) -> tuple[str, tuple[str, ...]]:
    if pred <= 2:
        name = "downsampling" if kind == "down" else "upsampling"
    else:
        name = "normal"
    return name, OPERATOR_TABLES[name]


def _decode_slot_value(v: float, node_pos: int, kind: str) -> SlotChoice:
    if not (1.0 <= v < node_pos):
        raise ValueError(
            f"value {v!r} outside [1, {node_pos} - eps) for node {node_pos}")
    pred = min(int(math.floor(v)), node_pos - 1)
    frac = v - math.floor(v)
    set_name, table = _slot_table(pred, kind)
    op_index = min(int(math.floor(frac * len(table))) + 1, len(table))
    return SlotChoice(pred, op_index, table[op_index - 1], set_name)


def decode_continuous(values: np.ndarray, kind: str) -> CellGraph:
    """Decode one cell's slice of the continuous vector into a CellGraph."""
    if kind not in ("down", "up"):
        raise ValueError(f"kind must be 'down' or 'up', got {kind!r}")
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size % 2:
        raise ValueError("cell vectors hold two values per node")
    n_nodes = values.size // 2
    nodes = []
    for ni in range(n_nodes):
        i = ni + 3
        s1 = _decode_slot_value(float(values[2 * ni]), i, kind)
        s2 = _decode_slot_value(float(values[2 * ni + 1]), i, kind)
        nodes.append(NodeChoice((s1, s2)))
    return CellGraph(kind, tuple(nodes))


def decode_discrete(values: np.ndarray, kind: str) -> CellGraph:
    """Decode index 4-tuples [pred1, op1, pred2, op2] per node, strictly."""
    if kind not in ("down", "up"):
        raise ValueError(f"kind must be 'down' or 'up', got {kind!r}")
    values = np.asarray(values).ravel()
    if values.size % 4:
        raise ValueError("discrete cell vectors hold four values per node")
    if not np.all(values == np.floor(values)):
        raise ValueError("discrete encoding requires integer values")
    values = values.astype(np.int64)
    nodes = []
    for ni in range(values.size // 4):
        i = ni + 3
        slots = []
        for si in range(2):
            pred = int(values[4 * ni + 2 * si])
            op = int(values[4 * ni + 2 * si + 1])
            if not 1 <= pred <= i - 1:
                raise ValueError(
                    f"node {i} slot {si + 1}: predecessor {pred} must be in "
                    f"[1, {i - 1}]")
            set_name, table = _slot_table(pred, kind)
            if not 1 <= op <= len(table):
                raise ValueError(
                    f"node {i} slot {si + 1}: operator index {op} outside "
                    f"[1, {len(table)}] for the {set_name} set")
            slots.append(SlotChoice(pred, op, table[op - 1], set_name))
        nodes.append(NodeChoice(tuple(slots)))
    return CellGraph(kind, tuple(nodes))


def encode_discrete(graph: CellGraph) -> np.ndarray:
    out = []
    for node in graph.nodes:
        for slot in node.slots:
            out += [slot.pred, slot.op_index]
    return np.array(out, dtype=np.int64)


def decode(config: SpaceConfig,
           vector: np.ndarray) -> tuple[list[CellGraph], list[CellGraph]]:
    """Decode a full continuous vector into per-cell graphs."""
    vector = np.asarray(vector, dtype=np.float64).ravel()
    lower, _upper = schema(config)
    if vector.size != lower.size:
        raise ValueError(
            f"vector has {vector.size} values, schema needs {lower.size}")
    per = 2 * config.n_nodes
    graphs = []
    for b, (_label, kind) in enumerate(_cell_block_names(config)):
        graphs.append(decode_continuous(vector[b * per:(b + 1) * per], kind))
    if config.shared_cells:
        return [graphs[0]] * config.n_down, [graphs[1]] * config.n_up
    return graphs[:config.n_down], graphs[config.n_down:]


def decode_rounded(config: SpaceConfig,
                   vector: np.ndarray) -> tuple[list[CellGraph], list[CellGraph]]:
    """Round-and-clamp decode of a relaxed discrete vector (ablation path)."""
    vector = np.rint(np.asarray(vector, dtype=np.float64)).astype(np.int64)
    lower, upper = discrete_schema(config)
    if vector.size != lower.size:
        raise ValueError(
            f"vector has {vector.size} values, schema needs {lower.size}")
    vector = np.clip(vector, lower, upper)
    per = 4 * config.n_nodes
    graphs = []
    for b, (_label, kind) in enumerate(_cell_block_names(config)):
        chunk = vector[b * per:(b + 1) * per].copy()
        for ni in range(config.n_nodes):
            for si in range(2):
                pred = chunk[4 * ni + 2 * si]
                _name, table = _slot_table(int(pred), kind)
                j = 4 * ni + 2 * si + 1
                chunk[j] = min(int(chunk[j]), len(table))
        graphs.append(decode_discrete(chunk, kind))
    if config.shared_cells:
        return [graphs[0]] * config.n_down, [graphs[1]] * config.n_up
    return graphs[:config.n_down], graphs[config.n_down:]


# ---------------------------------------------------------------------------
# assembly and FLOPs

def op_flops(op: str, c_in: int, c_out: int, h_out: int, w_out: int) -> int:
    """Analytic cost of one operator instance (1 multiply-accumulate = 2).

    A stride-2 transposed 3x3 convolution (plain or dilated) slides its
    kernel over the *input* grid, which holds a quarter of the output
    pixels, so those two rows are counted at input resolution.  The
    separable and squeeze-excitation upsampling operators are realized as
    nearest-neighbour upsampling followed by the normal operator, so they
    keep the full output-resolution count.
    """
    hw = h_out * w_out
    if op == "identity":
        return 0
    if op in ("conv_3x3", "dilated_conv_3x3"):
        return 2 * 9 * c_in * c_out * hw
    if op in ("transposed_conv_3x3", "transposed_dilated_conv_3x3"):
        return 2 * 9 * c_in * c_out * (hw // 4)
    if op in ("sep_conv_3x3", "transposed_sep_conv_3x3"):
        return 2 * (9 * c_in + c_in * c_out) * hw
    if op in ("se_conv_3x3", "transposed_se_conv_3x3"):
        return 2 * 9 * c_in * c_out * hw + 4 * c_out * c_out // 16
    if op in _POOL_OPS:
        return 4 * hw * c_in
    if op in ("conv_1x1", "transposed_conv_1x1"):
        return 2 * c_in * c_out * hw
    raise ValueError(f"unknown operator {op!r}")


def _bn_act_flops(c: int, h: int, w: int) -> int:
    return 4 * h * w * c


@dataclass(frozen=True)
class FlopsEstimate:
    total: int
    per_cell: dict


@dataclass(frozen=True)
class ArchitectureSpec:
    config: SpaceConfig
    down_graphs: tuple[CellGraph, ...]
    up_graphs: tuple[CellGraph, ...]
    stem: dict
    cells: tuple[dict, ...]
    head: dict


def _instance(op, source, c_in, c_out, h_out, w_out, stride, pred=None,
              op_set=None, pool_adapter=None, counted_bn=True) -> dict:
    inst = {
        "op": op, "source": source, "c_in": c_in, "c_out": c_out,
        "h_out": h_out, "w_out": w_out, "stride": stride,
        "op_flops": op_flops(op, c_in,
                             c_in if op in _POOL_OPS else c_out,
                             h_out, w_out),
        "bn_act_flops": _bn_act_flops(c_out, h_out, w_out) if counted_bn else 0,
    }
    if pred is not None:
        inst["pred"] = pred
        inst["op_set"] = op_set
    if op in _POOL_OPS:
        inst["pool_adapter"] = pool_adapter
        if pool_adapter is not None:
            inst["op_flops"] += pool_adapter["flops"]
    return inst


def assemble_architecture(down, up, config: SpaceConfig) -> ArchitectureSpec:
    """Expand cell graphs into a fully typed network description.

    ``down``/``up`` may each be a single shared CellGraph or a per-cell list.
    Raises on resolution underflow (the input must survive n_down halvings).
    """
    cfg = config
    steps = 2 ** cfg.n_down
    if cfg.height % steps or cfg.width % steps or min(
            cfg.height, cfg.width) // steps < 1:
        raise ValueError(
            f"input {cfg.height}x{cfg.width} cannot be halved {cfg.n_down} "
            f"times; the minimum resolution is {steps}x{steps} (and each side "
            f"must be divisible by {steps})")
    down_graphs = list(down) if isinstance(down, (list, tuple)) else \
        [down] * cfg.n_down
    up_graphs = list(up) if isinstance(up, (list, tuple)) else \
        [up] * cfg.n_up
    if len(down_graphs) != cfg.n_down or len(up_graphs) != cfg.n_up:
        raise ValueError("one cell graph per cell required")
    if any(g.kind != "down" for g in down_graphs) or any(
            g.kind != "up" for g in up_graphs):
        raise ValueError("cell graph kinds do not match their positions")

    c0 = cfg.base_width
    h, w = cfg.height, cfg.width
    stem = {"op": "conv_3x3", "c_in": cfg.in_channels, "c_out": c0,
            "h_out": h, "w_out": w,
            "flops": op_flops("conv_3x3", cfg.in_channels, c0, h, w)}
    outputs: dict[str, tuple[int, int, int]] = {"stem": (c0, h, w)}
    cells: list[dict] = []

    def normalizer(src: str, c_target: int, h_target: int, w_target: int,
                   transposed: bool) -> dict | None:
        c_src, h_src, w_src = outputs[src]
        if (c_src, h_src, w_src) == (c_target, h_target, w_target):
            return None
        op = "transposed_conv_1x1" if transposed else "conv_1x1"
        expect = h_src * 2 if transposed else h_src // 2
        if expect != h_target:
            raise ValueError(
                f"cannot normalize {src} ({h_src}px) to {h_target}px")
        return {"op": op, "c_in": c_src, "c_out": c_target,
                "h_out": h_target, "w_out": w_target, "stride": 2,
                "flops": op_flops(op, c_src, c_target, h_target, w_target)}

    def build_cell(name, kind, graph, width, c_inp, h_in, w_in, h_out, w_out,
                   sources, skip_src):
        inputs = []
        for slot, src in enumerate(sources, start=1):
            adapter = normalizer(src, c_inp, h_in, w_in, transposed=(
                kind == "up"))
            inputs.append({"slot": slot, "source": src, "adapter": adapter})
        skip = None
        c_eff = c_inp
        if skip_src is not None:
            c_skip, h_skip, w_skip = outputs[skip_src]
            if (c_skip, h_skip, w_skip) != (c_inp, h_in, w_in):
                raise ValueError(
                    f"skip {skip_src} does not match {name}'s input shape")
            skip = {"source": skip_src, "c": c_skip, "h": h_skip, "w": w_skip}
            c_eff = 2 * c_inp
        nodes = []
        for ni, node in enumerate(graph.nodes, start=1):
            slots = []
            for si, choice in enumerate(node.slots, start=1):
                if choice.pred <= 2:
                    src_ref = f"cell_input_{choice.pred}"
                    c_in = c_eff
                    pool_adapter = None
                    if choice.op in _POOL_OPS and c_in != width:
                        pool_adapter = {
                            "op": "conv_1x1", "c_in": c_in, "c_out": width,
                            "h_out": h_out, "w_out": w_out,
                            "flops": op_flops("conv_1x1", c_in, width,
                                              h_out, w_out)}
                    slots.append(_instance(
                        choice.op, src_ref, c_in, width, h_out, w_out,
                        stride=2, pred=choice.pred, op_set=choice.op_set,
                        pool_adapter=pool_adapter))
                else:
                    src_ref = f"node{choice.pred - 2}"
                    slots.append(_instance(
                        choice.op, src_ref, width, width, h_out, w_out,
                        stride=1, pred=choice.pred, op_set=choice.op_set))
            nodes.append({"index": ni, "slots": slots,
                          "add_flops": h_out * w_out * width})
        n_cat = len(graph.nodes) * width
        projection = {
            "op": "conv_1x1", "c_in": n_cat, "c_out": width,
            "h_out": h_out, "w_out": w_out,
            "flops": op_flops("conv_1x1", n_cat, width, h_out, w_out)}
        cell = {"name": name, "kind": kind, "width": width,
                "c_input": c_inp, "c_input_effective": c_eff,
                "h_in": h_in, "w_in": w_in, "h_out": h_out, "w_out": w_out,
                "inputs": inputs, "skip": skip, "nodes": nodes,
                "projection": projection}
        outputs[name] = (width, h_out, w_out)
        return cell

    for k in range(1, cfg.n_down + 1):
        width = c0 * 2 ** (k - 1)
        c_inp = c0 if k == 1 else c0 * 2 ** (k - 2)
        h_in, w_in = h // 2 ** (k - 1), w // 2 ** (k - 1)
        s1 = "stem" if k <= 2 else f"down{k - 2}"
        s2 = "stem" if k == 1 else f"down{k - 1}"
        cells.append(build_cell(
            f"down{k}", "down", down_graphs[k - 1], width, c_inp,
            h_in, w_in, h_in // 2, w_in // 2, (s1, s2), None))
    for j in range(1, cfg.n_up + 1):
        width = c0 * 2 ** (cfg.n_down - 1 - j)
        c_inp = c0 * 2 ** (cfg.n_down - j)
        h_in, w_in = h // 2 ** (cfg.n_down - j + 1), w // 2 ** (cfg.n_down - j + 1)
        s1 = f"down{cfg.n_down}" if j <= 2 else f"up{j - 2}"
        s2 = f"down{cfg.n_down}" if j == 1 else f"up{j - 1}"
        cells.append(build_cell(
            f"up{j}", "up", up_graphs[j - 1], width, c_inp,
            h_in, w_in, h_in * 2, w_in * 2, (s1, s2),
            skip_src=f"down{cfg.n_down + 1 - j}"))

    c_last = outputs[f"up{cfg.n_up}"][0] if cfg.n_up else outputs[
        f"down{cfg.n_down}"][0]
    head = {"op": "transposed_conv_1x1", "c_in": c_last,
            "c_out": cfg.out_channels, "h_out": h, "w_out": w,
            "flops": op_flops("transposed_conv_1x1", c_last,
                              cfg.out_channels, h, w)}
    return ArchitectureSpec(cfg, tuple(down_graphs), tuple(up_graphs),
                            stem, tuple(cells), head)


def _cell_flops(cell: dict) -> int:
    total = 0
    for inp in cell["inputs"]:
        if inp["adapter"] is not None:
            total += inp["adapter"]["flops"]
    for node in cell["nodes"]:
        for slot in node["slots"]:
            total += slot["op_flops"] + slot["bn_act_flops"]
        total += node["add_flops"]
    total += cell["projection"]["flops"]
    return total


def estimate_flops(spec: ArchitectureSpec) -> FlopsEstimate:
    per_cell = {"stem": spec.stem["flops"]}
    for cell in spec.cells:
        per_cell[cell["name"]] = _cell_flops(cell)
    per_cell["head"] = spec.head["flops"]
    return FlopsEstimate(sum(per_cell.values()), per_cell)


def export_architecture(spec: ArchitectureSpec,
                        genotype: dict | None = None) -> dict:
    """JSON-ready document consumed by external trainers."""
    flops = estimate_flops(spec)
    doc = {
        "format": "mfmo-unet-architecture",
        "version": 1,
        "space": spec.config.to_dict(),
        "operator_tables": {k: list(v) for k, v in OPERATOR_TABLES.items()},
        "stem": spec.stem,
        "cells": list(spec.cells),
        "head": spec.head,
        "flops": {"total": flops.total, "per_cell": flops.per_cell},
    }
    if genotype is not None:
        doc["genotype"] = genotype
    return doc


def architecture_from_vector(config: SpaceConfig, vector: np.ndarray,
                             encoding: str = "continuous") -> dict:
    """Decode, assemble and export in one step."""
    if encoding == "continuous":
        down_graphs, up_graphs = decode(config, vector)
    elif encoding == "discrete":
        down_graphs, up_graphs = decode_rounded(config, vector)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    spec = assemble_architecture(down_graphs, up_graphs, config)
    genotype = {"encoding": encoding,
                "vector": [float(v) for v in np.asarray(vector).ravel()]}
    return export_architecture(spec, genotype)
