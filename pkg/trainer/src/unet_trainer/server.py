"""NDJSON evaluator server for the search side.

Protocol (one JSON object per line):

- on start the server prints a handshake
  ``{"protocol": "mfmo-eval", "version": 1, "fidelities": ["LF", "HF"]}``
- each request line ``{"id", "fidelity", "x", "architecture"}`` is answered
  by exactly one response line with the same id:
  ``{"id", "status": "ok", "f1": <validation RMSE>, "f2": <measured GFLOPs>}``
  or ``{"id", "status": "error", "message": ...}``.

Requests are served strictly one at a time — one training job per process;
the search side's ``max_inflight`` decides how many processes to keep busy.
A JSON sidecar (``--config``) sets the dataset and the fidelity-to-epochs
mapping; every request reseeds torch from the configured seed, so identical
requests return identical scores.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import torch

from .data import load_dataset
from .realize import realize
from .training import DEFAULT_EPOCHS, TrainConfig, train_and_score

PROTOCOL_NAME = "mfmo-eval"
PROTOCOL_VERSION = 1

DEFAULT_CONFIG = {
    "dataset": {"name": "diffusion", "n_samples": 200, "size": 32, "seed": 0},
    "epochs": dict(DEFAULT_EPOCHS),
    "learning_rate": 1e-3,
    "batch_size": 16,
    "seed": 0,
}


def load_config(path: str | None) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise ValueError("sidecar config must be a JSON object")
        unknown = set(overrides) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValueError(
                f"unknown sidecar keys {sorted(unknown)}; valid: "
                f"{sorted(DEFAULT_CONFIG)}")
        for key, value in overrides.items():
            if key == "dataset":
                config["dataset"] = dict(value)
            elif key == "epochs":
                config["epochs"] = {str(k): int(v)
                                    for k, v in dict(value).items()}
            else:
                config[key] = value
    return config


def _score_request(request: dict, data, config: dict) -> dict:
    document = request.get("architecture")
    if document is None:
        raise ValueError("request carries no architecture document")
    fidelity = request.get("fidelity")
    torch.manual_seed(int(config["seed"]))
    realized = realize(document)
    space = document.get("space", {})
    x_channels, y_channels = data.channels
    if (int(space.get("in_channels", x_channels)) != x_channels
            or int(space.get("out_channels", y_channels)) != y_channels):
        raise ValueError(
            f"document wants {space.get('in_channels')}->"
            f"{space.get('out_channels')} channels but the dataset provides "
            f"{x_channels}->{y_channels}")
    rmse = train_and_score(
        realized.network, data, fidelity,
        TrainConfig(epochs_by_fidelity=config["epochs"],
                    learning_rate=float(config["learning_rate"]),
                    batch_size=int(config["batch_size"]),
                    seed=int(config["seed"])))
    return {"id": request["id"], "status": "ok", "f1": rmse,
            "f2": realized.measured_flops / 1e9}


def serve(config: dict, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    data = load_dataset(config["dataset"])
    handshake = {"protocol": PROTOCOL_NAME, "version": PROTOCOL_VERSION,
                 "fidelities": sorted(config["epochs"])}
    stdout.write(json.dumps(handshake) + "\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        request_id = None
        started = time.monotonic()
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request line is not a JSON object")
            request_id = request.get("id")
            response = _score_request(request, data, config)
        except Exception as exc:  # any failure becomes an error response
            response = {"id": request_id, "status": "error",
                        "message": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
        status = response["status"]
        note = f"f1={response['f1']:.5f}" if status == "ok" else \
            response["message"]
        print(f"served id={request_id} status={status} "
              f"({time.monotonic() - started:.1f}s) {note}", file=stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="unet-trainer",
        description="serve architecture training scores over NDJSON")
    parser.add_argument("--config", help="JSON sidecar: dataset, epochs "
                        "per fidelity, optimizer settings, seed")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return serve(config)


if __name__ == "__main__":
    sys.exit(main())
