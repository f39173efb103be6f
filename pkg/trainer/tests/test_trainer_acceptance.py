"""Acceptance gate for the trainer package: one test per stated criterion.

Architecture documents come exclusively from the search package's CLI, and
the search loop drives this trainer only through the newline-delimited JSON
protocol — the two packages meet at their external interfaces and nowhere
else.
"""

import json
import subprocess
import sys

import numpy as np
import pytest
import torch
from trainer_helpers import SMALL_SPACE, decode_document

from unet_trainer import TrainConfig, diffusion_dataset, realize, \
    train_and_score

N_RANDOM = 20
DEFAULT_SPACE_NODES = 3


def random_vector(rng, n_nodes):
    """Sample a genotype: per block and node position, two slot values
    uniform over [1, position)."""
    values = []
    for _block in ("down", "up"):
        for position in range(3, 3 + n_nodes):
            values.extend(rng.uniform(1.0, position - 1e-6, size=2))
    return [float(v) for v in values]


@pytest.fixture(scope="module")
def realization_report():
    """Decode 20 random full-space genotypes, realize each, run a forward
    pass, and record shapes plus both FLOPs figures."""
    rng = np.random.default_rng(20)
    report = []
    torch.manual_seed(0)
    for _ in range(N_RANDOM):
        doc = decode_document(random_vector(rng, DEFAULT_SPACE_NODES))
        realized = realize(doc)
        space = doc["space"]
        x = torch.zeros(1, space["in_channels"], space["height"],
                        space["width"])
        with torch.no_grad():
            got = tuple(realized.network(x).shape)
        report.append({
            "got": got,
            "want": (1, space["out_channels"], space["height"],
                     space["width"]),
            "measured": realized.measured_flops,
            "estimate": doc["flops"]["total"],
        })
        del realized
    return report


def test_secondary_twenty_random_architectures_forward_cleanly(
        realization_report):
    assert len(realization_report) == N_RANDOM
    mismatched = [entry for entry in realization_report
                  if entry["got"] != entry["want"]]
    assert mismatched == []


def test_secondary_instrumented_flops_within_ten_percent_of_estimate(
        realization_report):
    for entry in realization_report:
        assert abs(entry["measured"] - entry["estimate"]) <= \
            0.10 * entry["estimate"], entry


def test_secondary_high_fidelity_beats_low_fidelity_in_paired_trials(
        tmp_path):
    data = diffusion_dataset()
    config = TrainConfig()
    rng = np.random.default_rng(7)
    wins = 0
    margins = []
    for trial in range(10):
        doc = decode_document(
            random_vector(rng, SMALL_SPACE["n_nodes"]), SMALL_SPACE,
            tmp_path)
        scores = {}
        for fidelity in ("HF", "LF"):
            # identical initial weights within a trial: only epochs differ
            torch.manual_seed(trial)
            network = realize(doc).network
            scores[fidelity] = train_and_score(network, data, fidelity,
                                               config)
        wins += scores["HF"] <= scores["LF"]
        margins.append(scores["LF"] - scores["HF"])
    assert wins >= 8, f"HF won only {wins}/10 paired trials: {margins}"


def test_secondary_mini_nas_completes_with_nonempty_front(tmp_path):
    sidecar = tmp_path / "trainer.json"
    sidecar.write_text(json.dumps({
        "dataset": {"name": "diffusion", "n_samples": 200, "size": 32,
                    "seed": 0},
        "epochs": {"HF": 25, "LF": 5},
    }))
    search_config = {
        "problem": "unet-nas",
        "problem_args": {"space_config": {"n_down": 3, "n_up": 2,
                                          "base_width": 8,
                                          "height": 32, "width": 32}},
        "nfe_max_hf": 12, "nfe_max_lf": 24, "n_s_hf": 6, "n_s_lf": 12,
        "n_p": 8, "n_near": 6, "fit_pop": 8, "fit_gens": 6,
        "fit_warm_gens": 3, "ei_pop": 12, "ei_gens": 6, "lhd_restarts": 3,
        "seed": 5,
        "evaluator": {
            "command": f"{sys.executable} -m unet_trainer "
                       f"--config {sidecar}",
        },
    }
    config_path = tmp_path / "nas.json"
    config_path.write_text(json.dumps(search_config))
    out_dir = tmp_path / "run"
    proc = subprocess.run(
        [sys.executable, "-m", "mfmo.cli", "run", "--config",
         str(config_path), "--out", str(out_dir)],
        capture_output=True, text=True, timeout=1500,
    )
    assert proc.returncode == 0, proc.stderr

    report = json.loads((out_dir / "report.json").read_text())
    assert report["completed"] is True
    assert report["counts"]["HF"] <= 12
    assert report["pareto_size"] >= 1

    front_lines = (out_dir / "front.csv").read_text().strip().splitlines()
    assert len(front_lines) >= 2  # header plus at least one point
