"""Evaluation server: configuration, protocol framing, subprocess behavior."""

import io
import json
import subprocess
import sys

import pytest
from trainer_helpers import TINY_SPACE, TINY_VECTOR, decode_document

from unet_trainer.server import DEFAULT_CONFIG, load_config, main, serve


def write_config(tmp_path, overrides):
    path = tmp_path / "trainer.json"
    path.write_text(json.dumps(overrides))
    return str(path)


def test_load_config_defaults_and_overrides(tmp_path):
    assert load_config(None) == DEFAULT_CONFIG

    path = write_config(tmp_path, {"epochs": {"LF": 1, "HF": 2}, "seed": 9})
    config = load_config(path)
    assert config["epochs"] == {"LF": 1, "HF": 2}
    assert config["seed"] == 9
    assert config["dataset"] == DEFAULT_CONFIG["dataset"]
    # defaults must not be mutated by the merge
    assert DEFAULT_CONFIG["seed"] == 0


def test_load_config_rejects_unknown_keys_and_non_objects(tmp_path):
    with pytest.raises(ValueError, match="unknown sidecar keys"):
        load_config(write_config(tmp_path, {"epoch": {"LF": 1}}))
    with pytest.raises(ValueError, match="must be a JSON object"):
        load_config(write_config(tmp_path, [1, 2, 3]))


def test_main_reports_config_errors_on_stderr(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "absent.json")]) == 2
    assert "config error:" in capsys.readouterr().err


def fast_config(tmp_path):
    return {
        "dataset": {"name": "diffusion", "n_samples": 16, "size": 16,
                    "seed": 1},
        "epochs": {"LF": 1, "HF": 2},
        "batch_size": 8,
    }


def test_serve_handshake_scoring_and_errors(tmp_path, tiny_doc):
    config = load_config(write_config(tmp_path, fast_config(tmp_path)))
    requests = [
        {"id": "a1", "fidelity": "LF", "x": list(tiny_doc["genotype"]["vector"]),
         "architecture": tiny_doc},
        {"id": "a2", "fidelity": "warp", "x": [], "architecture": tiny_doc},
        {"id": "a3", "fidelity": "LF", "x": []},
    ]
    stdin = io.StringIO("\n".join(json.dumps(r) for r in requests) + "\n\n")
    stdout, stderr = io.StringIO(), io.StringIO()
    assert serve(config, stdin, stdout, stderr) == 0

    lines = [json.loads(line) for line in stdout.getvalue().splitlines()]
    handshake, ok, bad_fidelity, missing = lines
    assert handshake == {"protocol": "mfmo-eval", "version": 1,
                         "fidelities": ["HF", "LF"]}
    assert ok["id"] == "a1" and ok["status"] == "ok"
    assert ok["f1"] > 0.0 and ok["f2"] > 0.0
    assert bad_fidelity == {"id": "a2", "status": "error",
                            "message": bad_fidelity["message"]}
    assert "unknown fidelity" in bad_fidelity["message"]
    assert missing["id"] == "a3" and missing["status"] == "error"
    assert "architecture" in missing["message"]
    assert "served id=a1 status=ok" in stderr.getvalue()


def test_server_subprocess_protocol_round_trip(tmp_path):
    doc = decode_document(TINY_VECTOR, TINY_SPACE, tmp_path)
    config_path = write_config(tmp_path, fast_config(tmp_path))
    proc = subprocess.Popen(
        [sys.executable, "-m", "unet_trainer", "--config", config_path],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        stderr=subprocess.PIPE, text=True, bufsize=1,
    )
    try:
        handshake = json.loads(proc.stdout.readline())
        assert handshake["protocol"] == "mfmo-eval"
        assert handshake["version"] == 1
        assert sorted(handshake["fidelities"]) == ["HF", "LF"]

        proc.stdin.write("this is not json\n")
        request = {"id": "r1", "fidelity": "LF",
                   "x": list(doc["genotype"]["vector"]), "architecture": doc}
        proc.stdin.write(json.dumps(request) + "\n")
        proc.stdin.flush()

        garbled = json.loads(proc.stdout.readline())
        assert garbled["status"] == "error"

        answer = json.loads(proc.stdout.readline())
        assert answer["id"] == "r1" and answer["status"] == "ok"
        assert answer["f1"] > 0.0
        assert answer["f2"] == pytest.approx(doc["flops"]["total"] / 1e9,
                                             rel=0.10)
    finally:
        proc.stdin.close()
        err = proc.stderr.read()
        proc.wait(timeout=120)
        proc.stdout.close()
        proc.stderr.close()
    assert proc.returncode == 0, err


def test_scores_are_reproducible_across_server_runs(tmp_path):
    doc = decode_document(TINY_VECTOR, TINY_SPACE, tmp_path)
    config_path = write_config(tmp_path, fast_config(tmp_path))
    request = {"id": "x", "fidelity": "LF",
               "x": list(doc["genotype"]["vector"]), "architecture": doc}

    def run_once():
        proc = subprocess.run(
            [sys.executable, "-m", "unet_trainer", "--config", config_path],
            input=json.dumps(request) + "\n",
            capture_output=True, text=True, timeout=300,
        )
        assert proc.returncode == 0, proc.stderr
        response = json.loads(proc.stdout.splitlines()[1])
        assert response["status"] == "ok", response
        return response["f1"]

    assert abs(run_once() - run_once()) <= 1e-3
