"""Evaluation layer: protocol messages, caching, subprocess lifecycle."""

import json

import numpy as np
import pytest

from search_helpers import eval_child_cmd
from mfmo import evaluator as ev
from mfmo.evaluator import (BuiltinEvaluator, CachingEvaluator,
                            EvaluationRequest, EvaluationResponse,
                            EvaluatorError, Problem, SubprocessEvaluator,
                            builtin_names, make_problem)


# -- protocol messages --------------------------------------------------------

def test_request_serialization_includes_architecture_only_when_present():
    bare = EvaluationRequest(3, "HF", (0.25, 0.5))
    assert json.loads(bare.to_json()) == {"id": 3, "fidelity": "HF",
                                          "x": [0.25, 0.5]}
    with_arch = EvaluationRequest(4, "LF", (1.0,), architecture={"cells": 2})
    assert json.loads(with_arch.to_json())["architecture"] == {"cells": 2}
    with pytest.raises(ValueError):
        EvaluationRequest(5, "HF", (float("nan"),)).to_json()


def test_response_parsing():
    ok = EvaluationResponse.from_json('{"id": 7, "status": "ok", '
                                      '"f1": 0.5, "f2": 1.5}')
    assert (ok.id, ok.status, ok.f1, ok.f2) == (7, "ok", 0.5, 1.5)
    err = EvaluationResponse.from_json('{"id": 8, "status": "error"}')
    assert err.status == "error" and err.message == "unspecified"
    bad = EvaluationResponse.from_json('{"id": 9, "status": "ok", '
                                       '"f1": Infinity, "f2": 0}')
    assert bad.status == "error" and "non-finite" in bad.message
    with pytest.raises(ValueError, match="malformed"):
        EvaluationResponse.from_json('{"status": "ok"}')
    with pytest.raises(ValueError, match="unknown response status"):
        EvaluationResponse.from_json('{"id": 1, "status": "maybe"}')


# -- in-process evaluators ----------------------------------------------------

def _requests(xs, fidelity="HF", start_id=0):
    return [EvaluationRequest(start_id + i, fidelity, tuple(row))
            for i, row in enumerate(np.atleast_2d(xs))]


def test_builtin_evaluator_orders_and_flags():
    def fn(x, fidelity):
        out = np.column_stack([x.sum(axis=1), (x ** 2).sum(axis=1)])
        out[x[:, 0] > 0.9] = np.nan
        return out

    b = BuiltinEvaluator(fn)
    reqs = _requests([[0.5, 0.5], [0.95, 0.0], [0.25, 0.25]])
    resps = b.evaluate_batch(reqs)
    assert [r.id for r in resps] == [0, 1, 2]
    assert resps[0].status == "ok" and resps[0].f1 == 1.0
    assert resps[1].status == "error" and "non-finite" in resps[1].message
    assert resps[2].status == "ok"


def test_builtin_evaluator_converts_exceptions_to_errors():
    def fn(x, fidelity):
        raise RuntimeError("solver blew up")

    resps = BuiltinEvaluator(fn).evaluate_batch(_requests([[0.1], [0.2]]))
    assert all(r.status == "error" and "solver blew up" in r.message
               for r in resps)


class CountingEvaluator(BuiltinEvaluator):
    def __init__(self, fn):
        super().__init__(fn)
        self.calls = 0

    def evaluate_batch(self, requests):
        self.calls += 1
        return super().evaluate_batch(requests)


def test_cache_hits_on_nearly_identical_points():
    inner = CountingEvaluator(
        lambda x, fid: np.column_stack([x.sum(axis=1), x.sum(axis=1) ** 2]))
    cache = CachingEvaluator(inner)
    first = cache.evaluate_batch(_requests([[0.125, 0.25]]))
    again = cache.evaluate_batch(_requests([[0.125 + 1e-14, 0.25]],
                                           start_id=50))
    assert inner.calls == 1 and cache.hits == 1 and cache.misses == 1
    assert again[0].f1 == first[0].f1 and again[0].id == 50
    # a genuinely different point and a different fidelity both miss
    cache.evaluate_batch(_requests([[0.125 + 1e-9, 0.25]], start_id=60))
    cache.evaluate_batch(_requests([[0.125, 0.25]], "LF", start_id=70))
    assert inner.calls == 3 and cache.misses == 3


def test_cache_never_stores_errors():
    calls = []

    def flaky(x, fidelity):
        calls.append(len(x))
        return np.full((len(x), 2), np.nan)

    cache = CachingEvaluator(BuiltinEvaluator(flaky))
    for start in (0, 10):
        resp, = cache.evaluate_batch(_requests([[0.5]], start_id=start))
        assert resp.status == "error"
    assert calls == [1, 1]


# -- subprocess evaluator -----------------------------------------------------

def test_subprocess_round_trip():
    sub = SubprocessEvaluator(eval_child_cmd("ok"))
    try:
        reqs = _requests([[0.5, 1.0], [0.25, 0.25], [2.0, 3.0]])
        resps = sub.evaluate_batch(reqs)
        assert sub.fidelities == ("LF", "HF")
        for req, resp in zip(reqs, resps):
            assert resp.status == "ok" and resp.id == req.id
            assert resp.f1 == sum(req.x)
            assert resp.f2 == sum(v * v for v in req.x)
    finally:
        sub.close()


def test_subprocess_correlates_out_of_order_responses():
    sub = SubprocessEvaluator(eval_child_cmd("out-of-order"))
    try:
        reqs = _requests([[1.0], [2.0], [3.0], [4.0]])
        resps = sub.evaluate_batch(reqs)
        assert [r.id for r in resps] == [0, 1, 2, 3]
        assert [r.f1 for r in resps] == [1.0, 2.0, 3.0, 4.0]
    finally:
        sub.close()


def test_subprocess_propagates_child_errors():
    sub = SubprocessEvaluator(eval_child_cmd("ok", "error-on:1"))
    try:
        resps = sub.evaluate_batch(_requests([[1.0], [2.0], [3.0]]))
        assert [r.status for r in resps] == ["ok", "error", "ok"]
        assert "refused by test child" in resps[1].message
    finally:
        sub.close()


def test_subprocess_restarts_after_crash_and_retries():
    sub = SubprocessEvaluator(eval_child_cmd("ok", "crash-after:2"))
    try:
        resps = sub.evaluate_batch(_requests([[1.0], [2.0], [3.0], [4.0]]))
        assert all(r.status == "ok" for r in resps)
        assert [r.f1 for r in resps] == [1.0, 2.0, 3.0, 4.0]
        assert sub.restarts >= 1
    finally:
        sub.close()


def test_subprocess_times_out_slow_children():
    sub = SubprocessEvaluator(eval_child_cmd("ok", "delay:30"),
                              timeouts={"LF": 0.2, "HF": 0.2})
    try:
        resp, = sub.evaluate_batch(_requests([[1.0]]))
        assert resp.status == "error" and "timed out" in resp.message
    finally:
        if sub._proc is not None:
            sub._proc.kill()        # child is mid-sleep; don't wait it out
        sub.close()


def test_subprocess_rejects_bad_handshake():
    sub = SubprocessEvaluator(eval_child_cmd("bad-handshake"))
    with pytest.raises(EvaluatorError, match="handshake"):
        sub.evaluate_batch(_requests([[1.0]]))
    sub.close()


def test_subprocess_rejects_empty_command():
    with pytest.raises(ValueError, match="empty evaluator command"):
        SubprocessEvaluator("")


# -- problems -----------------------------------------------------------------

def test_problem_passes_architecture_documents_through():
    arch = {"format": "mfmo-unet-architecture", "cells": [1, 2, 3]}
    prob = Problem(
        name="arch-echo", lower=np.zeros(2), upper=np.ones(2),
        fidelities=("HF", "LF"),
        evaluator=SubprocessEvaluator(eval_child_cmd("ok", "echo-arch")),
        architecture_for=lambda x: arch)
    try:
        out = prob.evaluate_batch(np.array([[0.5, 0.5]]), "HF")
        assert out[0, 1] == 0.5 + len(json.dumps(arch))
    finally:
        prob.close()


def test_problem_raises_on_error_responses():
    prob = Problem(
        name="nanny", lower=np.zeros(1), upper=np.ones(1),
        fidelities=("HF",),
        evaluator=BuiltinEvaluator(
            lambda x, fid: np.full((len(x), 2), np.nan)))
    with pytest.raises(EvaluatorError, match="nanny HF evaluation"):
        prob.evaluate_batch(np.array([[0.5]]), "HF")
    with pytest.raises(ValueError, match="fidelities"):
        prob.evaluate_batch(np.array([[0.5]]), "LF")
    prob.close()


def test_problem_flops_override_replaces_second_objective():
    prob = Problem(
        name="override", lower=np.zeros(1), upper=np.ones(1),
        fidelities=("HF",),
        evaluator=BuiltinEvaluator(
            lambda x, fid: np.column_stack([x[:, 0], x[:, 0] * 100])),
        flops_for=lambda x: 42.0)
    out = prob.evaluate_batch(np.array([[0.5], [0.7]]), "HF")
    np.testing.assert_array_equal(out[:, 1], [42.0, 42.0])
    np.testing.assert_array_equal(out[:, 0], [0.5, 0.7])


def test_builtin_problem_registry():
    names = builtin_names()
    for variant in ("zdt1", "zdt2", "zdt3"):
        assert f"mf-{variant}" in names and f"mf-{variant}-paired" in names
    assert "unet-nas" in names and "unet-nas-toy" in names
    with pytest.raises(ValueError, match="unknown problem"):
        make_problem("mf-zdt9")
    with pytest.raises(ValueError, match="bad arguments for problem"):
        make_problem("mf-zdt1", n=4)      # the knob is called n_var
    with pytest.raises(ValueError, match="already registered"):
        ev.register_builtin("mf-zdt1", lambda **kw: None)


def test_builtin_zdt_problem_end_to_end():
    prob = make_problem("mf-zdt2", n_var=5)
    x = np.full((1, 5), 0.5)
    hf = prob.evaluate_batch(x, "HF")
    lf = prob.evaluate_batch(x, "LF")
    assert hf[0, 0] == lf[0, 0] == 0.5
    assert hf[0, 1] != lf[0, 1]
    assert isinstance(prob.evaluator, CachingEvaluator)
    assert prob.dim == 5
    front = prob.true_front(64)
    assert front.shape == (64, 2)
    prob.close()


def test_nas_problem_requires_external_command(monkeypatch):
    monkeypatch.delenv("MFMO_EVAL_CMD", raising=False)
    with pytest.raises(EvaluatorError, match="MFMO_EVAL_CMD"):
        make_problem("unet-nas")


def test_nas_problem_runs_against_external_child(monkeypatch):
    monkeypatch.setenv("MFMO_EVAL_CMD", eval_child_cmd("ok"))
    prob = make_problem(
        "unet-nas",
        space_config={"n_down": 2, "n_up": 1, "height": 32, "width": 32})
    try:
        assert prob.dim == 12
        x = (prob.lower + prob.upper) / 2.0
        out = prob.evaluate_batch(x[None, :], "HF")
        assert out[0, 0] == pytest.approx(sum(x))     # child's f1
        assert out[0, 1] > 0                          # analytic GFLOPs
        from mfmo import encoding
        doc = encoding.architecture_from_vector(
            encoding.SpaceConfig(n_down=2, n_up=1, height=32, width=32), x)
        assert out[0, 1] == pytest.approx(doc["flops"]["total"] / 1e9)
    finally:
        prob.close()


def test_nas_toy_problem_is_self_contained():
    prob = make_problem("unet-nas-toy",
                        space_config={"n_down": 2, "n_up": 1,
                                      "height": 32, "width": 32})
    x = np.vstack([(prob.lower + prob.upper) / 2.0, prob.lower + 0.01])
    hf = prob.evaluate_batch(x, "HF")
    lf = prob.evaluate_batch(x, "LF")
    assert np.all(np.isfinite(hf)) and np.all(np.isfinite(lf))
    assert not np.allclose(hf[:, 0], lf[:, 0])
    prob.close()
