"""Objective evaluation: built-in problems, caching, subprocess bridge.

Everything the optimizer evaluates goes through a Problem, which owns an
Evaluator. Built-in evaluators run in process. External evaluators are child
processes speaking newline-delimited JSON on stdin/stdout:

    child -> {"protocol": "mfmo-eval", "version": 1, "fidelities": [...]}
    parent -> {"id": 7, "fidelity": "HF", "x": [...], "architecture": {...}}
    child -> {"id": 7, "status": "ok", "f1": 0.41, "f2": 1.93}
             {"id": 8, "status": "error", "message": "..."}

Responses may arrive out of order; ids correlate them. A request that times
out or hits a child crash is retried once against a restarted process, after
which an error response is synthesized. Error responses propagate as
EvaluatorError so a broken evaluator can never push garbage into the sample
database.
"""

from __future__ import annotations

import json
import os
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import benchmarks, encoding

PROTOCOL_NAME = "mfmo-eval"
PROTOCOL_VERSION = 1
DEFAULT_TIMEOUTS = {"LF": 600.0, "HF": 3600.0}
HANDSHAKE_TIMEOUT = 60.0
MAX_INFLIGHT = 4
CACHE_DECIMALS = 12


class EvaluatorError(RuntimeError):
    """An evaluation could not produce finite objectives."""


@dataclass(frozen=True)
class EvaluationRequest:
    id: int
    fidelity: str
    x: tuple[float, ...]
    architecture: dict | None = None

    def to_json(self) -> str:
        payload = {"id": self.id, "fidelity": self.fidelity,
                   "x": list(self.x)}
        if self.architecture is not None:
            payload["architecture"] = self.architecture
        return json.dumps(payload, allow_nan=False)


@dataclass(frozen=True)
class EvaluationResponse:
    id: int
    status: str
    f1: float = float("nan")
    f2: float = float("nan")
    message: str = ""

    @classmethod
    def from_json(cls, line: str) -> "EvaluationResponse":
        obj = json.loads(line)
        if not isinstance(obj, dict) or "id" not in obj:
            raise ValueError(f"malformed response line: {line!r}")
        status = obj.get("status")
        if status == "ok":
            f1, f2 = float(obj["f1"]), float(obj["f2"])
            if not (np.isfinite(f1) and np.isfinite(f2)):
                return cls(int(obj["id"]), "error",
                           message="non-finite objectives")
            return cls(int(obj["id"]), "ok", f1, f2)
        if status == "error":
            return cls(int(obj["id"]), "error",
                       message=str(obj.get("message", "unspecified")))
        raise ValueError(f"unknown response status {status!r}")


class Evaluator:
    """Interface: batch in, status-tagged batch out, ids preserved."""

    def evaluate_batch(self, requests: list[EvaluationRequest]
                       ) -> list[EvaluationResponse]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class BuiltinEvaluator(Evaluator):
    """Wraps an in-process function f(x_batch, fidelity) -> (n, 2) array."""

    def __init__(self, fn):
        self._fn = fn

    def evaluate_batch(self, requests):
        responses = []
        by_fid: dict[str, list[EvaluationRequest]] = {}
        for req in requests:
            by_fid.setdefault(req.fidelity, []).append(req)
        for fidelity, reqs in by_fid.items():
            x = np.array([r.x for r in reqs], dtype=np.float64)
            try:
                f = np.asarray(self._fn(x, fidelity), dtype=np.float64)
            except Exception as exc:
                responses += [EvaluationResponse(r.id, "error",
                                                 message=str(exc))
                              for r in reqs]
                continue
            for r, row in zip(reqs, f):
                if np.all(np.isfinite(row)):
                    responses.append(EvaluationResponse(
                        r.id, "ok", float(row[0]), float(row[1])))
                else:
                    responses.append(EvaluationResponse(
                        r.id, "error", message="non-finite objectives"))
        order = {r.id: i for i, r in enumerate(requests)}
        responses.sort(key=lambda resp: order[resp.id])
        return responses


def _cache_key(fidelity: str, x) -> tuple:
    return (fidelity,) + tuple(round(float(v), CACHE_DECIMALS) for v in x)


class CachingEvaluator(Evaluator):
    """Memoizes ok responses; errors are never cached."""

    def __init__(self, inner: Evaluator):
        self._inner = inner
        self._cache: dict[tuple, tuple[float, float]] = {}
        self.hits = 0
        self.misses = 0

    def evaluate_batch(self, requests):
        out: dict[int, EvaluationResponse] = {}
        misses = []
        for req in requests:
            key = _cache_key(req.fidelity, req.x)
            hit = self._cache.get(key)
            if hit is not None:
                self.hits += 1
                out[req.id] = EvaluationResponse(req.id, "ok", *hit)
            else:
                misses.append(req)
        if misses:
            self.misses += len(misses)
            for resp in self._inner.evaluate_batch(misses):
                out[resp.id] = resp
                if resp.status == "ok":
                    req = next(r for r in misses if r.id == resp.id)
                    self._cache[_cache_key(req.fidelity, req.x)] = (
                        resp.f1, resp.f2)
        return [out[r.id] for r in requests]

    def close(self):
        self._inner.close()


class SubprocessEvaluator(Evaluator):
    """Bridge to an external evaluator process.

    The command comes from the MFMO_EVAL_CMD environment variable or the
    `evaluator.command` config key. Writes are serialized from the calling
    thread; a reader thread feeds a queue so per-request deadlines can be
    enforced without blocking on a single slow response.
    """

    def __init__(self, command, timeouts=None, max_inflight=MAX_INFLIGHT,
                 handshake_timeout=HANDSHAKE_TIMEOUT):
        if isinstance(command, str):
            command = shlex.split(command)
        if not command:
            raise ValueError("empty evaluator command")
        self._command = list(command)
        self._timeouts = dict(DEFAULT_TIMEOUTS)
        if timeouts:
            self._timeouts.update(timeouts)
        self._max_inflight = int(max_inflight)
        self._handshake_timeout = float(handshake_timeout)
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None
        self.fidelities: tuple[str, ...] = ()
        self.restarts = 0

    # -- process management

    def _spawn(self):
        self.close()
        self._proc = subprocess.Popen(
            self._command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        self._lines = queue.Queue()

        def pump(stream, sink):
            for line in stream:
                sink.put(line)
            sink.put(None)

        t = threading.Thread(target=pump, args=(self._proc.stdout,
                                                self._lines), daemon=True)
        t.start()
        self._read_handshake()

    def _read_handshake(self):
        try:
            line = self._lines.get(timeout=self._handshake_timeout)
        except queue.Empty:
            raise EvaluatorError(
                f"evaluator {self._command[0]!r} sent no handshake within "
                f"{self._handshake_timeout:.0f}s") from None
        if line is None:
            raise EvaluatorError(
                f"evaluator {self._command[0]!r} exited before handshake")
        try:
            hs = json.loads(line)
        except json.JSONDecodeError:
            raise EvaluatorError(
                f"handshake is not JSON: {line.strip()!r}") from None
        if hs.get("protocol") != PROTOCOL_NAME or hs.get(
                "version") != PROTOCOL_VERSION:
            raise EvaluatorError(f"incompatible handshake: {hs!r}")
        self.fidelities = tuple(hs.get("fidelities", ()))

    def _ensure_running(self):
        if self._proc is None or self._proc.poll() is not None:
            self._spawn()

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._proc = None

    def _restart(self):
        self.restarts += 1
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._proc = None
        self._spawn()

    # -- evaluation

    def _send(self, req: EvaluationRequest):
        self._proc.stdin.write(req.to_json() + "\n")
        self._proc.stdin.flush()

    def evaluate_batch(self, requests):
        self._ensure_running()
        results: dict[int, EvaluationResponse] = {}
        todo = list(requests)
        attempts = {r.id: 0 for r in requests}
        inflight: dict[int, tuple[EvaluationRequest, float]] = {}

        def fail_inflight(reason: str):
            """Retry once whatever was outstanding, after a restart."""
            retry, dead = [], []
            for req, _deadline in inflight.values():
                attempts[req.id] += 1
                if attempts[req.id] < 2:
                    retry.append(req)
                else:
                    dead.append(req)
            inflight.clear()
            for req in dead:
                results[req.id] = EvaluationResponse(
                    req.id, "error", message=reason)
            if retry or todo:
                try:
                    self._restart()
                except EvaluatorError as exc:
                    for req in retry + todo:
                        results[req.id] = EvaluationResponse(
                            req.id, "error", message=str(exc))
                    todo.clear()
                    return
            todo[:0] = retry

        while todo or inflight:
            while todo and len(inflight) < self._max_inflight:
                req = todo.pop(0)
                deadline = time.monotonic() + self._timeouts.get(
                    req.fidelity, max(self._timeouts.values()))
                try:
                    self._send(req)
                except (OSError, ValueError):
                    inflight[req.id] = (req, deadline)
                    fail_inflight("evaluator pipe closed")
                    continue
                inflight[req.id] = (req, deadline)
            if not inflight:
                continue
            wait = max(0.0, min(d for _req, d in inflight.values())
                       - time.monotonic())
            try:
                line = self._lines.get(timeout=min(wait, 1.0) if wait else 0.0)
            except queue.Empty:
                if time.monotonic() >= min(d for _r, d in inflight.values()):
                    fail_inflight("evaluation timed out")
                continue
            if line is None:
                fail_inflight("evaluator process exited")
                continue
            if not line.strip():
                continue
            try:
                resp = EvaluationResponse.from_json(line)
            except (ValueError, KeyError):
                fail_inflight(f"malformed response: {line.strip()!r}")
                continue
            if resp.id in inflight:
                del inflight[resp.id]
                results[resp.id] = resp
        return [results[r.id] for r in requests]


# ---------------------------------------------------------------------------
# problems

@dataclass
class Problem:
    """A named objective pair over a box, with an evaluator behind it."""

    name: str
    lower: np.ndarray
    upper: np.ndarray
    fidelities: tuple[str, ...]
    evaluator: Evaluator
    true_front: object = None          # () -> (m, 2) array, or None
    architecture_for: object = None    # x -> document dict, or None
    flops_for: object = None           # x -> f2 override (NAS), or None
    _next_id: int = field(default=0, repr=False)

    def evaluate_batch(self, x: np.ndarray, fidelity: str) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if fidelity not in self.fidelities:
            raise ValueError(
                f"{self.name} has fidelities {self.fidelities}, "
                f"not {fidelity!r}")
        requests = []
        for row in x:
            arch = self.architecture_for(row) if self.architecture_for else None
            requests.append(EvaluationRequest(
                self._next_id, fidelity, tuple(float(v) for v in row), arch))
            self._next_id += 1
        responses = self.evaluator.evaluate_batch(requests)
        out = np.empty((len(requests), 2), dtype=np.float64)
        for i, (req, resp) in enumerate(zip(requests, responses)):
            if resp.id != req.id:
                raise EvaluatorError("response ids out of order")
            if resp.status != "ok":
                raise EvaluatorError(
                    f"{self.name} {fidelity} evaluation of "
                    f"x={np.round(x[i], 6).tolist()} failed: {resp.message}")
            out[i, 0] = resp.f1
            out[i, 1] = self.flops_for(x[i]) if self.flops_for else resp.f2
        return out

    @property
    def dim(self) -> int:
        return self.lower.size

    def close(self):
        self.evaluator.close()


_BUILTINS: dict = {}


def register_builtin(name: str, factory) -> str:
    if name in _BUILTINS:
        raise ValueError(f"evaluator name {name!r} already registered")
    _BUILTINS[name] = factory
    return name


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_BUILTINS))


def make_problem(name: str, **kwargs) -> Problem:
    if name not in _BUILTINS:
        known = ", ".join(builtin_names())
        raise ValueError(f"unknown problem {name!r}; known problems: {known}")
    try:
        return _BUILTINS[name](**kwargs)
    except TypeError as exc:
        # misspelled problem_args must fail loudly, not silently reshape
        # the search space
        raise ValueError(f"bad arguments for problem {name!r}: {exc}") \
            from None


def _zdt_factory(variant: str, paired: bool):
    def build(n_var: int = 30, cache: bool = True):
        inner = benchmarks.make_benchmark(f"mf-{variant}", n=n_var)
        prob = benchmarks.PairedVariableProblem(inner) if paired else inner
        ev: Evaluator = BuiltinEvaluator(prob.evaluate_batch)
        if cache:
            ev = CachingEvaluator(ev)
        return Problem(
            name=prob.name, lower=prob.lower, upper=prob.upper,
            fidelities=("HF", "LF"), evaluator=ev,
            true_front=prob.true_front)
    return build


for _variant in ("zdt1", "zdt2", "zdt3"):
    register_builtin(f"mf-{_variant}", _zdt_factory(_variant, paired=False))
    register_builtin(f"mf-{_variant}-paired", _zdt_factory(_variant,
                                                           paired=True))


def _nas_space(space_config: dict | None) -> encoding.SpaceConfig:
    return encoding.SpaceConfig(**(space_config or {}))


def _nas_bounds(space, arch_encoding: str):
    if arch_encoding == "continuous":
        return encoding.schema(space)
    lo, hi = encoding.discrete_schema(space)
    return lo.astype(np.float64), hi.astype(np.float64)


def _nas_gflops(space, arch_encoding: str):
    def f2(x):
        doc = encoding.architecture_from_vector(space, x, arch_encoding)
        return doc["flops"]["total"] / 1e9
    return f2


def _make_unet_nas(command=None, space_config=None, timeouts=None,
                   arch_encoding: str = "continuous", cache: bool = True,
                   max_inflight: int = MAX_INFLIGHT) -> Problem:
    command = command or os.environ.get("MFMO_EVAL_CMD")
    if not command:
        raise EvaluatorError(
            "unet-nas needs an external trainer: set MFMO_EVAL_CMD or the "
            "evaluator.command config key")
    space = _nas_space(space_config)
    lower, upper = _nas_bounds(space, arch_encoding)

    def architecture_for(x):
        return encoding.architecture_from_vector(space, x, arch_encoding)

    ev: Evaluator = SubprocessEvaluator(command, timeouts=timeouts,
                                        max_inflight=max_inflight)
    if cache:
        ev = CachingEvaluator(ev)
    return Problem(
        name="unet-nas", lower=lower, upper=upper, fidelities=("HF", "LF"),
        evaluator=ev, architecture_for=architecture_for,
        flops_for=_nas_gflops(space, arch_encoding))


def _toy_scores(space, arch_encoding: str):
    """Deterministic stand-in for a trainer: smooth in the design vector,
    loosely anti-correlated with model capacity so the objectives conflict."""
    gflops = _nas_gflops(space, arch_encoding)

    def fn(x_batch, fidelity):
        x_batch = np.atleast_2d(x_batch)
        out = np.empty((x_batch.shape[0], 2))
        for i, x in enumerate(x_batch):
            g = gflops(x)
            err = 0.25 + 0.6 * np.exp(-g) + 0.05 * float(
                np.mean(np.sin(3.0 * x)))
            if fidelity == "LF":
                err = 0.92 * err + 0.03 * float(
                    np.mean(np.cos(2.0 * x))) + 0.02
            out[i] = (err, g)
        return out
    return fn


def _make_unet_nas_toy(space_config=None, arch_encoding: str = "continuous",
                       cache: bool = True) -> Problem:
    space = _nas_space(space_config)
    lower, upper = _nas_bounds(space, arch_encoding)

    def architecture_for(x):
        return encoding.architecture_from_vector(space, x, arch_encoding)

    ev: Evaluator = BuiltinEvaluator(_toy_scores(space, arch_encoding))
    if cache:
        ev = CachingEvaluator(ev)
    return Problem(
        name="unet-nas-toy", lower=lower, upper=upper,
        fidelities=("HF", "LF"), evaluator=ev,
        architecture_for=architecture_for)


register_builtin("unet-nas", _make_unet_nas)
register_builtin("unet-nas-toy", _make_unet_nas_toy)
