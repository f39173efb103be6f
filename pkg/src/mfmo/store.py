"""Evaluation database for the multi-fidelity search loop.

One record per objective evaluation, e.g.::

    {"x": [0.5, 0.25], "fidelity": "HF", "f1": 0.5, "f2": 2.91,
     "iteration": 3, "origin": "local_infill"}

Records keep insertion order and persist as line-delimited JSON with
round-trip float precision. Duplicate detection and nearest-neighbour queries
operate in bounds-normalized coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels

FIDELITIES = ("HF", "LF")
ORIGINS = ("initial", "global_infill", "local_infill", "colocated", "rescored")


@dataclass
class EvaluationRecord:
    x: np.ndarray
    fidelity: str
    f1: float
    f2: float
    iteration: int
    origin: str

    def to_json(self) -> str:
        return json.dumps({
            "x": [float(v) for v in self.x],
            "fidelity": self.fidelity,
            "f1": float(self.f1),
            "f2": float(self.f2),
            "iteration": int(self.iteration),
            "origin": self.origin,
        }, allow_nan=False)

    @property
    def f(self) -> np.ndarray:
        return np.array([self.f1, self.f2], dtype=np.float64)


class SampleDatabase:
    """Insertion-ordered store of HF and LF evaluations over a fixed box."""

    def __init__(self, bounds, dedup_eps: float = 1e-9):
        lower, upper = (np.asarray(b, dtype=np.float64) for b in bounds)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("bounds must be two equal-length 1-D arrays")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValueError("bounds must be finite")
        if np.any(upper <= lower):
            raise ValueError("each upper bound must exceed its lower bound")
        self.lower = lower
        self.upper = upper
        self.dedup_eps = float(dedup_eps)
        self.records: list[EvaluationRecord] = []
        self._norm = {fid: [] for fid in FIDELITIES}
        self._by_fid = {fid: [] for fid in FIDELITIES}
        self._lf_exact: dict[bytes, tuple[float, float]] = {}

    @property
    def dim(self) -> int:
        return self.lower.size

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.lower) / (
            self.upper - self.lower)

    # -- writing ------------------------------------------------------------

    def add(self, x, fidelity, f1, f2, iteration, origin) -> bool:
        return self.insert(EvaluationRecord(
            np.asarray(x, dtype=np.float64), fidelity, float(f1), float(f2),
            int(iteration), origin))

    def insert(self, record: EvaluationRecord) -> bool:
        """Append a record; returns False when it duplicates an existing one.

        Duplicates are same-fidelity points within ``dedup_eps`` in normalized
        max-norm. Out-of-bounds inputs and non-finite objectives raise.
        """
        x = np.asarray(record.x, dtype=np.float64)
        if x.shape != self.lower.shape:
            raise ValueError(
                f"x has dimension {x.size}, expected {self.dim}")
        if record.fidelity not in FIDELITIES:
            raise ValueError(f"unknown fidelity {record.fidelity!r}")
        if record.origin not in ORIGINS:
            raise ValueError(f"unknown origin {record.origin!r}")
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise ValueError(f"x outside the search box: {x.tolist()}")
        if not (np.isfinite(record.f1) and np.isfinite(record.f2)):
            raise ValueError(
                f"non-finite objectives (f1={record.f1}, f2={record.f2}) "
                f"for {record.fidelity} point {x.tolist()}")
        z = self.normalize(x)
        if self.contains(x, record.fidelity):
            return False
        record.x = x
        self.records.append(record)
        self._norm[record.fidelity].append(z)
        self._by_fid[record.fidelity].append(record)
        if record.fidelity == "LF":
            self._lf_exact[x.tobytes()] = (record.f1, record.f2)
        return True

    def contains(self, x, fidelity: str) -> bool:
        rows = self._norm[fidelity]
        if not rows:
            return False
        z = self.normalize(x)
        diff = np.abs(np.asarray(rows) - z)
        return bool(np.any(np.max(diff, axis=1) < self.dedup_eps))

    # -- reading ------------------------------------------------------------

    def count(self, fidelity: str) -> int:
        return len(self._by_fid[fidelity])

    def records_of(self, fidelity: str) -> list[EvaluationRecord]:
        return list(self._by_fid[fidelity])

    def x_of(self, fidelity: str) -> np.ndarray:
        recs = self._by_fid[fidelity]
        if not recs:
            return np.empty((0, self.dim))
        return np.array([r.x for r in recs])

    def f_of(self, fidelity: str) -> np.ndarray:
        recs = self._by_fid[fidelity]
        if not recs:
            return np.empty((0, 2))
        return np.array([[r.f1, r.f2] for r in recs])

    def nearest(self, center, fidelity: str,
                count: int) -> list[EvaluationRecord]:
        """The ``count`` records of a fidelity closest to ``center``.

        Distance is Euclidean in normalized coordinates; ties break by
        insertion order. Returns fewer when the store holds fewer.
        """
        if count < 1:
            raise ValueError("count must be at least 1")
        recs = self._by_fid[fidelity]
        if not recs:
            return []
        z = self.normalize(center)
        d = np.linalg.norm(np.asarray(self._norm[fidelity]) - z, axis=1)
        order = np.argsort(d, kind="stable")[:count]
        return [recs[i] for i in order]

    def pareto(self, fidelity: str = "HF") -> list[EvaluationRecord]:
        """Nondominated records of a fidelity, in insertion order."""
        recs = self._by_fid[fidelity]
        if not recs:
            raise LookupError(f"no {fidelity} records in the database")
        ranks = _kernels.pareto_ranks(self.f_of(fidelity))
        return [r for r, rank in zip(recs, ranks) if rank == 0]

    def objective_minima(self, fidelity: str = "HF") -> tuple[float, float]:
        f = self.f_of(fidelity)
        if not len(f):
            raise LookupError(f"no {fidelity} records in the database")
        return float(f[:, 0].min()), float(f[:, 1].min())

    def lf_value_at(self, x) -> tuple[float, float] | None:
        """Co-located LF objectives for a point, or None if never evaluated."""
        x = np.asarray(x, dtype=np.float64)
        hit = self._lf_exact.get(x.tobytes())
        if hit is not None:
            return hit
        rows = self._norm["LF"]
        if not rows:
            return None
        diff = np.max(np.abs(np.asarray(rows) - self.normalize(x)), axis=1)
        i = int(np.argmin(diff))
        if diff[i] < self.dedup_eps:
            r = self._by_fid["LF"][i]
            return (r.f1, r.f2)
        return None

    # -- persistence ----------------------------------------------------------

    def persist(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(record.to_json())
                fh.write("\n")

    @classmethod
    def load(cls, path, bounds=None, dedup_eps: float = 1e-9,
             strict: bool = True) -> "SampleDatabase":
        """Rebuild a database from a line-delimited JSON file.

        When ``bounds`` is omitted they are inferred from the data with a
        small margin (good enough for front extraction; pass real bounds when
        the database will keep growing).
        """
        raw = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}: line {lineno}: {exc}") from None
                try:
                    rec = EvaluationRecord(
                        np.asarray(obj["x"], dtype=np.float64),
                        obj["fidelity"], float(obj["f1"]), float(obj["f2"]),
                        int(obj["iteration"]), obj["origin"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValueError(
                        f"{path}: line {lineno}: bad record ({exc})") from None
                if strict and not (np.isfinite(rec.f1) and np.isfinite(rec.f2)
                                   and np.all(np.isfinite(rec.x))):
                    raise ValueError(
                        f"{path}: line {lineno}: non-finite values")
                raw.append((lineno, rec))
        if bounds is None:
            if not raw:
                raise ValueError(f"{path}: empty database needs explicit bounds")
            xs = np.array([r.x for _, r in raw])
            span = np.ptp(xs, axis=0)
            pad = np.where(span > 0, 0.05 * span, 1.0)
            bounds = (xs.min(axis=0) - pad, xs.max(axis=0) + pad)
        db = cls(bounds, dedup_eps=dedup_eps)
        for lineno, rec in raw:
            try:
                db.insert(rec)
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
        return db
