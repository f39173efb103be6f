"""Bi-objective two-fidelity test problems on [0, 1]^n.

Three ZDT-style problems where the high-fidelity second objective is the
usual g*h composition and the low-fidelity one is an affine distortion of g
and h, so the fidelities are rank-correlated but unequal while f1 = x[0] is
shared exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("zdt1", "zdt2", "zdt3")


def _g(x: np.ndarray) -> np.ndarray:
    return 1.0 + 9.0 * x[:, 1:].sum(axis=1) / (x.shape[1] - 1)


def _h_zdt1(f1, g):
    return 1.0 - np.sqrt(f1 / g)


def _h_zdt2(f1, g):
    return 1.0 - (f1 / g) ** 2


def _h_zdt3(f1, g):
    return 1.0 - np.sqrt(f1 / g) - (f1 / g) * np.sin(10.0 * np.pi * f1)


_H = {"zdt1": _h_zdt1, "zdt2": _h_zdt2, "zdt3": _h_zdt3}

# LF distortion coefficients: f2_LF = (a*g + b) * (c*h + d)
_LF_COEF = {
    "zdt1": (0.8, -0.2, 1.2, 0.2),
    "zdt2": (0.9, 1.1, 1.1, -0.1),
    "zdt3": (0.75, -0.25, 1.25, 0.25),
}


@dataclass(frozen=True)
class MfZdtProblem:
    variant: str
    n: int = 30
    lower: np.ndarray = field(init=False)
    upper: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.n < 2:
            raise ValueError("dimensionality must be at least 2")
        object.__setattr__(self, "lower", np.zeros(self.n))
        object.__setattr__(self, "upper", np.ones(self.n))

    @property
    def name(self) -> str:
        return f"mf-{self.variant}"

    def evaluate_batch(self, x: np.ndarray, fidelity: str) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n:
            raise ValueError(f"expected {self.n} variables, got {x.shape[1]}")
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("point outside [0, 1]^n")
        f1 = x[:, 0]
        g = _g(x)
        h = _H[self.variant](f1, g)
        if fidelity == "HF":
            f2 = g * h
        elif fidelity == "LF":
            a, b, c, d = _LF_COEF[self.variant]
            f2 = (a * g + b) * (c * h + d)
        else:
            raise ValueError(f"unknown fidelity {fidelity!r}")
        return np.column_stack([f1, f2])

    def evaluate(self, x: np.ndarray, fidelity: str) -> tuple[float, float]:
        out = self.evaluate_batch(np.asarray(x)[None, :], fidelity)[0]
        return float(out[0]), float(out[1])

    def true_front(self, m: int = 1000) -> np.ndarray:
        """Analytic Pareto front (g = 1); ZDT3 is filtered numerically."""
        if m < 2:
            raise ValueError("need at least 2 points")
        if self.variant == "zdt1":
            f1 = np.linspace(0.0, 1.0, m)
            return np.column_stack([f1, 1.0 - np.sqrt(f1)])
        if self.variant == "zdt2":
            f1 = np.linspace(0.0, 1.0, m)
            return np.column_stack([f1, 1.0 - f1 ** 2])
        f1 = np.linspace(0.0, 1.0, max(m * 20, 10000))
        f2 = 1.0 - np.sqrt(f1) - f1 * np.sin(10.0 * np.pi * f1)
        # f1 is strictly increasing, so a point is nondominated exactly when
        # its f2 undercuts everything at smaller f1 (linear-time sweep; the
        # general ranking kernel would need a quadratic dominance matrix)
        run_min = np.minimum.accumulate(f2)
        keep = np.empty(len(f2), dtype=bool)
        keep[0] = True
        keep[1:] = f2[1:] < run_min[:-1]
        pts = np.column_stack([f1, f2])[keep]
        if len(pts) > m:
            pts = pts[np.linspace(0, len(pts) - 1, m).astype(int)]
        return pts


def make_benchmark(name: str, n: int = 30) -> MfZdtProblem:
    """Problem factory for names like "mf-zdt1"."""
    key = name.lower().removeprefix("mf-")
    return MfZdtProblem(key, n=n)


@dataclass(frozen=True)
class PairedVariableProblem:
    """Redundant re-encoding of a problem: two variables per original one.

    Each original coordinate is represented by a pair decoded as their
    midpoint, doubling the dimensionality without adding expressiveness.
    Used by the encoding ablation to mimic searching a needlessly wide
    variable space on the closed-form benchmarks.
    """

    inner: MfZdtProblem

    @property
    def name(self) -> str:
        return self.inner.name + "-paired"

    @property
    def n(self) -> int:
        return 2 * self.inner.n

    @property
    def lower(self) -> np.ndarray:
        return np.repeat(self.inner.lower, 2)

    @property
    def upper(self) -> np.ndarray:
        return np.repeat(self.inner.upper, 2)

    def decode(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return 0.5 * (x[:, 0::2] + x[:, 1::2])

    def evaluate_batch(self, x: np.ndarray, fidelity: str) -> np.ndarray:
        return self.inner.evaluate_batch(self.decode(x), fidelity)

    def evaluate(self, x, fidelity: str) -> tuple[float, float]:
        out = self.evaluate_batch(np.asarray(x)[None, :], fidelity)[0]
        return float(out[0]), float(out[1])

    def true_front(self, m: int = 1000) -> np.ndarray:
        return self.inner.true_front(m)
