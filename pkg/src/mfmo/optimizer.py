"""Adaptive co-Kriging-assisted multi-fidelity multi-objective search.

One iteration of the main loop: select parents from the high-fidelity
archive, breed six differential-evolution offspring per parent, rank the
offspring under global two-fidelity surrogates, spend one HF evaluation (plus
a co-located LF one) on the most promising candidate and two LF evaluations
on runners-up, then exploit the neighborhood of the new HF point with
expected-improvement maximization, clustering the EI Pareto set and spending
up to K more HF evaluations at cluster representatives. The HF budget is a
hard cap counted from the initial design onward.

Two ablation modes degrade this gracefully: ``hf-only`` runs plain Kriging on
HF data with no LF evaluations anywhere, and ``lf-only`` spends a larger LF
budget with Kriging fitted on a sliding window of recent LF data, rescoring
the final LF Pareto set at HF.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import evolution, surrogate
from ._kernels import IMPLEMENTATION
from .evaluator import EvaluatorError, Problem, make_problem
from .store import SampleDatabase

MODES = ("mf", "hf-only", "lf-only")

NORMALIZATION_RECIPE = (
    "objectives are min-max normalized to [0, 1]; per-run traces use the "
    "run's own final archive extremes, cross-run comparisons use the "
    "extremes of the union of all compared runs' HF records; hypervolume is "
    "computed against the reference point (1.1, 1.1) in normalized space")

_STREAM_NAMES = ("init", "parents", "offspring", "global_pick", "fit", "ei",
                 "cluster", "extra")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    """Named per-purpose generators spawned from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAM_NAMES))
    return {name: np.random.default_rng(seq)
            for name, seq in zip(_STREAM_NAMES, children)}


@dataclass
class SearchConfig:
    """Run settings. Field names mirror the JSON run-config schema."""

    problem: str = "mf-zdt1"
    problem_args: dict = field(default_factory=dict)
    mode: str = "mf"
    seed: int = 0
    nfe_max_hf: int = 100
    nfe_max_lf: int | None = None     # mf mode; None -> 2 * nfe_max_hf
    n_s_hf: int = 50
    n_s_lf: int | None = None         # None -> 2 * n_s_hf
    n_p: int = 50
    F: float = 0.8
    p_c: float = 0.8
    K: int = 3
    n_near: int = 25
    ei_pop: int = 50
    ei_gens: int = 50
    fit_pop: int = 20
    fit_gens: int = 50
    fit_warm_gens: int | None = None  # refits with warm starts; None -> fit_gens
    lhd_restarts: int = 50
    dedup_eps: float = 1e-9
    trust_region: bool = False
    trust_region_inflate: float = 0.2
    lf_only_budget: int = 700
    lf_only_initial: int = 350
    lf_only_window: int = 250
    hv_reference: tuple = (1.1, 1.1)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_s_hf < 1:
            raise ValueError("n_s_hf must be positive")
        if self.nfe_max_hf < self.n_s_hf:
            raise ValueError("nfe_max_hf must cover the initial HF design")
        if self.lf_budget < self.lf_initial:
            raise ValueError("the LF budget must cover the initial LF design")
        if self.n_p < 6:
            raise ValueError("n_p must be at least 6 (five distinct donors "
                             "plus the parent)")
        if not 0.0 < self.F <= 2.0:
            raise ValueError("F must lie in (0, 2]")
        if not 0.0 <= self.p_c <= 1.0:
            raise ValueError("p_c must lie in [0, 1]")
        if self.K < 1 or self.n_near < 1:
            raise ValueError("K and n_near must be positive")
        if min(self.ei_pop, self.ei_gens, self.fit_pop, self.fit_gens) < 1:
            raise ValueError("population sizes and generation counts must "
                             "be positive")
        if len(self.hv_reference) != 2:
            raise ValueError("hv_reference needs exactly two coordinates")

    # resolved (mode-aware) budget values

    @property
    def lf_initial(self) -> int:
        if self.mode == "lf-only":
            return self.lf_only_initial
        if self.mode == "hf-only":
            return 0
        return self.n_s_lf if self.n_s_lf is not None else 2 * self.n_s_hf

    @property
    def lf_budget(self) -> int:
        if self.mode == "lf-only":
            return self.lf_only_budget
        if self.mode == "hf-only":
            return 0
        return (self.nfe_max_lf if self.nfe_max_lf is not None
                else 2 * self.nfe_max_hf)

    @property
    def warm_gens(self) -> int:
        return self.fit_warm_gens if self.fit_warm_gens is not None \
            else self.fit_gens

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hv_reference"] = list(self.hv_reference)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SearchConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(
                f"unknown config keys: {sorted(unknown)}; "
                f"known keys: {sorted(known)}")
        cfg = cls(**{k: v for k, v in d.items()})
        if isinstance(cfg.hv_reference, list):
            cfg.hv_reference = tuple(cfg.hv_reference)
        cfg.validate()
        return cfg


@dataclass
class IterationReport:
    iteration: int
    hf_count: int
    lf_count: int
    hv: float = float("nan")  # filled after the run, see attach_trace_hv
    global_points: list = field(default_factory=list)
    local_points: list = field(default_factory=list)
    notes: list = field(default_factory=list)


@dataclass
class RunResult:
    database: SampleDatabase
    pareto_x: np.ndarray
    pareto_f: np.ndarray
    trace: list[IterationReport]
    wall_time: float
    completed: bool
    error: str | None
    model_summaries: dict
    notes: list

    @property
    def final_hv(self) -> float:
        return self.trace[-1].hv if self.trace else float("nan")


def minmax_normalize(f: np.ndarray, lo: np.ndarray,
                     hi: np.ndarray) -> np.ndarray:
    span = np.where(hi > lo, hi - lo, 1.0)
    return (np.asarray(f, dtype=np.float64) - lo) / span


def union_extremes(fronts: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Min/max per objective over several record sets (for cross-run HV)."""
    stacked = np.vstack([np.atleast_2d(f) for f in fronts if len(f)])
    return stacked.min(axis=0), stacked.max(axis=0)


def normalized_hv(front: np.ndarray, lo: np.ndarray, hi: np.ndarray,
                  reference=(1.1, 1.1)) -> float:
    if len(front) == 0:
        return 0.0
    return evolution.hypervolume_2d(
        minmax_normalize(front, lo, hi), tuple(reference)).value


class Optimizer:
    """Owns one run: the database, the surrogates, and the RNG streams."""

    def __init__(self, config: SearchConfig, problem: Problem | None = None):
        config.validate()
        self.config = config
        self.problem = problem if problem is not None else make_problem(
            config.problem, **config.problem_args)
        self.db = SampleDatabase((self.problem.lower, self.problem.upper),
                                 dedup_eps=config.dedup_eps)
        self.rng = rng_streams(config.seed)
        self.iteration = 0
        self.trace: list[IterationReport] = []
        self.notes: list[str] = []
        self._warm: dict[int, dict] = {0: {}, 1: {}}
        self._models: dict[int, object] = {}
        self._fitted_once = False
        self.on_iteration = None  # optional callable(IterationReport)

    # -- fidelity bookkeeping ------------------------------------------------

    @property
    def archive_fidelity(self) -> str:
        """Fidelity whose records drive selection and EI targets."""
        return "LF" if self.config.mode == "lf-only" else "HF"

    def _hf_left(self) -> int:
        return self.config.nfe_max_hf - self.db.count("HF")

    def _lf_left(self) -> int:
        return self.config.lf_budget - self.db.count("LF")

    def _primary_left(self) -> int:
        return self._lf_left() if self.config.mode == "lf-only" \
            else self._hf_left()

    def _note(self, text: str) -> None:
        self.notes.append(f"iteration {self.iteration}: {text}")

    # -- evaluation helpers ---------------------------------------------------

    def _evaluate_insert(self, x: np.ndarray, fidelity: str,
                         origin: str) -> bool:
        f = self.problem.evaluate_batch(x[None, :], fidelity)[0]
        return self.db.add(x, fidelity, f[0], f[1], self.iteration, origin)

    def _spend_hf(self, x: np.ndarray, origin: str, report_list) -> bool:
        if self._hf_left() <= 0:
            return False
        self._evaluate_insert(x, "HF", origin)
        report_list.append({"x": [float(v) for v in x], "fidelity": "HF",
                            "origin": origin})
        if self.config.mode != "hf-only" and self._lf_left() > 0:
            if self._evaluate_insert(x, "LF", "colocated"):
                report_list.append({"x": [float(v) for v in x],
                                    "fidelity": "LF", "origin": "colocated"})
        return True

    def _spend_lf(self, x: np.ndarray, origin: str, report_list) -> bool:
        if self.config.mode == "hf-only" or self._lf_left() <= 0:
            return False
        if self._evaluate_insert(x, "LF", origin):
            report_list.append({"x": [float(v) for v in x], "fidelity": "LF",
                                "origin": origin})
            return True
        return False

    def _is_new(self, x: np.ndarray) -> bool:
        return not (self.db.contains(x, "HF") or self.db.contains(x, "LF"))

    # -- the operations -------------------------------------------------------

    def initialize(self) -> SampleDatabase:
        cfg = self.config
        lower, upper = self.problem.lower, self.problem.upper
        if cfg.mode == "hf-only":
            x_hf = evolution.maximin_lhd(cfg.n_s_hf, lower, upper,
                                         self.rng["init"], cfg.lhd_restarts)
            f = self.problem.evaluate_batch(x_hf, "HF")
            for row, frow in zip(x_hf, f):
                self.db.add(row, "HF", frow[0], frow[1], 0, "initial")
        elif cfg.mode == "lf-only":
            x_lf = evolution.maximin_lhd(cfg.lf_initial, lower, upper,
                                         self.rng["init"], cfg.lhd_restarts)
            f = self.problem.evaluate_batch(x_lf, "LF")
            for row, frow in zip(x_lf, f):
                self.db.add(row, "LF", frow[0], frow[1], 0, "initial")
        else:
            x_lf = evolution.maximin_lhd(cfg.lf_initial, lower, upper,
                                         self.rng["init"], cfg.lhd_restarts)
            hf_idx = evolution.maximin_subset(x_lf, cfg.n_s_hf)
            f_lf = self.problem.evaluate_batch(x_lf, "LF")
            for row, frow in zip(x_lf, f_lf):
                self.db.add(row, "LF", frow[0], frow[1], 0, "initial")
            x_hf = x_lf[hf_idx]
            f_hf = self.problem.evaluate_batch(x_hf, "HF")
            for row, frow in zip(x_hf, f_hf):
                self.db.add(row, "HF", frow[0], frow[1], 0, "initial")
        self.trace.append(IterationReport(
            0, self.db.count("HF"), self.db.count("LF")))
        return self.db

    def select_parents(self) -> tuple[np.ndarray, np.ndarray]:
        fid = self.archive_fidelity
        x = self.db.x_of(fid)
        f = self.db.f_of(fid)
        if len(x) == 0:
            raise RuntimeError("no archive records to select parents from")
        idx = evolution.nondominated_sort(f)
        order = np.lexsort((-idx.crowding, idx.rank))
        n_p = self.config.n_p
        if len(order) >= n_p:
            chosen = order[:n_p]
        else:
            rank0 = np.flatnonzero(idx.rank == 0)
            deficit = self.rng["parents"].choice(
                rank0, size=n_p - len(order), replace=True)
            chosen = np.concatenate([order, deficit])
        return x[chosen], f[chosen]

    def _fit_global_models(self) -> dict[int, object]:
        cfg = self.config
        gens = cfg.warm_gens if self._fitted_once else cfg.fit_gens
        models: dict[int, object] = {}
        if cfg.mode == "mf":
            x_lf, f_lf = self.db.x_of("LF"), self.db.f_of("LF")
            x_hf, f_hf = self.db.x_of("HF"), self.db.f_of("HF")
            lf_at_hf = np.array(
                [self.db.lf_value_at(row) or (np.nan, np.nan) for row in x_hf])
            for obj in (0, 1):
                warm = self._warm[obj] or None
                model = surrogate.fit_cokriging(
                    x_lf, f_lf[:, obj], x_hf, f_hf[:, obj],
                    lf_at_hf[:, obj], pop=cfg.fit_pop, gens=gens,
                    rng=self.rng["fit"], warm=warm)
                models[obj] = model
                self._warm[obj] = {"theta_lf": model.lf.theta,
                                   "theta_d": model.theta_d,
                                   "rho": model.rho_std}
        else:
            fid = self.archive_fidelity
            x = self.db.x_of(fid)
            f = self.db.f_of(fid)
            if cfg.mode == "lf-only" and len(x) > cfg.lf_only_window:
                x = x[-cfg.lf_only_window:]
                f = f[-cfg.lf_only_window:]
            for obj in (0, 1):
                warm = self._warm[obj].get("theta") if self._warm[obj] \
                    else None
                model = surrogate.fit_kriging(
                    x, f[:, obj], pop=cfg.fit_pop, gens=gens,
                    rng=self.rng["fit"], warm_theta=warm)
                models[obj] = model
                self._warm[obj] = {"theta": model.theta}
        self._fitted_once = True
        self._models = models
        return models

    def _pick_candidates(self, cand_x: np.ndarray, predicted: np.ndarray,
                         count: int) -> list[np.ndarray]:
        """Distinct not-yet-evaluated rows: shuffled predicted rank 0 first,
        then everything else by (rank, -crowding)."""
        idx = evolution.nondominated_sort(predicted)
        rank0 = np.flatnonzero(idx.rank == 0)
        self.rng["global_pick"].shuffle(rank0)
        rest = np.array([i for i in np.lexsort((-idx.crowding, idx.rank))
                         if idx.rank[i] > 0], dtype=np.int64)
        picks: list[np.ndarray] = []
        span = self.db.upper - self.db.lower
        for i in np.concatenate([rank0, rest]):
            x = cand_x[i]
            if not self._is_new(x):
                continue
            if any(np.max(np.abs(x - p) / span) < self.config.dedup_eps
                   for p in picks):
                continue
            picks.append(x)
            if len(picks) == count:
                break
        return picks

    def global_infill(self) -> np.ndarray | None:
        """One surrogate-screened infill round; returns the local center."""
        cfg = self.config
        parents_x, parents_f = self.select_parents()
        best_pool = parents_x[
            evolution.nondominated_sort(parents_f).rank == 0]
        offspring = evolution.de_offspring(
            parents_x, best_pool, cfg.F, cfg.p_c,
            self.problem.lower, self.problem.upper, self.rng["offspring"])
        predicted = np.column_stack(
            [self._models[obj].predict(offspring)[0] for obj in (0, 1)])
        picks = self._pick_candidates(offspring, predicted, 3)
        report = self.trace[-1].global_points
        if not picks:
            self._note("global infill skipped: all screened offspring "
                       "duplicate existing samples")
            return None
        center = picks[0]
        if cfg.mode == "lf-only":
            for x in picks:
                self._spend_lf(x, "global_infill", report)
        else:
            self._spend_hf(picks[0], "global_infill", report)
            for x in picks[1:]:
                self._spend_lf(x, "global_infill", report)
        return center

    def _local_models(self, center: np.ndarray) -> tuple[dict, np.ndarray] | None:
        cfg = self.config
        if cfg.mode == "mf":
            near_hf = self.db.nearest(center, "HF", cfg.n_near)
            near_lf = self.db.nearest(center, "LF", 2 * cfg.n_near)
            if len(near_hf) < 3 or len(near_lf) < 3:
                self._note("local infill skipped: too few neighbors")
                return None
            x_hf = np.array([r.x for r in near_hf])
            f_hf = np.array([r.f for r in near_hf])
            x_lf = np.array([r.x for r in near_lf])
            f_lf = np.array([r.f for r in near_lf])
            lf_at_hf = np.array(
                [self.db.lf_value_at(row) or (np.nan, np.nan)
                 for row in x_hf])
            models = {}
            for obj in (0, 1):
                models[obj] = surrogate.fit_cokriging(
                    x_lf, f_lf[:, obj], x_hf, f_hf[:, obj], lf_at_hf[:, obj],
                    pop=cfg.fit_pop, gens=cfg.warm_gens, rng=self.rng["fit"],
                    warm=self._warm[obj] or None)
            anchor = x_hf
        else:
            fid = self.archive_fidelity
            near = self.db.nearest(center, fid, 3 * cfg.n_near)
            if len(near) < 3:
                self._note("local infill skipped: too few neighbors")
                return None
            x = np.array([r.x for r in near])
            f = np.array([r.f for r in near])
            models = {}
            for obj in (0, 1):
                warm = self._warm[obj].get("theta") if self._warm[obj] \
                    else None
                models[obj] = surrogate.fit_kriging(
                    x, f[:, obj], pop=cfg.fit_pop, gens=cfg.warm_gens,
                    rng=self.rng["fit"], warm_theta=warm)
            anchor = x
        return models, anchor

    def _ei_box(self, anchor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.config.trust_region:
            return self.problem.lower, self.problem.upper
        lo, hi = anchor.min(axis=0), anchor.max(axis=0)
        pad = self.config.trust_region_inflate * np.where(
            hi > lo, hi - lo, 0.1 * (self.problem.upper - self.problem.lower))
        return (np.maximum(self.problem.lower, lo - pad),
                np.minimum(self.problem.upper, hi + pad))

    def local_infill(self, center: np.ndarray) -> None:
        cfg = self.config
        fitted = self._local_models(center)
        if fitted is None:
            return
        models, anchor = fitted
        f_min = self.db.objective_minima(self.archive_fidelity)

        def neg_ei(xq: np.ndarray) -> np.ndarray:
            cols = []
            for obj in (0, 1):
                mean, mse = models[obj].predict(xq)
                cols.append(-surrogate.expected_improvement(
                    mean, mse, f_min[obj]))
            return np.column_stack(cols)

        lo, hi = self._ei_box(anchor)
        px, pf = evolution.nsga2_minimize(
            neg_ei, lo, hi, cfg.ei_pop, cfg.ei_gens, self.rng["ei"])
        ei = -pf
        if float(np.max(ei)) <= 0.0:
            self._note("local infill skipped: expected improvement is "
                       "identically zero on the candidate front")
            return
        ei_lo, ei_hi = ei.min(axis=0), ei.max(axis=0)
        norm_ei = minmax_normalize(ei, ei_lo, ei_hi)
        clusters = evolution.kmeans(norm_ei, cfg.K, self.rng["cluster"])
        report = self.trace[-1].local_points
        for cluster in clusters:
            members = cluster.members
            dist = np.linalg.norm(
                norm_ei[members] - cluster.center, axis=1)
            ordered = members[np.argsort(dist, kind="stable")]
            rep_idx = next((i for i in ordered if self._is_new(px[i])), None)
            if rep_idx is None:
                self._note("local cluster skipped: every member duplicates "
                           "an existing sample")
                continue
            if cfg.mode == "lf-only":
                self._spend_lf(px[rep_idx], "local_infill", report)
            else:
                if not self._spend_hf(px[rep_idx], "local_infill", report):
                    self._note("local HF infill skipped: HF budget "
                               "exhausted")
            others = [i for i in ordered if i != rep_idx]
            if not others:
                others = [rep_idx]
            spent = 0
            for i in others:
                if spent == 2:
                    break
                if self._spend_lf(px[i], "local_infill", report):
                    spent += 1

    def run(self) -> RunResult:
        cfg = self.config
        start = time.perf_counter()
        completed, error = True, None
        try:
            if not self.db.records:
                self.initialize()
            while self._primary_left() > 0:
                spent_before = self._primary_left()
                self.iteration += 1
                self.trace.append(IterationReport(
                    self.iteration, self.db.count("HF"),
                    self.db.count("LF")))
                self._fit_global_models()
                center = self.global_infill()
                if self._primary_left() <= 0:
                    self._update_counts()
                    if self.on_iteration is not None:
                        self.on_iteration(self.trace[-1])
                    break
                if center is not None:
                    self.local_infill(center)
                self._update_counts()
                if self.on_iteration is not None:
                    self.on_iteration(self.trace[-1])
                if self._primary_left() == spent_before:
                    self._note("stopping early: the iteration spent no "
                               "budget (search space exhausted)")
                    break
            if cfg.mode == "lf-only":
                self._rescore_lf_front()
        except EvaluatorError as exc:
            completed, error = False, str(exc)
            self._note(f"aborted: {exc}")
        wall = time.perf_counter() - start
        attach_trace_hv(self.db, self.trace,
                        "LF" if cfg.mode == "lf-only" else "HF",
                        cfg.hv_reference)
        try:
            front_records = self.db.pareto("HF")
        except LookupError:
            front_records = []
        pareto_x = np.array([r.x for r in front_records]) if front_records \
            else np.empty((0, self.db.dim))
        pareto_f = np.array([r.f for r in front_records]) if front_records \
            else np.empty((0, 2))
        summaries = {f"objective_{k + 1}": m.summary()
                     for k, m in self._models.items()} if self._models else {}
        return RunResult(self.db, pareto_x, pareto_f, self.trace, wall,
                         completed, error, summaries, self.notes)

    def _update_counts(self) -> None:
        self.trace[-1].hf_count = self.db.count("HF")
        self.trace[-1].lf_count = self.db.count("LF")

    def _rescore_lf_front(self) -> None:
        """Evaluate the LF Pareto set at HF so fronts are comparable."""
        front = self.db.pareto("LF")
        x = np.array([r.x for r in front])
        f = self.problem.evaluate_batch(x, "HF")
        self.iteration += 1
        self.trace.append(IterationReport(
            self.iteration, self.db.count("HF"), self.db.count("LF"),
            notes=["lf-only front rescored at HF"]))
        for row, frow in zip(x, f):
            self.db.add(row, "HF", frow[0], frow[1], self.iteration,
                        "rescored")
        self._update_counts()


def attach_trace_hv(db: SampleDatabase, trace: list[IterationReport],
                    fidelity: str, reference=(1.1, 1.1)) -> None:
    """Fill per-iteration hypervolume using the final archive's extremes.

    Iteration prefixes nest, so the resulting trace is non-decreasing.
    """
    records = db.records_of(fidelity)
    if not records:
        for rep in trace:
            rep.hv = 0.0
        return
    all_f = np.array([r.f for r in records])
    lo, hi = all_f.min(axis=0), all_f.max(axis=0)
    for rep in trace:
        sub = np.array([r.f for r in records if r.iteration <= rep.iteration])
        rep.hv = normalized_hv(sub, lo, hi, reference)


def run_search(config: SearchConfig, problem: Problem | None = None
               ) -> RunResult:
    opt = Optimizer(config, problem)
    try:
        return opt.run()
    finally:
        opt.problem.close()


# ---------------------------------------------------------------------------
# artifacts

def _fmt(v) -> str:
    return repr(float(v))


def write_front_csv(path: str, pareto_x: np.ndarray,
                    pareto_f: np.ndarray) -> None:
    dim = pareto_x.shape[1] if len(pareto_x) else 0
    header = ["f1", "f2"] + [f"x{i + 1}" for i in range(dim)]
    order = np.lexsort((pareto_f[:, 1], pareto_f[:, 0])) if len(pareto_f) \
        else []
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in order:
            row = [_fmt(pareto_f[i, 0]), _fmt(pareto_f[i, 1])]
            row += [_fmt(v) for v in pareto_x[i]]
            fh.write(",".join(row) + "\n")


def write_trace_csv(path: str, trace: list[IterationReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,hf_count,hv\n")
        for rep in trace:
            fh.write(f"{rep.iteration},{rep.hf_count},{_fmt(rep.hv)}\n")


def run_report(config: SearchConfig, result: RunResult) -> dict:
    return {
        "config": config.to_dict(),
        "seed": config.seed,
        "rng_streams": list(_STREAM_NAMES),
        "normalization": NORMALIZATION_RECIPE,
        "hv_reference": list(config.hv_reference),
        "kernel_implementation": IMPLEMENTATION,
        "counts": {"HF": result.database.count("HF"),
                   "LF": result.database.count("LF")},
        "iterations": result.trace[-1].iteration if result.trace else 0,
        "final_hv": None if np.isnan(result.final_hv)
        else float(result.final_hv),
        "pareto_size": int(len(result.pareto_f)),
        "wall_time_s": float(result.wall_time),
        "completed": result.completed,
        "error": result.error,
        "model_summaries": result.model_summaries,
        "notes": result.notes,
        "trace": [{"iteration": r.iteration, "hf_count": r.hf_count,
                   "lf_count": r.lf_count, "hv": float(r.hv),
                   "global_points": r.global_points,
                   "local_points": r.local_points, "notes": r.notes}
                  for r in result.trace],
    }


def write_run_artifacts(out_dir: str, config: SearchConfig,
                        result: RunResult) -> dict:
    """Persist database, front, trace and report; returns the inventory."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "database": os.path.join(out_dir, "database.ndjson"),
        "front": os.path.join(out_dir, "front.csv"),
        "hv_trace": os.path.join(out_dir, "hv_trace.csv"),
        "report": os.path.join(out_dir, "report.json"),
    }
    result.database.persist(paths["database"])
    write_front_csv(paths["front"], result.pareto_x, result.pareto_f)
    write_trace_csv(paths["hv_trace"], result.trace)
    with open(paths["report"], "w", encoding="utf-8") as fh:
        json.dump(run_report(config, result), fh, indent=2, allow_nan=False)
        fh.write("\n")
    return paths
