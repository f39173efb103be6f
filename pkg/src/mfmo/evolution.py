"""Evolutionary building blocks shared across the search loop.

Space-filling designs, differential-evolution offspring generation, fast
nondominated sorting, crowding distances, a compact elitist NSGA-II, k-means
clustering and exact 2-D hypervolume. Everything takes an explicit
numpy Generator so runs replay byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import pareto_ranks

__all__ = [
    "maximin_lhd", "maximin_subset", "scale_to_bounds", "repair_box",
    "de_offspring", "de_minimize", "pareto_ranks", "fronts_from_ranks",
    "FrontIndexing", "nondominated_sort", "crowding_distance",
    "nsga2_minimize", "Cluster", "kmeans", "HypervolumeResult",
    "hypervolume_2d",
]


# ---------------------------------------------------------------------------
# designs

def maximin_lhd(n: int, lower: np.ndarray, upper: np.ndarray,
                rng: np.random.Generator, restarts: int = 50) -> np.ndarray:
    """Midpoint-strata Latin hypercube over a box, best of ``restarts``.

    Candidates are scored by their smallest pairwise distance in unit
    coordinates. n=1 returns the box center.
    """
    if n < 1:
        raise ValueError("n must be positive")
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    dim = lower.size
    if n == 1:
        return scale_to_bounds(np.full((1, dim), 0.5), lower, upper)
    best, best_score = None, -np.inf
    for _ in range(max(1, restarts)):
        u = np.empty((n, dim))
        for k in range(dim):
            u[:, k] = (rng.permutation(n) + 0.5) / n
        d = np.linalg.norm(u[:, None, :] - u[None, :, :], axis=2)
        np.fill_diagonal(d, np.inf)
        score = d.min()
        if score > best_score:
            best, best_score = u, score
    return scale_to_bounds(best, lower, upper)


def maximin_subset(x: np.ndarray, k: int) -> np.ndarray:
    """Greedy maximin selection of ``k`` row indices of ``x``.

    Starts from one end of the farthest pair, then repeatedly adds the point
    with the largest distance to the already-selected set. Deterministic;
    ties break toward the lower index.
    """
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    first = int(np.unravel_index(np.argmax(d), d.shape)[0])
    chosen = [first]
    mindist = d[first].copy()
    for _ in range(k - 1):
        mindist[chosen] = -np.inf
        nxt = int(np.argmax(mindist))
        chosen.append(nxt)
        mindist = np.minimum(mindist, d[nxt])
    return np.array(sorted(chosen))


def scale_to_bounds(u: np.ndarray, lower: np.ndarray,
                    upper: np.ndarray) -> np.ndarray:
    return lower + u * (upper - lower)


def repair_box(v: np.ndarray, lower: np.ndarray,
               upper: np.ndarray) -> np.ndarray:
    """Reflect out-of-box coordinates once, then clamp what remains."""
    out = np.where(v < lower, 2.0 * lower - v, v)
    out = np.where(out > upper, 2.0 * upper - out, out)
    return np.clip(out, lower, upper)


# ---------------------------------------------------------------------------
# differential evolution

def _mutant_rand1(x, i, d, best, fw):
    return x[d[0]] + fw * (x[d[1]] - x[d[2]])


def _mutant_best1(x, i, d, best, fw):
    return x[best] + fw * (x[d[0]] - x[d[1]])


def _mutant_rand2(x, i, d, best, fw):
    return x[d[0]] + fw * (x[d[1]] - x[d[2]]) + fw * (x[d[3]] - x[d[4]])


def _mutant_best2(x, i, d, best, fw):
    return x[best] + fw * (x[d[0]] - x[d[1]]) + fw * (x[d[2]] - x[d[3]])


def _mutant_current_to_rand1(x, i, d, best, fw):
    return x[i] + fw * (x[d[0]] - x[i]) + fw * (x[d[1]] - x[d[2]])


def _mutant_current_to_best1(x, i, d, best, fw):
    return x[i] + fw * (x[best] - x[i]) + fw * (x[d[0]] - x[d[1]])


# (name, mutant fn, donors needed, uses best)
DE_STRATEGIES = (
    ("rand/1", _mutant_rand1, 3, False),
    ("best/1", _mutant_best1, 2, True),
    ("rand/2", _mutant_rand2, 5, False),
    ("best/2", _mutant_best2, 4, True),
    ("current-to-rand/1", _mutant_current_to_rand1, 3, False),
    ("current-to-best/1", _mutant_current_to_best1, 2, True),
)


def de_offspring(parents_x: np.ndarray, best_pool: np.ndarray, f_weight: float,
                 p_c: float, lower: np.ndarray, upper: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """One child per parent per strategy, stacked strategy-major.

    Six strategy blocks of len(parents) rows each. Donor indices are drawn
    mutually distinct and distinct from the current parent; "best" is drawn
    uniformly from ``best_pool`` (the parents' nondominated indices) per
    mutant. Binomial crossover with a forced coordinate, then
    reflect-and-clamp repair.
    """
    n, dim = parents_x.shape
    need = max(s[2] for s in DE_STRATEGIES) + 1
    if n < need:
        raise ValueError(f"need at least {need} parents, got {n}")
    rank0 = np.asarray(best_pool, dtype=np.int64).ravel()
    if rank0.size == 0:
        raise ValueError("best_pool must not be empty")
    children = np.empty((len(DE_STRATEGIES) * n, dim))
    row = 0
    for _name, mutant_fn, n_donors, uses_best in DE_STRATEGIES:
        for i in range(n):
            pool = np.delete(np.arange(n), i)
            donors = pool[rng.choice(n - 1, size=n_donors, replace=False)]
            best = int(rank0[rng.integers(len(rank0))]) if uses_best else -1
            v = mutant_fn(parents_x, i, donors, best, f_weight)
            j_rand = rng.integers(dim)
            mask = rng.random(dim) < p_c
            mask[j_rand] = True
            child = np.where(mask, v, parents_x[i])
            children[row] = repair_box(child, lower, upper)
            row += 1
    return children


def de_minimize(func, lower: np.ndarray, upper: np.ndarray, pop: int,
                gens: int, rng: np.random.Generator,
                x0: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Single-objective DE/rand/1/bin over a box; ``func`` maps (m,d)->(m,).

    Rows of ``x0`` (if given) replace the head of the initial population,
    which is how refits warm-start from the previous optimum.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    dim = lower.size
    x = lower + rng.random((pop, dim)) * (upper - lower)
    if x0 is not None:
        seeds = np.atleast_2d(np.asarray(x0, dtype=np.float64))[:pop]
        x[:len(seeds)] = np.clip(seeds, lower, upper)
    fx = np.asarray(func(x), dtype=np.float64)
    fw, cr = 0.8, 0.9
    for _ in range(gens):
        trials = np.empty_like(x)
        for i in range(pop):
            pool = np.delete(np.arange(pop), i)
            a, b, c = pool[rng.choice(pop - 1, size=3, replace=False)]
            v = x[a] + fw * (x[b] - x[c])
            j_rand = rng.integers(dim)
            mask = rng.random(dim) < cr
            mask[j_rand] = True
            trials[i] = repair_box(np.where(mask, v, x[i]), lower, upper)
        ft = np.asarray(func(trials), dtype=np.float64)
        better = ft <= fx
        x[better] = trials[better]
        fx[better] = ft[better]
    i = int(np.argmin(fx))
    return x[i].copy(), float(fx[i])


# ---------------------------------------------------------------------------
# multi-objective machinery

def fronts_from_ranks(ranks: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(ranks == r) for r in range(int(ranks.max()) + 1)]


@dataclass(frozen=True)
class FrontIndexing:
    """Per-member nondomination rank and within-front crowding distance."""

    rank: np.ndarray
    crowding: np.ndarray


def nondominated_sort(objectives: np.ndarray) -> FrontIndexing:
    """Deb-style fast nondominated sort plus crowding, under minimization."""
    f = np.asarray(objectives, dtype=np.float64)
    ranks, crowd = _rank_crowding_key(f)
    return FrontIndexing(ranks, crowd)


def crowding_distance(f: np.ndarray) -> np.ndarray:
    """Crowding distances within one front; boundary points get +inf.

    Interior contributions are neighbour gaps normalized by the objective
    range; an objective with zero range contributes nothing.
    """
    f = np.asarray(f, dtype=np.float64)
    n = len(f)
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(f.shape[1]):
        order = np.argsort(f[:, k], kind="stable")
        span = f[order[-1], k] - f[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        gaps = (f[order[2:], k] - f[order[:-2], k]) / span
        dist[order[1:-1]] += gaps
    return dist


def _rank_crowding_key(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ranks = pareto_ranks(f)
    crowd = np.empty(len(f))
    for front in fronts_from_ranks(ranks):
        crowd[front] = crowding_distance(f[front])
    return ranks, crowd


def _sbx_pair(a, b, lower, upper, rng, eta=15.0, p_cx=0.9):
    if rng.random() > p_cx:
        return a.copy(), b.copy()
    dim = a.size
    do = rng.random(dim) < 0.5
    u = rng.random(dim)
    beta = np.where(u <= 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)),
                    (0.5 / (1.0 - u)) ** (1.0 / (eta + 1.0)))
    c1 = np.where(do, 0.5 * ((1 + beta) * a + (1 - beta) * b), a)
    c2 = np.where(do, 0.5 * ((1 - beta) * a + (1 + beta) * b), b)
    return (repair_box(c1, lower, upper), repair_box(c2, lower, upper))


def _poly_mutate(x, lower, upper, rng, eta=20.0, rate=None):
    dim = x.size
    if rate is None:
        rate = 1.0 / dim
    do = rng.random(dim) < rate
    u = rng.random(dim)
    delta = np.where(u < 0.5, (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
                     1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)))
    out = np.where(do, x + delta * (upper - lower), x)
    return repair_box(out, lower, upper)


def nsga2_minimize(func, lower: np.ndarray, upper: np.ndarray, pop: int,
                   gens: int, rng: np.random.Generator
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Elitist NSGA-II over a box; returns the final nondominated set.

    ``func`` maps an (m, d) batch to (m, n_obj) objective rows (minimized).
    SBX crossover (eta 15) and polynomial mutation (eta 20, rate 1/d).
    Exact duplicate rows are dropped from the returned set.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    dim = lower.size
    if pop % 2:
        pop += 1
    u = np.empty((pop, dim))
    for k in range(dim):
        u[:, k] = (rng.permutation(pop) + rng.random(pop)) / pop
    x = scale_to_bounds(u, lower, upper)
    f = np.asarray(func(x), dtype=np.float64)
    for _ in range(gens):
        ranks, crowd = _rank_crowding_key(f)

        def pick() -> int:
            i, j = rng.integers(pop), rng.integers(pop)
            if ranks[i] != ranks[j]:
                return i if ranks[i] < ranks[j] else j
            if crowd[i] != crowd[j]:
                return i if crowd[i] > crowd[j] else j
            return i

        children = np.empty_like(x)
        for c in range(0, pop, 2):
            c1, c2 = _sbx_pair(x[pick()], x[pick()], lower, upper, rng)
            children[c] = _poly_mutate(c1, lower, upper, rng)
            children[c + 1] = _poly_mutate(c2, lower, upper, rng)
        fc = np.asarray(func(children), dtype=np.float64)
        ax = np.vstack([x, children])
        af = np.vstack([f, fc])
        aranks, acrowd = _rank_crowding_key(af)
        order = np.lexsort((-acrowd, aranks))[:pop]
        x, f = ax[order], af[order]
    ranks = pareto_ranks(f)
    keep = np.flatnonzero(ranks == 0)
    seen: set[bytes] = set()
    unique = [i for i in keep
              if (k := x[i].tobytes()) not in seen and not seen.add(k)]
    return x[unique], f[unique]


# ---------------------------------------------------------------------------
# clustering and hypervolume

@dataclass(frozen=True)
class Cluster:
    center: np.ndarray
    members: np.ndarray  # indices into the clustered point set


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           iters: int = 100) -> list[Cluster]:
    """Lloyd's k-means with k-means++ seeding.

    k is reduced to the number of points when necessary. An empty cluster is
    repaired by stealing the point farthest from its assigned center.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    k = min(k, n)
    if k < 1:
        raise ValueError("k must be positive")
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    for c in range(1, k):
        d2 = np.min(
            ((points[:, None, :] - centers[None, :c, :]) ** 2).sum(axis=2),
            axis=1)
        total = d2.sum()
        if total <= 0:
            centers[c] = points[rng.integers(n)]
        else:
            centers[c] = points[rng.choice(n, p=d2 / total)]
    labels = np.full(n, -1)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for c in range(k):
            if not np.any(new_labels == c):
                # steal the farthest point whose cluster can spare it
                dist_own = d2[np.arange(n), new_labels].copy()
                counts = np.bincount(new_labels, minlength=k)
                dist_own[counts[new_labels] <= 1] = -np.inf
                far = int(np.argmax(dist_own))
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
    return [Cluster(centers[c].copy(), np.flatnonzero(labels == c))
            for c in range(k)]


@dataclass(frozen=True)
class HypervolumeResult:
    value: float
    reference: tuple[float, float]


def hypervolume_2d(front: np.ndarray,
                   reference: tuple[float, float]) -> HypervolumeResult:
    """Exact hypervolume of a 2-D minimization front against a reference.

    Points that fail to dominate the reference contribute nothing; an empty
    front has hypervolume 0. Dominated and duplicate members are handled by
    the staircase sweep.
    """
    front = np.asarray(front, dtype=np.float64).reshape(-1, 2)
    rx, ry = float(reference[0]), float(reference[1])
    inside = front[(front[:, 0] < rx) & (front[:, 1] < ry)]
    if not len(inside):
        return HypervolumeResult(0.0, (rx, ry))
    order = np.lexsort((inside[:, 1], inside[:, 0]))
    pts = inside[order]
    hv = 0.0
    best_y = np.inf
    stair: list[tuple[float, float]] = []
    for x1, y1 in pts:
        if y1 < best_y:
            stair.append((x1, y1))
            best_y = y1
    for i, (x1, y1) in enumerate(stair):
        x_next = stair[i + 1][0] if i + 1 < len(stair) else rx
        hv += (x_next - x1) * (ry - y1)
    return HypervolumeResult(hv, (rx, ry))
