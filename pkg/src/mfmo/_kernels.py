"""Numeric kernels with numba and pure-numpy implementations.

The numba path is used when available; set ``MFMO_PURE_NUMPY=1`` to force the
numpy code paths (they are also selected automatically when numba fails to
import). Both implementations are kept importable so tests and the benchmark
script can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


USE_NUMBA = _HAVE_NUMBA and os.environ.get("MFMO_PURE_NUMPY", "") != "1"
IMPLEMENTATION = "numba" if USE_NUMBA else "numpy"


def pairwise_sqdiff(x: np.ndarray) -> np.ndarray:
    """Flattened per-dimension squared differences, shape (n*n, d).

    Row i*n+j holds (x[i] - x[j])**2. Computed once per surrogate fit and
    reused across all candidate length-scale evaluations.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    d2 = (x[:, None, :] - x[None, :, :]) ** 2
    return np.ascontiguousarray(d2.reshape(n * n, x.shape[1]))


# ---------------------------------------------------------------------------
# pure numpy implementations


def corr_from_sqdiff_batch_np(sqdiff: np.ndarray, n: int, thetas: np.ndarray,
                              nugget: float) -> np.ndarray:
    """Batch of Gaussian correlation matrices, shape (p, n, n).

    Entry [p, i, j] = exp(-sum_k thetas[p, k] * sqdiff[i*n+j, k]), with
    1 + nugget on each diagonal.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    m = sqdiff @ thetas.T
    psi = np.exp(-m.T).reshape(len(thetas), n, n)
    idx = np.arange(n)
    psi[:, idx, idx] = 1.0 + nugget
    return psi


def gaussian_cross_np(xa: np.ndarray, xb: np.ndarray,
                      theta: np.ndarray) -> np.ndarray:
    """Cross-correlation matrix between two point sets, shape (na, nb)."""
    d2 = (xa[:, None, :] - xb[None, :, :]) ** 2
    return np.exp(-(d2 @ np.asarray(theta, dtype=np.float64)))


def pareto_ranks_np(f: np.ndarray) -> np.ndarray:
    """Nondominated-sorting ranks (0 = nondominated) for a minimization set.

    A point dominates another when it is no worse in every objective and
    strictly better in at least one; equal rows therefore share a rank.
    """
    f = np.asarray(f, dtype=np.float64)
    n = f.shape[0]
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    ndom = dom.sum(axis=0)
    ranks = np.full(n, -1, dtype=np.int64)
    rank = 0
    remaining = n
    while remaining:
        front = (ndom == 0) & (ranks < 0)
        ranks[front] = rank
        ndom = ndom - dom[front].sum(axis=0)
        remaining -= int(front.sum())
        rank += 1
    return ranks


# ---------------------------------------------------------------------------
# numba implementations


@njit(cache=True)
def _corr_from_sqdiff_batch_nb(sqdiff, n, thetas, nugget):
    p = thetas.shape[0]
    d = thetas.shape[1]
    out = np.empty((p, n, n), dtype=np.float64)
    for b in range(p):
        for i in range(n):
            out[b, i, i] = 1.0 + nugget
            base = i * n
            for j in range(i + 1, n):
                s = 0.0
                for k in range(d):
                    s += thetas[b, k] * sqdiff[base + j, k]
                v = np.exp(-s)
                out[b, i, j] = v
                out[b, j, i] = v
    return out


@njit(cache=True)
def _gaussian_cross_nb(xa, xb, theta):
    na = xa.shape[0]
    nb = xb.shape[0]
    d = xa.shape[1]
    out = np.empty((na, nb), dtype=np.float64)
    for i in range(na):
        for j in range(nb):
            s = 0.0
            for k in range(d):
                diff = xa[i, k] - xb[j, k]
                s += theta[k] * diff * diff
            out[i, j] = np.exp(-s)
    return out


@njit(cache=True)
def _pareto_ranks_nb(f):
    n = f.shape[0]
    m = f.shape[1]
    dom = np.zeros((n, n), dtype=np.bool_)
    ndom = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            le = True
            lt = False
            for k in range(m):
                if f[i, k] > f[j, k]:
                    le = False
                    break
                if f[i, k] < f[j, k]:
                    lt = True
            if le and lt:
                dom[i, j] = True
                ndom[j] += 1
    ranks = np.full(n, -1, dtype=np.int64)
    rank = 0
    remaining = n
    while remaining > 0:
        for i in range(n):
            if ranks[i] < 0 and ndom[i] == 0:
                ranks[i] = rank
                remaining -= 1
        for i in range(n):
            if ranks[i] == rank:
                for j in range(n):
                    if dom[i, j]:
                        ndom[j] -= 1
        rank += 1
    return ranks


def corr_from_sqdiff_batch_nb(sqdiff, n, thetas, nugget):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    return _corr_from_sqdiff_batch_nb(
        np.ascontiguousarray(sqdiff), n, np.ascontiguousarray(thetas),
        float(nugget))


def gaussian_cross_nb(xa, xb, theta):
    return _gaussian_cross_nb(
        np.ascontiguousarray(xa, dtype=np.float64),
        np.ascontiguousarray(xb, dtype=np.float64),
        np.ascontiguousarray(theta, dtype=np.float64))


def pareto_ranks_nb(f):
    return _pareto_ranks_nb(np.ascontiguousarray(f, dtype=np.float64))


# ---------------------------------------------------------------------------
# public bindings

if USE_NUMBA:
    corr_from_sqdiff_batch = corr_from_sqdiff_batch_nb
    gaussian_cross = gaussian_cross_nb
    pareto_ranks = pareto_ranks_nb
else:
    corr_from_sqdiff_batch = corr_from_sqdiff_batch_np
    gaussian_cross = gaussian_cross_np
    pareto_ranks = pareto_ranks_np


def gaussian_corr(x: np.ndarray, theta: np.ndarray, nugget: float) -> np.ndarray:
    """Symmetric Gaussian correlation matrix with 1 + nugget on the diagonal."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    return corr_from_sqdiff_batch(pairwise_sqdiff(x), n,
                                  np.asarray(theta)[None, :], nugget)[0]
