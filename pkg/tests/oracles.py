"""Independent reference implementations used to cross-check the package.

Everything here is written for clarity over speed and deliberately avoids
the package's kernels and factorizations: correlation matrices are built by
broadcasting, linear systems go through hand-rolled Gaussian elimination in
extended precision (so oracle round-off is negligible next to the tested
code's), dominance is a double loop, hypervolume is Monte Carlo. Agreement
between these and the fast paths is the point of the tests importing this.
"""

from __future__ import annotations

import numpy as np

LD = np.longdouble


def corr_matrix(a: np.ndarray, b: np.ndarray, theta: np.ndarray
                ) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    theta = np.asarray(theta)
    diff2 = (a[:, None, :] - b[None, :, :]) ** 2
    return np.exp(-(diff2 * theta).sum(axis=2))


def solve_plu(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting; works in any dtype."""
    a = np.array(a, copy=True)
    rhs = np.asarray(b, dtype=a.dtype)
    vector = rhs.ndim == 1
    b = np.array(rhs[:, None] if vector else rhs, copy=True)
    n = a.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        factors = a[col + 1:, col] / a[col, col]
        a[col + 1:, col:] -= factors[:, None] * a[col, col:]
        b[col + 1:] -= factors[:, None] * b[col]
    x = np.zeros_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x[:, 0] if vector else x


def _standardize(y):
    m = np.mean(y)
    s = np.std(y)
    if s < 1e-12:
        s = type(s)(1.0)
    return (y - m) / s, m, s


def _colocated(x_train, xq):
    scale = np.maximum(np.ptp(np.asarray(x_train, dtype=np.float64), axis=0),
                       1.0)
    near = np.abs(np.asarray(xq, dtype=np.float64)[:, None, :]
                  - np.asarray(x_train, dtype=np.float64)[None, :, :]) \
        <= 1e-12 * scale
    hits = near.all(axis=2)
    return hits.any(axis=1), np.argmax(hits, axis=1)


def kriging_predict_dense(model, y_raw: np.ndarray, xq: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Recompute a fitted KrigingModel's prediction by dense elimination.

    Uses only the model's hyperparameters (theta, nugget) plus the raw
    training data; standardization, the generalized-least-squares mean, the
    process variance and the posterior are re-derived from scratch in
    extended precision. Mirrors the interpolation rule: co-located queries
    return the stored output with zero MSE.
    """
    x = np.asarray(model.x, dtype=LD)
    xq2 = np.atleast_2d(np.asarray(xq, dtype=LD))
    y, m, s = _standardize(np.asarray(y_raw, dtype=LD))
    n = len(x)
    theta = np.asarray(model.theta, dtype=LD)
    psi = corr_matrix(x, x, theta) + LD(model.nugget) * np.eye(n, dtype=LD)
    ones = np.ones(n, dtype=LD)
    z1 = solve_plu(psi, ones)
    zy = solve_plu(psi, y)
    mu = (ones @ zy) / (ones @ z1)
    resid = y - mu
    alpha = solve_plu(psi, resid)
    sigma2 = (resid @ alpha) / n
    psi_q = corr_matrix(xq2, x, theta)
    mean = mu + psi_q @ alpha
    w2 = np.einsum("qi,iq->q", psi_q, solve_plu(psi, psi_q.T))
    mse = sigma2 * np.maximum(LD(1.0) + LD(model.nugget) - w2, LD(0.0))
    mean = np.asarray(mean * s + m, dtype=np.float64)
    mse = np.asarray(mse * s ** 2, dtype=np.float64)
    hit, idx = _colocated(model.x, xq2)
    y64 = np.asarray(y_raw, dtype=np.float64)
    mean[hit] = y64[idx[hit]]
    mse[hit] = 0.0
    return mean, np.maximum(mse, 0.0)


def cokriging_predict_dense(model, y_lf_raw: np.ndarray,
                            y_hf_raw: np.ndarray, xq: np.ndarray
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Recompute a fitted CoKrigingModel's prediction by dense elimination.

    Takes the fitted hyperparameters (LF length-scales and variance, residual
    length-scales, scaling factor, variances, nugget) plus the raw training
    outputs, assembles the joint covariance explicitly in extended precision,
    and predicts through Gaussian elimination. No factors are reused from the
    model. Mirrors the interpolation rule at HF training inputs.
    """
    xq2 = np.atleast_2d(np.asarray(xq, dtype=LD))
    x_l = np.asarray(model.lf.x, dtype=LD)
    x_h = np.asarray(model.x_hf, dtype=LD)
    n_l, n_h = len(x_l), len(x_h)
    y_l = (np.asarray(y_lf_raw, dtype=LD) - LD(model.lf.y_mean)) \
        / LD(model.lf.y_std)
    y_h = (np.asarray(y_hf_raw, dtype=LD) - LD(model.hf_mean)) \
        / LD(model.hf_std)
    y = np.concatenate([y_l, y_h])

    s2l = LD(max(model.lf.sigma2, 1e-12))   # floored in the joint covariance
    s2l_q = LD(model.lf.sigma2)             # raw in query covariance / prior
    s2d = LD(model.sigma2_d_std)
    rho = LD(model.rho_std)
    th_l = np.asarray(model.lf.theta, dtype=LD)
    th_d = np.asarray(model.theta_d, dtype=LD)
    ng = LD(model.nugget_c)

    c = np.empty((n_l + n_h, n_l + n_h), dtype=LD)
    c[:n_l, :n_l] = s2l * (corr_matrix(x_l, x_l, th_l)
                           + ng * np.eye(n_l, dtype=LD))
    c[:n_l, n_l:] = rho * s2l * corr_matrix(x_l, x_h, th_l)
    c[n_l:, :n_l] = c[:n_l, n_l:].T
    c[n_l:, n_l:] = rho ** 2 * s2l * (corr_matrix(x_h, x_h, th_l)
                                      + ng * np.eye(n_h, dtype=LD)) \
        + s2d * (corr_matrix(x_h, x_h, th_d) + ng * np.eye(n_h, dtype=LD))

    ones = np.ones(n_l + n_h, dtype=LD)
    z1 = solve_plu(c, ones)
    zy = solve_plu(c, y)
    mu = (ones @ zy) / (ones @ z1)
    resid = y - mu
    alpha = solve_plu(c, resid)

    cq = np.vstack([rho * s2l_q * corr_matrix(x_l, xq2, th_l),
                    rho ** 2 * s2l_q * corr_matrix(x_h, xq2, th_l)
                    + s2d * corr_matrix(x_h, xq2, th_d)])
    mean = mu + cq.T @ alpha
    prior = rho ** 2 * s2l_q + s2d
    mse = prior - np.einsum("iq,iq->q", cq, solve_plu(c, cq))
    mean = np.asarray(mean * LD(model.hf_std) + LD(model.hf_mean),
                      dtype=np.float64)
    mse = np.asarray(np.maximum(mse, LD(0.0)) * LD(model.hf_std) ** 2,
                     dtype=np.float64)
    hit, idx = _colocated(model.x_hf, xq2)
    y64 = np.asarray(y_hf_raw, dtype=np.float64)
    mean[hit] = y64[idx[hit]]
    mse[hit] = 0.0
    return mean, mse


def gls_mean_variance_dense(x: np.ndarray, y_raw: np.ndarray,
                            theta: np.ndarray, nugget: float
                            ) -> tuple[float, float]:
    """Concentrated-likelihood closed forms for fixed hyperparameters.

    Returns (mu, sigma2) on the standardized scale via dense elimination.
    """
    x = np.atleast_2d(np.asarray(x, dtype=LD))
    y, _, _ = _standardize(np.asarray(y_raw, dtype=LD))
    n = len(x)
    psi = corr_matrix(x, x, np.asarray(theta, dtype=LD)) \
        + LD(nugget) * np.eye(n, dtype=LD)
    ones = np.ones(n, dtype=LD)
    z1 = solve_plu(psi, ones)
    zy = solve_plu(psi, y)
    mu = (ones @ zy) / (ones @ z1)
    resid = y - mu
    sigma2 = (resid @ solve_plu(psi, resid)) / n
    return float(mu), float(sigma2)


def brute_dominance_ranks(f: np.ndarray) -> np.ndarray:
    """Nondomination ranks by repeated O(n^2) scanning."""
    f = np.asarray(f, dtype=np.float64)
    n = len(f)
    ranks = np.full(n, -1, dtype=np.int64)
    remaining = list(range(n))
    level = 0
    while remaining:
        front = []
        for i in remaining:
            dominated = False
            for j in remaining:
                if j == i:
                    continue
                if np.all(f[j] <= f[i]) and np.any(f[j] < f[i]):
                    dominated = True
                    break
            if not dominated:
                front.append(i)
        for i in front:
            ranks[i] = level
        remaining = [i for i in remaining if i not in front]
        level += 1
    return ranks


def monte_carlo_hv(front: np.ndarray, reference, n_samples: int = 1_000_000,
                   seed: int = 0) -> float:
    """Dominated area fraction by uniform sampling of the reference box."""
    front = np.atleast_2d(np.asarray(front, dtype=np.float64))
    ref = np.asarray(reference, dtype=np.float64)
    keep = np.all(front < ref, axis=1)
    front = front[keep]
    if len(front) == 0:
        return 0.0
    lo = front.min(axis=0)
    rng = np.random.default_rng(seed)
    pts = lo + rng.random((n_samples, 2)) * (ref - lo)
    dominated = np.zeros(len(pts), dtype=bool)
    for row in front:
        dominated |= np.all(pts >= row, axis=1)
    box = float(np.prod(ref - lo))
    return box * dominated.mean()


def exhaustive_nearest(xs: np.ndarray, center: np.ndarray, k: int,
                       lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Indices of the k nearest rows in bounds-normalized Euclidean metric."""
    span = upper - lower
    z = (np.asarray(xs) - lower) / span
    zc = (np.asarray(center) - lower) / span
    d = np.sqrt(((z - zc) ** 2).sum(axis=1))
    return np.argsort(d, kind="stable")[:min(k, len(xs))]


def ei_by_quadrature(mean: float, sd: float, f_min: float,
                     n_grid: int = 200_001) -> float:
    """E[max(f_min - Y, 0)] for Y ~ N(mean, sd^2), by trapezoid rule."""
    if sd <= 0:
        return max(f_min - mean, 0.0)
    y = np.linspace(mean - 12 * sd, mean + 12 * sd, n_grid)
    density = np.exp(-0.5 * ((y - mean) / sd) ** 2) / (
        sd * np.sqrt(2 * np.pi))
    gain = np.maximum(f_min - y, 0.0)
    return float(np.trapezoid(gain * density, y))
