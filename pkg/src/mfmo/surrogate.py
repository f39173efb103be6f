"""Kriging and two-fidelity co-Kriging surrogates with expected improvement.

The co-Kriging model treats the high-fidelity process as a scaled
low-fidelity process plus an independent Gaussian residual. Hyperparameters
(anisotropic Gaussian length-scales, and the scaling factor for the residual
model) come from a concentrated-likelihood search run by differential
evolution inside fixed boxes. Outputs are standardized per fidelity before
fitting; predictions are returned in raw units.

Inputs are used as given, so callers should pre-scale coordinates to
comparable ranges (the search loop passes bounds-normalized points).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import erfc

from . import _kernels
from .evolution import de_minimize

BASE_NUGGET = 1e-8
# reject hyperparameter candidates whose concentrated variance exceeds this
# multiple of the data variance (determinant-collapse degeneracy)
_SIGMA2_BLOWUP = 100.0
NUGGET_LADDER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
THETA_LOG10_BOUNDS = (-3.0, 3.0)
RHO_BOUNDS = (-5.0, 5.0)
S_FLOOR = 1e-12

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def correlation(a: np.ndarray, b: np.ndarray, theta: np.ndarray) -> float:
    """Gaussian correlation exp(-sum_k theta_k (a_k - b_k)^2) of two points."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.size} vs {b.size}")
    theta = np.asarray(theta, dtype=np.float64).ravel()
    return float(np.exp(-np.sum(theta * (a - b) ** 2)))


def _standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    m = float(np.mean(y))
    s = float(np.std(y))
    if s < 1e-12:
        s = 1.0
    return (y - m) / s, m, s


def _check_training_inputs(x: np.ndarray, label: str) -> None:
    if x.ndim != 2 or len(x) < 2:
        raise ValueError(f"{label}: need at least 2 training points")
    if len(np.unique(x, axis=0)) < 2:
        raise ValueError(f"{label}: training points are all identical")


def _closest_pair(x: np.ndarray) -> tuple[int, int, float]:
    d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return int(i), int(j), float(d[i, j])


def _neg_profile_likelihood(chol: np.ndarray, resid: np.ndarray) -> tuple[
        float, float, float]:
    """Concentrated negative log-likelihood pieces for one candidate.

    Returns (neg_loglik, mu, sigma2) where mu and sigma2 are the closed-form
    constant mean and process variance given the correlation factor.
    """
    n = len(resid)
    a = solve_triangular(chol, resid, lower=True)
    v = solve_triangular(chol, np.ones(n), lower=True)
    mu = float(v @ a) / float(v @ v)
    r = a - mu * v
    sigma2 = float(r @ r) / n
    neg = 0.5 * n * np.log(max(sigma2, 1e-300)) + np.log(
        np.diag(chol)).sum()
    return float(neg), mu, sigma2


def colocated_rows(x_train: np.ndarray, xq: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Query rows coinciding with a training row (per-dimension 1e-12 scale).

    Returns a boolean mask over queries and, for masked rows, the index of
    the matching training row.
    """
    scale = np.maximum(np.ptp(x_train, axis=0), 1.0)
    near = np.abs(xq[:, None, :] - x_train[None, :, :]) <= 1e-12 * scale
    hit_matrix = near.all(axis=2)
    return hit_matrix.any(axis=1), np.argmax(hit_matrix, axis=1)


@dataclass
class KrigingModel:
    """Single-fidelity Gaussian-process interpolator with constant mean."""

    x: np.ndarray
    y: np.ndarray      # raw training outputs
    theta: np.ndarray
    nugget: float
    mu: float          # standardized scale
    sigma2: float      # standardized scale
    y_mean: float
    y_std: float
    log_likelihood: float
    _chol: np.ndarray
    _alpha: np.ndarray

    def predict(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and MSE (raw output units) at query rows.

        The surrogate interpolates: a query coinciding with a training input
        returns the stored output with zero MSE, so the jitter on the
        correlation diagonal never leaks into co-located predictions.
        """
        xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
        psi_x = _kernels.gaussian_cross(self.x, xq, self.theta)
        mean = (self.mu + psi_x.T @ self._alpha) * self.y_std + self.y_mean
        w = solve_triangular(self._chol, psi_x, lower=True)
        mse = self.sigma2 * np.maximum(
            0.0, 1.0 + self.nugget
            - np.einsum("ij,ij->j", w, w)) * self.y_std ** 2
        hit, idx = colocated_rows(self.x, xq)
        if hit.any():
            mean[hit] = self.y[idx[hit]]
            mse[hit] = 0.0
        return mean, mse

    def summary(self) -> dict:
        return {
            "kind": "kriging",
            "theta": self.theta.tolist(),
            "nugget": self.nugget,
            "sigma2": self.sigma2 * self.y_std ** 2,
            "log_likelihood": self.log_likelihood,
        }


def _assemble_kriging(x, y_raw, theta, rng_note="") -> KrigingModel:
    y_raw = np.asarray(y_raw, dtype=np.float64)
    y, m, s = _standardize(y_raw)
    n = len(x)
    for nugget in NUGGET_LADDER:
        psi = _kernels.gaussian_corr(x, theta, nugget)
        try:
            chol = np.linalg.cholesky(psi)
        except np.linalg.LinAlgError:
            continue
        neg, mu, sigma2 = _neg_profile_likelihood(chol, y)
        alpha = solve_triangular(
            chol.T, solve_triangular(chol, y - mu, lower=True), lower=False)
        return KrigingModel(x, y_raw, np.asarray(theta, dtype=np.float64),
                            nugget, mu, sigma2, m, s, -neg, chol, alpha)
    i, j, dist = _closest_pair(x)
    raise RuntimeError(
        f"correlation matrix stayed singular through nugget {NUGGET_LADDER[-1]:g}"
        f"{rng_note}; closest points are rows {i} and {j} at distance {dist:.3e}")


def fit_kriging(x: np.ndarray, y: np.ndarray, pop: int = 20, gens: int = 50,
                rng=None, warm_theta: np.ndarray | None = None) -> KrigingModel:
    """Fit length-scales by concentrated likelihood over log10(theta).

    ``rng`` is a seed or Generator; identical data, seed and budget give an
    identical model. ``warm_theta`` seeds the search population.
    """
    rng = np.random.default_rng(rng)
    x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    _check_training_inputs(x, "kriging")
    if len(y) != len(x):
        raise ValueError("x and y lengths differ")
    n, dim = x.shape
    y_std, _, s = _standardize(y)
    if np.ptp(y) == 0.0:
        # Constant outputs: any length-scale works, variance is zero.
        return _assemble_kriging(x, y, np.ones(dim))
    sqdiff = _kernels.pairwise_sqdiff(x)
    ones = np.ones(n)

    var_y = float(np.var(y_std))

    def objective(log10_thetas: np.ndarray) -> np.ndarray:
        psis = _kernels.corr_from_sqdiff_batch(
            sqdiff, n, 10.0 ** log10_thetas, BASE_NUGGET)
        out = np.empty(len(psis))
        for b, psi in enumerate(psis):
            try:
                chol = np.linalg.cholesky(psi)
            except np.linalg.LinAlgError:
                out[b] = np.inf
                continue
            neg, _, s2 = _neg_profile_likelihood(chol, y_std)
            # Degenerate near-singular fits can post huge likelihoods by
            # collapsing the determinant while the implied process variance
            # explodes; such models are numerically useless, so reject them.
            out[b] = np.inf if s2 > _SIGMA2_BLOWUP * var_y + 1e-8 else neg
        return out

    lo = np.full(dim, THETA_LOG10_BOUNDS[0])
    hi = np.full(dim, THETA_LOG10_BOUNDS[1])
    x0 = None if warm_theta is None else np.log10(
        np.clip(warm_theta, 10.0 ** lo, 10.0 ** hi))
    best, _ = de_minimize(objective, lo, hi, pop, gens, rng, x0=x0)
    return _assemble_kriging(x, y, 10.0 ** best)


@dataclass
class CoKrigingModel:
    """Two-fidelity surrogate: scaled LF process plus HF residual process."""

    lf: KrigingModel
    x_hf: np.ndarray
    y_hf: np.ndarray       # raw HF training outputs
    lf_at_hf: np.ndarray   # raw LF values co-located with the HF points
    theta_d: np.ndarray
    nugget_c: float
    rho_std: float
    sigma2_d_std: float
    mu_joint: float
    hf_mean: float
    hf_std: float
    log_likelihood_d: float
    _chol_c: np.ndarray
    _alpha: np.ndarray

    @property
    def rho(self) -> float:
        """Fidelity scaling expressed on raw outputs."""
        return self.rho_std * self.hf_std / self.lf.y_std

    @property
    def sigma2_lf(self) -> float:
        return self.lf.sigma2 * self.lf.y_std ** 2

    @property
    def sigma2_d(self) -> float:
        return self.sigma2_d_std * self.hf_std ** 2

    @property
    def far_field_mse(self) -> float:
        """Limit of the prediction MSE away from all training data (raw)."""
        return (self.rho_std ** 2 * self.lf.sigma2 +
                self.sigma2_d_std) * self.hf_std ** 2

    def _cross_cov(self, xq: np.ndarray) -> np.ndarray:
        s2l = self.lf.sigma2
        psi_l_q = _kernels.gaussian_cross(self.lf.x, xq, self.lf.theta)
        psi_l_hq = _kernels.gaussian_cross(self.x_hf, xq, self.lf.theta)
        psi_d_q = _kernels.gaussian_cross(self.x_hf, xq, self.theta_d)
        top = self.rho_std * s2l * psi_l_q
        bottom = self.rho_std ** 2 * s2l * psi_l_hq + \
            self.sigma2_d_std * psi_d_q
        return np.vstack([top, bottom])

    def predict(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """HF posterior mean and MSE (raw units) at query rows.

        A query coinciding with an HF training input returns the stored HF
        output with zero MSE (interpolation; the diagonal jitter is a
        factorization aid, not observation noise).
        """
        xq = np.atleast_2d(np.asarray(xq, dtype=np.float64))
        c = self._cross_cov(xq)
        mean = (self.mu_joint + c.T @ self._alpha) * self.hf_std + self.hf_mean
        w = solve_triangular(self._chol_c, c, lower=True)
        prior = self.rho_std ** 2 * self.lf.sigma2 + self.sigma2_d_std
        mse = np.maximum(
            0.0, prior - np.einsum("ij,ij->j", w, w)) * self.hf_std ** 2
        hit, idx = colocated_rows(self.x_hf, xq)
        if hit.any():
            mean[hit] = self.y_hf[idx[hit]]
            mse[hit] = 0.0
        return mean, mse

    def summary(self) -> dict:
        return {
            "kind": "cokriging",
            "theta_lf": self.lf.theta.tolist(),
            "theta_d": self.theta_d.tolist(),
            "rho": self.rho,
            "sigma2_lf": self.sigma2_lf,
            "sigma2_d": self.sigma2_d,
            "nugget": self.nugget_c,
            "log_likelihood_d": self.log_likelihood_d,
        }


def fit_cokriging(x_lf: np.ndarray, y_lf: np.ndarray, x_hf: np.ndarray,
                  y_hf: np.ndarray, lf_at_hf: np.ndarray | None = None,
                  pop: int = 20, gens: int = 50, rng=None,
                  warm: dict | None = None) -> CoKrigingModel:
    """Fit the two-fidelity surrogate.

    ``lf_at_hf`` supplies LF outputs co-located with the HF points; when
    omitted they are taken from the LF submodel's posterior mean. ``warm``
    may carry ``theta_lf``, ``theta_d`` and ``rho`` from a previous fit to
    seed the searches.
    """
    rng = np.random.default_rng(rng)
    x_lf = np.ascontiguousarray(np.atleast_2d(x_lf), dtype=np.float64)
    x_hf = np.ascontiguousarray(np.atleast_2d(x_hf), dtype=np.float64)
    y_lf = np.asarray(y_lf, dtype=np.float64).ravel()
    y_hf = np.asarray(y_hf, dtype=np.float64).ravel()
    _check_training_inputs(x_hf, "cokriging (HF)")
    warm = warm or {}
    lf = fit_kriging(x_lf, y_lf, pop=pop, gens=gens, rng=rng,
                     warm_theta=warm.get("theta_lf"))
    if lf_at_hf is None:
        lf_at_hf = lf.predict(x_hf)[0]
    lf_at_hf = np.asarray(lf_at_hf, dtype=np.float64).ravel().copy()
    missing = ~np.isfinite(lf_at_hf)
    if missing.any():
        # HF points with no co-located LF value fall back to the LF posterior.
        lf_at_hf[missing] = lf.predict(x_hf[missing])[0]
    y_hf_std, hf_mean, hf_std = _standardize(y_hf)
    l_std = (lf_at_hf - lf.y_mean) / lf.y_std

    n_hf, dim = x_hf.shape
    sqdiff = _kernels.pairwise_sqdiff(x_hf)

    def objective(z: np.ndarray) -> np.ndarray:
        thetas = 10.0 ** z[:, :dim]
        rhos = z[:, dim]
        psis = _kernels.corr_from_sqdiff_batch(sqdiff, n_hf, thetas,
                                               BASE_NUGGET)
        out = np.empty(len(z))
        for b, psi in enumerate(psis):
            try:
                chol = np.linalg.cholesky(psi)
            except np.linalg.LinAlgError:
                out[b] = np.inf
                continue
            d_vec = y_hf_std - rhos[b] * l_std
            neg, _, s2 = _neg_profile_likelihood(chol, d_vec)
            # same degeneracy rejection as the single-fidelity search
            limit = _SIGMA2_BLOWUP * float(np.var(d_vec)) + 1e-8
            out[b] = np.inf if s2 > limit else neg
        return out

    lo = np.concatenate([np.full(dim, THETA_LOG10_BOUNDS[0]), [RHO_BOUNDS[0]]])
    hi = np.concatenate([np.full(dim, THETA_LOG10_BOUNDS[1]), [RHO_BOUNDS[1]]])
    x0 = None
    if "theta_d" in warm and "rho" in warm:
        theta_w = np.log10(np.clip(warm["theta_d"], 10.0 ** lo[:dim],
                                   10.0 ** hi[:dim]))
        rho_w = np.clip(warm["rho"], *RHO_BOUNDS)
        x0 = np.concatenate([theta_w, [rho_w]])
    best, neg = de_minimize(objective, lo, hi, pop, gens, rng, x0=x0)
    theta_d = 10.0 ** best[:dim]
    rho = float(best[dim])
    if abs(rho) >= RHO_BOUNDS[1] - 1e-6:
        warnings.warn(
            f"fidelity scaling hit its search boundary (rho={rho:.3f}); "
            "the low-fidelity data may be uninformative here",
            RuntimeWarning, stacklevel=2)
    d_vec = y_hf_std - rho * l_std

    # Joint covariance assembly with nugget escalation.
    n_lf = len(x_lf)
    s2l = max(lf.sigma2, 1e-12)
    y_joint = np.concatenate([(y_lf - lf.y_mean) / lf.y_std, y_hf_std])
    psi_l_cross = _kernels.gaussian_cross(lf.x, x_hf, lf.theta)
    last_err: Exception | None = None
    for nugget in NUGGET_LADDER:
        try:
            chol_d = np.linalg.cholesky(
                _kernels.gaussian_corr(x_hf, theta_d, nugget))
        except np.linalg.LinAlgError as exc:
            last_err = exc
            continue
        _, mu_d, s2d = _neg_profile_likelihood(chol_d, d_vec)
        s2d = max(s2d, 1e-12)
        c = np.empty((n_lf + n_hf, n_lf + n_hf))
        c[:n_lf, :n_lf] = s2l * _kernels.gaussian_corr(lf.x, lf.theta, nugget)
        c[:n_lf, n_lf:] = rho * s2l * psi_l_cross
        c[n_lf:, :n_lf] = c[:n_lf, n_lf:].T
        c[n_lf:, n_lf:] = rho ** 2 * s2l * _kernels.gaussian_corr(
            x_hf, lf.theta, nugget) + s2d * _kernels.gaussian_corr(
            x_hf, theta_d, nugget)
        try:
            chol_c = np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            last_err = exc
            continue
        v = solve_triangular(chol_c, np.ones(n_lf + n_hf), lower=True)
        a = solve_triangular(chol_c, y_joint, lower=True)
        mu_joint = float(v @ a) / float(v @ v)
        alpha = solve_triangular(
            chol_c.T,
            solve_triangular(chol_c, y_joint - mu_joint, lower=True),
            lower=False)
        return CoKrigingModel(lf, x_hf, y_hf, lf_at_hf, theta_d, nugget, rho,
                              s2d, mu_joint, hf_mean, hf_std, -float(neg),
                              chol_c, alpha)
    xall = np.vstack([x_lf, x_hf])
    i, j, dist = _closest_pair(xall)
    raise RuntimeError(
        f"joint covariance stayed singular through nugget {NUGGET_LADDER[-1]:g} "
        f"({last_err}); closest joint rows {i}, {j} at distance {dist:.3e}")


def expected_improvement(mean: np.ndarray, mse: np.ndarray,
                         f_min: float) -> np.ndarray:
    """Expected improvement below ``f_min`` for Gaussian predictions.

    Degenerate predictions (standard deviation under the floor) fall back to
    the deterministic improvement max(f_min - mean, 0).
    """
    mean = np.asarray(mean, dtype=np.float64)
    s = np.sqrt(np.maximum(np.asarray(mse, dtype=np.float64), 0.0))
    improv = f_min - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(s > S_FLOOR, improv / np.where(s > 0, s, 1.0), 0.0)
        cdf = 0.5 * erfc(-z / _SQRT2)
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        ei = improv * cdf + s * pdf
    return np.where(s > S_FLOOR, ei, np.maximum(improv, 0.0))
