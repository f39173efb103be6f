"""Gaussian-process surrogates vs. dense-linear-algebra reference routes."""

import numpy as np
import pytest

import mfmo.surrogate as sg
from oracles import cokriging_predict_dense, ei_by_quadrature, \
    gls_mean_variance_dense, kriging_predict_dense

# 1-D two-fidelity toy: an oscillatory curve and a shifted/scaled variant
# with 4 HF points nested inside 11 LF points.


def hf_curve(x):
    x = np.asarray(x, dtype=np.float64)
    return (6.0 * x - 2.0) ** 2 * np.sin(12.0 * x - 4.0)


def lf_curve(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * hf_curve(x) + 10.0 * (x - 0.5) - 5.0


X_LF = np.linspace(0.0, 1.0, 11)[:, None]
X_HF = np.array([[0.0], [0.4], [0.6], [1.0]])
Y_LF = lf_curve(X_LF[:, 0])
Y_HF = hf_curve(X_HF[:, 0])
LF_AT_HF = lf_curve(X_HF[:, 0])


@pytest.fixture(scope="module")
def toy_model():
    return sg.fit_cokriging(X_LF, Y_LF, X_HF, Y_HF, lf_at_hf=LF_AT_HF, rng=0)


def rel_err(got, want):
    scale = np.maximum(np.abs(want), 1.0)
    return np.max(np.abs(got - want) / scale)


# -- two-fidelity model -------------------------------------------------------

def test_cokriging_matches_dense_oracle(toy_model):
    xq = np.linspace(0.0, 1.0, 29)[:, None]
    mean, mse = toy_model.predict(xq)
    mean_o, mse_o = cokriging_predict_dense(toy_model, Y_LF, Y_HF, xq)
    assert rel_err(mean, mean_o) <= 1e-8
    assert rel_err(mse, mse_o) <= 1e-8


def test_cokriging_interpolates_hf_points(toy_model):
    mean, mse = toy_model.predict(X_HF)
    np.testing.assert_allclose(mean, Y_HF, atol=1e-4)
    assert np.all(mse <= 1e-6)


def test_cokriging_learns_fidelity_scaling(toy_model):
    # the HF curve is twice the LF curve plus a linear trend the residual
    # process absorbs, so the raw scaling factor should land near 2
    assert 1.0 < toy_model.rho < 3.0


def test_cokriging_identical_fidelities_collapse_to_unit_scaling():
    # when both fidelities are literally the same function, the scaling
    # factor should land at 1 and the residual process should vanish
    x_lf = np.linspace(0.0, 1.0, 11)[:, None]
    y = np.sin(2.0 * np.pi * x_lf[:, 0]) + x_lf[:, 0]
    x_hf = x_lf[::2]
    y_hf = y[::2]
    model = sg.fit_cokriging(x_lf, y, x_hf, y_hf, lf_at_hf=y_hf, rng=4)
    assert 0.9 <= model.rho <= 1.1
    sigma2_d_raw = model.sigma2_d_std * model.hf_std ** 2
    assert sigma2_d_raw <= 1e-6 * np.var(y_hf)


def test_cokriging_recovers_constant_scaling_of_two():
    x_lf = np.linspace(0.0, 1.0, 14)[:, None]
    lf = np.sin(3.0 * x_lf[:, 0]) + 0.5 * x_lf[:, 0]
    x_hf = x_lf[::2]
    model = sg.fit_cokriging(x_lf, lf, x_hf, 2.0 * lf[::2],
                             lf_at_hf=lf[::2], rng=6)
    assert model.rho == pytest.approx(2.0, rel=0.05)
    held = np.linspace(0.03, 0.97, 21)[:, None]
    truth = 2.0 * (np.sin(3.0 * held[:, 0]) + 0.5 * held[:, 0])
    mean, _ = model.predict(held)
    assert np.max(np.abs(mean - truth)) <= 1e-3


def test_cokriging_mean_tracks_truth_between_samples(toy_model):
    xq = np.linspace(0.05, 0.95, 19)[:, None]
    mean, _ = toy_model.predict(xq)
    err = np.abs(mean - hf_curve(xq[:, 0]))
    assert err.max() < 1.5  # the curve spans roughly [-10, 17]


def test_cokriging_far_field_variance():
    # one lonely input region: far from data the MSE approaches the prior
    x_lf = np.linspace(0.0, 0.2, 8)[:, None]
    x_hf = x_lf[::3]
    model = sg.fit_cokriging(x_lf, lf_curve(x_lf[:, 0]),
                             x_hf, hf_curve(x_hf[:, 0]),
                             lf_at_hf=lf_curve(x_hf[:, 0]), rng=1)
    _, mse = model.predict(np.array([[50.0]]))
    assert mse[0] == pytest.approx(model.far_field_mse, rel=1e-9)


def test_cokriging_nan_colocated_falls_back_to_lf_posterior():
    a = sg.fit_cokriging(X_LF, Y_LF, X_HF, Y_HF,
                         lf_at_hf=np.full(4, np.nan), rng=5)
    b = sg.fit_cokriging(X_LF, Y_LF, X_HF, Y_HF, lf_at_hf=None, rng=5)
    xq = np.linspace(0, 1, 13)[:, None]
    np.testing.assert_array_equal(a.predict(xq)[0], b.predict(xq)[0])


def test_cokriging_warm_start_runs(toy_model):
    warm = {"theta_lf": toy_model.lf.theta,
            "theta_d": toy_model.theta_d, "rho": toy_model.rho_std}
    model = sg.fit_cokriging(X_LF, Y_LF, X_HF, Y_HF, lf_at_hf=LF_AT_HF,
                             pop=8, gens=4, rng=2, warm=warm)
    mean, _ = model.predict(X_HF)
    np.testing.assert_allclose(mean, Y_HF, atol=1e-3)


def test_cokriging_warns_when_scaling_hits_boundary(monkeypatch):
    dim = X_LF.shape[1]

    def fake_de(func, lower, upper, pop, gens, rng, x0=None):
        if len(lower) == dim + 1:           # joint residual/scaling search
            return np.concatenate([np.zeros(dim), [5.0]]), 1.0
        return np.zeros(len(lower)), 1.0    # LF length-scale search

    monkeypatch.setattr(sg, "de_minimize", fake_de)
    with pytest.warns(RuntimeWarning, match="boundary"):
        sg.fit_cokriging(X_LF, Y_LF, X_HF, Y_HF, lf_at_hf=LF_AT_HF, rng=0)


def test_cokriging_summary_reports_raw_scales(toy_model):
    s = toy_model.summary()
    assert s["rho"] == pytest.approx(toy_model.rho)
    assert s["sigma2_lf"] >= 0 and s["sigma2_d"] >= 0
    assert s["nugget"] in sg.NUGGET_LADDER


# -- single-fidelity model ----------------------------------------------------

def test_kriging_matches_dense_oracle(rng):
    x = rng.random((12, 2))
    y = np.sin(3 * x[:, 0]) + x[:, 1] ** 2
    model = sg.fit_kriging(x, y, rng=3)
    xq = rng.random((20, 2))
    mean, mse = model.predict(xq)
    mean_o, mse_o = kriging_predict_dense(model, y, xq)
    assert rel_err(mean, mean_o) <= 1e-8
    assert rel_err(mse, mse_o) <= 1e-8
    mean_t, mse_t = model.predict(x)
    np.testing.assert_allclose(mean_t, y, atol=1e-5)
    assert np.all(mse_t <= 1e-6)


def test_kriging_gls_closed_forms_at_fixed_lengthscale():
    # pin the generalized-least-squares mean and process variance against
    # the dense route at a hand-picked length-scale (no search involved)
    x = np.array([[0.05], [0.35], [0.65], [0.95]])
    y = np.sin(6.0 * x[:, 0])
    model = sg._assemble_kriging(x, y, np.array([10.0]))
    mu_o, sigma2_o = gls_mean_variance_dense(x, y, [10.0], model.nugget)
    assert model.mu == pytest.approx(mu_o, rel=1e-8, abs=1e-12)
    assert model.sigma2 == pytest.approx(sigma2_o, rel=1e-8, abs=1e-12)


def test_kriging_constant_outputs():
    x = np.linspace(0, 1, 6)[:, None]
    model = sg.fit_kriging(x, np.full(6, 3.25), rng=0)
    mean, mse = model.predict(np.array([[0.37], [5.0]]))
    np.testing.assert_allclose(mean, 3.25, atol=1e-9)
    assert np.all(mse < 1e-9)


def test_kriging_input_validation(rng):
    with pytest.raises(ValueError, match="lengths differ"):
        sg.fit_kriging(rng.random((5, 2)), np.zeros(4), rng=0)


def test_kriging_singularity_error_names_closest_rows(monkeypatch):
    x = np.linspace(0, 1, 7)[:, None]
    x[4] = x[2] + 1e-13                     # rows 2 and 4 nearly coincide
    y = np.sin(x[:, 0])

    def always_singular(_):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(sg.np.linalg, "cholesky", always_singular)
    with pytest.raises(RuntimeError, match=r"rows 2 and 4"):
        sg.fit_kriging(x, y, pop=6, gens=2, rng=0)


# -- expected improvement -----------------------------------------------------

def test_ei_frozen_values():
    # z = 0: EI = s / sqrt(2*pi)
    assert sg.expected_improvement(np.array([0.0]), np.array([4.0]), 0.0)[0] \
        == pytest.approx(2.0 * 0.3989422804014327, rel=1e-12)
    # z = -3: EI = s * (pdf(3) - 3 * cdf(-3))
    got = sg.expected_improvement(np.array([3.0]), np.array([1.0]), 0.0)[0]
    assert got == pytest.approx(0.00038215, rel=1e-3)


def test_ei_matches_quadrature(rng):
    for _ in range(12):
        mean = rng.normal(scale=2.0)
        sd = rng.uniform(0.05, 3.0)
        f_min = rng.normal(scale=2.0)
        got = sg.expected_improvement(np.array([mean]),
                                      np.array([sd ** 2]), f_min)[0]
        assert got == pytest.approx(ei_by_quadrature(mean, sd, f_min),
                                    rel=1e-6, abs=1e-12)


def test_ei_monotone_in_spread():
    sds = np.linspace(0.01, 5.0, 40)
    ei = sg.expected_improvement(np.full(40, 1.0), sds ** 2, 0.0)
    assert np.all(np.diff(ei) > 0)


def test_ei_degenerate_spread_uses_plain_improvement():
    mse = np.zeros(2)
    got = sg.expected_improvement(np.array([0.25, 1.5]), mse, 1.0)
    np.testing.assert_allclose(got, [0.75, 0.0])
