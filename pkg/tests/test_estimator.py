import numpy as np
import pytest
from scipy.stats import norm

from nkc.estimator import (NkcModel, NumericalError, Proposal, cond_log_likelihood, density_grid, evaluate,
                           log_mean_exp_jackknife, log_partition, log_unnormalized, score_y)
from nkc.datagen import Dataset
from nkc.kernel_basis import KernelBasis
from nkc.mlp import Mlp


def make_model(rng, d=2, d_y=1, d_x=3, B=4):
    basis = KernelBasis(rng.normal(size=(B, d_y)), 1.0)
    net = Mlp.init(int(rng.integers(1 << 30)), [d_x, 5, d])
    return NkcModel(basis, rng.normal(size=(d, B * d_y)), net)


def gaussian_proposal(n=10_000, var=2.0):
    return Proposal(np.zeros(1), np.full(1, var), n)


def test_alpha_zero_and_hand_example(rng):
    m = make_model(rng)
    m.alpha[:] = 0
    assert np.all(log_unnormalized(m, rng.normal(size=(5, 1)), rng.normal(size=(5, 3))) == 0)
    assert np.all(score_y(m, rng.normal(size=(5, 1)), rng.normal(size=(5, 3))) == 0)
    basis = KernelBasis(np.zeros((1, 1)), 1.0)
    const = Mlp([np.zeros((2, 1))], [np.array([1.5])])
    one = NkcModel(basis, np.array([[2.0]]), const)
    assert log_unnormalized(one, np.array([1.0]), np.array([0.3, 0.1])) == pytest.approx(2.0 * 1.5 * np.exp(-0.5))


def test_bilinear_scale_invariance(rng):
    m = make_model(rng)
    y, x = rng.normal(size=(6, 1)), rng.normal(size=(6, 3))
    w = [v.copy() for v in m.net.weights]
    b = [v.copy() for v in m.net.biases]
    w[-1] /= 4.0
    b[-1] /= 4.0
    scaled = NkcModel(m.basis, 4.0 * m.alpha, Mlp(w, b))
    np.testing.assert_allclose(log_unnormalized(scaled, y, x), log_unnormalized(m, y, x), rtol=1e-12)


def test_score_matches_finite_differences(rng):
    for d_y in (1, 2):
        m = make_model(rng, d_y=d_y)
        y, x = rng.normal(size=(5, d_y)), rng.normal(size=(5, 3))
        sc = score_y(m, y, x)
        for j in range(d_y):
            e = np.zeros(d_y)
            e[j] = 1e-6
            fd = (log_unnormalized(m, y + e, x) - log_unnormalized(m, y - e, x)) / 2e-6
            np.testing.assert_allclose(sc[:, j], fd, rtol=1e-6, atol=1e-9)


def test_dimension_errors(rng):
    m = make_model(rng)
    with pytest.raises(ValueError):
        log_unnormalized(m, np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        log_unnormalized(m, np.zeros((2, 1)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        NkcModel(m.basis, np.zeros((5, 4)), m.net)


def test_log_partition_gaussian():
    est, se = log_partition(lambda y: -0.5 * y[:, 0] ** 2, gaussian_proposal(50_000), seed=1)
    assert abs(est - 0.5 * np.log(2 * np.pi)) < 3 * se


def test_log_partition_self_normalized():
    p = gaussian_proposal(1000, 1.7)
    est, se = log_partition(p.logpdf, p, seed=3)
    assert abs(est) < 1e-12 and se < 1e-12


def test_log_partition_improper_integrand_has_large_se():
    # integral of exp(0) over the real line diverges; the jackknife SE stays large
    ses = [log_partition(lambda y: np.zeros(len(y)), Proposal(np.zeros(1), np.ones(1), m), seed=s)[1]
           for s, m in enumerate((10_000, 40_000))]
    assert min(ses) > 0.05


def test_log_partition_se_shrinks():
    ratios = []
    for rep in range(10):
        _, se1 = log_partition(lambda y: -0.5 * y[:, 0] ** 2, gaussian_proposal(5_000), seed=[rep, 1])
        _, se4 = log_partition(lambda y: -0.5 * y[:, 0] ** 2, gaussian_proposal(20_000), seed=[rep, 4])
        ratios.append(se4 / se1)
    assert np.all(np.array(ratios) < 0.6)


def test_log_partition_errors():
    p = gaussian_proposal(100)
    with pytest.raises(NumericalError):
        log_partition(lambda y: np.full(len(y), np.nan), p)
    with pytest.raises(NumericalError):
        log_mean_exp_jackknife(np.full(5, -np.inf))
    with pytest.raises(ValueError):
        Proposal(np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        Proposal(np.zeros(1), np.ones(1), 50)


def test_jackknife_matches_direct_formula(rng):
    lw = rng.normal(size=200)
    est, se = log_mean_exp_jackknife(lw)
    assert est == pytest.approx(np.log(np.mean(np.exp(lw))), rel=1e-12)
    loo = np.array([np.log(np.mean(np.exp(np.delete(lw, i)))) for i in range(len(lw))])
    assert se == pytest.approx(np.sqrt((len(lw) - 1) / len(lw) * np.sum((loo - loo.mean()) ** 2)), rel=1e-9)


def test_cond_loglik_analytic(rng):
    y, x = rng.normal(size=(20, 1)), rng.uniform(size=(20, 2))
    res = cond_log_likelihood(None, y, x, gaussian_proposal(), seed=0, log_unnorm=lambda yy, xx: -0.5 * yy[:, 0] ** 2)
    np.testing.assert_allclose(res["per_sample"], -0.5 * y[:, 0] ** 2 - 0.5 * np.log(2 * np.pi),
                               atol=4 * res["partition_se"].max())


def test_constant_shift_cancels(rng):
    y, x = rng.normal(size=(10, 1)), rng.normal(size=(10, 2))
    f = lambda yy, xx: -0.5 * (yy[:, 0] - xx[0]) ** 2  # noqa: E731
    g = lambda yy, xx: f(yy, xx) + 3.0 * np.sin(xx[1])  # noqa: E731
    a = cond_log_likelihood(None, y, x, gaussian_proposal(2000), seed=5, log_unnorm=f)
    b = cond_log_likelihood(None, y, x, gaussian_proposal(2000), seed=5, log_unnorm=g)
    np.testing.assert_allclose(a["per_sample"], b["per_sample"], atol=1e-10)


def test_model_path_matches_callable_path(rng):
    m = make_model(rng)
    y, x = rng.normal(size=(8, 1)), rng.normal(size=(8, 3))
    own = cond_log_likelihood(m, y, x, gaussian_proposal(500), seed=2)
    via = cond_log_likelihood(m, y, x, gaussian_proposal(500), seed=2,
                              log_unnorm=lambda yy, xx: log_unnormalized(m, yy, xx))
    np.testing.assert_allclose(own["per_sample"], via["per_sample"], rtol=1e-12)


def test_original_scale_correction(rng):
    m = make_model(rng)
    m.standardization = {"y_mean": [0.0], "y_scale": [2.0], "x_mean": [0.0] * 3, "x_scale": [1.0] * 3}
    y, x = rng.normal(size=(4, 1)), rng.normal(size=(4, 3))
    a = cond_log_likelihood(m, y, x, gaussian_proposal(500), seed=0)
    b = cond_log_likelihood(m, y, x, gaussian_proposal(500), seed=0, original_scale=True)
    np.testing.assert_allclose(b["per_sample"], a["per_sample"] - np.log(2.0))


def test_evaluate_report_schema(rng):
    m = make_model(rng)
    ds = Dataset(rng.normal(size=(6, 1)), rng.normal(size=(6, 3)))
    rep = evaluate(m, ds, n_samples=200, seed=0)
    assert rep["method"] == "NKC2" and rep["n"] == 6 and len(rep["per_sample"]) == 6
    assert {"mean_loglik", "se", "config"} <= set(rep)


def test_density_grid_standard_normal():
    g = np.arange(-8, 8 + 1e-9, 0.01)
    dens = density_grid(None, None, g, log_unnorm=lambda y: -0.5 * y**2)
    assert np.max(np.abs(dens - norm.pdf(g))) < 1e-4
    assert np.trapezoid(dens, g) == pytest.approx(1.0, abs=1e-9)
    shifted = density_grid(None, None, g, log_unnorm=lambda y: -0.5 * y**2 + 7.0)
    np.testing.assert_allclose(shifted, dens, rtol=1e-12)
    flat = density_grid(None, None, g, log_unnorm=lambda y: np.zeros_like(y))
    np.testing.assert_allclose(flat, 1 / 16, rtol=1e-12)


def test_density_grid_model_and_errors(rng):
    m = make_model(rng)
    g = np.linspace(-3, 3, 101)
    dens = density_grid(m, rng.normal(size=3), g)
    assert np.trapezoid(dens, g) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        density_grid(m, np.zeros(3), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        density_grid(m, np.zeros(3), np.array([0.0, 2.0, 1.0]))
    with pytest.raises(ValueError):
        density_grid(make_model(rng, d_y=2), np.zeros(3), g)


def test_json_round_trip_bitwise(rng, tmp_path):
    m = make_model(rng, d_y=2)
    m.meta = {"seed": 3}
    m.save(tmp_path / "m.json")
    back = NkcModel.load(tmp_path / "m.json")
    y, x = rng.normal(size=(100, 2)), rng.normal(size=(100, 3))
    np.testing.assert_array_equal(log_unnormalized(back, y, x), log_unnormalized(m, y, x))
    assert back.meta["version"] == 1 and back.meta["d"] == 2 and back.meta["d_y"] == 2
