import math

import numpy as np
import pytest
from scipy import stats

from elsem.estimating import free_params, params_from_free, residuals, sigma_of
from elsem.estimation import VALID, fit_profile
from elsem.gaussian import (
    gaussian_grad,
    gaussian_loglik,
    gaussian_mle,
    hybrid_gauss_el,
)
from elsem.graph import MixedGraph
from elsem.inference import mle_variance_gaussian, sandwich_variance_gaussian

from .conftest import simulate_instance


def test_loglik_scalar_closed_form():
    y = np.random.default_rng(0).standard_normal((100, 1)) * 2
    s2 = float(np.mean(y**2))
    val = gaussian_loglik(y, np.zeros((1, 1)), np.array([[s2]]))
    assert val / 100 == pytest.approx(-0.5 * (math.log(2 * math.pi * s2) + 1), abs=1e-12)


def test_loglik_matches_density_sum():
    g, p, Y = simulate_instance(1, m=5, nd=5, nb=3, n=50)
    want = stats.multivariate_normal(np.zeros(5), sigma_of(p.B, p.Omega)).logpdf(Y).sum()
    assert gaussian_loglik(Y, p.B, p.Omega) == pytest.approx(want, abs=1e-8)


def test_loglik_permutation_invariant():
    g, p, Y = simulate_instance(2, m=4, n=30)
    perm = [2, 0, 3, 1]
    P = np.eye(4)[perm]
    a = gaussian_loglik(Y, p.B, p.Omega)
    b = gaussian_loglik(Y[:, perm], P @ p.B @ P.T, P @ p.Omega @ P.T)
    assert a == pytest.approx(b, abs=1e-9)


def test_gradient_matches_finite_differences():
    g, p, Y = simulate_instance(3, m=4, n=100)
    theta = free_params(p.B, p.Omega, g)
    num = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = 1e-6
        Pp, Pm = params_from_free(theta + e, g), params_from_free(theta - e, g)
        num[k] = (gaussian_loglik(Y, Pp.B, Pp.Omega) - gaussian_loglik(Y, Pm.B, Pm.Omega)) / 2e-6
    np.testing.assert_allclose(gaussian_grad(Y, p.B, p.Omega, g), num, rtol=1e-5, atol=1e-4)


def test_two_node_regression_oracle():
    g = MixedGraph(["A", "B"], [("A", "B")])
    rng = np.random.default_rng(4)
    x = rng.standard_normal(400)
    Y = np.column_stack([x, 0.7 * x + rng.standard_normal(400)])
    fit = gaussian_mle(Y, g)
    assert fit.status == VALID
    slope = x @ Y[:, 1] / (x @ x)
    assert fit.B_hat[1, 0] == pytest.approx(slope, abs=1e-6)
    R = residuals(Y, fit.B_hat)
    np.testing.assert_allclose(np.diag(fit.Omega_hat), np.mean(R**2, axis=0), rtol=1e-6)


def test_saturated_mle_reproduces_second_moment():
    g = MixedGraph(["A", "B", "C"], [("A", "B"), ("A", "C"), ("B", "C")])
    _, _, Y = simulate_instance(5, m=3, nd=0, nb=0, n=200)
    fit = gaussian_mle(Y, g)
    S = Y.T @ Y / 200
    np.testing.assert_allclose(sigma_of(fit.B_hat, fit.Omega_hat), S, atol=1e-6)
    unrestricted = -100 * (3 * math.log(2 * math.pi) + np.linalg.slogdet(S)[1] + 3)
    assert fit.log_el == pytest.approx(unrestricted, abs=1e-8)


def test_mle_improves_on_start():
    from elsem.estimation import init_estimate

    g, p, Y = simulate_instance(6, m=6, nd=7, nb=4, n=150)
    start = init_estimate(Y, g)
    fit = gaussian_mle(Y, g)
    assert fit.log_el >= gaussian_loglik(Y, start.B, start.Omega)


def test_hybrid_uniform_weights_saturated():
    g = MixedGraph(["A", "B", "C"], [("A", "B"), ("A", "C"), ("B", "C")])
    _, _, Y = simulate_instance(7, m=3, nd=0, nb=0, n=80)
    Y = Y - Y.mean(axis=0)
    gfit = gaussian_mle(Y, g)
    h = hybrid_gauss_el(Y, g, gfit)
    R = residuals(Y, gfit.B_hat)
    np.testing.assert_allclose(h.Omega_hat, R.T @ R / 80, atol=1e-10)
    assert h.method == "hybrid_gauss"


@pytest.mark.slow
def test_large_sample_agreement():
    g, p, Y = simulate_instance(8, m=4, nd=3, nb=1, n=5000)
    gfit = gaussian_mle(Y, g)
    h = hybrid_gauss_el(Y, g, gfit)
    assert h.valid
    rel = np.linalg.norm(h.Omega_hat - gfit.Omega_hat) / np.linalg.norm(gfit.Omega_hat)
    assert rel < 0.05
    sand = sandwich_variance_gaussian(Y, g, gfit)
    info = mle_variance_gaussian(Y, g, gfit)
    np.testing.assert_allclose(sand, sand.T)
    assert np.linalg.norm(sand - info) / np.linalg.norm(info) < 0.10


def test_mle_error_not_worse_than_el_under_gaussian_errors():
    errs = []
    for seed in range(10):
        g, p, Y = simulate_instance(seed, m=5, nd=5, nb=3, n=1000)
        S = sigma_of(p.B, p.Omega)
        row = []
        for fit in (gaussian_mle(Y, g), fit_profile(Y, g, "hybrid")):
            assert fit.valid
            d = sigma_of(fit.B_hat, fit.Omega_hat) - S
            iu = np.triu_indices(5)
            row.append(np.sum(d[iu] ** 2) / np.sum(S[iu] ** 2))
        errs.append(row)
    mle, el = np.mean(errs, axis=0)
    assert mle <= el
