import math

import numpy as np
import pytest
from scipy import optimize

from elsem.el_inner import log_el_profile
from elsem.estimating import sigma_of
from elsem.estimation import (
    VALID,
    EELBracketError,
    FitOptions,
    eel_log_el,
    eel_transform,
    fit_naive,
    fit_profile,
    gamma_eel,
    init_estimate,
)
from elsem.graph import MixedGraph

from .conftest import simulate_instance


def _structural_ok(fit, g):
    m = g.m
    mask = np.eye(m, dtype=bool)
    for i, j in g.bidirected_index():
        mask[i, j] = mask[j, i] = True
    return (np.all(fit.Omega_hat[~mask] == 0.0)
            and np.linalg.eigvalsh(fit.Omega_hat).min() > 0
            and fit.feasibility < 1e-7)


def test_init_estimate_is_positive_definite():
    for seed in range(10):
        g, _, Y = simulate_instance(seed, m=6, nd=7, nb=5, n=80)
        P = init_estimate(Y, g)
        assert np.linalg.eigvalsh(P.Omega).min() > 0


def test_single_coefficient_matches_nelder_mead():
    # 1 -> 2 <- 3 with 1, 3 unlinked: one nonedge constraint per missing pair
    g = MixedGraph(["A", "B", "C"], [("A", "B"), ("C", "B")])
    _, _, Y = simulate_instance(0, m=3, nd=0, nb=0, n=200)
    Y = Y + 0.0
    Y[:, 1] += 0.6 * Y[:, 0] - 0.3 * Y[:, 2]
    fit = fit_profile(Y, g, "el")
    assert fit.status == VALID

    def negll(b):
        B = np.zeros((3, 3))
        B[1, 0], B[1, 2] = b
        val = log_el_profile(Y, B, g)[0]
        return 1e10 if not math.isfinite(val) else -val

    start = [fit.B_hat[1, 0] + 0.05, fit.B_hat[1, 2] - 0.05]
    res = optimize.minimize(negll, start, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    np.testing.assert_allclose([fit.B_hat[1, 0], fit.B_hat[1, 2]], res.x, atol=1e-5)
    assert fit.log_el == pytest.approx(-res.fun, abs=1e-8)


def test_saturated_centered_data_gives_uniform_weights():
    g = MixedGraph(["A", "B", "C"], [("A", "B"), ("A", "C"), ("B", "C")])
    _, _, Y = simulate_instance(4, m=3, nd=0, nb=0, n=60)
    Y = Y - Y.mean(axis=0)
    fit = fit_profile(Y, g, "el")
    assert fit.status == VALID
    assert fit.log_el == pytest.approx(-60 * math.log(60), abs=1e-9)
    np.testing.assert_allclose(sigma_of(fit.B_hat, fit.Omega_hat), Y.T @ Y / 60, atol=1e-10)


@pytest.mark.parametrize("variant", ["el", "ael", "hybrid"])
def test_profile_fit_statuses_and_omega(variant):
    g, p, Y = simulate_instance(1, m=5, nd=5, nb=3, n=300)
    fit = fit_profile(Y, g, variant)
    assert fit.status == VALID, fit.message
    assert fit.grad_norm < 1e-6 or variant == "ael"
    assert _structural_ok(fit, g)
    assert abs(fit.weights.sum() - 1) < 1e-10


def test_hybrid_matches_el():
    g, p, Y = simulate_instance(2, m=5, nd=5, nb=3, n=300)
    a = fit_profile(Y, g, "el")
    b = fit_profile(Y, g, "hybrid")
    assert a.valid and b.valid
    np.testing.assert_allclose(a.B_hat, b.B_hat, atol=1e-5)


def test_naive_and_profile_agree():
    g, p, Y = simulate_instance(5, m=3, nd=2, nb=1, n=200)
    a = fit_profile(Y, g, "el")
    b = fit_naive(Y, g, "el")
    assert a.valid and b.valid
    assert np.max(np.abs(a.B_hat - b.B_hat)) < 1e-3
    assert abs(a.log_el - b.log_el) < 1e-5
    assert b.method == "naive_el"


def test_fit_reports_undefined_start():
    # every product Y1*Y2 is positive, so the A-B nonedge constraint cannot hold
    g = MixedGraph(["A", "B", "C"], [("A", "C")])
    rng = np.random.default_rng(0)
    y1 = rng.standard_normal(50)
    Y = np.column_stack([y1, np.sign(y1) * (1 + rng.random(50)), rng.standard_normal(50)])
    fit = fit_profile(Y, g, "el")
    assert fit.status != VALID
    assert fit.Omega_hat is None


def test_gamma_eel():
    assert gamma_eel(10, -10 * math.log(10)) == 1.0
    assert gamma_eel(10, -10 * math.log(10) - 5.0) == pytest.approx(1.5)


def test_eel_transform_on_quadratic():
    # l(x) = -n log n - c x^2 / 2 ; preimage t solves t (1 + c (t x)^2 / (2n)) = 1
    n, c, x = 50, 40.0, 3.0
    base = -n * math.log(n)

    def loglik(v):
        return base - c * float(v[0]) ** 2 / 2

    val, t = eel_transform(loglik, np.array([0.0]), np.array([x]), n)
    t_root = optimize.brentq(lambda s: s * (1 + c * (s * x) ** 2 / (2 * n)) - 1, 1e-9, 1)
    assert t == pytest.approx(t_root, abs=1e-8)
    assert val == pytest.approx(loglik([t_root * x]), abs=1e-6)
    assert eel_transform(loglik, np.array([0.0]), np.array([0.0]), n) == (base, 1.0)


def test_eel_defined_where_el_is_not():
    g, p, Y = simulate_instance(3, m=4, nd=3, nb=1, n=100)
    fit = fit_profile(Y, g, "hybrid")
    B_far = fit.B_hat.copy()
    for v, u in g.directed_index():
        B_far[v, u] += 50.0
    assert log_el_profile(Y, B_far, g)[0] == -math.inf
    val = eel_log_el(B_far, Y, fit, g)
    assert math.isfinite(val) and val < fit.log_el
    assert eel_log_el(fit.B_hat, Y, fit, g) == pytest.approx(fit.log_el)


def test_eel_bracket_error():
    with pytest.raises(EELBracketError):
        # a fake log-likelihood above the uniform bound cannot be expanded
        eel_transform(lambda v: 0.0, np.array([0.0]), np.array([1.0]), 10)


def test_fit_options_are_respected():
    g, p, Y = simulate_instance(1, m=5, nd=5, nb=3, n=300)
    fit = fit_profile(Y, g, "el", FitOptions(max_outer=1))
    assert fit.outer_iterations <= 1
    assert fit.status != VALID
