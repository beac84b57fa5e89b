import math

import numpy as np
import pytest
from scipy import optimize

from elsem.el_inner import (
    CONVERGED,
    HULL_VIOLATION,
    StaleDualError,
    ael_augment,
    default_an,
    grad_log_ael,
    grad_log_el,
    grad_naive,
    log_ael_profile,
    log_el_profile,
    naive_log_el,
    origin_in_hull,
    solve_dual,
)
from elsem.estimating import free_params, params_from_free

from .conftest import simulate_instance


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_scalar_mean_matches_bisection():
    g = np.array([1.0, 2.0, 6.0]) - 2.0
    eps = 1e-14
    lam = _bisect(lambda t: np.sum(g / (1 + t * g)), -1 / g.max() + eps, -1 / g.min() - eps)
    want = -np.sum(np.log(3 * (1 + lam * g)))
    sol = solve_dual(g[:, None])
    assert sol.status == CONVERGED
    assert sol.lam[0] == pytest.approx(lam, abs=1e-9)
    assert sol.log_el == pytest.approx(want, abs=1e-10)


@pytest.mark.filterwarnings("ignore:Values in x were outside bounds")
def test_vector_case_matches_primal_optimizer():
    rng = np.random.default_rng(5)
    G = rng.standard_normal((15, 2)) + [0.2, -0.1]
    sol = solve_dual(G)
    assert sol.converged
    n = len(G)
    res = optimize.minimize(
        lambda p: -np.sum(np.log(p)),
        np.full(n, 1 / n),
        jac=lambda p: -1 / p,
        constraints=[{"type": "eq", "fun": lambda p: np.append(p.sum() - 1, G.T @ p)}],
        bounds=[(1e-9, 1)] * n,
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 500},
    )
    assert res.success
    assert sol.log_el == pytest.approx(-res.fun, abs=1e-6)
    np.testing.assert_allclose(sol.weights, res.x, atol=1e-5)


def test_uniform_weights_when_mean_is_zero():
    rng = np.random.default_rng(0)
    G = rng.standard_normal((40, 3))
    G -= G.mean(axis=0)
    sol = solve_dual(G)
    assert sol.converged
    np.testing.assert_allclose(sol.lam, 0.0, atol=1e-12)
    assert abs(sol.log_el + 40 * math.log(40)) < 1e-10


def test_hull_violation_is_reported():
    G = np.abs(np.random.default_rng(1).standard_normal((20, 2))) + 0.1
    assert not origin_in_hull(G)
    sol = solve_dual(G)
    assert sol.status == HULL_VIOLATION
    assert sol.log_el == -math.inf


def test_origin_on_hull_boundary_is_not_interior():
    # zero is a vertex of the hull: only degenerate weights reach it
    G = np.array([[0.0], [1.0], [2.0]])
    assert not origin_in_hull(G)


def test_contract_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n, c = rng.integers(10, 60), rng.integers(1, 5)
        G = rng.standard_normal((n, c)) + 0.3 * rng.standard_normal(c)
        sol = solve_dual(G)
        if not sol.converged:
            continue
        p = sol.weights
        assert abs(p.sum() - 1) < 1e-10
        assert np.all((p > 0) & (p <= 1))
        assert np.max(np.abs(p @ G)) < 1e-7


def test_column_scaling_invariance():
    rng = np.random.default_rng(3)
    G = rng.standard_normal((50, 3)) + 0.2
    a = solve_dual(G)
    b = solve_dual(G * [1e3, 1.0, 1e-3])
    assert a.converged and b.converged
    assert a.log_el == pytest.approx(b.log_el, abs=1e-8)


def test_ael_always_defined():
    G = np.abs(np.random.default_rng(1).standard_normal((20, 2))) + 0.1
    H = ael_augment(G, default_an(20))
    np.testing.assert_allclose(H[-1], -default_an(20) * G.mean(axis=0))
    assert solve_dual(H).converged


def _fd(f, x, h=1e-5):
    out = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def _bvec(B, g):
    return np.array([B[v, u] for v, u in g.directed_index()])


def _bmat(b, g):
    B = np.zeros((g.m, g.m))
    for k, (v, u) in enumerate(g.directed_index()):
        B[v, u] = b[k]
    return B


@pytest.mark.parametrize("seed", range(5))
def test_profile_gradients_match_finite_differences(seed):
    g, p, Y = simulate_instance(seed, m=4, nd=3, nb=1, n=150)
    B = p.B
    val, dual = log_el_profile(Y, B, g)
    assert dual.converged
    num = _fd(lambda b: log_el_profile(Y, _bmat(b, g), g)[0], _bvec(B, g))
    np.testing.assert_allclose(grad_log_el(Y, B, g, dual), num, rtol=1e-5, atol=1e-6)
    a_n = default_an(len(Y))
    _, dual = log_ael_profile(Y, B, g, a_n)
    num = _fd(lambda b: log_ael_profile(Y, _bmat(b, g), g, a_n)[0], _bvec(B, g))
    np.testing.assert_allclose(grad_log_ael(Y, B, g, dual, a_n), num, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("adjusted", [False, True])
def test_naive_gradient_matches_finite_differences(adjusted):
    g, p, Y = simulate_instance(7, m=3, nd=2, nb=1, n=300)
    a_n = default_an(len(Y)) if adjusted else None

    def f(theta):
        P = params_from_free(theta, g)
        return naive_log_el(Y, P.B, P.Omega, g, adjusted, a_n)[0]

    val, dual = naive_log_el(Y, p.B, p.Omega, g, adjusted, a_n)
    assert dual.converged
    num = _fd(f, free_params(p.B, p.Omega, g))
    np.testing.assert_allclose(grad_naive(Y, p.B, p.Omega, g, dual, a_n), num, rtol=1e-5, atol=1e-6)


def test_stale_dual_is_rejected():
    g, p, Y = simulate_instance(2)
    _, dual = log_el_profile(Y, p.B, g)
    B2 = p.B.copy()
    v, u = g.directed_index()[0]
    B2[v, u] += 0.1
    with pytest.raises(StaleDualError):
        grad_log_el(Y, B2, g, dual)
