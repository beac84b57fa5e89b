"""Gaussian maximum likelihood baseline and the hybrid Gauss/EL estimator."""

from __future__ import annotations

import math
import time

import numpy as np

from .el_inner import log_el_profile
from .estimating import (
    Dataset,
    SingularModelError,
    _i_minus_b,
    free_params,
    omega_of,
    params_from_free,
    sigma_of,
)
from .estimation import (
    NO_CONVERGENCE,
    VALID,
    FitOptions,
    FitResult,
    _is_pd,
    init_estimate,
)
from .graph import MixedGraph
from .optim import bfgs_maximize

__all__ = [
    "gaussian_loglik",
    "gaussian_grad",
    "gaussian_scores",
    "gaussian_mle",
    "hybrid_gauss_el",
    "score_jacobian",
]

LOG_2PI = math.log(2.0 * math.pi)


def _Y(data) -> np.ndarray:
    return data.Y if isinstance(data, Dataset) else np.asarray(data, float)


def gaussian_loglik(data, B, Omega) -> float:
    """Zero-mean Gaussian log-likelihood of the sample at ``Sigma(B, Omega)``."""
    Y = _Y(data)
    n, m = Y.shape
    Sigma = sigma_of(B, Omega)
    sign, logdet = np.linalg.slogdet(Sigma)
    if sign <= 0:
        raise SingularModelError("implied covariance is not positive definite")
    S = Y.T @ Y / n
    return -0.5 * n * (m * LOG_2PI + logdet + np.trace(np.linalg.solve(Sigma, S)))


def gaussian_scores(data, B, Omega, graph: MixedGraph) -> np.ndarray:
    """Per-observation score (``n x d``) in ``free_params`` order."""
    Y = _Y(data)
    A = _i_minus_b(B)
    Ainv = np.linalg.inv(A)
    Oinv = np.linalg.inv(np.asarray(Omega, float))
    E = Y @ A.T
    U = E @ Oinv
    cols = [Y[:, s] * U[:, v] - Ainv[s, v] for v, s in graph.directed_index()]
    for i, j in graph.omega_free_index():
        if i == j:
            cols.append(0.5 * (U[:, i] ** 2 - Oinv[i, i]))
        else:
            cols.append(U[:, i] * U[:, j] - Oinv[i, j])
    if not cols:
        return np.zeros((Y.shape[0], 0))
    return np.column_stack(cols)


def gaussian_grad(data, B, Omega, graph: MixedGraph) -> np.ndarray:
    return gaussian_scores(data, B, Omega, graph).sum(axis=0)


def score_jacobian(data, theta, graph: MixedGraph, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the mean score (``d x d``, symmetrized)."""
    Y = _Y(data)
    theta = np.asarray(theta, float)
    d = theta.size
    J = np.zeros((d, d))
    for k in range(d):
        h = rel_step * max(1.0, abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        Pp, Pm = params_from_free(tp, graph), params_from_free(tm, graph)
        sp = gaussian_scores(Y, Pp.B, Pp.Omega, graph).mean(axis=0)
        sm = gaussian_scores(Y, Pm.B, Pm.Omega, graph).mean(axis=0)
        J[:, k] = (sp - sm) / (2.0 * h)
    return 0.5 * (J + J.T)


def gaussian_mle(data, graph: MixedGraph, options: FitOptions | None = None) -> FitResult:
    """Gaussian MLE over free ``(B, Omega)`` by BFGS from the least-squares start."""
    opts = options or FitOptions()
    t0 = time.perf_counter()
    Y = _Y(data)
    start = init_estimate(Y, graph)

    def fun(theta):
        P = params_from_free(theta, graph)
        if not _is_pd(P.Omega):
            return -math.inf, None
        try:
            val = gaussian_loglik(Y, P.B, P.Omega)
            grad = gaussian_grad(Y, P.B, P.Omega, graph)
        except (SingularModelError, np.linalg.LinAlgError):
            return -math.inf, None
        return val, grad

    res = bfgs_maximize(fun, free_params(start.B, start.Omega, graph), tol=opts.tol_outer,
                        max_iter=opts.max_outer)
    P = params_from_free(res.x, graph)
    return FitResult(
        B_hat=P.B,
        Omega_hat=P.Omega,
        log_el=res.value,
        method="gaussian",
        status=VALID if res.converged else NO_CONVERGENCE,
        grad_norm=res.grad_norm,
        outer_iterations=res.iterations,
        wall_time=time.perf_counter() - t0,
        message=res.message,
    )


def hybrid_gauss_el(data, graph: MixedGraph, gfit: FitResult,
                    options: FitOptions | None = None) -> FitResult:
    """Covariance from the EL weights at the Gaussian ``B`` estimate.

    The ``log_el`` field holds the profile log-EL at ``gfit.B_hat``.
    """
    opts = options or FitOptions()
    t0 = time.perf_counter()
    Y = _Y(data)
    B = gfit.B_hat
    val, dual = log_el_profile(Y, B, graph, tol=opts.tol_inner, max_iter=opts.max_iter_inner)
    if not dual.converged:
        return FitResult(B, None, val, "hybrid_gauss", NO_CONVERGENCE, math.nan, 0,
                         time.perf_counter() - t0, message=dual.status)
    Omega, diag = omega_of(Y, B, dual.weights, graph, tol=None)
    ok = gfit.valid and _is_pd(Omega)
    return FitResult(
        B_hat=B,
        Omega_hat=Omega,
        log_el=val,
        method="hybrid_gauss",
        status=VALID if ok else NO_CONVERGENCE,
        grad_norm=gfit.grad_norm,
        outer_iterations=0,
        wall_time=time.perf_counter() - t0,
        weights=dual.weights,
        feasibility=diag,
    )
