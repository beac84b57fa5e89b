"""Likelihood-ratio tests, Wald regions and asymptotic variances."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .el_inner import ael_augment, default_an, log_ael_profile, solve_dual
from .estimating import (
    Dataset,
    ModelParams,
    check_params,
    estfun_naive,
    estfun_pinned,
    free_params,
    params_from_free,
    residuals,
)
from .estimation import FitOptions, FitResult, eel_transform, fit_profile
from .gaussian import gaussian_loglik, gaussian_mle, gaussian_scores, score_jacobian
from .graph import MixedGraph

__all__ = [
    "TestReport",
    "chi2_sf",
    "chi2_quantile",
    "make_report",
    "gof_test",
    "pinned_log_el",
    "lr_statistic_point",
    "lr_test_point",
    "nested_lr_test",
    "wald_statistic",
    "wald_test",
    "asymp_variance_qin_lawless",
    "sandwich_variance_gaussian",
    "mle_variance_gaussian",
    "gaussian_lr_point",
]


@dataclass
class TestReport:
    statistic: float
    dof: int
    p_value: float
    method: str
    converged: bool

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)


def chi2_sf(x: float, dof: int) -> float:
    """Upper chi-square tail via the regularized upper incomplete gamma function."""
    if dof < 1:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(special.gammaincc(dof / 2.0, x / 2.0))


def chi2_quantile(prob: float, dof: int) -> float:
    return float(2.0 * special.gammaincinv(dof / 2.0, prob))


def make_report(statistic: float, dof: int, method: str, converged: bool = True) -> TestReport:
    if dof < 1:
        raise ValueError("test has zero degrees of freedom")
    if not converged:
        return TestReport(math.inf, dof, 0.0, method, False)
    return TestReport(float(statistic), int(dof), chi2_sf(statistic, dof), method, True)


def _Y(data) -> np.ndarray:
    return data.Y if isinstance(data, Dataset) else np.asarray(data, float)


def gof_test(fit: FitResult, graph: MixedGraph, n: int) -> TestReport:
    """Overall fit statistic ``2(-n log n - l(theta_hat))`` on ``q - d`` dof."""
    q, d = graph.dof_counts()
    if q == d:
        raise ValueError("saturated model: no goodness-of-fit test")
    if not fit.valid:
        return make_report(math.inf, q - d, "gof", converged=False)
    stat = 2.0 * (-n * math.log(n) - fit.log_el)
    return make_report(max(stat, 0.0), q - d, "gof")


def pinned_log_el(data, B, Omega, graph: MixedGraph, adjusted: bool = False,
                  options: FitOptions | None = None) -> float:
    """Log-EL (or log-AEL) with ``B`` and ``Omega`` both fixed."""
    opts = options or FitOptions()
    G = estfun_pinned(data, B, Omega, graph)
    if adjusted:
        a_n = opts.a_n if opts.a_n is not None else default_an(G.shape[0])
        G = ael_augment(G, a_n)
    dual = solve_dual(G, tol=opts.tol_inner, max_iter=opts.max_iter_inner, classify=False)
    return dual.log_el


def lr_statistic_point(data, graph: MixedGraph, theta0: ModelParams, method: str,
                       fit: FitResult, options: FitOptions | None = None) -> float:
    """``2[l(theta_hat) - l_method(theta0)]``; ``inf`` when undefined at ``theta0``."""
    Y = _Y(data)
    n = Y.shape[0]
    opts = options or FitOptions()
    if method == "el":
        l0 = pinned_log_el(Y, theta0.B, theta0.Omega, graph, options=opts)
        return 2.0 * (fit.log_el - l0)
    if method == "ael":
        lhat = pinned_log_el(Y, fit.B_hat, fit.Omega_hat, graph, adjusted=True, options=opts)
        l0 = pinned_log_el(Y, theta0.B, theta0.Omega, graph, adjusted=True, options=opts)
        return 2.0 * (lhat - l0)
    if method == "eel":
        def loglik(theta):
            P = params_from_free(theta, graph)
            return pinned_log_el(Y, P.B, P.Omega, graph, options=opts)

        l0, _ = eel_transform(loglik, free_params(fit.B_hat, fit.Omega_hat, graph),
                              free_params(theta0.B, theta0.Omega, graph), n)
        return 2.0 * (fit.log_el - l0)
    raise ValueError(f"unknown calibration {method!r}")


def lr_test_point(data, graph: MixedGraph, theta0: ModelParams, method: str,
                  fit: FitResult, options: FitOptions | None = None) -> TestReport:
    """EL ratio test of the fully specified ``theta0 = (B0, Omega0)`` on ``d`` dof."""
    check_params(theta0.B, theta0.Omega, graph, atol=1e-12)
    _, d = graph.dof_counts()
    if not fit.valid:
        return make_report(math.inf, d, method, converged=False)
    stat = lr_statistic_point(data, graph, theta0, method, fit, options)
    if not math.isfinite(stat):
        return make_report(math.inf, d, method, converged=False)
    return make_report(max(stat, 0.0), d, method)


def nested_lr_test(data, g_sub: MixedGraph, g_full: MixedGraph, engine: str = "el",
                   options: FitOptions | None = None, variant: str = "hybrid") -> TestReport:
    """Compare a sub-model against a larger model on the same vertices."""
    if tuple(g_sub.vertices) != tuple(g_full.vertices):
        raise ValueError("graphs must share the same vertex order")
    if not g_sub.is_subgraph_of(g_full):
        raise ValueError("graphs are not nested")
    dof = g_full.dof_counts()[1] - g_sub.dof_counts()[1]
    if dof == 0:
        raise ValueError("identical models: test has zero degrees of freedom")
    Y = _Y(data)
    if engine == "el":
        f_sub = fit_profile(Y, g_sub, variant, options)
        f_full = fit_profile(Y, g_full, variant, options)
    elif engine == "gaussian":
        f_sub = gaussian_mle(Y, g_sub, options)
        f_full = gaussian_mle(Y, g_full, options)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    if not (f_sub.valid and f_full.valid):
        return make_report(math.inf, dof, engine, converged=False)
    if engine == "el" and variant == "ael":
        opts = options or FitOptions()
        l_sub = log_ael_profile(Y, f_sub.B_hat, g_sub, opts.a_n, tol=opts.tol_inner)[0]
        l_full = log_ael_profile(Y, f_full.B_hat, g_full, opts.a_n, tol=opts.tol_inner)[0]
        return make_report(max(2.0 * (l_full - l_sub), 0.0), dof, "ael")
    stat = 2.0 * (f_full.log_el - f_sub.log_el)
    return make_report(max(stat, 0.0), dof, engine)


# ---- Wald regions --------------------------------------------------------


def wald_statistic(theta_hat, theta0, cov) -> float:
    diff = np.asarray(theta_hat, float) - np.asarray(theta0, float)
    return float(diff @ np.linalg.solve(cov, diff))


def wald_test(theta_hat, theta0, cov, method: str) -> TestReport:
    return make_report(wald_statistic(theta_hat, theta0, cov), len(theta_hat), method)


def _naive_jacobian_mean(Y, B, graph: MixedGraph, p) -> np.ndarray:
    """Weighted mean of d G / d theta for the residual-form naive functions (``q x d``)."""
    n, m = Y.shape
    R = residuals(Y, B)
    YR = (Y * p[:, None]).T @ R  # [s, b] = sum_i p_i Y_is g_ib
    iu, ju = np.triu_indices(m)
    didx = graph.directed_index()
    oidx = graph.omega_free_index()
    J = np.zeros((m + len(iu), len(didx) + len(oidx)))
    for r, (a, b) in enumerate(zip(iu, ju), start=m):
        for k, (v, s) in enumerate(didx):
            if v == a:
                J[r, k] -= YR[s, b]
            if v == b:
                J[r, k] -= YR[s, a]
    pos = {(a, b): r for r, (a, b) in enumerate(zip(iu.tolist(), ju.tolist()), start=m)}
    for k, ij in enumerate(oidx, start=len(didx)):
        J[pos[ij], k] = -1.0
    return J


def asymp_variance_qin_lawless(data, graph: MixedGraph, fit: FitResult) -> np.ndarray:
    """Plug-in ``V / n`` with ``V^{-1} = J^T S^{-1} J`` from the EL weights at the MELE."""
    if not fit.valid:
        raise ValueError("variance needs a valid MELE")
    Y = _Y(data)
    n = Y.shape[0]
    p = fit.weights
    G = estfun_naive(Y, fit.B_hat, fit.Omega_hat, graph)
    S = (G * p[:, None]).T @ G
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError(f"moment matrix is singular (condition number {cond:.3g})")
    J = _naive_jacobian_mean(Y, fit.B_hat, graph, p)
    info = J.T @ np.linalg.solve(S, J)
    V = np.linalg.inv(info) / n
    return 0.5 * (V + V.T)


def sandwich_variance_gaussian(data, graph: MixedGraph, gfit: FitResult) -> np.ndarray:
    """Robust ``A^{-1} B A^{-T} / n`` from the Gaussian score at the MLE."""
    Y = _Y(data)
    n = Y.shape[0]
    theta = free_params(gfit.B_hat, gfit.Omega_hat, graph)
    A = score_jacobian(Y, theta, graph)
    s = gaussian_scores(Y, gfit.B_hat, gfit.Omega_hat, graph)
    Bm = s.T @ s / n
    Ainv = np.linalg.inv(A)
    V = Ainv @ Bm @ Ainv.T / n
    return 0.5 * (V + V.T)


def mle_variance_gaussian(data, graph: MixedGraph, gfit: FitResult) -> np.ndarray:
    """Inverse observed information at the Gaussian MLE."""
    Y = _Y(data)
    n = Y.shape[0]
    theta = free_params(gfit.B_hat, gfit.Omega_hat, graph)
    A = score_jacobian(Y, theta, graph)
    V = np.linalg.inv(-A) / n
    return 0.5 * (V + V.T)


def gaussian_lr_point(data, graph: MixedGraph, theta0: ModelParams, gfit: FitResult) -> TestReport:
    """Gaussian likelihood ratio test of a fully specified ``theta0``."""
    _, d = graph.dof_counts()
    if not gfit.valid:
        return make_report(math.inf, d, "gaussian", converged=False)
    stat = 2.0 * (gfit.log_el - gaussian_loglik(data, theta0.B, theta0.Omega))
    return make_report(max(stat, 0.0), d, "gaussian")

