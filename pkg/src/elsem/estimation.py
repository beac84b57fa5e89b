"""Maximum empirical likelihood estimation for mixed-graph SEMs.

Profiled fits optimize only the free entries of ``B``; the covariance
``Omega`` is recovered afterwards from the EL weights.  The naive fit
optimizes ``(B, Omega)`` jointly and exists mainly as a benchmark.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import el_inner
from .el_inner import (
    default_an,
    grad_log_ael,
    grad_log_el,
    grad_naive,
    log_ael_profile,
    log_el_profile,
    naive_log_el,
)
from .estimating import (
    Dataset,
    ModelParams,
    free_params,
    omega_of,
    params_from_free,
)
from .graph import MixedGraph
from .optim import bfgs_maximize

__all__ = [
    "VALID",
    "NO_CONVERGENCE",
    "HULL_AT_OPTIMUM",
    "FitOptions",
    "FitResult",
    "InitializationError",
    "EELBracketError",
    "init_estimate",
    "fit_profile",
    "fit_naive",
    "eel_transform",
    "eel_log_el",
    "gamma_eel",
]

VALID = "valid_stationary"
NO_CONVERGENCE = "no_convergence"
HULL_AT_OPTIMUM = "hull_at_optimum"

FEASIBILITY_TOL = 1e-7


class InitializationError(ValueError):
    """Least-squares initialization is impossible (rank-deficient regressors)."""


class EELBracketError(RuntimeError):
    """The extended-EL inversion could not bracket a root."""


@dataclass
class FitOptions:
    tol_inner: float = 1e-8
    max_iter_inner: int = 100
    tol_outer: float = 1e-6
    max_outer: int = 500
    a_n: float | None = None


@dataclass
class FitResult:
    B_hat: np.ndarray
    Omega_hat: np.ndarray | None
    log_el: float
    method: str
    status: str
    grad_norm: float
    outer_iterations: int
    wall_time: float
    weights: np.ndarray | None = field(default=None, repr=False)
    feasibility: float = math.nan
    message: str = ""

    @property
    def valid(self) -> bool:
        return self.status == VALID

    @property
    def n(self) -> int | None:
        return None if self.weights is None else len(self.weights)


def _Y(data) -> np.ndarray:
    return data.Y if isinstance(data, Dataset) else np.asarray(data, float)


def _b_from_free(b, graph: MixedGraph) -> np.ndarray:
    m = graph.m
    B = np.zeros((m, m))
    for k, (v, u) in enumerate(graph.directed_index()):
        B[v, u] = b[k]
    return B


def _b_free(B, graph: MixedGraph) -> np.ndarray:
    return np.array([B[v, u] for v, u in graph.directed_index()], dtype=float)


def _is_pd(S) -> bool:
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return False
    return True


def init_estimate(data, graph: MixedGraph) -> ModelParams:
    """Least-squares ``B`` and a diagonally dominant residual ``Omega``."""
    Y = _Y(data)
    n, m = Y.shape
    B = np.zeros((m, m))
    for v, pa in enumerate(graph.parent_index()):
        if not pa:
            continue
        X = Y[:, pa]
        if n <= len(pa) or np.linalg.matrix_rank(X) < len(pa):
            raise InitializationError(f"regressors for vertex {graph.vertices[v]!r} are rank deficient")
        coef, *_ = np.linalg.lstsq(X, Y[:, v], rcond=None)
        B[v, pa] = coef
    R = Y - Y @ B.T
    S = R.T @ R / n
    mask = np.eye(m, dtype=bool)
    for i, j in graph.bidirected_index():
        mask[i, j] = mask[j, i] = True
    Omega = np.where(mask, S, 0.0)
    diag = np.diag(Omega).copy()
    if np.any(diag <= 0):
        raise InitializationError("a residual variance is zero")
    off = np.abs(Omega - np.diag(diag)).sum(axis=1)
    factor = np.ones(m)
    bad = off >= 0.9 * diag
    factor[bad] = 0.9 * diag[bad] / off[bad] * (1.0 - 1e-9)
    F = np.minimum.outer(factor, factor)
    Omega = np.where(np.eye(m, dtype=bool), Omega, Omega * F)
    return ModelParams(B, Omega)


def _profile_objective(Y, graph, adjusted, a_n, opts, state):
    """Closure returning (log-EL, gradient) at free-coefficient vectors."""

    def fun(b):
        B = _b_from_free(b, graph)
        lam0 = state.get("lam")
        if adjusted:
            val, dual = log_ael_profile(Y, B, graph, a_n=a_n, lam0=lam0, tol=opts.tol_inner,
                                        max_iter=opts.max_iter_inner, classify=False)
        else:
            val, dual = log_el_profile(Y, B, graph, lam0=lam0, tol=opts.tol_inner,
                                       max_iter=opts.max_iter_inner, classify=False)
        if not dual.converged:
            return -math.inf, None
        state["lam"] = dual.lam
        if adjusted:
            return val, grad_log_ael(Y, B, graph, dual, a_n)
        return val, grad_log_el(Y, B, graph, dual)

    return fun


def _finish_profile(Y, graph, B, method, grad_norm, iters, t0, opts, message="") -> FitResult:
    # Omega always comes from the original EL weights, whatever was maximized
    val, dual = log_el_profile(Y, B, graph, tol=opts.tol_inner, max_iter=opts.max_iter_inner)
    if not dual.converged:
        status = HULL_AT_OPTIMUM if dual.status == el_inner.HULL_VIOLATION else NO_CONVERGENCE
        return FitResult(B, None, val, method, status,
                         grad_norm, iters, time.perf_counter() - t0, message=message or dual.status)
    Omega, diag = omega_of(Y, B, dual.weights, graph, tol=None)
    ok = grad_norm < opts.tol_outer and diag < FEASIBILITY_TOL and _is_pd(Omega)
    return FitResult(
        B_hat=B,
        Omega_hat=Omega,
        log_el=val,
        method=method,
        status=VALID if ok else NO_CONVERGENCE,
        grad_norm=grad_norm,
        outer_iterations=iters,
        wall_time=time.perf_counter() - t0,
        weights=dual.weights,
        feasibility=diag,
        message=message,
    )


def _optimize_profile(Y, graph, B0, adjusted, a_n, opts):
    state: dict = {}
    fun = _profile_objective(Y, graph, adjusted, a_n, opts, state)
    b0 = _b_free(B0, graph)
    f0, _ = fun(b0)
    if not math.isfinite(f0):
        return None
    return bfgs_maximize(fun, b0, tol=opts.tol_outer, max_iter=opts.max_outer)


def fit_profile(data, graph: MixedGraph, variant: str = "el", options: FitOptions | None = None,
                init: ModelParams | None = None) -> FitResult:
    """Profile MELE of ``B`` with ``variant`` in ``{"el", "ael", "hybrid"}``.

    ``hybrid`` maximizes the adjusted EL first and restarts the original EL
    from that point.  Every variant reports ``Omega_hat`` from the original
    EL weights at the final ``B``.
    """
    if variant not in ("el", "ael", "hybrid"):
        raise ValueError(f"unknown profile variant {variant!r}")
    opts = options or FitOptions()
    t0 = time.perf_counter()
    Y = _Y(data)
    n = Y.shape[0]
    a_n = opts.a_n if opts.a_n is not None else default_an(n)
    B0 = (init or init_estimate(Y, graph)).B
    iters = 0
    if variant in ("ael", "hybrid"):
        res = _optimize_profile(Y, graph, B0, True, a_n, opts)
        if res is None:
            raise RuntimeError("adjusted EL undefined at the initial point")
        B1 = _b_from_free(res.x, graph)
        iters += res.iterations
        if variant == "ael":
            return _finish_profile(Y, graph, B1, "ael", res.grad_norm, iters, t0, opts,
                                   message=res.message)
        B0 = B1
    res = _optimize_profile(Y, graph, B0, False, a_n, opts)
    if res is None:
        return FitResult(B0, None, -math.inf, variant, NO_CONVERGENCE, math.inf, iters,
                         time.perf_counter() - t0, message="EL undefined at the starting point")
    iters += res.iterations
    return _finish_profile(Y, graph, _b_from_free(res.x, graph), variant, res.grad_norm, iters,
                           t0, opts, message=res.message)


def fit_naive(data, graph: MixedGraph, variant: str = "el", options: FitOptions | None = None,
              init: ModelParams | None = None) -> FitResult:
    """Joint EL fit over free entries of ``(B, Omega)`` without profiling.

    Steps leaving the positive-definite cone are rejected by the line search.
    """
    if variant not in ("el", "ael"):
        raise ValueError(f"unknown naive variant {variant!r}")
    opts = options or FitOptions()
    t0 = time.perf_counter()
    Y = _Y(data)
    n = Y.shape[0]
    adjusted = variant == "ael"
    a_n = opts.a_n if opts.a_n is not None else default_an(n)
    start = init or init_estimate(Y, graph)
    if not _is_pd(start.Omega):
        raise InitializationError("initial Omega is not positive definite")
    state: dict = {}

    def fun(theta):
        P = params_from_free(theta, graph)
        if not _is_pd(P.Omega):
            return -math.inf, None
        val, dual = naive_log_el(Y, P.B, P.Omega, graph, adjusted=adjusted, a_n=a_n,
                                 lam0=state.get("lam"), tol=opts.tol_inner,
                                 max_iter=opts.max_iter_inner, classify=False)
        if not dual.converged:
            return -math.inf, None
        state["lam"] = dual.lam
        return val, grad_naive(Y, P.B, P.Omega, graph, dual, a_n if adjusted else None)

    method = "naive_ael" if adjusted else "naive_el"
    theta0 = free_params(start.B, start.Omega, graph)
    f0, _ = fun(theta0)
    if not math.isfinite(f0):
        return FitResult(start.B, None, -math.inf, method, NO_CONVERGENCE, math.inf, 0,
                         time.perf_counter() - t0,
                         message="EL undefined at the starting point")
    res = bfgs_maximize(fun, theta0, tol=opts.tol_outer, max_iter=opts.max_outer)
    P = params_from_free(res.x, graph)
    val, dual = naive_log_el(Y, P.B, P.Omega, graph, tol=opts.tol_inner,
                             max_iter=opts.max_iter_inner)
    ok = dual.converged and res.grad_norm < opts.tol_outer and _is_pd(P.Omega)
    if ok:
        status = VALID
    elif dual.status == el_inner.HULL_VIOLATION:
        status = HULL_AT_OPTIMUM
    else:
        status = NO_CONVERGENCE
    return FitResult(
        B_hat=P.B,
        Omega_hat=P.Omega if dual.converged else None,
        log_el=val,
        method=method,
        status=status,
        grad_norm=res.grad_norm,
        outer_iterations=res.iterations,
        wall_time=time.perf_counter() - t0,
        weights=dual.weights if dual.converged else None,
        feasibility=0.0 if dual.converged else math.nan,
        message=res.message,
    )


# ---- extended empirical likelihood ----------------------------------------


def gamma_eel(n: int, log_el: float) -> float:
    """Expansion factor ``1 + 2(-n log n - l) / (2n)``."""
    return 1.0 + 2.0 * (-n * math.log(n) - log_el) / (2.0 * n)


def eel_transform(loglik, x_hat, x, n: int, tol: float = 1e-10, max_iter: int = 200):
    """Evaluate the extended EL at ``x`` around the maximizer ``x_hat``.

    ``loglik`` maps a parameter array to the original log-EL (``-inf`` when
    undefined).  Finds ``t`` in ``(0, 1]`` with
    ``t * gamma(n, loglik(x_hat + t (x - x_hat))) = 1`` by bisection and
    returns ``(loglik(x'), t)`` for the preimage ``x'``.
    """
    x_hat = np.asarray(x_hat, float)
    x = np.asarray(x, float)
    if np.array_equal(x, x_hat):
        return loglik(x_hat), 1.0

    def phi(t):
        val = loglik(x_hat + t * (x - x_hat))
        if not math.isfinite(val):
            return math.inf, val
        return t * gamma_eel(n, val) - 1.0, val

    hi_val, l1 = phi(1.0)
    if hi_val == 0.0:
        return l1, 1.0
    if hi_val < 0.0:
        raise EELBracketError("extended EL map does not bracket the target on (0, 1]")
    lo, hi = 0.0, 1.0
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val, lval = phi(mid)
        if val <= 0.0:
            lo, best = mid, lval
        else:
            hi = mid
        if hi - lo < tol:
            break
    if best is None or not math.isfinite(best):
        best = loglik(x_hat + lo * (x - x_hat))
    return best, lo


def eel_log_el(B, data, fit: FitResult, graph: MixedGraph, options: FitOptions | None = None) -> float:
    """Extended profile log-EL at ``B`` around the fitted MELE."""
    if not fit.valid:
        raise ValueError("extended EL needs a valid MELE")
    opts = options or FitOptions()
    Y = _Y(data)

    def loglik(b):
        return log_el_profile(Y, _b_from_free(b, graph), graph, tol=opts.tol_inner,
                              max_iter=opts.max_iter_inner, classify=False)[0]

    val, _ = eel_transform(loglik, _b_free(fit.B_hat, graph), _b_free(np.asarray(B, float), graph),
                           Y.shape[0])
    return val
