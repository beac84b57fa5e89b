"""Inner empirical-likelihood problem: dual Newton solver, AEL, and gradients.

For a constraint matrix ``G`` (``n x c``) the log-EL is

    max sum(log p_i)  s.t.  p in simplex, sum p_i G_i = 0,

solved through the convex dual ``D(lam) = -sum log(1 + lam^T G_i)`` whose
minimizer gives ``p_i = 1 / (n (1 + lam^T G_i))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, sparse

from .estimating import estfun_naive, estfun_profile, residuals
from .graph import MixedGraph

__all__ = [
    "CONVERGED",
    "HULL_VIOLATION",
    "MAX_ITER",
    "LINE_SEARCH_FAILURE",
    "DualSolution",
    "StaleDualError",
    "solve_dual",
    "origin_in_hull",
    "default_an",
    "ael_augment",
    "log_el_profile",
    "log_ael_profile",
    "grad_log_el",
    "grad_log_ael",
    "pair_gradient",
    "naive_log_el",
    "grad_naive",
]

CONVERGED = "converged"
HULL_VIOLATION = "hull_violation"
MAX_ITER = "max_iter"
LINE_SEARCH_FAILURE = "line_search_failure"

SUM_TOL = 1e-10
STALL_ITERS = 10


class StaleDualError(ValueError):
    """A dual solution was used at a parameter other than the one it was solved at."""


@dataclass
class DualSolution:
    lam: np.ndarray
    weights: np.ndarray
    log_el: float
    status: str
    iterations: int
    # parameter the constraint matrix was built at; used to catch stale reuse
    point: np.ndarray | None = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def check_point(self, B) -> None:
        if self.point is None or not np.array_equal(self.point, np.asarray(B, float)):
            raise StaleDualError("dual solution was computed at a different B")


def origin_in_hull(G: np.ndarray, margin: float = 1e-12) -> bool:
    """True when 0 is reachable with all weights strictly positive.

    Solves ``max t  s.t.  p_i >= t, sum p = 1, G^T p = 0`` by linear programming.
    """
    n, c = G.shape
    scale = np.maximum(np.abs(G).max(axis=0), 1e-300)
    Gs = G / scale
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A_ub = sparse.hstack([-sparse.identity(n), sparse.csr_matrix(np.ones((n, 1)))]).tocsr()
    b_ub = np.zeros(n)
    A_eq = sparse.vstack(
        [
            sparse.csr_matrix(np.append(np.ones(n), 0.0)),
            sparse.hstack([sparse.csr_matrix(Gs.T), sparse.csr_matrix((c, 1))]),
        ]
    ).tocsr()
    b_eq = np.zeros(c + 1)
    b_eq[0] = 1.0
    bounds = [(0.0, 1.0)] * n + [(None, 1.0)]
    res = optimize.linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                           bounds=bounds, method="highs")
    if res.status != 0:
        return False
    return bool(-res.fun > margin / n)


def _newton_direction(Gz: np.ndarray, gm: np.ndarray, n: int) -> np.ndarray:
    H = Gz.T @ Gz / n
    tr = np.trace(H)
    try:
        cf = linalg.cho_factor(H, check_finite=False)
        step = linalg.cho_solve(cf, gm, check_finite=False)
        if np.all(np.isfinite(step)):
            return step
    except linalg.LinAlgError:
        pass
    ridge = 1e-10 * (tr if tr > 0 else 1.0)
    step, *_ = np.linalg.lstsq(H + ridge * np.eye(H.shape[0]), gm, rcond=None)
    return step


def _polish(G, lam, den, gm, z, n, floor, gnorm):
    # one extra Newton step; outer gradients need the multipliers well below tol
    step = _newton_direction(G * z[:, None], gm, n)
    lam_new = lam + step
    den_new = 1.0 + G @ lam_new
    if np.all(den_new >= floor):
        zn = 1.0 / den_new
        gn = float(np.max(np.abs(G.T @ zn))) / n
        if gn < gnorm and abs(zn.sum() / n - 1.0) < SUM_TOL:
            return lam_new, den_new
    return lam, den


def solve_dual(G, lam0=None, tol: float = 1e-8, max_iter: int = 100,
               classify: bool = True) -> DualSolution:
    """Maximize ``sum log p_i`` subject to ``sum p_i G_i = 0`` via its dual.

    Newton-Raphson on the dual with step halving until every
    ``1 + lam^T G_i >= 1/n`` and the dual objective does not increase.
    Convergence requires ``||sum p_i G_i||_inf < tol`` and weights summing
    to one.  ``lam0`` warm-starts the iteration when it is feasible.
    With ``classify`` a failed solve is labelled ``hull_violation`` only after
    a linear-programming check confirms the origin is outside the hull;
    otherwise the cheaper divergence heuristics decide the label.
    """
    G = np.asarray(G, float)
    n, c = G.shape
    if not np.all(np.isfinite(G)):
        raise ValueError("constraint matrix has non-finite entries")
    if n < c:
        warnings.warn(f"fewer observations ({n}) than constraints ({c})", stacklevel=2)
    floor = 1.0 / n
    lam = np.zeros(c)
    if lam0 is not None and np.shape(lam0) == (c,):
        den0 = 1.0 + G @ lam0
        if np.all(den0 >= floor):
            lam = np.array(lam0, float)
    den = 1.0 + G @ lam
    obj = -np.sum(np.log(den))
    best = math.inf
    stall = 0
    status = MAX_ITER
    it = 0
    for it in range(max_iter + 1):
        z = 1.0 / den
        gm = (G.T @ z) / n
        gnorm = float(np.max(np.abs(gm))) if c else 0.0
        wsum = float(z.sum()) / n
        if gnorm < tol and abs(wsum - 1.0) < SUM_TOL:
            status = CONVERGED
            lam, den = _polish(G, lam, den, gm, z, n, floor, gnorm)
            break
        if it == max_iter:
            break
        if wsum < 1e-3:
            # weights collapsing: lam running off to infinity along a separating direction
            status = HULL_VIOLATION
            break
        if gnorm < best * (1 - 1e-3):
            best = gnorm
            stall = 0
        else:
            stall += 1
            if stall >= STALL_ITERS:
                status = HULL_VIOLATION
                break
        step = _newton_direction(G * z[:, None], gm, n)
        t = 1.0
        accepted = False
        slack = 1e-13 * (1.0 + abs(obj))
        while t > 1e-14:
            lam_new = lam + t * step
            den_new = 1.0 + G @ lam_new
            if np.all(den_new >= floor):
                obj_new = -np.sum(np.log(den_new))
                if obj_new <= obj + slack:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            status = LINE_SEARCH_FAILURE
            break
        lam, den, obj = lam_new, den_new, obj_new
    if status != CONVERGED and classify:
        if not origin_in_hull(G):
            status = HULL_VIOLATION
        elif status == HULL_VIOLATION:
            status = MAX_ITER
    p = 1.0 / (n * den)
    log_el = -n * math.log(n) - float(np.sum(np.log(den))) if status == CONVERGED else -math.inf
    return DualSolution(lam=lam, weights=p, log_el=log_el, status=status, iterations=it)


def default_an(n: int) -> float:
    return math.log(n) / 2.0


def ael_augment(G, a_n: float) -> np.ndarray:
    """Append the pseudo-observation ``-a_n * mean(G)``."""
    if a_n <= 0:
        raise ValueError("a_n must be positive")
    G = np.asarray(G, float)
    return np.vstack([G, -a_n * G.mean(axis=0)])


def log_el_profile(data, B, graph: MixedGraph, lam0=None, tol: float = 1e-8,
                   max_iter: int = 100, classify: bool = True) -> tuple[float, DualSolution]:
    """Profile log-EL at ``B`` (``-inf`` when the inner problem fails)."""
    G = estfun_profile(data, B, graph)
    dual = solve_dual(G, lam0=lam0, tol=tol, max_iter=max_iter,
                      classify=classify)
    dual.point = np.array(B, float)
    return dual.log_el, dual


def log_ael_profile(data, B, graph: MixedGraph, a_n: float | None = None, lam0=None,
                    tol: float = 1e-8, max_iter: int = 100,
                    classify: bool = True) -> tuple[float, DualSolution]:
    """Adjusted profile log-EL over ``n + 1`` weights."""
    G = estfun_profile(data, B, graph)
    if a_n is None:
        a_n = default_an(G.shape[0])
    dual = solve_dual(ael_augment(G, a_n), lam0=lam0, tol=tol, max_iter=max_iter,
                      classify=classify)
    dual.point = np.array(B, float)
    return dual.log_el, dual


def pair_gradient(Y, R, pairs, lam_pairs, w, didx) -> np.ndarray:
    """Gradient over the free ``B`` entries of ``-sum_i w_i lam^T G_i(B)``'s negation.

    ``pairs`` are the ``(i, j)`` index pairs of the residual-product columns
    (``i <= j``), ``lam_pairs`` their multipliers, and ``w`` the per-observation
    effective weights ``1 / (1 + lam^T G_i)``.
    """
    if not didx:
        return np.zeros(0)
    m = R.shape[1]
    Lam = np.zeros((m, m))
    for (i, j), lk in zip(pairs, lam_pairs):
        if i == j:
            Lam[i, i] += 2.0 * lk
        else:
            Lam[i, j] += lk
            Lam[j, i] += lk
    full = ((R @ Lam) * w[:, None]).T @ Y
    rows, cols = np.array(didx).T
    return full[rows, cols]


def grad_log_el(data, B, graph: MixedGraph, dual: DualSolution) -> np.ndarray:
    """Analytic gradient of the profile log-EL over free ``B`` entries."""
    dual.check_point(B)
    if not dual.converged:
        raise ValueError("gradient requires a converged dual solution")
    Y = np.asarray(getattr(data, "Y", data), float)
    n = Y.shape[0]
    m = graph.m
    R = residuals(Y, B)
    w = n * dual.weights
    return pair_gradient(Y, R, graph.nonedge_index(), dual.lam[m:], w, graph.directed_index())


def grad_log_ael(data, B, graph: MixedGraph, dual: DualSolution, a_n: float) -> np.ndarray:
    """Analytic gradient of the adjusted profile log-EL over free ``B`` entries."""
    dual.check_point(B)
    if not dual.converged:
        raise ValueError("gradient requires a converged dual solution")
    Y = np.asarray(getattr(data, "Y", data), float)
    n = Y.shape[0]
    m = graph.m
    p = dual.weights
    w = (n + 1) * (p[:n] - (a_n / n) * p[n])
    R = residuals(Y, B)
    return pair_gradient(Y, R, graph.nonedge_index(), dual.lam[m:], w, graph.directed_index())


def naive_log_el(data, B, Omega, graph: MixedGraph, adjusted: bool = False,
                 a_n: float | None = None, lam0=None, tol: float = 1e-8,
                 max_iter: int = 100, classify: bool = True) -> tuple[float, DualSolution]:
    """Log-EL (or log-AEL) at ``(B, Omega)`` from the residual-form naive functions."""
    G = estfun_naive(data, B, Omega, graph)
    if adjusted:
        if a_n is None:
            a_n = default_an(G.shape[0])
        G = ael_augment(G, a_n)
    dual = solve_dual(G, lam0=lam0, tol=tol, max_iter=max_iter,
                      classify=classify)
    dual.point = np.concatenate([np.ravel(B), np.ravel(Omega)])
    return dual.log_el, dual


def grad_naive(data, B, Omega, graph: MixedGraph, dual: DualSolution,
               a_n: float | None = None) -> np.ndarray:
    """Gradient of the naive log-EL (or log-AEL when ``a_n`` is given) over
    ``(free B, free Omega)`` in :func:`elsem.estimating.free_params` order."""
    dual.check_point(np.concatenate([np.ravel(B), np.ravel(Omega)]))
    if not dual.converged:
        raise ValueError("gradient requires a converged dual solution")
    Y = np.asarray(getattr(data, "Y", data), float)
    n, m = Y.shape
    p = dual.weights
    if a_n is None:
        w = n * p
    else:
        w = (n + 1) * (p[:n] - (a_n / n) * p[n])
    iu, ju = np.triu_indices(m)
    pairs = list(zip(iu.tolist(), ju.tolist()))
    lam_pairs = dual.lam[m:]
    R = residuals(Y, B)
    gb = pair_gradient(Y, R, pairs, lam_pairs, w, graph.directed_index())
    pos = {pr: k for k, pr in enumerate(pairs)}
    wsum = w.sum()
    go = np.array([lam_pairs[pos[ij]] * wsum for ij in graph.omega_free_index()])
    return np.concatenate([gb, go])
