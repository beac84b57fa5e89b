"""BFGS with Armijo backtracking for objectives that may be undefined.

The objective callback returns ``(value, gradient)`` for a *maximization*
problem, or ``(-inf, None)`` where the objective is undefined (empty EL
feasible set, non-positive-definite covariance).  Undefined trial points are
handled as line-search rejections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["BFGSResult", "bfgs_maximize"]

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray | None]"]


@dataclass
class BFGSResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str
    evaluations: int

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def bfgs_maximize(
    fun: Objective,
    x0,
    tol: float = 1e-6,
    max_iter: int = 500,
    max_step: float = 0.5,
    c1: float = 1e-4,
) -> BFGSResult:
    """Maximize ``fun`` from ``x0``; stops when ``||grad||_inf < tol``.

    ``max_step`` caps the infinity norm of the first trial step along each
    search direction.  ``fun(x0)`` must be defined.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    nev = 1
    if not math.isfinite(f):
        raise ValueError("objective undefined at the starting point")
    if x.size == 0:
        return BFGSResult(x, f, np.zeros(0), 0, True, "no free parameters", nev)
    # minimize phi = -f
    phi, dphi = -f, -np.asarray(g, float)
    H = np.eye(x.size)
    scaled = False
    it = 0
    message = "maximum iterations reached"
    converged = False
    for it in range(max_iter + 1):
        if np.max(np.abs(dphi)) < tol:
            converged = True
            message = "gradient below tolerance"
            break
        if it == max_iter:
            break
        d = -H @ dphi
        slope = float(dphi @ d)
        if slope >= 0:
            # lost descent; restart from steepest descent
            H = np.eye(x.size)
            scaled = False
            d = -dphi
            slope = float(dphi @ d)
        alpha = min(1.0, max_step / max(np.max(np.abs(d)), 1e-300))
        # rounding floor on |phi| so a flat objective near the optimum does not stall
        noise = 8.0 * np.finfo(float).eps * (abs(phi) + 1.0)
        accepted = False
        while alpha > 1e-16:
            x_new = x + alpha * d
            f_new, g_new = fun(x_new)
            nev += 1
            if math.isfinite(f_new):
                phi_new = -f_new
                if phi_new <= phi + c1 * alpha * slope or (
                    phi_new <= phi + noise and abs(alpha * slope) < noise
                ):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            message = "line search failed"
            break
        dphi_new = -np.asarray(g_new, float)
        s = x_new - x
        y = dphi_new - dphi
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = np.eye(x.size) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
        x, phi, dphi = x_new, phi_new, dphi_new
    return BFGSResult(x, -phi, -dphi, it, converged, message, nev)
