"""Model parametrization and estimating functions for linear SEMs.

Data are stored row-major: ``Y`` is ``n x m`` with one observation per row, so
the residual matrix is ``Y (I - B)^T`` and ``g_v(Y_i, B)`` sits at ``[i, v]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .graph import MixedGraph

__all__ = [
    "Dataset",
    "ModelParams",
    "SingularModelError",
    "InfeasibleWeightsError",
    "check_params",
    "sigma_of",
    "residuals",
    "estfun_profile",
    "estfun_naive",
    "estfun_pinned",
    "omega_of",
    "free_params",
    "params_from_free",
    "vech",
]

SINGULAR_RTOL = 1e-12


class SingularModelError(ValueError):
    """``I - B`` (or a covariance matrix) is numerically singular."""


class InfeasibleWeightsError(ValueError):
    """Weights are off the simplex or violate the structural-zero constraints."""


@dataclass(frozen=True)
class ModelParams:
    B: np.ndarray
    Omega: np.ndarray


@dataclass
class Dataset:
    """Observations with columns in graph vertex order."""

    Y: np.ndarray
    columns: tuple[str, ...] = ()
    centered: bool = False

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] < 1:
            raise ValueError("data must be a non-empty n x m matrix")
        if not np.all(np.isfinite(Y)):
            raise ValueError("data contain non-finite entries")
        self.Y = Y
        if self.columns and len(self.columns) != Y.shape[1]:
            raise ValueError("column labels do not match data width")

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    def center(self) -> "Dataset":
        return Dataset(self.Y - self.Y.mean(axis=0), self.columns, True)

    @classmethod
    def from_csv(cls, path, graph: MixedGraph | None = None) -> "Dataset":
        """Read a headed CSV; with ``graph`` the columns are reordered to its vertices."""
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty data file")
        header = [h.strip() for h in rows[0]]
        body = [r for r in rows[1:] if any(c.strip() for c in r)]
        try:
            Y = np.array([[float(c) for c in r] for r in body], dtype=float)
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric entry ({exc})") from None
        if Y.ndim != 2 or Y.shape[1] != len(header):
            raise ValueError(f"{path}: ragged rows")
        if graph is None:
            return cls(Y, tuple(header))
        missing = [v for v in graph.vertices if v not in header]
        if missing:
            raise ValueError(f"{path}: missing columns for vertices {missing}")
        cols = [header.index(v) for v in graph.vertices]
        return cls(Y[:, cols], graph.vertices)


def _as_array(data) -> np.ndarray:
    return data.Y if isinstance(data, Dataset) else np.asarray(data, dtype=float)


def vech(S: np.ndarray) -> np.ndarray:
    """Upper-triangular half-vectorization, rows ``(i, j)`` with ``i <= j``."""
    iu = np.triu_indices(S.shape[0])
    return S[iu]


def check_params(B, Omega, graph: MixedGraph, atol: float = 0.0) -> None:
    """Raise ``ValueError`` unless ``(B, Omega)`` respects the graph's support."""
    m = graph.m
    B = np.asarray(B, float)
    Omega = np.asarray(Omega, float)
    if B.shape != (m, m) or Omega.shape != (m, m):
        raise ValueError(f"parameter matrices must be {m} x {m}")
    mask_b = np.zeros((m, m), bool)
    for v, u in graph.directed_index():
        mask_b[v, u] = True
    if np.any(np.abs(B[~mask_b]) > atol):
        raise ValueError("B has nonzero entries outside the directed edges")
    mask_o = np.eye(m, dtype=bool)
    for i, j in graph.bidirected_index():
        mask_o[i, j] = mask_o[j, i] = True
    if np.any(np.abs(Omega[~mask_o]) > atol):
        raise ValueError("Omega has nonzero entries outside the bidirected edges")
    if not np.allclose(Omega, Omega.T, atol=1e-12):
        raise ValueError("Omega is not symmetric")


def _i_minus_b(B) -> np.ndarray:
    B = np.asarray(B, float)
    A = np.eye(B.shape[0]) - B
    if abs(np.linalg.det(A)) < SINGULAR_RTOL * (1.0 + np.linalg.norm(B)):
        raise SingularModelError("I - B is singular")
    return A


def sigma_of(B, Omega) -> np.ndarray:
    """Implied covariance ``(I - B)^{-1} Omega (I - B)^{-T}``."""
    A = _i_minus_b(B)
    Ainv = np.linalg.inv(A)
    S = Ainv @ np.asarray(Omega, float) @ Ainv.T
    return 0.5 * (S + S.T)


def residuals(data, B) -> np.ndarray:
    Y = _as_array(data)
    B = np.asarray(B, float)
    if Y.shape[1] != B.shape[0]:
        raise ValueError("data width does not match B")
    return Y - Y @ B.T


def estfun_profile(data, B, graph: MixedGraph) -> np.ndarray:
    """Profiled constraint matrix: ``Y`` columns, then nonedge residual products."""
    Y = _as_array(data)
    if Y.shape[1] != graph.m:
        raise ValueError("data width does not match graph")
    R = residuals(Y, B)
    pairs = graph.nonedge_index()
    if not pairs:
        return Y.copy()
    iu, ju = np.array(pairs).T
    return np.hstack([Y, R[:, iu] * R[:, ju]])


def estfun_naive(data, B, Omega, graph: MixedGraph, form: str = "residual") -> np.ndarray:
    """Full estimating functions for ``(B, Omega)``.

    ``form="residual"`` stacks ``Y_i`` and ``g_u g_v - omega_uv`` over all
    ``u <= v``; ``form="vech"`` stacks ``Y_i`` and
    ``vech(Y_i Y_i^T) - vech(Sigma(B, Omega))``.
    """
    Y = _as_array(data)
    m = graph.m
    if Y.shape[1] != m:
        raise ValueError("data width does not match graph")
    iu, ju = np.triu_indices(m)
    Omega = np.asarray(Omega, float)
    if form == "residual":
        R = residuals(Y, B)
        return np.hstack([Y, R[:, iu] * R[:, ju] - Omega[iu, ju]])
    if form == "vech":
        S = sigma_of(B, Omega)
        return np.hstack([Y, Y[:, iu] * Y[:, ju] - S[iu, ju]])
    raise ValueError(f"unknown form {form!r}")


def estfun_pinned(data, B, Omega, graph: MixedGraph) -> np.ndarray:
    """Profiled constraints plus ``g_u g_v - omega_uv`` for every free Omega entry.

    Same feasible set as the residual-form naive functions; columns ordered
    as the profile matrix followed by ``graph.omega_free_index()``.
    """
    Y = _as_array(data)
    G = estfun_profile(Y, B, graph)
    R = residuals(Y, B)
    free = graph.omega_free_index()
    iu, ju = np.array(free).T
    Omega = np.asarray(Omega, float)
    return np.hstack([G, R[:, iu] * R[:, ju] - Omega[iu, ju]])


def omega_of(data, B, weights, graph: MixedGraph, tol: float | None = 1e-6):
    """Recover ``Omega`` from EL weights at ``B``.

    Returns ``(Omega, diagnostic)`` where ``diagnostic`` is the largest
    absolute entry of ``(I-B) Y^T diag(p) Y (I-B)^T`` over structural zeros.
    Raises :class:`InfeasibleWeightsError` when ``p`` is not on the simplex or
    the diagnostic exceeds ``tol`` (pass ``tol=None`` to skip that check).
    """
    Y = _as_array(data)
    p = np.asarray(weights, float)
    if p.shape != (Y.shape[0],) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-8:
        raise InfeasibleWeightsError("weights must be a probability vector of length n")
    R = residuals(Y, B)
    M = (R * p[:, None]).T @ R
    M = 0.5 * (M + M.T)
    mask = np.eye(graph.m, dtype=bool)
    for i, j in graph.bidirected_index():
        mask[i, j] = mask[j, i] = True
    diag = float(np.max(np.abs(M[~mask]))) if np.any(~mask) else 0.0
    if tol is not None and diag > tol:
        raise InfeasibleWeightsError(
            f"weights do not satisfy the structural zeros at B (max |M_uv| = {diag:.3g})"
        )
    return np.where(mask, M, 0.0), diag


def free_params(B, Omega, graph: MixedGraph) -> np.ndarray:
    """Stack the free entries: directed coefficients, then free Omega entries."""
    b = [B[v, u] for v, u in graph.directed_index()]
    o = [Omega[i, j] for i, j in graph.omega_free_index()]
    return np.array(b + o, dtype=float)


def params_from_free(theta, graph: MixedGraph) -> ModelParams:
    m = graph.m
    didx = graph.directed_index()
    oidx = graph.omega_free_index()
    theta = np.asarray(theta, float)
    B = np.zeros((m, m))
    for k, (v, u) in enumerate(didx):
        B[v, u] = theta[k]
    Omega = np.zeros((m, m))
    for k, (i, j) in enumerate(oidx, start=len(didx)):
        Omega[i, j] = Omega[j, i] = theta[k]
    return ModelParams(B, Omega)
