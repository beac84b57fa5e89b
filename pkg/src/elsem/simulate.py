"""Random mixed graphs, parameters and non-Gaussian error generators."""

from __future__ import annotations

import math

import numpy as np

from .estimating import Dataset, ModelParams, _i_minus_b, sigma_of
from .graph import MixedGraph

__all__ = [
    "DISTRIBUTIONS",
    "gen_graph",
    "gen_params",
    "sample_errors",
    "sample_data",
    "true_sigma",
    "lognormal_covariance",
]

DISTRIBUTIONS = ("gaussian", "t", "lognormal", "gamma")


def gen_graph(m: int, n_directed: int, n_bidirected: int, rng: np.random.Generator,
              prefix: str = "V") -> MixedGraph:
    """Random acyclic mixed graph: directed edges point from lower to higher index,
    bidirected edges are drawn from the pairs left over."""
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    if n_directed + n_bidirected > len(pairs) or min(n_directed, n_bidirected) < 0:
        raise ValueError(f"cannot place {n_directed}+{n_bidirected} edges on {m} vertices")
    order = rng.permutation(len(pairs))
    chosen = [pairs[k] for k in order[:n_directed]]
    rest = [pairs[k] for k in sorted(order[n_directed:])]
    pick = rng.permutation(len(rest))[:n_bidirected]
    bi = [rest[k] for k in pick]
    names = [f"{prefix}{k + 1}" for k in range(m)]
    return MixedGraph(
        names,
        [(names[i], names[j]) for i, j in chosen],
        [(names[i], names[j]) for i, j in bi],
    )


def _signed_uniform(rng, lo, hi, size):
    return rng.uniform(lo, hi, size) * rng.choice([-1.0, 1.0], size)


def gen_params(graph: MixedGraph, rng: np.random.Generator) -> ModelParams:
    """Coefficients in (-1,-.2)u(.2,1); error covariances in (-.8,-.3)u(.3,.8);
    diagonal = row absolute sum + 1 + Exponential(1)."""
    m = graph.m
    B = np.zeros((m, m))
    didx = graph.directed_index()
    if didx:
        vals = _signed_uniform(rng, 0.2, 1.0, len(didx))
        for (v, u), b in zip(didx, vals):
            B[v, u] = b
    Omega = np.zeros((m, m))
    bidx = graph.bidirected_index()
    if bidx:
        vals = _signed_uniform(rng, 0.3, 0.8, len(bidx))
        for (i, j), w in zip(bidx, vals):
            Omega[i, j] = Omega[j, i] = w
    extra = rng.exponential(1.0, m)
    Omega[np.diag_indices(m)] = np.abs(Omega).sum(axis=1) + 1.0 + extra
    return ModelParams(B, Omega)


def lognormal_covariance(Omega) -> np.ndarray:
    """Covariance ``e (exp(C) - 1)`` of ``exp(Z) - sqrt(e)``, ``Z ~ N(0, C)``."""
    Omega = np.asarray(Omega, float)
    s = np.sqrt(np.diag(Omega))
    C = Omega / np.outer(s, s)
    return math.e * np.expm1(C)


def sample_errors(distribution: str, Omega, n: int, rng: np.random.Generator,
                  t_dof: float = 4.0) -> np.ndarray:
    """Draw ``n`` mean-zero error vectors (rows).

    Covariances: ``Omega`` for gaussian, t and gamma; ``e(exp(C) - 1)`` for
    lognormal, with ``C`` the correlation matrix of ``Omega``.
    """
    Omega = np.asarray(Omega, float)
    m = Omega.shape[0]
    if distribution == "gaussian":
        L = np.linalg.cholesky(Omega)
        return rng.standard_normal((n, m)) @ L.T
    if distribution == "t":
        if t_dof <= 2:
            raise ValueError("t errors need more than 2 degrees of freedom")
        L = np.linalg.cholesky(Omega * (t_dof - 2.0) / t_dof)
        Z = rng.standard_normal((n, m)) @ L.T
        W = rng.chisquare(t_dof, n)
        return Z / np.sqrt(W / t_dof)[:, None]
    if distribution == "lognormal":
        s = np.sqrt(np.diag(Omega))
        C = Omega / np.outer(s, s)
        L = np.linalg.cholesky(C)
        Z = rng.standard_normal((n, m)) @ L.T
        return np.exp(Z) - math.sqrt(math.e)
    if distribution == "gamma":
        return _gamma_errors(Omega, n, rng)
    raise ValueError(f"unknown distribution {distribution!r}")


def _gamma_errors(Omega, n, rng):
    m = Omega.shape[0]
    off = Omega - np.diag(np.diag(Omega))
    shape = np.diag(Omega) - np.abs(off).sum(axis=1)
    if np.any(shape <= 0):
        raise ValueError("gamma construction needs diag(Omega) above the off-diagonal row sums")
    eps = rng.gamma(shape, 1.0, (n, m))
    mean = shape.copy()
    for u in range(m):
        for v in range(u + 1, m):
            w = Omega[u, v]
            if w == 0.0:
                continue
            delta = rng.gamma(abs(w), 1.0, n)
            # one sign per generated dataset keeps Cov(eps_u, eps_v) = w
            xi = rng.choice([-1.0, 1.0])
            eps[:, u] += xi * delta
            mean[u] += xi * abs(w)
            sv = xi if w > 0 else -xi
            eps[:, v] += sv * delta
            mean[v] += sv * abs(w)
    return eps - mean


def sample_data(B, errors) -> Dataset:
    """Observations ``Y_i = (I - B)^{-1} eps_i`` stacked as rows."""
    A = _i_minus_b(B)
    Y = np.linalg.solve(A, np.asarray(errors, float).T).T
    return Dataset(Y)


def true_sigma(distribution: str, B, Omega) -> np.ndarray:
    if distribution == "lognormal":
        return sigma_of(B, lognormal_covariance(Omega))
    if distribution in DISTRIBUTIONS:
        return sigma_of(B, Omega)
    raise ValueError(f"unknown distribution {distribution!r}")

