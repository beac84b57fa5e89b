"""Replicated simulation experiments: convergence, timing, error and coverage.

Each replication draws its own generator from ``SeedSequence(seed,
spawn_key=(0, rep))`` so results do not depend on how replications are
distributed over workers.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .estimating import ModelParams, free_params, sigma_of, vech
from .estimation import FitOptions, FitResult, fit_naive, fit_profile
from .gaussian import gaussian_mle, hybrid_gauss_el
from .inference import (
    asymp_variance_qin_lawless,
    chi2_quantile,
    lr_statistic_point,
    mle_variance_gaussian,
    sandwich_variance_gaussian,
    wald_statistic,
)
from .simulate import (
    DISTRIBUTIONS,
    gen_graph,
    gen_params,
    lognormal_covariance,
    sample_data,
    sample_errors,
    true_sigma,
)

__all__ = [
    "ESTIMATORS",
    "COVERAGE_METHODS",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "parse_config",
    "relative_sigma_error",
    "run_replication",
    "run_experiment",
    "aggregate",
]

ESTIMATORS = ("el", "ael", "hybrid", "naive_el", "naive_ael", "gaussian", "hybrid_gauss")
COVERAGE_METHODS = ("lr_el", "lr_ael", "lr_eel", "wald_qin", "wald_mle", "wald_sandwich")
RECORD_COLUMNS = ("rep", "method", "status", "seconds", "rel_err_sigma", "covered")

# coverage methods and the estimator whose fit they are built on
_COVERAGE_BASE = {
    "lr_el": "hybrid",
    "lr_ael": "hybrid",
    "lr_eel": "hybrid",
    "wald_qin": "hybrid",
    "wald_mle": "gaussian",
    "wald_sandwich": "gaussian",
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``problems`` lists every issue found."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class ExperimentConfig:
    m: int = 8
    n_directed: int = 10
    n_bidirected: int = 6
    n: int = 100
    distribution: str = "gaussian"
    t_dof: float = 4.0
    replications: int = 10
    seed: int = 0
    methods: tuple[str, ...] = ("hybrid", "naive_el")
    nominal_level: float = 0.9
    fixed_graph: bool = False
    fixed_params: bool = False
    tol_inner: float = 1e-8
    tol_outer: float = 1e-6
    max_outer: int = 500

    def validate(self) -> None:
        problems = []
        pairs = self.m * (self.m - 1) // 2
        if self.m < 1:
            problems.append("m must be at least 1")
        if not 0 <= self.n_directed <= pairs:
            problems.append(f"n_directed must be in [0, {pairs}]")
        if not 0 <= self.n_bidirected <= pairs - self.n_directed:
            problems.append(f"n_bidirected must be in [0, {pairs - self.n_directed}]")
        if self.n < 2:
            problems.append("n must be at least 2")
        if self.distribution not in DISTRIBUTIONS:
            problems.append(f"distribution must be one of {', '.join(DISTRIBUTIONS)}")
        if self.distribution == "t" and not self.t_dof > 2:
            problems.append("t_dof must exceed 2")
        if self.replications < 1:
            problems.append("replications must be at least 1")
        if not 0 <= self.seed < 2**64:
            problems.append("seed must be a 64-bit unsigned integer")
        unknown = [k for k in self.methods if k not in ESTIMATORS + COVERAGE_METHODS]
        if unknown:
            problems.append(f"unknown methods: {', '.join(unknown)}")
        if not self.methods:
            problems.append("methods must not be empty")
        if not 0 < self.nominal_level < 1:
            problems.append("nominal_level must be in (0, 1)")
        if self.fixed_params and not self.fixed_graph:
            problems.append("fixed_params requires fixed_graph")
        if problems:
            raise ConfigError(problems)

    @property
    def fit_options(self) -> FitOptions:
        return FitOptions(tol_inner=self.tol_inner, tol_outer=self.tol_outer,
                          max_outer=self.max_outer)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse ``key = value`` (or ``key: value``) lines into a validated config."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values: dict = {}
    problems = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        key, found, val = line.partition(sep)
        key, val = key.strip(), val.strip()
        if not found:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        if key not in types:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, types[key], val)
        except ValueError as exc:
            problems.append(f"line {lineno}: bad value for {key}: {exc}")
    for key, val in (overrides or {}).items():
        values[key] = val
    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def _convert(key, typ, val):
    typ = str(typ)
    if key == "methods":
        items = tuple(s.strip() for s in val.replace(",", " ").split() if s.strip())
        return items
    if typ == "bool":
        if val.lower() not in _BOOL:
            raise ValueError(f"{val!r} is not a boolean")
        return _BOOL[val.lower()]
    if typ == "int":
        return int(val)
    if typ == "float":
        return float(val)
    return val


def relative_sigma_error(Sigma_hat, Sigma) -> float:
    """``||vech(Sigma_hat) - vech(Sigma)||^2 / ||vech(Sigma)||^2``."""
    a, b = vech(np.asarray(Sigma_hat)), vech(np.asarray(Sigma))
    return float(np.sum((a - b) ** 2) / np.sum(b**2))


def _instance(cfg: ExperimentConfig, rep: int):
    shared = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0, rep)))
    if cfg.fixed_graph:
        graph = gen_graph(cfg.m, cfg.n_directed, cfg.n_bidirected, shared)
        params = gen_params(graph, shared if cfg.fixed_params else rng)
    else:
        graph = gen_graph(cfg.m, cfg.n_directed, cfg.n_bidirected, rng)
        params = gen_params(graph, rng)
    errors = sample_errors(cfg.distribution, params.Omega, cfg.n, rng, t_dof=cfg.t_dof)
    data = sample_data(params.B, errors)
    return graph, params, data


def _fit(method: str, Y, graph, opts: FitOptions, cache: dict) -> FitResult:
    if method in cache:
        return cache[method]
    t0 = time.perf_counter()
    try:
        if method in ("el", "ael", "hybrid"):
            fit = fit_profile(Y, graph, method, opts)
        elif method in ("naive_el", "naive_ael"):
            fit = fit_naive(Y, graph, method.split("_")[1], opts)
        elif method == "gaussian":
            fit = gaussian_mle(Y, graph, opts)
        elif method == "hybrid_gauss":
            g = _fit("gaussian", Y, graph, opts, cache)
            fit = hybrid_gauss_el(Y, graph, g, opts)
            fit.wall_time += g.wall_time
        else:
            raise ValueError(method)
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        fit = FitResult(np.zeros((graph.m, graph.m)), None, -math.inf, method, "no_convergence",
                        math.inf, 0, time.perf_counter() - t0, message=str(exc))
    cache[method] = fit
    return fit


def _covered(method: str, cfg: ExperimentConfig, Y, graph, theta0: ModelParams,
             fit: FitResult) -> bool | None:
    """Coverage indicator; ``None`` when the method fails (scored as non-coverage)."""
    if not fit.valid:
        return None
    d = graph.dof_counts()[1]
    crit = chi2_quantile(cfg.nominal_level, d)
    opts = cfg.fit_options
    try:
        if method.startswith("lr_"):
            stat = lr_statistic_point(Y, graph, theta0, method[3:], fit, opts)
        else:
            if method == "wald_qin":
                cov = asymp_variance_qin_lawless(Y, graph, fit)
            elif method == "wald_mle":
                cov = mle_variance_gaussian(Y, graph, fit)
            else:
                cov = sandwich_variance_gaussian(Y, graph, fit)
            stat = wald_statistic(free_params(fit.B_hat, fit.Omega_hat, graph),
                                  free_params(theta0.B, theta0.Omega, graph), cov)
    except (ValueError, RuntimeError, np.linalg.LinAlgError):
        return None
    if not math.isfinite(stat):
        return None
    return bool(stat <= crit)


def run_replication(cfg: ExperimentConfig, rep: int, dump: bool = False) -> list[dict]:
    """Run every requested method on replication ``rep``; one record per method."""
    graph, params, data = _instance(cfg, rep)
    Y = data.Y
    opts = cfg.fit_options
    Sigma = true_sigma(cfg.distribution, params.B, params.Omega)
    Omega0 = lognormal_covariance(params.Omega) if cfg.distribution == "lognormal" else params.Omega
    theta0 = ModelParams(params.B, Omega0)
    cache: dict = {}
    records = []
    for method in cfg.methods:
        if method in ESTIMATORS:
            fit = _fit(method, Y, graph, opts, cache)
            rec = {"rep": rep, "method": method, "status": fit.status,
                   "seconds": fit.wall_time, "rel_err_sigma": None, "covered": None}
            if fit.valid:
                Sigma_hat = sigma_of(fit.B_hat, fit.Omega_hat)
                rec["rel_err_sigma"] = relative_sigma_error(Sigma_hat, Sigma)
                if dump:
                    rec["sigma_hat"] = Sigma_hat.tolist()
            if dump:
                rec["sigma_true"] = Sigma.tolist()
        else:
            fit = _fit(_COVERAGE_BASE[method], Y, graph, opts, cache)
            t0 = time.perf_counter()
            cov = _covered(method, cfg, Y, graph, theta0, fit)
            rec = {"rep": rep, "method": method,
                   "status": "converged" if cov is not None else "no_convergence",
                   "seconds": time.perf_counter() - t0, "rel_err_sigma": None,
                   "covered": bool(cov)}
        records.append(rec)
    return records


def _run_chunk(args):
    cfg, reps, dump = args
    return [run_replication(cfg, r, dump) for r in reps]


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: list[dict]
    aggregates: dict = field(default_factory=dict)

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in self.records:
            w.writerow([
                r["rep"],
                r["method"],
                r["status"],
                "" if r["seconds"] is None else repr(float(r["seconds"])),
                "" if r["rel_err_sigma"] is None else repr(float(r["rel_err_sigma"])),
                "" if r["covered"] is None else int(r["covered"]),
            ])
        return buf.getvalue()


def _mean(xs) -> float:
    return float(np.mean(np.asarray(xs, float)))


def aggregate(records: list[dict], methods) -> dict:
    """Per-method summaries with Monte Carlo standard errors.

    Error and timing means are taken over replications where every requested
    estimator reached a valid stationary point.
    """
    by_rep: dict[int, dict[str, dict]] = {}
    for r in records:
        by_rep.setdefault(r["rep"], {})[r["method"]] = r
    est = [m for m in methods if m in ESTIMATORS]
    joint = [rep for rep, rs in by_rep.items()
             if all(rs[m]["status"] == "valid_stationary" for m in est)]
    out = {"replications": len(by_rep), "jointly_converged": len(joint), "methods": {}}
    for m in methods:
        rows = [by_rep[rep][m] for rep in sorted(by_rep)]
        R = len(rows)
        ok = [r["status"] in ("valid_stationary", "converged") for r in rows]
        p = sum(ok) / R
        entry = {"convergence": p, "convergence_se": math.sqrt(p * (1 - p) / R)}
        timed = all(r["seconds"] is not None for r in rows)
        entry["mean_seconds"] = _mean([r["seconds"] for r in rows]) if timed else None
        if m in ESTIMATORS:
            errs = np.array([by_rep[rep][m]["rel_err_sigma"] for rep in joint], float)
            entry["mean_seconds_joint"] = (_mean([by_rep[rep][m]["seconds"] for rep in joint])
                                           if timed and joint else None)
            entry["mean_rel_err_sigma"] = float(errs.mean()) if len(joint) else None
            entry["rel_err_sigma_se"] = (float(errs.std(ddof=1) / math.sqrt(len(errs)))
                                         if len(joint) > 1 else None)
        else:
            cov = sum(bool(r["covered"]) for r in rows) / R
            entry["coverage"] = cov
            entry["coverage_se"] = math.sqrt(cov * (1 - cov) / R)
        out["methods"][m] = entry
    return out


def run_experiment(cfg: ExperimentConfig, workers: int = 1, dump: bool = False,
                   timing: bool = True) -> ExperimentReport:
    """Run all replications; output is identical for any ``workers``.

    Wall times are the only non-reproducible field; ``timing=False`` drops
    them so the whole report is bitwise reproducible.
    """
    cfg.validate()
    reps = list(range(cfg.replications))
    if workers <= 1:
        chunks = [[run_replication(cfg, r, dump) for r in reps]]
    else:
        parts = [reps[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_chunk, [(cfg, p, dump) for p in parts if p]))
    by_rep = {}
    for chunk in chunks:
        for recs in chunk:
            by_rep[recs[0]["rep"]] = recs
    records = [rec for rep in reps for rec in by_rep[rep]]
    if not timing:
        for rec in records:
            rec["seconds"] = None
    return ExperimentReport(cfg, records, aggregate(records, cfg.methods))
