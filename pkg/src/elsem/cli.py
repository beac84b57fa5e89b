"""Command-line front end: ``elsem fit | test | simulate | coverage``.

Exit codes: 0 success, 1 usage or parse error, 2 method did not converge,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .estimating import Dataset, ModelParams, SingularModelError, check_params, free_params
from .estimation import FitOptions, FitResult, fit_naive, fit_profile
from .experiment import COVERAGE_METHODS, ConfigError, parse_config, run_experiment
from .gaussian import gaussian_mle, hybrid_gauss_el
from .graph import GraphError, GraphParseError, MixedGraph, read_graph
from .inference import (
    TestReport,
    asymp_variance_qin_lawless,
    gaussian_lr_point,
    lr_test_point,
    make_report,
    nested_lr_test,
    sandwich_variance_gaussian,
    wald_statistic,
)

EXIT_OK, EXIT_USAGE, EXIT_NO_CONVERGENCE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---- serialization ---------------------------------------------------------


def _clean(obj):
    """Make ``obj`` JSON-safe: arrays to lists, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def labeled(M, names) -> dict:
    return {"rows": list(names), "cols": list(names), "values": np.asarray(M, float).tolist()}


def unlabel(obj, names) -> np.ndarray:
    """Read a labeled matrix and reorder it to ``names``."""
    try:
        rows, cols, vals = obj["rows"], obj["cols"], np.asarray(obj["values"], float)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed labeled matrix: {exc}") from None
    if vals.shape != (len(rows), len(cols)) or sorted(rows) != sorted(names) \
            or sorted(cols) != sorted(names):
        raise UsageError("labeled matrix does not match the graph vertices")
    r = [rows.index(v) for v in names]
    c = [cols.index(v) for v in names]
    return vals[np.ix_(r, c)]


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(args, inputs, started: float, seed=None) -> dict:
    from . import __version__

    opts = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "command": args.command,
        "options": opts,
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _digest(p) for p in inputs},
        "timestamp": {
            "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "wall_seconds": time.time() - started,
        },
    }


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---- inputs ----------------------------------------------------------------


def _load(args) -> tuple[MixedGraph, Dataset]:
    graph = read_graph(args.graph)
    data = Dataset.from_csv(args.data, graph)
    if getattr(args, "center", False):
        data = data.center()
    return graph, data


def _options(args) -> FitOptions:
    return FitOptions(tol_inner=args.tol_inner, tol_outer=args.tol_outer, max_outer=args.max_iter)


def _fit(method: str, Y, graph, opts) -> FitResult:
    if method in ("el", "ael", "hybrid"):
        return fit_profile(Y, graph, method, opts)
    if method == "naive":
        return fit_naive(Y, graph, "el", opts)
    if method == "gaussian":
        return gaussian_mle(Y, graph, opts)
    if method == "hybrid-gauss":
        g = gaussian_mle(Y, graph, opts)
        if not g.valid:
            return g
        return hybrid_gauss_el(Y, graph, g, opts)
    raise UsageError(f"unknown method {method!r}")


def fit_to_dict(fit: FitResult, graph: MixedGraph, n: int) -> dict:
    return {
        "method": fit.method,
        "status": fit.status,
        "n": n,
        "log_el": fit.log_el,
        "grad_norm": fit.grad_norm,
        "iterations": fit.outer_iterations,
        "feasibility": fit.feasibility,
        "B": labeled(fit.B_hat, graph.vertices),
        "Omega": None if fit.Omega_hat is None else labeled(fit.Omega_hat, graph.vertices),
        "message": fit.message,
    }


# ---- commands --------------------------------------------------------------


def cmd_fit(args) -> int:
    started = time.time()
    graph, data = _load(args)
    fit = _fit(args.method, data.Y, graph, _options(args))
    out = fit_to_dict(fit, graph, data.n)
    out["manifest"] = manifest(args, [args.graph, args.data], started)
    _emit(dumps(out), args.out)
    return EXIT_OK if fit.valid else EXIT_NO_CONVERGENCE


def read_theta0(path, graph: MixedGraph) -> ModelParams:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict) or "B" not in obj or "Omega" not in obj:
        raise UsageError(f"{path}: expected labeled 'B' and 'Omega' matrices")
    B = unlabel(obj["B"], graph.vertices)
    Omega = unlabel(obj["Omega"], graph.vertices)
    check_params(B, Omega, graph, atol=1e-12)
    return ModelParams(B, Omega)


def _wald_report(Y, graph, theta0, fit, cov, method) -> TestReport:
    d = graph.dof_counts()[1]
    stat = wald_statistic(free_params(fit.B_hat, fit.Omega_hat, graph),
                          free_params(theta0.B, theta0.Omega, graph), cov)
    return make_report(stat, d, method)


def run_test(args, graph, data, opts) -> TestReport:
    Y = data.Y
    method = args.method
    if args.full_graph:
        full = read_graph(args.full_graph)
        if method in ("el", "ael"):
            return nested_lr_test(Y, graph, full, "el", opts, variant="hybrid" if method == "el" else "ael")
        if method == "gaussian":
            return nested_lr_test(Y, graph, full, "gaussian", opts)
        raise UsageError(f"method {method!r} tests a point; use --theta0")
    theta0 = read_theta0(args.theta0, graph)
    d = graph.dof_counts()[1]
    if d == 0:
        raise UsageError("model has no free parameters")
    if method in ("el", "ael", "eel"):
        return lr_test_point(Y, graph, theta0, method, fit_profile(Y, graph, "hybrid", opts), opts)
    if method == "gaussian":
        return gaussian_lr_point(Y, graph, theta0, gaussian_mle(Y, graph, opts))
    if method == "wald-qin":
        fit = fit_profile(Y, graph, "hybrid", opts)
        if not fit.valid:
            return make_report(math.inf, d, method, converged=False)
        return _wald_report(Y, graph, theta0, fit, asymp_variance_qin_lawless(Y, graph, fit), method)
    if method == "wald-sandwich":
        fit = gaussian_mle(Y, graph, opts)
        if not fit.valid:
            return make_report(math.inf, d, method, converged=False)
        return _wald_report(Y, graph, theta0, fit, sandwich_variance_gaussian(Y, graph, fit), method)
    raise UsageError(f"unknown method {method!r}")


def cmd_test(args) -> int:
    started = time.time()
    if bool(args.full_graph) == bool(args.theta0):
        raise UsageError("give exactly one of --full-graph and --theta0")
    graph, data = _load(args)
    report = run_test(args, graph, data, _options(args))
    out = report.to_dict()
    inputs = [args.graph, args.data] + [p for p in (args.full_graph, args.theta0) if p]
    out["manifest"] = manifest(args, inputs, started)
    _emit(dumps(out), args.out)
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _run_sim(args, coverage: bool) -> int:
    started = time.time()
    overrides = {}
    env_seed = os.environ.get("ELSEM_SEED")
    if env_seed is not None:
        try:
            overrides["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"ELSEM_SEED must be an integer, got {env_seed!r}") from None
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"), overrides)
    if coverage:
        methods = tuple(m for m in cfg.methods if m in COVERAGE_METHODS) or COVERAGE_METHODS
        cfg.methods = methods
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    report = run_experiment(cfg, workers=args.threads, dump=args.dump_estimates,
                            timing=not args.no_timing)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "records.csv").write_text(report.records_csv(), encoding="utf-8")
    summary = {"config": cfg.to_dict(), "aggregates": report.aggregates}
    if coverage:
        summary["coverage"] = {
            m: {"coverage": a["coverage"], "se": a["coverage_se"], "nominal": cfg.nominal_level}
            for m, a in report.aggregates["methods"].items()
        }
    summary["manifest"] = manifest(args, [args.config], started, seed=cfg.seed)
    (out_dir / "summary.json").write_text(dumps(summary), encoding="utf-8")
    if args.dump_estimates:
        lines = [json.dumps(_clean(r)) for r in report.records if "sigma_true" in r]
        (out_dir / "estimates.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run_sim(args, coverage=False)


def cmd_coverage(args) -> int:
    return _run_sim(args, coverage=True)


# ---- entry point -----------------------------------------------------------


def _fit_opts(p):
    p.add_argument("--graph", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--center", action="store_true", help="subtract column means first")
    p.add_argument("--tol-inner", type=float, default=1e-8)
    p.add_argument("--tol-outer", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="elsem", description="Empirical likelihood for linear SEMs on mixed graphs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="estimate (B, Omega)")
    _fit_opts(p)
    p.add_argument("--method", default="hybrid",
                   choices=["el", "ael", "hybrid", "naive", "gaussian", "hybrid-gauss"])
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="nested-model or point test")
    _fit_opts(p)
    p.add_argument("--full-graph")
    p.add_argument("--theta0")
    p.add_argument("--method", default="el",
                   choices=["el", "ael", "eel", "gaussian", "wald-qin", "wald-sandwich"])
    p.set_defaults(func=cmd_test)

    for name, func, text in (("simulate", cmd_simulate, "replicated estimation study"),
                             ("coverage", cmd_coverage, "replicated coverage study")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--dump-estimates", action="store_true")
        p.add_argument("--no-timing", action="store_true",
                       help="leave the seconds column empty for byte-reproducible output")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, GraphParseError, GraphError, ConfigError, OSError) as exc:
        err = {"error": str(exc)}
        if isinstance(exc, GraphParseError):
            err.update(line=exc.line, column=exc.column)
        code = EXIT_USAGE
    except (SingularModelError, np.linalg.LinAlgError, FloatingPointError) as exc:
        err, code = {"error": f"numerical failure: {exc}"}, EXIT_NUMERICAL
    except ValueError as exc:
        err, code = {"error": str(exc)}, EXIT_USAGE
    except RuntimeError as exc:
        err, code = {"error": f"numerical failure: {exc}"}, EXIT_NUMERICAL
    sys.stderr.write(f"elsem: {err['error']}\n")
    _emit(dumps(err), getattr(args, "out", None))
    return code


if __name__ == "__main__":
    sys.exit(main())
