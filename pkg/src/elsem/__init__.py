"""Empirical likelihood estimation and testing for linear structural equation
models on mixed graphs."""

__version__ = "0.1.0"

from .estimating import Dataset, ModelParams, sigma_of
from .estimation import FitOptions, FitResult, eel_log_el, fit_naive, fit_profile
from .experiment import ExperimentConfig, ExperimentReport, parse_config, run_experiment
from .gaussian import gaussian_loglik, gaussian_mle, hybrid_gauss_el
from .graph import MixedGraph, parse_graph, read_graph
from .inference import (
    TestReport,
    gof_test,
    lr_test_point,
    nested_lr_test,
    wald_test,
)
from .simulate import gen_graph, gen_params, sample_data, sample_errors, true_sigma

__all__ = [
    "__version__",
    "Dataset",
    "ModelParams",
    "sigma_of",
    "FitOptions",
    "FitResult",
    "fit_profile",
    "fit_naive",
    "eel_log_el",
    "ExperimentConfig",
    "ExperimentReport",
    "parse_config",
    "run_experiment",
    "gaussian_loglik",
    "gaussian_mle",
    "hybrid_gauss_el",
    "MixedGraph",
    "parse_graph",
    "read_graph",
    "TestReport",
    "gof_test",
    "lr_test_point",
    "nested_lr_test",
    "wald_test",
    "gen_graph",
    "gen_params",
    "sample_data",
    "sample_errors",
    "true_sigma",
]
