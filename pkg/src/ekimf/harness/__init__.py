from .config import ExperimentConfig, ProblemSpec, SolverSpec, load_config
from .experiments import (EXPERIMENTS, ExperimentResult, ResultRow, rows_from_csv,
                          rows_to_csv, run_cov_error_experiment, run_coupling_experiment,
                          run_moment_check, run_posterior_check, run_rate_experiment,
                          run_residual_report, run_weak_experiment, write_outputs)
from .fitting import RateFit, fit_points, fit_rate, ols_loglog
from .presets import PRESETS, preset

__all__ = [
    "EXPERIMENTS", "ExperimentConfig", "ExperimentResult", "PRESETS", "ProblemSpec",
    "RateFit", "ResultRow", "SolverSpec", "fit_points", "fit_rate", "load_config",
    "ols_loglog", "preset", "rows_from_csv", "rows_to_csv", "run_cov_error_experiment",
    "run_coupling_experiment", "run_moment_check", "run_posterior_check",
    "run_rate_experiment", "run_residual_report", "run_weak_experiment", "write_outputs",
]
