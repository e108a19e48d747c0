"""Simulators for one-pass and multi-pass SGD on high-dimensional least squares,
homogenized SGD, and the Volterra equations for their risk curves."""

from .hsgd import HsgdConfig, diffusion_factor, hsgd_step, norm_bound_monitor, run_hsgd
from .problem import (
    ConfigError,
    Dataset,
    EmpiricalProblem,
    ProblemSpec,
    SpectrumModel,
    build_problem,
    empirical_covariance,
    sample_dataset,
)
from .rng import derive_stream
from .sgd import IndexSchedule, index_schedule, run_sgd, sgd_step, stopping_time_monitor
from .stats import (
    ContourPoint,
    QuadraticStatistic,
    c2_norm,
    empirical_risk,
    eval_quadratic,
    make_resolvent_statistic,
    population_risk,
    regularized_empirical_risk,
    regularized_risk,
    resolvent_apply,
)
from .trajectory import Trajectory
from .volterra import (
    KernelSpec,
    VolterraSolution,
    forcing,
    gradient_flow,
    kernel,
    limiting_risk,
    solve_empirical_volterra,
    solve_volterra,
    stability_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "HsgdConfig",
    "diffusion_factor",
    "hsgd_step",
    "norm_bound_monitor",
    "run_hsgd",
    "ConfigError",
    "Dataset",
    "EmpiricalProblem",
    "ProblemSpec",
    "SpectrumModel",
    "build_problem",
    "empirical_covariance",
    "sample_dataset",
    "derive_stream",
    "IndexSchedule",
    "index_schedule",
    "run_sgd",
    "sgd_step",
    "stopping_time_monitor",
    "ContourPoint",
    "QuadraticStatistic",
    "c2_norm",
    "empirical_risk",
    "eval_quadratic",
    "make_resolvent_statistic",
    "population_risk",
    "regularized_empirical_risk",
    "regularized_risk",
    "resolvent_apply",
    "Trajectory",
    "KernelSpec",
    "VolterraSolution",
    "forcing",
    "gradient_flow",
    "kernel",
    "limiting_risk",
    "solve_empirical_volterra",
    "solve_volterra",
    "stability_threshold",
]
