"""Variable importance under correlated features: datasets, models, knockoffs and sweeps."""

from ._core import (
    ValidationError,
    VimpError,
    block_equi_s,
    cholesky,
    cpi_linear,
    equi_s,
    estimate_gaussian,
    fit_ols,
    generate_dataset,
    knockoff_params,
    min_eigenvalue,
    permutation_linear,
    rank_features,
    run_elbow,
    run_experiment,
    sample_knockoffs,
    theoretical_self_corr,
)

__all__ = [
    "ValidationError",
    "VimpError",
    "block_equi_s",
    "cholesky",
    "cpi_linear",
    "equi_s",
    "estimate_gaussian",
    "fit_ols",
    "generate_dataset",
    "knockoff_params",
    "min_eigenvalue",
    "permutation_linear",
    "rank_features",
    "run_elbow",
    "run_experiment",
    "sample_knockoffs",
    "theoretical_self_corr",
]
