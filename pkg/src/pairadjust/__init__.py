"""Matched-pairs experiments: design, covariate-adjusted estimation, inference."""

from .core import (
    ContractViolation,
    EstimateReport,
    EstimationError,
    ExperimentData,
    PairingPlan,
    SingularDesignError,
    UnitRecord,
    WorkingModel,
    adjusted_outcomes,
    doubly_robust_estimate,
    validate_experiment,
)
from .design import (
    AssignmentSeed,
    MatchDiagnostics,
    assign_within_pairs,
    closeness_diagnostics,
    match_pairs_greedy,
    match_pairs_sorted,
    reorder_pairs,
)
from .estimators import AdjustmentSpec, estimate, fit_working_model
from .inference import VarianceReport, confidence_interval, test_ate, variance_adjusted
from .regression import LassoConfig, LassoFit, OlsFit, compute_lambda, ols_fit, weighted_lasso_fit
from .simulation import ModelSpec, SimulationSummary, run_monte_carlo, run_replication

__version__ = "0.1.0"

__all__ = [
    "AdjustmentSpec",
    "AssignmentSeed",
    "ContractViolation",
    "EstimateReport",
    "EstimationError",
    "ExperimentData",
    "LassoConfig",
    "LassoFit",
    "MatchDiagnostics",
    "ModelSpec",
    "OlsFit",
    "PairingPlan",
    "SimulationSummary",
    "SingularDesignError",
    "UnitRecord",
    "VarianceReport",
    "WorkingModel",
    "adjusted_outcomes",
    "assign_within_pairs",
    "closeness_diagnostics",
    "compute_lambda",
    "confidence_interval",
    "doubly_robust_estimate",
    "estimate",
    "fit_working_model",
    "match_pairs_greedy",
    "match_pairs_sorted",
    "ols_fit",
    "reorder_pairs",
    "run_monte_carlo",
    "run_replication",
    "test_ate",
    "validate_experiment",
    "variance_adjusted",
    "weighted_lasso_fit",
]
