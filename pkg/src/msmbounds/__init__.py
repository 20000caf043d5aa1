"""Partial-identification bounds for treatment effects under bounded
odds-ratio confounding, with cross-fitted influence-function estimators,
Wald inference, and brute-force verification oracles."""

__version__ = "0.1.0"

from .core import (
    ConvergenceError,
    DataError,
    Dataset,
    Estimand,
    FitError,
    HarnessError,
    MsmBoundsError,
    NuisanceSet,
    OutcomeKind,
    ParameterError,
    SensitivityParams,
    sensitivity_params,
    validate_dataset,
)
from .cvar import (
    DiscreteDist,
    cvar,
    cvar_dual_oracle,
    empirical_quantile,
    transformed_mean,
    transformed_outcome,
    weighting_kernel,
)
from .estimator import (
    BoundEstimate,
    FoldPlan,
    aipw,
    att_bounds,
    crossfit_nuisances,
    estimate_bounds,
    influence_scores,
    manski_bounds_binary,
    split_folds,
    wald_bounds,
)
from .learners import (
    FittedPredictor,
    LearnerBundle,
    LearnerSpec,
    binary_nuisances,
    clip_propensity,
    default_bundle,
    expand_features,
    fit_mean,
    fit_propensity,
    fit_quantile,
    fit_rho,
)
from .oracle import (
    DiscreteDGP,
    LevelNuisances,
    adversarial_propensity,
    greedy_extreme_mean,
    injection_bundle,
    population_bound,
    sample_dataset,
    sharp_bound_oracle,
    transformed_mean_nuisances,
    true_nuisances,
)
from .coverage import (
    CoverageCell,
    CoverageReport,
    GenerativeSpec,
    ReplicationRecord,
    monte_carlo_coverage,
    simulate,
    true_sharp_bounds,
)

__all__ = [
    "__version__",
    # core
    "MsmBoundsError",
    "ParameterError",
    "DataError",
    "FitError",
    "ConvergenceError",
    "HarnessError",
    "OutcomeKind",
    "Estimand",
    "SensitivityParams",
    "sensitivity_params",
    "Dataset",
    "validate_dataset",
    "NuisanceSet",
    # cvar
    "DiscreteDist",
    "empirical_quantile",
    "cvar",
    "cvar_dual_oracle",
    "transformed_outcome",
    "weighting_kernel",
    "transformed_mean",
    # learners
    "LearnerSpec",
    "LearnerBundle",
    "FittedPredictor",
    "default_bundle",
    "expand_features",
    "fit_propensity",
    "clip_propensity",
    "fit_quantile",
    "fit_mean",
    "fit_rho",
    "binary_nuisances",
    # estimator
    "FoldPlan",
    "split_folds",
    "crossfit_nuisances",
    "influence_scores",
    "BoundEstimate",
    "estimate_bounds",
    "wald_bounds",
    "att_bounds",
    "aipw",
    "manski_bounds_binary",
    # oracle
    "DiscreteDGP",
    "LevelNuisances",
    "true_nuisances",
    "greedy_extreme_mean",
    "sharp_bound_oracle",
    "adversarial_propensity",
    "population_bound",
    "sample_dataset",
    "injection_bundle",
    "transformed_mean_nuisances",
    # coverage
    "GenerativeSpec",
    "simulate",
    "true_sharp_bounds",
    "ReplicationRecord",
    "CoverageCell",
    "CoverageReport",
    "monte_carlo_coverage",
]
