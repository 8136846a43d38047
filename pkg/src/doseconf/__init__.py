"""Distribution-free prediction intervals and predictive distributions for
conditional dose-response models under continuous treatments."""

from ._rng import spawn_seeds, substream
from .conformal import (
    PredictionInterval,
    SplitConformalRegressor,
    WeightedScoreDistribution,
    absolute_residual,
    calibration_scores,
    standard_interval,
    weighted_interval,
    weighted_quantile,
)
from .cps import (
    ConformalPredictiveSystem,
    KernelDensity,
    PredictiveDistribution,
    kde_fit,
    predictive_distribution,
    randomized_cdf,
    signed_residual,
    silverman_bandwidth,
)
from .data import Dataset, Sample, split_dataset
from .learners import CadrfRegressor, GradientBoostedTrees, fit_cadrf
from .propensity import (
    DENSITY_FLOOR,
    KernelConfig,
    OraclePropensity,
    PropensityEstimator,
    dump_propensity_diagnostics,
    effective_sample_size,
    fit_propensity,
    global_propensity_weight,
    local_kernel_weight,
    local_propensity_weight,
    oracle_propensity_density,
)
from .synthgen import (
    SETUP_SCENARIOS,
    ScenarioSpec,
    generate,
    outcome_mean,
    sample_counterfactual,
    sample_counterfactuals,
    treatment_grid,
)

__version__ = "0.1.0"

__all__ = [
    "CadrfRegressor",
    "ConformalPredictiveSystem",
    "Dataset",
    "DENSITY_FLOOR",
    "GradientBoostedTrees",
    "KernelConfig",
    "KernelDensity",
    "OraclePropensity",
    "PredictionInterval",
    "PredictiveDistribution",
    "PropensityEstimator",
    "Sample",
    "ScenarioSpec",
    "SETUP_SCENARIOS",
    "SplitConformalRegressor",
    "WeightedScoreDistribution",
    "absolute_residual",
    "calibration_scores",
    "dump_propensity_diagnostics",
    "effective_sample_size",
    "fit_cadrf",
    "fit_propensity",
    "generate",
    "global_propensity_weight",
    "kde_fit",
    "local_kernel_weight",
    "local_propensity_weight",
    "oracle_propensity_density",
    "outcome_mean",
    "predictive_distribution",
    "randomized_cdf",
    "sample_counterfactual",
    "sample_counterfactuals",
    "signed_residual",
    "silverman_bandwidth",
    "spawn_seeds",
    "split_dataset",
    "standard_interval",
    "substream",
    "treatment_grid",
    "weighted_interval",
    "weighted_quantile",
]
