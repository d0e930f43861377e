"""Bootstrap inference for the Lasso under heteroscedastic errors."""

from lassoboot.bootstrap import (
    BootstrapDraws,
    BootstrapError,
    Scheme,
    WeightDistribution,
    default_threshold,
    run_scheme,
    threshold_estimate,
)
from lassoboot.inference import (
    CoverageReport,
    IntervalEstimate,
    RegionEstimate,
    Side,
    coverage_tally,
    empirical_coverage_ratio,
    percentile_interval,
    sup_norm_region,
)
from lassoboot.lasso import Dataset, LassoFit, SolverOptions, cross_validate_lambda, fit_lasso
from lassoboot.limit import LimitObjective, limit_objective_from_fit, sample_limit_argmin
from lassoboot.simulation import SimulationScenario, run_coverage_experiment

__all__ = [
    "BootstrapDraws",
    "BootstrapError",
    "CoverageReport",
    "Dataset",
    "IntervalEstimate",
    "LassoFit",
    "LimitObjective",
    "RegionEstimate",
    "Scheme",
    "Side",
    "SimulationScenario",
    "SolverOptions",
    "WeightDistribution",
    "coverage_tally",
    "cross_validate_lambda",
    "default_threshold",
    "empirical_coverage_ratio",
    "fit_lasso",
    "limit_objective_from_fit",
    "percentile_interval",
    "run_coverage_experiment",
    "run_scheme",
    "sample_limit_argmin",
    "sup_norm_region",
    "threshold_estimate",
]
