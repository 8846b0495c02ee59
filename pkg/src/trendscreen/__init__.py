"""Directional FDR screening of monotone trends in gridded seasonal series."""

from .ingest import (
    CleanGrid,
    RawGrid,
    SeasonalPanel,
    parse_grid,
    pixel_means,
    preprocess,
    seasonal_averages,
)
from .kernels import active_backend
from .procedures import (
    CombinedPValues,
    DecisionTable,
    TestPanel,
    adaptive_three_stage,
    bh_stepup,
    by_directional,
    combine_location,
    combine_subregion,
    storey_pi0,
    three_stage_directional_bh,
)
from .sim import (
    SimResult,
    SimScenario,
    TruthPanel,
    build_covariance_factors,
    evaluate_decisions,
    run_scenario,
    sample_replicate,
)
from .spatial import (
    Partition,
    Variogram,
    empirical_semivariogram,
    estimate_range,
    partition,
)
from .trend import (
    DegenerateSeriesError,
    TrendResult,
    abelson_tukey_coeffs,
    brillinger_statistic,
    two_sided_pvalue,
)

__version__ = "0.1.0"

__all__ = [
    "CleanGrid",
    "CombinedPValues",
    "DecisionTable",
    "DegenerateSeriesError",
    "Partition",
    "RawGrid",
    "SeasonalPanel",
    "SimResult",
    "SimScenario",
    "TestPanel",
    "TrendResult",
    "TruthPanel",
    "Variogram",
    "abelson_tukey_coeffs",
    "active_backend",
    "adaptive_three_stage",
    "bh_stepup",
    "brillinger_statistic",
    "build_covariance_factors",
    "by_directional",
    "combine_location",
    "combine_subregion",
    "empirical_semivariogram",
    "estimate_range",
    "evaluate_decisions",
    "parse_grid",
    "partition",
    "pixel_means",
    "preprocess",
    "run_scenario",
    "sample_replicate",
    "seasonal_averages",
    "storey_pi0",
    "three_stage_directional_bh",
    "two_sided_pvalue",
]
