"""Bayesian variable selection for non-homogeneous Poisson process regressions."""
from __future__ import annotations

__version__ = "0.1.0"

from .core import (
    UNIT_SQUARE,
    AnalyticField,
    PointPattern,
    QuadratureGrid,
    RasterField,
    Region,
    coord_x,
    coord_y,
    count_in_cells,
    covariate_at,
    design_matrix,
    distance_to,
    product_xy,
    read_points_csv,
    read_raster,
    square_x,
    write_points_csv,
    write_raster,
)
from .criteria import (
    DicResult,
    LpmlResult,
    deviance,
    dic,
    lpml,
    lpml_partition_oracle,
    per_sample_log_likelihood,
    posterior_mean_surface,
    score,
)
from .errors import (
    ConfigurationError,
    DomainError,
    FitError,
    GenerationError,
    InitializationError,
    NumericError,
    SppselError,
)
from .likelihood import ModelSpec, Theta, integrated_intensity, log_intensity, log_likelihood
from .mcmc import (
    PROFILES,
    Chain,
    McmcConfig,
    PosteriorSummary,
    PriorSpec,
    derive_seed,
    effective_sample_size,
    hpd_interval,
    lambda0_full_conditional,
    posterior_summary,
    sample_posterior,
)
from .selection import (
    CandidateSet,
    ScoredModel,
    SelectionReport,
    StudyReport,
    compare_resolutions,
    enumerate_models,
    fit_and_score,
    replicate_study,
    select,
)
from .simulate import (
    GrfSpec,
    IntensitySpec,
    PerCell,
    Scenario,
    Thinning,
    expected_count,
    scenario_preset,
    simulate_grf,
    simulate_nhpp,
)
