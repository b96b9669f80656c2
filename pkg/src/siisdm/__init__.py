"""Integrated species distribution models for multi-survey count data.

Four model variants over a shared spatial-basis representation — independent
per-survey models, additive-constant and additive-field integrations, and a
single-index model with monotone catch-efficiency links — estimated by
Laplace-approximated maximum likelihood, with simulation-based prediction,
proper scoring, synthetic-data generators, and spatial block
cross-validation.
"""

from .basis import (
    BasisConfig,
    basis_matrix,
    bisquare,
    build_centroid_grid,
    build_for_resolution,
    exp_covariance,
)
from .cv import BlockAssignment, assign_blocks, run_cv
from .data import (
    ModelSpec,
    SurveyDataset,
    SurveyObservation,
    load_csv,
    validate,
    write_csv,
)
from .exceptions import ConfigurationError, DataError, FitError
from .inference import FitOptions, FittedModel, fit, laplace_nll
from .links import (
    FourPLParams,
    SplineLinkParams,
    fourpl,
    fourpl_deriv,
    logistic_transform,
    spline_link,
)
from .metrics import (
    ScoreReport,
    crps_sample,
    interval_score,
    rmspe,
    score_draws,
    score_predictions,
    scrps_sample,
)
from .model import ModelAssembly, ParameterVector
from .prediction import (
    PredictionDraws,
    PredictionTargets,
    draw_predictions,
    predict_index,
    summarize,
)
from .simulation import (
    AdditiveFieldSpec,
    ScenarioSpec,
    generate_additive_field,
    generate_siisdm,
    grid_locations,
    run_study,
    simulate_gp,
)
from .splines import SplineBasisConfig, ispline_basis, make_knots, mspline

__version__ = "0.1.0"

__all__ = [
    "AdditiveFieldSpec",
    "BasisConfig",
    "BlockAssignment",
    "ConfigurationError",
    "DataError",
    "FitError",
    "FitOptions",
    "FittedModel",
    "FourPLParams",
    "ModelAssembly",
    "ModelSpec",
    "ParameterVector",
    "PredictionDraws",
    "PredictionTargets",
    "ScenarioSpec",
    "ScoreReport",
    "SplineBasisConfig",
    "SplineLinkParams",
    "SurveyDataset",
    "SurveyObservation",
    "assign_blocks",
    "basis_matrix",
    "bisquare",
    "build_centroid_grid",
    "build_for_resolution",
    "crps_sample",
    "draw_predictions",
    "exp_covariance",
    "fit",
    "fourpl",
    "fourpl_deriv",
    "generate_additive_field",
    "generate_siisdm",
    "grid_locations",
    "interval_score",
    "ispline_basis",
    "laplace_nll",
    "load_csv",
    "logistic_transform",
    "make_knots",
    "mspline",
    "predict_index",
    "rmspe",
    "run_cv",
    "run_study",
    "score_draws",
    "score_predictions",
    "scrps_sample",
    "simulate_gp",
    "spline_link",
    "summarize",
    "validate",
    "write_csv",
]
