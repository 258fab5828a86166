"""Score-driven Poisson autoregression with time-varying coefficients.

A count series y_t is filtered through a log-linear intensity recursion
whose feedback coefficients themselves follow score-driven updates. The
package covers filtering, simulation, quasi-maximum-likelihood estimation
with asymptotic standard errors, stability diagnostics, forecasting, and a
Monte Carlo harness measuring how fast the filter tracks level shifts.
"""

from ._version import __version__
from .dataio import (
    LoadedSeries,
    fit_report,
    load_csv,
    load_params,
    params_from_dict,
    params_to_dict,
)
from .diagnostics import (
    InvertibilityReport,
    MomentReport,
    StationarityReport,
    check_invertibility,
    check_stationarity,
    invertibility_bound,
    moment_sanity,
)
from .errors import (
    DataError,
    DimensionMismatch,
    DomainError,
    NegativeCount,
    NonFiniteCovariate,
    NonFiniteParameter,
    OverflowGuard,
    ParseError,
    TvparxError,
)
from .estimation import (
    Criteria,
    FitOptions,
    FitResult,
    TransformMap,
    covariance,
    fit,
    information_criteria,
    loglik,
    transform_map,
)
from .model import (
    FilterInit,
    FilterPath,
    ForecastResult,
    ModelSpec,
    ParamVector,
    SeriesData,
    default_init,
    filter,
    forecast,
    simulate,
    steady_state_init,
    validate_params,
)
from .montecarlo import (
    CellResult,
    MCResult,
    StepDGPConfig,
    default_grid,
    path_error,
    run_cell,
    run_table,
    step_lambda,
)

__all__ = [
    "__version__",
    "CellResult", "Criteria", "DataError", "DimensionMismatch", "DomainError",
    "FilterInit", "FilterPath", "FitOptions", "FitResult", "ForecastResult",
    "InvertibilityReport", "LoadedSeries", "MCResult", "ModelSpec",
    "MomentReport", "NegativeCount", "NonFiniteCovariate",
    "NonFiniteParameter", "OverflowGuard", "ParamVector", "ParseError",
    "SeriesData", "StationarityReport", "StepDGPConfig", "TransformMap",
    "TvparxError",
    "check_invertibility", "check_stationarity", "covariance", "default_grid",
    "default_init", "filter", "fit", "fit_report", "forecast",
    "information_criteria", "invertibility_bound", "load_csv", "load_params",
    "loglik", "moment_sanity", "params_from_dict", "params_to_dict",
    "path_error", "run_cell", "run_table", "simulate", "steady_state_init",
    "step_lambda", "transform_map", "validate_params",
]
