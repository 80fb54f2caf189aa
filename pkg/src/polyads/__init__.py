"""Polyad estimator for multi-way Poisson gravity models on sparse count graphs."""

__version__ = "0.1.0"

from .baseline import PPMLRegressor
from .covariates import (
    CovariateProvider,
    DenseCovariates,
    FunctionCovariates,
    RelabeledCovariates,
    TableCovariates,
)
from .enumeration import ActivePolyads, build_incidence, enumerate_active, inner_loop_count
from .estimator import FitConfig, FitResult, loss_gradient_hessian, newton_fit
from .exceptions import (
    CalibrationError,
    CollinearityError,
    DimensionMismatchError,
    InvalidParameterError,
    MissingCovariateError,
    NegativeCountError,
    PolyadsError,
    ResourceGuardError,
    SubsampleError,
)
from .graph import FixedEffectStructure, Polyad, SparseCountGraph, apply_transform, degrees, orbit_bounds
from .meta import meta_analysis
from .model import PolyadPoissonRegressor
from .simulate import ThreeWayDesign, calibrate_intercept, generate_three_way, subsample_nodes
from .variance import compute_covariance

__all__ = [
    "__version__",
    "ActivePolyads",
    "CalibrationError",
    "CollinearityError",
    "CovariateProvider",
    "DenseCovariates",
    "DimensionMismatchError",
    "FitConfig",
    "FitResult",
    "FixedEffectStructure",
    "FunctionCovariates",
    "InvalidParameterError",
    "MissingCovariateError",
    "NegativeCountError",
    "PPMLRegressor",
    "Polyad",
    "PolyadPoissonRegressor",
    "PolyadsError",
    "RelabeledCovariates",
    "ResourceGuardError",
    "SparseCountGraph",
    "SubsampleError",
    "TableCovariates",
    "ThreeWayDesign",
    "apply_transform",
    "build_incidence",
    "calibrate_intercept",
    "compute_covariance",
    "degrees",
    "enumerate_active",
    "generate_three_way",
    "inner_loop_count",
    "loss_gradient_hessian",
    "meta_analysis",
    "newton_fit",
    "orbit_bounds",
    "subsample_nodes",
]
