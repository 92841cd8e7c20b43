"""Goodness-of-fit testing of parametric trends under spatially correlated errors."""
from .goftest import (
    AsymptoticInputs,
    QuadratureGrid,
    TestReport,
    TnOperator,
    WeightFunction,
    asymptotic_constants,
    bootstrap_test,
    compute_tn,
    significance_trace,
    standardized_statistic,
)
from .kernels import BandwidthMatrix, KernelSpec
from .smoothing import SpatialDataset, local_linear_at, smooth_parametric_at, smoother_weights_at
from .trend import IterConfig, TrendModel, gls_fit, iterative_fit, ols_fit
from .variography import VariogramModel, covariance_matrix, empirical_semivariogram, fit_variogram_wls

__version__ = "0.1.0"

__all__ = [
    "AsymptoticInputs",
    "BandwidthMatrix",
    "IterConfig",
    "KernelSpec",
    "QuadratureGrid",
    "SpatialDataset",
    "TestReport",
    "TnOperator",
    "TrendModel",
    "VariogramModel",
    "WeightFunction",
    "asymptotic_constants",
    "bootstrap_test",
    "compute_tn",
    "covariance_matrix",
    "empirical_semivariogram",
    "fit_variogram_wls",
    "gls_fit",
    "iterative_fit",
    "local_linear_at",
    "ols_fit",
    "significance_trace",
    "smooth_parametric_at",
    "smoother_weights_at",
    "standardized_statistic",
]
