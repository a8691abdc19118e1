"""Robust local Gaussian process regression.

Each query is predicted from a GP fitted to its nearest training points.
Neighbors that do not belong with the majority (for instance points from
across a discontinuity) are absorbed by a sparse mean-shift vector, so they
stop biasing the fit.
"""
from .estimator import (EstimatorConfig, FittedLocalModel, OutlyingnessVector, fit,
                        grad_loss, initialize, loss, quantile_threshold, resolve_q,
                        update_chi, update_gamma, update_mu)
from .exceptions import (ConfigError, InvalidInputError, NumericalError, RLGPError,
                         SchemaError)
from .kernel import (CovarianceState, KernelParams, build_covariance_state,
                     covariance_from_matrix, kernel_matrix, pairwise_sq_dist)
from .neighborhood import Dataset, Neighborhood, load_dataset, select_neighbors
from .predictor import Prediction, crps_gaussian, mse, predict, predict_points

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CovarianceState", "Dataset", "EstimatorConfig", "FittedLocalModel",
    "InvalidInputError", "KernelParams", "Neighborhood", "NumericalError",
    "OutlyingnessVector", "Prediction", "RLGPError", "SchemaError",
    "build_covariance_state", "covariance_from_matrix", "crps_gaussian", "fit",
    "grad_loss", "initialize", "kernel_matrix", "load_dataset", "loss", "mse",
    "pairwise_sq_dist", "predict", "predict_points", "quantile_threshold",
    "resolve_q", "select_neighbors", "update_chi", "update_gamma", "update_mu",
]
