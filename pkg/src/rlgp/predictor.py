"""Plug-in predictive distribution at the query point, and scoring rules."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import InvalidInputError, NumericalError
from .estimator import EstimatorConfig, fit
from .neighborhood import select_neighbors

__all__ = ["Prediction", "PointResult", "predict", "predict_points", "crps_gaussian", "mse"]

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Prediction:
    """Gaussian predictive distribution ``N(mean, variance)`` at `query`.

    ``clamped`` is set when the computed variance was negative (round-off
    on an ill-conditioned covariance) and was replaced by zero.
    """

    mean: float
    variance: float
    query: np.ndarray
    clamped: bool = False

    @property
    def sd(self):
        return math.sqrt(self.variance)


def predict(model, include_nugget=False):
    """Posterior mean and variance of the latent response at the neighborhood's query.

    ``mean = mu + c*^T Sigma^{-1} (y - 1 mu - gamma)`` and
    ``variance = theta0 - c*^T Sigma^{-1} c*``, with
    ``c*_i = theta0 exp(-vartheta ||x_i - x*||^2)``.  With
    ``include_nugget=True`` the fitted ``nu`` is added to the variance, giving
    the predictive distribution of a new noisy observation.
    """
    nb = model.neighborhood
    p = model.params
    cov = model.cov
    cstar = p.theta0 * np.exp(-p.vartheta * np.asarray(nb.cross_sq_dist, dtype=float))
    resid = np.asarray(nb.yn, dtype=float) - model.mu - model.gamma.gamma
    V = cov.eigvecs
    a = V.T @ cstar
    mean = model.mu + float(a @ ((V.T @ resid) / cov.eigvals))
    var = p.theta0 - float(a @ (a / cov.eigvals))
    if not (math.isfinite(mean) and math.isfinite(var)):
        raise NumericalError("non-finite prediction", mean=mean, variance=var)
    clamped = var < 0
    var = max(var, 0.0)
    if include_nugget:
        var += p.nu
    return Prediction(mean, var, np.asarray(nb.query), clamped)


def crps_gaussian(mean, variance, y_true):
    """CRPS of ``N(mean, variance)`` against the observation `y_true`.

    Uses ``sigma * [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)]`` with
    ``z = (y - mean) / sigma``; a zero variance gives ``|y - mean|``.
    Accepts scalars or broadcastable arrays.
    """
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if np.any(variance < 0):
        raise InvalidInputError("variance must be non-negative")
    diff = y_true - mean
    sigma = np.sqrt(variance)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, diff / np.where(sigma > 0, sigma, 1.0), 0.0)
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        val = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI)
    out = np.where(sigma > 0, val, np.abs(diff))
    return float(out) if out.ndim == 0 else out


def mse(predictions, truths):
    """Mean squared difference of two equal-length sequences."""
    a = np.asarray(predictions, dtype=float).ravel()
    b = np.asarray(truths, dtype=float).ravel()
    if a.size != b.size:
        raise InvalidInputError(f"length mismatch: {a.size} predictions, {b.size} truths")
    if a.size == 0:
        raise InvalidInputError("need at least one prediction")
    return float(np.mean((a - b) ** 2))


@dataclass(frozen=True)
class PointResult:
    """Outcome of fit + predict at one query; `error` is set instead on failure."""

    prediction: Prediction | None
    model: object
    seconds: float
    error: str | None = None


def _run_point(ds, x, n, config, include_nugget):
    nb = select_neighbors(ds, x, n)
    t0 = time.perf_counter()
    try:
        model = fit(nb, config)
        pred = predict(model, include_nugget)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return PointResult(None, None, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    return PointResult(pred, model, time.perf_counter() - t0)


def predict_points(ds, queries, n=None, config=None, workers=1, include_nugget=False):
    """Select neighbors, fit and predict independently at each row of `queries`.

    Results come back in input order.  Timing covers fit and predict only,
    measured inside the worker.  Numerical failures are reported per point.
    """
    queries = np.asarray(queries, dtype=float)
    if queries.ndim == 1:
        queries = queries.reshape(-1, ds.d)
    if queries.shape[1] != ds.d:
        raise InvalidInputError(f"queries have dimension {queries.shape[1]}, training data {ds.d}")
    if n is None:
        n = min(50, ds.N)
    config = config or EstimatorConfig()
    if workers is None or workers <= 1 or len(queries) <= 1:
        return [_run_point(ds, x, n, config, include_nugget) for x in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda x: _run_point(ds, x, n, config, include_nugget), queries))
