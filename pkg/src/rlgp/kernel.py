"""Squared-exponential covariances and symmetric matrix powers.

The local model uses the isotropic kernel

    c(x_i, x_j) = theta0 * exp(-vartheta * ||x_i - x_j||^2)

plus a nugget ``nu`` on the diagonal.  Every power of the covariance that
the estimator needs (the square root and the inverse, inverse-cube and
inverse-three-halves powers of that root) is read off one symmetric
eigendecomposition held in :class:`CovarianceState`.

Other differentiable kernels can be plugged in by building the state with
:func:`covariance_from_matrix`; the estimator only needs the derivative of
the covariance with respect to each hyperparameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import InvalidInputError, NumericalError

__all__ = [
    "EIG_REL_FLOOR",
    "NU_REL_FLOOR",
    "NU_ABS_FLOOR",
    "KernelParams",
    "CovarianceState",
    "pairwise_sq_dist",
    "cross_sq_dist",
    "kernel_matrix",
    "nu_floor",
    "build_covariance_state",
    "covariance_from_matrix",
]

EIG_REL_FLOOR = 1e-12
NU_REL_FLOOR = 1e-8
NU_ABS_FLOOR = 1e-12


def _as_finite_2d(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return X


def pairwise_sq_dist(X):
    """Squared Euclidean distance matrix of the rows of `X`.

    A 1-D input is read as ``n`` points in one dimension.  The result is
    exactly symmetric with a zero diagonal.
    """
    X = _as_finite_2d(X)
    D = cdist(X, X, "sqeuclidean")
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def cross_sq_dist(X, x):
    """Squared distances from each row of `X` to the single point `x`."""
    X = _as_finite_2d(X)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != X.shape[1]:
        raise InvalidInputError(f"query has dimension {x.shape[1]}, expected {X.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("query contains non-finite entries")
    return cdist(X, x, "sqeuclidean")[:, 0]


def kernel_matrix(D, theta0, vartheta):
    """Squared-exponential covariance ``theta0 * exp(-vartheta * D)``, entrywise."""
    if not theta0 > 0:
        raise InvalidInputError(f"theta0 must be positive, got {theta0}")
    if not vartheta >= 0:
        raise InvalidInputError(f"vartheta must be non-negative, got {vartheta}")
    return theta0 * np.exp(-vartheta * np.asarray(D, dtype=float))


def nu_floor(y):
    """Smallest admissible nugget for responses `y`: 1e-8 * var(y), or 1e-12."""
    v = float(np.var(np.asarray(y, dtype=float)))
    return NU_REL_FLOOR * v if v > 0 else NU_ABS_FLOOR


@dataclass(frozen=True)
class KernelParams:
    """Nugget, signal variance and concentration of the local covariance."""

    nu: float
    theta0: float
    vartheta: float

    def __post_init__(self):
        for name in ("nu", "theta0", "vartheta"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise InvalidInputError(f"{name} must be finite, got {v}")
        if self.nu <= 0:
            raise InvalidInputError(f"nu must be positive, got {self.nu}")
        if self.theta0 <= 0:
            raise InvalidInputError(f"theta0 must be positive, got {self.theta0}")
        if self.vartheta < 0:
            raise InvalidInputError(f"vartheta must be non-negative, got {self.vartheta}")

    def as_log(self):
        return np.log([self.nu, self.theta0, self.vartheta])

    @classmethod
    def from_log(cls, z):
        nu, theta0, vartheta = np.exp(np.asarray(z, dtype=float))
        return cls(float(nu), float(theta0), float(vartheta))


@dataclass(frozen=True)
class CovarianceState:
    """Eigendecomposition of a covariance ``Sigma`` with the powers of ``S = Sigma^(1/2)``.

    Parameters
    ----------
    Sigma : ndarray, shape (n, n)
        The covariance matrix.
    eigvals : ndarray, shape (n,)
        Eigenvalues of `Sigma`, ascending, clamped below at
        ``EIG_REL_FLOOR * max(eigvals)``.
    eigvecs : ndarray, shape (n, n)
        Orthonormal eigenvectors (columns).
    params, D, E : optional
        The kernel parameters, distance matrix and correlation matrix
        ``exp(-vartheta * D)`` when the state was built from a kernel.
    """

    Sigma: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    params: KernelParams | None = None
    D: np.ndarray | None = field(default=None, repr=False)
    E: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self):
        return self.eigvals.shape[0]

    @cached_property
    def sqrt_eigvals(self):
        """Eigenvalues of S."""
        return np.sqrt(self.eigvals)

    @property
    def lambda_min_S(self):
        return float(self.sqrt_eigvals[0])

    def power(self, p):
        """``Sigma ** p`` as ``V diag(lambda ** p) V^T`` (symmetrized)."""
        V = self.eigvecs
        M = (V * self.eigvals ** p) @ V.T
        return 0.5 * (M + M.T)

    @cached_property
    def Shalf(self):
        return self.power(0.5)

    @cached_property
    def Sinv(self):
        return self.power(-0.5)

    @cached_property
    def Sinv3(self):
        return self.power(-1.5)

    @cached_property
    def Sinv3half(self):
        return self.power(-0.75)

    @cached_property
    def Sigma_inv(self):
        return self.power(-1.0)

    def apply_power(self, v, p):
        """``Sigma ** p @ v`` without forming the matrix power."""
        V = self.eigvecs
        w = self.eigvals ** p
        c = V.T @ v
        return V @ (c * (w[:, None] if c.ndim == 2 else w))

    def trace_S(self):
        return float(np.sum(self.sqrt_eigvals))


def _decompose(Sigma):
    try:
        w, V = np.linalg.eigh(Sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("eigendecomposition failed",
                             n=Sigma.shape[0], diag_min=float(np.min(np.diag(Sigma))),
                             diag_max=float(np.max(np.diag(Sigma)))) from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite eigenvalues", n=Sigma.shape[0])
    top = w[-1]
    if not top > 0:
        raise NumericalError("covariance is not positive definite",
                             eig_min=float(w[0]), eig_max=float(top))
    w = np.maximum(w, EIG_REL_FLOOR * top)
    return w, V


def covariance_from_matrix(Sigma):
    """Build a :class:`CovarianceState` for an arbitrary symmetric positive definite matrix."""
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise InvalidInputError(f"Sigma must be square, got shape {Sigma.shape}")
    Sigma = 0.5 * (Sigma + Sigma.T)
    w, V = _decompose(Sigma)
    return CovarianceState(Sigma=Sigma, eigvals=w, eigvecs=V)


def build_covariance_state(params, D):
    """Covariance ``nu I + theta0 exp(-vartheta D)`` and its eigendecomposition."""
    D = np.asarray(D, dtype=float)
    E = np.exp(-params.vartheta * D)
    Sigma = params.theta0 * E
    Sigma[np.diag_indices_from(Sigma)] += params.nu
    w, V = _decompose(Sigma)
    return CovarianceState(Sigma=Sigma, eigvals=w, eigvecs=V, params=params, D=D, E=E)
