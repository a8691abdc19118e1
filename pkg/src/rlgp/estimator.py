"""Robust local GP estimation by block coordinate descent.

For a neighborhood ``(X_n, y)`` the estimator minimizes

    l(mu, gamma, S) = 1/2 (y - 1 mu - gamma)^T S^{-1} (y - 1 mu - gamma) + c0/2 Tr(S)

over the location ``mu``, a mean-shift vector ``gamma`` with at most ``q``
nonzeros, and the kernel hyperparameters ``(nu, theta0, vartheta)``, where
``S`` is the symmetric square root of ``nu I + theta0 exp(-vartheta D)``.

Each outer pass holds ``S`` fixed while ``gamma`` is refined by
majorize-minimize steps with hard (quantile) thresholding, then updates
``mu`` in closed form and finally moves the hyperparameters by a few
projected BFGS steps in log space with Armijo backtracking.  Every block
update is non-increasing in ``l``, so the recorded loss trace is monotone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError, InvalidInputError, NumericalError
from .kernel import (CovarianceState, KernelParams, build_covariance_state,
                     covariance_from_matrix, nu_floor)

__all__ = [
    "MAD_SCALE",
    "EstimatorConfig",
    "OutlyingnessVector",
    "FittedLocalModel",
    "Gradients",
    "loss",
    "grad_loss",
    "surrogate",
    "update_mu",
    "quantile_threshold",
    "update_gamma",
    "resolve_q",
    "initialize",
    "update_chi",
    "fit",
    "parse_qspec",
]

MAD_SCALE = 1.483
RHO_SAFETY = 1e-6

_ARMIJO_C = 1e-4
_BACKTRACK = 0.5
_MAX_BACKTRACK = 40
_MAX_LOG_STEP = 3.0
_LOG_BOUND = 40.0


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def parse_qspec(spec):
    """Parse a trimming-level spec: ``"adaptive"``, an integer count, or ``".15n"``.

    Returns ``(q_mode, q_value)``.
    """
    if isinstance(spec, bool):
        raise ConfigError(f"invalid q spec {spec!r}")
    if isinstance(spec, (int, np.integer)):
        if spec < 0:
            raise ConfigError(f"q must be non-negative, got {spec}")
        return "fixed", int(spec)
    s = str(spec).strip()
    if s == "adaptive":
        return "adaptive", None
    if s.isdigit():
        return "fixed", int(s)
    if s.endswith("n"):
        frac = s[:-1]
        if frac.startswith("."):
            frac = "0" + frac
        if frac.startswith("0.") and frac[2:].isdigit():
            return "fraction", float(frac)
    raise ConfigError(f"invalid q spec {spec!r}; expected 'adaptive', an integer, or a fraction like '0.15n'")


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings for :func:`fit`.

    ``q_mode`` is one of ``"fixed"`` (``q_value`` is a count),
    ``"fraction"`` (``q_value`` is a fraction of the neighborhood size) or
    ``"adaptive"`` (count of responses outside ``median +- tau * MAD``).
    ``c0_mode`` is ``"one"`` or ``"corrected"`` (``c0 = (n - q) / n``).
    """

    q_mode: str = "adaptive"
    q_value: float | None = None
    tau: float = 3.0
    c0_mode: str = "one"
    max_outer: int = 100
    max_inner_gamma: int = 100
    tol_outer: float = 1e-8
    tol_gamma: float = 1e-10
    qn_steps: int = 10

    def __post_init__(self):
        if self.q_mode not in ("fixed", "fraction", "adaptive"):
            raise ConfigError(f"unknown q_mode {self.q_mode!r}")
        if self.q_mode == "fixed" and (self.q_value is None or self.q_value < 0
                                       or int(self.q_value) != self.q_value):
            raise ConfigError("fixed q_mode needs a non-negative integer q_value")
        if self.q_mode == "fraction" and (self.q_value is None or not 0 <= self.q_value <= 1):
            raise ConfigError("fraction q_mode needs q_value in [0, 1]")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.c0_mode not in ("one", "corrected"):
            raise ConfigError(f"unknown c0_mode {self.c0_mode!r}")
        for name in ("max_outer", "max_inner_gamma", "qn_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if not (self.tol_outer >= 0 and self.tol_gamma >= 0):
            raise ConfigError("tolerances must be non-negative")

    @classmethod
    def from_qspec(cls, spec, **kwargs):
        mode, value = parse_qspec(spec)
        return cls(q_mode=mode, q_value=value, **kwargs)


# ---------------------------------------------------------------------------
# loss, gradients, closed-form mu
# ---------------------------------------------------------------------------

class Gradients(NamedTuple):
    mu: float
    gamma: np.ndarray
    nu: float
    theta0: float
    vartheta: float

    def chi(self):
        return np.array([self.nu, self.theta0, self.vartheta])


def _residual(mu, gamma, y):
    y = np.asarray(y, dtype=float)
    r = y - mu - np.asarray(gamma, dtype=float)
    return r


def _check_dims(cov, y):
    if np.shape(y)[0] != cov.n:
        raise InvalidInputError(f"y has length {np.shape(y)[0]}, covariance is {cov.n} x {cov.n}")


def loss(mu, gamma, cov, y, c0=1.0):
    """Perspective-transformed robust loss at ``(mu, gamma, S)``."""
    _check_dims(cov, y)
    u = cov.eigvecs.T @ _residual(mu, gamma, y)
    s = cov.sqrt_eigvals
    return float(0.5 * np.sum(u * u / s) + 0.5 * c0 * np.sum(s))


def surrogate(gamma, gamma_ref, cov, mu, y, rho):
    """Quadratic majorizer of the gamma-block loss around ``gamma_ref``.

    Only the quadratic term of the loss depends on gamma, so the majorizer is
    built on that part: ``l(gamma_ref) + <grad, gamma - gamma_ref> + rho/2 ||gamma - gamma_ref||^2``.
    """
    gamma = np.asarray(gamma, dtype=float)
    gamma_ref = np.asarray(gamma_ref, dtype=float)
    base = loss(mu, gamma_ref, cov, y, c0=0.0)
    g = -cov.apply_power(_residual(mu, gamma_ref, y), -0.5)
    step = gamma - gamma_ref
    return float(base + g @ step + 0.5 * rho * step @ step)


def _dsigma_weights(u, s, c0):
    # dl = sum_ij K_ij * (V^T dSigma V)_ij, via the divided differences of sqrt
    w = u / s
    G = -0.5 * np.outer(w, w)
    G[np.diag_indices_from(G)] += 0.5 * c0
    return G / (s[:, None] + s[None, :])


def grad_loss(mu, gamma, cov, y, c0=1.0, D=None):
    """Gradient of :func:`loss` with respect to ``mu``, ``gamma``, ``nu``, ``theta0``, ``vartheta``.

    The covariance state must have been built from kernel parameters (see
    :func:`~rlgp.kernel.build_covariance_state`).  The hyperparameter
    derivatives are exact derivatives of ``Tr(S)`` and ``r^T S^{-1} r``
    through the matrix square root: for ``nu`` and ``theta0`` the
    perturbation commutes with ``Sigma`` and the expressions reduce to

        d/dnu     = -1/4 r^T S^{-3} r + c0/4 Tr(S^{-1})
        d/dtheta0 = 1/4 < -S^{-3/2} r r^T S^{-3/2} + c0 S^{-1}, E >

    while for ``vartheta`` (perturbation ``-theta0 D .* E``) the Daleckii-Krein
    divided differences of the square root are used.
    """
    _check_dims(cov, y)
    if cov.params is None:
        raise InvalidInputError("grad_loss needs a covariance state built from kernel parameters")
    D = cov.D if D is None else np.asarray(D, dtype=float)
    E = cov.E if cov.E is not None else np.exp(-cov.params.vartheta * D)
    theta0 = cov.params.theta0

    r = _residual(mu, gamma, y)
    V = cov.eigvecs
    s = cov.sqrt_eigvals
    u = V.T @ r
    Sinv_r = V @ (u / s)
    g_gamma = -Sinv_r
    g_mu = float(-np.sum(Sinv_r))

    g_nu = float(-0.25 * np.sum(u * u / s ** 3) + 0.25 * c0 * np.sum(1.0 / s))

    z = u / s ** 1.5
    Et = V.T @ E @ V
    g_theta0 = float(0.25 * (-z @ Et @ z + c0 * np.sum(np.diag(Et) / s)))

    K = _dsigma_weights(u, s, c0)
    dSig = V.T @ (-theta0 * D * E) @ V
    g_vartheta = float(np.sum(K * dSig))
    return Gradients(g_mu, g_gamma, g_nu, g_theta0, g_vartheta)


def update_mu(cov, y, gamma):
    """Minimizer of the loss over ``mu``: the ``S^{-1}``-weighted mean of ``y - gamma``."""
    _check_dims(cov, y)
    w = cov.apply_power(np.ones(cov.n), -0.5)
    denom = float(np.sum(w))
    if not denom > 0:
        raise NumericalError("1^T S^{-1} 1 is not positive", value=denom)
    return float(w @ (np.asarray(y, dtype=float) - np.asarray(gamma, dtype=float)) / denom)


# ---------------------------------------------------------------------------
# gamma block
# ---------------------------------------------------------------------------

def quantile_threshold(s, q):
    """Keep the `q` entries of `s` with largest magnitude and zero the rest.

    Among equal magnitudes the lower index is kept.  This is the exact
    Euclidean projection onto ``{t : ||t||_0 <= q}``.
    """
    s = np.asarray(s, dtype=float)
    q = int(q)
    if not 0 <= q <= s.size:
        raise InvalidInputError(f"q must be in [0, {s.size}], got {q}")
    out = np.zeros_like(s)
    if q:
        keep = np.argsort(-np.abs(s), kind="stable")[:q]
        out[keep] = s[keep]
    return out


@dataclass(frozen=True)
class OutlyingnessVector:
    """Mean-shift vector; its nonzero entries flag outlying responses."""

    gamma: np.ndarray
    n_iter: int = 0
    converged: bool = True
    max_support: int = 0

    @property
    def support(self):
        return np.flatnonzero(self.gamma)


def update_gamma(gamma_init, cov, mu, y, q, rho=None, max_iter=100, tol=1e-10):
    """Iterated quantile thresholding for the ``||gamma||_0 <= q`` block.

    Each step minimizes the quadratic majorizer with curvature ``rho``
    (default ``(1 + 1e-6) / lambda_min(S)``) over the sparsity constraint:
    ``gamma <- Theta(gamma - (S^{-1} gamma - S^{-1}(y - mu)) / rho; q)``.
    Iteration stops when the largest change falls below
    ``tol * max(1, ||y - mu||_inf)`` or after `max_iter` steps.
    """
    _check_dims(cov, y)
    y = np.asarray(y, dtype=float)
    q = int(q)
    if q == 0:
        return OutlyingnessVector(np.zeros(cov.n), 0, True, 0)
    if rho is None:
        rho = (1.0 + RHO_SAFETY) / cov.lambda_min_S
    V = cov.eigvecs
    inv_s = 1.0 / cov.sqrt_eigvals
    base = y - mu
    Tr = V @ ((V.T @ base) * inv_s)
    scale = tol * max(1.0, float(np.max(np.abs(base))))

    gamma = quantile_threshold(np.asarray(gamma_init, dtype=float), q) \
        if np.count_nonzero(gamma_init) > q else np.array(gamma_init, dtype=float)
    max_support = int(np.count_nonzero(gamma))
    for it in range(1, max_iter + 1):
        Tg = V @ ((V.T @ gamma) * inv_s)
        new = quantile_threshold(gamma - (Tg - Tr) / rho, q)
        max_support = max(max_support, int(np.count_nonzero(new)))
        delta = float(np.max(np.abs(new - gamma)))
        gamma = new
        if delta <= scale:
            return OutlyingnessVector(gamma, it, True, max_support)
    return OutlyingnessVector(gamma, max_iter, False, max_support)


def resolve_q(y, config):
    """Trimming level for responses `y`, clamped to ``[0, floor(n/2)]``.

    Adaptive mode counts responses strictly outside
    ``median(y) +- tau * 1.483 * median(|y - median(y)|)``.  When the MAD is
    zero the interval collapses to the median and every response different
    from it counts.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 1:
        raise InvalidInputError("empty response vector")
    if config.q_mode == "fixed":
        q = int(config.q_value)
    elif config.q_mode == "fraction":
        q = int(math.floor(config.q_value * n + 0.5))
    else:
        med = np.median(y)
        dev = np.abs(y - med)
        mad = MAD_SCALE * np.median(dev)
        q = int(np.count_nonzero(dev > config.tau * mad))
    return max(0, min(q, n // 2))


class Initialization(NamedTuple):
    mu0: float
    gamma0: np.ndarray
    nu0: float
    theta0_0: float
    vartheta0: float
    S0: np.ndarray


def initialize(y, floor=None):
    """Starting point: median location, zero shifts, MAD-squared nugget, ``S = nu0 I``.

    The nugget is ``(1.483 * median(|y - median(y)|))**2`` floored at
    `floor` (default :func:`~rlgp.kernel.nu_floor`).
    """
    y = np.asarray(y, dtype=float)
    if y.size < 1:
        raise InvalidInputError("empty response vector")
    if floor is None:
        floor = nu_floor(y)
    mu0 = float(np.median(y))
    nu0 = max(float((MAD_SCALE * np.median(np.abs(y - mu0))) ** 2), floor)
    return Initialization(mu0, np.zeros(y.size), nu0, 1.0, 1.0, nu0 * np.eye(y.size))


# ---------------------------------------------------------------------------
# hyperparameter block
# ---------------------------------------------------------------------------

class ChiUpdate(NamedTuple):
    params: KernelParams
    cov: CovarianceState
    loss: float
    losses: list
    n_steps: int
    hess_inv: np.ndarray | None = None


def _chi_bounds(floor, y):
    scale = max(float(np.var(y)), float(np.max(np.abs(y))) ** 2, floor, 1.0)
    hi_var = math.log(1e12 * scale)
    lo = np.array([math.log(floor), -_LOG_BOUND, -_LOG_BOUND])
    hi = np.array([hi_var, hi_var, _LOG_BOUND])
    return lo, hi


def update_chi(mu, gamma, params, D, y, c0=1.0, qn_steps=10, floor=None, gtol=1e-9,
               hess_inv=None):
    """A few projected BFGS steps on ``(log nu, log theta0, log vartheta)``.

    Backtracking halves the step until the Armijo condition holds, so the
    loss never increases; if no step is accepted the parameters are
    returned unchanged.  ``log nu`` is bounded below by ``log(floor)``.
    `hess_inv` warm-starts the inverse-Hessian approximation, e.g. with the
    ``hess_inv`` of the previous outer pass.
    """
    y = np.asarray(y, dtype=float)
    D = np.asarray(D, dtype=float)
    if floor is None:
        floor = nu_floor(y)
    lo, hi = _chi_bounds(floor, y)
    params = KernelParams(max(params.nu, floor), params.theta0, max(params.vartheta, 1e-300))
    z = np.clip(params.as_log(), lo, hi)

    def state(zz):
        p = KernelParams.from_log(zz)
        cov = build_covariance_state(p, D)
        return p, cov, loss(mu, gamma, cov, y, c0)

    def log_grad(p, cov):
        return grad_loss(mu, gamma, cov, y, c0, D).chi() * np.array([p.nu, p.theta0, p.vartheta])

    p, cov, f = state(z)
    g = log_grad(p, cov)
    losses = [f]
    H = None if hess_inv is None else np.array(hess_inv, dtype=float)
    steps = 0
    for _ in range(qn_steps):
        at_lo = (z <= lo) & (g > 0)
        at_hi = (z >= hi) & (g < 0)
        free = ~(at_lo | at_hi)
        gf = np.where(free, g, 0.0)
        if np.max(np.abs(gf)) <= gtol * (1.0 + abs(f)):
            break
        p_dir = -gf if H is None else np.where(free, -(H @ gf), 0.0)
        if p_dir @ gf >= 0:
            H = None
            p_dir = -gf
        big = np.max(np.abs(p_dir))
        if big > _MAX_LOG_STEP:
            p_dir *= _MAX_LOG_STEP / big

        alpha = 1.0
        accepted = False
        for _ls in range(_MAX_BACKTRACK):
            z_new = np.clip(z + alpha * p_dir, lo, hi)
            step = z_new - z
            slope = float(g @ step)
            if slope < 0:
                try:
                    p_new, cov_new, f_new = state(z_new)
                except NumericalError:
                    f_new = math.inf
                if f_new <= f + _ARMIJO_C * slope:
                    accepted = True
                    break
            alpha *= _BACKTRACK
        if not accepted:
            break
        g_new = log_grad(p_new, cov_new)
        yv = g_new - g
        sy = float(step @ yv)
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(yv):
            if H is None:
                H = (sy / float(yv @ yv)) * np.eye(3)
            rho_k = 1.0 / sy
            I = np.eye(3)
            H = (I - rho_k * np.outer(step, yv)) @ H @ (I - rho_k * np.outer(yv, step)) \
                + rho_k * np.outer(step, step)
        z, p, cov, f, g = z_new, p_new, cov_new, f_new, g_new
        losses.append(f)
        steps += 1
    return ChiUpdate(p, cov, f, losses, steps, H)


# ---------------------------------------------------------------------------
# full fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FittedLocalModel:
    """Estimates for one neighborhood.

    ``loss_trace[t]`` is the loss after outer pass ``t`` (evaluated at the
    kernel covariance for the updated hyperparameters); ``support_trace[t]``
    is the largest support size seen during that pass's gamma iterations.
    """

    mu: float
    gamma: OutlyingnessVector
    params: KernelParams
    q_used: int
    c0: float
    loss_trace: np.ndarray
    support_trace: np.ndarray
    cov: CovarianceState = field(repr=False)
    neighborhood: object = field(repr=False)
    converged: bool = False
    inner_cap_hits: int = 0
    nu_floor: float = 0.0

    @property
    def outliers(self):
        """Positions (within the neighborhood) flagged by a nonzero shift."""
        return self.gamma.support

    @property
    def outlier_rows(self):
        """Global training-row indices of the flagged neighbors."""
        return np.asarray(self.neighborhood.indices)[self.gamma.support]


def fit(nb, config=None):
    """Fit the robust local model to neighborhood `nb`.

    Parameters
    ----------
    nb : Neighborhood
        Local data; ``nb.yn`` and ``nb.D`` are used.
    config : EstimatorConfig, optional
        Defaults to adaptive ``q`` with ``tau = 3``.

    Returns
    -------
    FittedLocalModel
    """
    if config is None:
        config = EstimatorConfig()
    y = np.asarray(nb.yn, dtype=float)
    n = y.size
    if n < 1:
        raise InvalidInputError("empty neighborhood")
    D = nb.D
    floor = nu_floor(y)
    q = resolve_q(y, config)
    c0 = 1.0 if config.c0_mode == "one" else (n - q) / n

    init = initialize(y, floor)
    mu, gamma = init.mu0, init.gamma0
    params = KernelParams(init.nu0, init.theta0_0, init.vartheta0)
    cov = covariance_from_matrix(init.S0 @ init.S0)

    trace, supports = [], []
    converged = False
    cap_hits = 0
    H = None
    for t in range(config.max_outer):
        try:
            upd = update_gamma(gamma, cov, mu, y, q, max_iter=config.max_inner_gamma,
                               tol=config.tol_gamma)
            gamma = upd.gamma
            cap_hits += not upd.converged
            supports.append(upd.max_support)
            mu = update_mu(cov, y, gamma)
            chi = update_chi(mu, gamma, params, D, y, c0, config.qn_steps, floor, hess_inv=H)
        except NumericalError as exc:
            raise NumericalError(str(exc), iteration=t, nu=params.nu, theta0=params.theta0,
                                 vartheta=params.vartheta, mu=mu) from exc
        params, cov, H = chi.params, chi.cov, chi.hess_inv
        trace.append(chi.loss)
        if t > 0:
            prev = trace[-2]
            if prev - trace[-1] <= config.tol_outer * max(abs(prev), 1e-300):
                converged = True
                break

    gamma_vec = OutlyingnessVector(gamma, upd.n_iter, upd.converged, max(supports))
    return FittedLocalModel(mu=mu, gamma=gamma_vec, params=params, q_used=q, c0=c0,
                            loss_trace=np.asarray(trace), support_trace=np.asarray(supports),
                            cov=cov, neighborhood=nb, converged=converged,
                            inner_cap_hits=cap_hits, nu_floor=floor)
