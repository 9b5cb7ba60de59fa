"""Equation-level state-space machinery in the non-centered form.

For one equation with regressors ``Z_t`` (length K) the coefficients are
``b_t = b0 + sqrt_theta * btilde_t`` where ``btilde`` is a standard random
walk started at zero.  ``b0`` and ``sqrt_theta`` are drawn jointly as one
Gaussian regression block; ``btilde`` is drawn by forward filtering backward
sampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import _kernels
from .errors import ContractError, NumericalError
from .shrinkage import HorseshoeState, prior_variance

PRECISION_JITTER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass
class EquationData:
    """Response, regressors and observation variances of one equation."""

    ylocal: np.ndarray
    Z: np.ndarray
    h: np.ndarray
    tau: np.ndarray | None = None

    def __post_init__(self):
        self.ylocal = np.asarray(self.ylocal, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float).reshape(self.ylocal.shape[0], -1)
        self.h = np.broadcast_to(np.asarray(self.h, dtype=float), self.ylocal.shape)
        if np.any(self.h <= 0):
            raise ContractError("observation variances must be positive")
        if self.tau is not None:
            self.tau = np.broadcast_to(np.asarray(self.tau, dtype=float), self.ylocal.shape)
            if np.any(self.tau <= 0):
                raise ContractError("auxiliary scales must be positive")

    @property
    def T(self) -> int:
        return self.ylocal.shape[0]

    @property
    def K(self) -> int:
        return self.Z.shape[1]

    @property
    def variance(self) -> np.ndarray:
        return self.h if self.tau is None else self.h * self.tau


@dataclass
class EquationState:
    b0: np.ndarray
    sqrt_theta: np.ndarray
    btilde: np.ndarray
    hs: HorseshoeState

    @classmethod
    def initial(cls, K: int, T: int, tvp: bool = True, sqrt_theta0: float = 0.01):
        st = np.full(K, sqrt_theta0 if tvp else 0.0)
        return cls(np.zeros(K), st, np.zeros((T, K)),
                   HorseshoeState.initial(K, K if tvp else 0))

    @property
    def K(self) -> int:
        return self.b0.shape[0]

    @property
    def bhat(self) -> np.ndarray:
        return np.r_[self.b0, self.sqrt_theta]

    def coefficients(self) -> np.ndarray:
        """T x K coefficient paths ``b0 + sqrt_theta * btilde_t``."""
        return self.b0 + self.sqrt_theta * self.btilde

    def fitted(self, Z: np.ndarray) -> np.ndarray:
        return np.einsum("tk,tk->t", self.coefficients(), Z)


def augmented_regressors(Z: np.ndarray, btilde: np.ndarray | None) -> np.ndarray:
    """Regressors of the stacked (b0, sqrt_theta) block: ``[Z, Z * btilde]``."""
    if btilde is None:
        return Z
    return np.hstack([Z, Z * btilde])


def _factor_precision(Q: np.ndarray, equation=None) -> np.ndarray:
    scale = float(np.mean(np.abs(np.diag(Q)))) or 1.0
    eye = np.eye(Q.shape[0])
    for jit in PRECISION_JITTER:
        try:
            return linalg.cholesky(Q + jit * scale * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    raise NumericalError("posterior precision is not positive definite",
                         stage="constant_scales", equation=equation)


def gaussian_posterior(Zh: np.ndarray, yh: np.ndarray, prior_var: np.ndarray, equation=None):
    """Cholesky factor of the precision and the mean of the conjugate posterior."""
    prior_prec = np.where(np.isinf(prior_var), 0.0, 1.0 / prior_var)
    Q = Zh.T @ Zh + np.diag(prior_prec)
    L = _factor_precision(Q, equation)
    mean = linalg.cho_solve((L, True), Zh.T @ yh, check_finite=False)
    return L, mean


def draw_constant_scales(eq: EquationData, btilde: np.ndarray | None, hs: HorseshoeState | None,
                         rng: np.random.Generator, *, prior_var: np.ndarray | float | None = None,
                         likelihood: bool = True, equation=None) -> np.ndarray:
    """Joint Gaussian draw of the constant coefficients and scale roots.

    With ``btilde=None`` only the constant coefficients are drawn (K-vector,
    the time-invariant case); otherwise a 2K-vector ``(b0, sqrt_theta)``.
    ``prior_var`` overrides the horseshoe prior variances (``inf`` = flat).
    """
    Zt = augmented_regressors(eq.Z, btilde)
    n = Zt.shape[1]
    if prior_var is None:
        if hs is None:
            raise ContractError("need a horseshoe state or explicit prior variances")
        pv = prior_variance(hs)
    else:
        pv = np.broadcast_to(np.asarray(prior_var, dtype=float), (n,))
    if pv.shape[0] != n:
        raise ContractError(f"prior has {pv.shape[0]} variances for {n} coefficients")
    if likelihood:
        s = 1.0 / np.sqrt(eq.variance)
        Zh = Zt * s[:, None]
        yh = eq.ylocal * s
    else:
        Zh = np.zeros((0, n))
        yh = np.zeros(0)
    L, mean = gaussian_posterior(Zh, yh, pv, equation)
    z = rng.standard_normal(n)
    return mean + linalg.solve_triangular(L, z, lower=True, trans="T", check_finite=False)


def ffbs_states(eq: EquationData, bhat: np.ndarray, rng: np.random.Generator, *,
                likelihood: bool = True, equation=None) -> np.ndarray:
    """Draw the normalized state paths (T x K) given ``bhat = (b0, sqrt_theta)``."""
    K = eq.K
    bhat = np.asarray(bhat, dtype=float)
    if bhat.shape[0] != 2 * K:
        raise ContractError(f"expected {2 * K} constant/scale coefficients, got {bhat.shape[0]}")
    b0, st = bhat[:K], bhat[K:]
    z = rng.standard_normal((eq.T, K))
    if not likelihood:
        return np.cumsum(z, axis=0)
    offset = eq.Z @ b0
    load = eq.Z * st
    m, P = _kernels.kalman_filter_rw(eq.ylocal, offset, np.ascontiguousarray(load),
                                     np.ascontiguousarray(eq.variance, dtype=float))
    states, bad = _kernels.backward_sample_rw(m, P, z)
    if bad >= 0:
        raise NumericalError("smoothing covariance lost positive definiteness",
                             stage="ffbs", equation=equation, t=int(bad))
    if not np.all(np.isfinite(states)):
        raise NumericalError("non-finite state draw", stage="ffbs", equation=equation)
    return states


def kalman_filter(eq: EquationData, bhat: np.ndarray):
    """Filtered means and covariances used by :func:`ffbs_states` (for checks)."""
    K = eq.K
    b0, st = np.asarray(bhat[:K]), np.asarray(bhat[K:])
    return _kernels.kalman_filter_rw(eq.ylocal, eq.Z @ b0, np.ascontiguousarray(eq.Z * st),
                                     np.ascontiguousarray(eq.variance, dtype=float))
