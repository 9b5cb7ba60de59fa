"""Stochastic volatility for one equation, optionally with Student-t errors.

The log-variance follows ``logh_t = mu + phi (logh_{t-1} - mu) + sigma xi_t``.
Given residuals the path is drawn with the ten-component normal mixture
approximation of ``log chi^2_1`` and a scalar FFBS pass; ``mu`` is a
conjugate normal draw, ``sigma^2`` an exact generalized-inverse-Gaussian draw
(half-normal prior on ``sigma``) and ``phi`` an independence Metropolis step
under the shifted Beta prior.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from . import _kernels
from .errors import ContractError

# Ten-component normal mixture approximation of log chi^2_1 (published constants).
MIX_WEIGHTS = np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                        0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
MIX_MEANS = np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
                      -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
MIX_VARS = np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                     0.98583, 1.57469, 2.54498, 4.16591, 7.33342])

MU_PRIOR_VAR = 100.0
PHI_PRIOR = (5.0, 1.5)
NU_BOUNDS = (2.0, 30.0)


@dataclass
class VolState:
    logh: np.ndarray
    mu: float = 0.0
    phi: float = 0.9
    sigma: float = 0.3
    h0: float = 0.0
    tau: np.ndarray | None = None
    nu: float | None = None
    nu_step: float = 0.5
    phi_rejections: int = 0
    nu_accepts: int = field(default=0)
    nu_proposals: int = field(default=0)

    def __post_init__(self):
        self.logh = np.asarray(self.logh, dtype=float)
        if (self.tau is None) != (self.nu is None):
            raise ContractError("tau and nu must be given together")
        if not abs(self.phi) < 1:
            raise ContractError("|phi| must be below one")
        if not self.sigma > 0:
            raise ContractError("sigma must be positive")
        if self.nu is not None and not self.nu > 2:
            raise ContractError("nu must exceed 2")

    @classmethod
    def initial(cls, residuals: np.ndarray, student_t: bool = False, nu: float = 10.0):
        r = np.asarray(residuals, dtype=float)
        lv = float(np.log(np.var(r) + 1e-12)) if r.size > 1 else 0.0
        tau = np.ones(r.shape[0]) if student_t else None
        return cls(np.full(r.shape[0], lv), mu=lv, phi=0.9, sigma=0.3, h0=lv,
                   tau=tau, nu=nu if student_t else None)

    @property
    def h(self) -> np.ndarray:
        return np.exp(self.logh)

    def copy(self) -> "VolState":
        return VolState(self.logh.copy(), self.mu, self.phi, self.sigma, self.h0,
                        None if self.tau is None else self.tau.copy(), self.nu, self.nu_step,
                        self.phi_rejections, self.nu_accepts, self.nu_proposals)


def sample_indicators(ystar: np.ndarray, logh: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Mixture component for each period given the current log-variances."""
    resid = ystar[:, None] - logh[:, None] - MIX_MEANS[None, :]
    logp = np.log(MIX_WEIGHTS) - 0.5 * np.log(MIX_VARS) - 0.5 * resid ** 2 / MIX_VARS
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(ystar.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), len(MIX_WEIGHTS) - 1)


def _log_phi_target(phi, h0, mu, sig2):
    a, b = PHI_PRIOR
    x = (phi + 1.0) / 2.0
    prior = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x)
    init = 0.5 * np.log1p(-phi * phi) - 0.5 * (1 - phi * phi) * (h0 - mu) ** 2 / sig2
    return prior + init


def draw_phi(path: np.ndarray, mu: float, phi: float, sig2: float, rng, max_tries: int = 50):
    """Independence Metropolis step for the persistence.

    The proposal is the truncated normal implied by the AR(1) regression
    terms; the acceptance ratio then only involves the Beta prior and the
    stationary density of the initial state.  Returns ``(phi, n_rejected)``.
    """
    xc = path - mu
    lag, cur = xc[:-1], xc[1:]
    ss = float(lag @ lag)
    if ss <= 0:
        return phi, 0
    mean = float(lag @ cur) / ss
    sd = np.sqrt(sig2 / ss)
    rejected = 0
    for _ in range(max_tries):
        prop = mean + sd * rng.standard_normal()
        if abs(prop) < 1:
            break
        rejected += 1
    else:
        return phi, rejected
    logr = _log_phi_target(prop, path[0], mu, sig2) - _log_phi_target(phi, path[0], mu, sig2)
    if np.log(rng.random()) < logr:
        return prop, rejected
    return phi, rejected


def draw_sigma2(path: np.ndarray, mu: float, phi: float, rng) -> float:
    """Exact draw of the innovation variance under sigma ~ N(0, 1).

    The half-normal prior makes sigma^2 ~ Gamma(1/2, rate 1/2); combined with
    the T + 1 Gaussian transition terms the conditional is GIG(-T/2, 1, S).
    """
    xc = path - mu
    S = (1 - phi * phi) * xc[0] ** 2 + float(np.sum((xc[1:] - phi * xc[:-1]) ** 2))
    T = path.shape[0] - 1
    p = 0.5 - (T + 1) / 2.0
    S = max(S, 1e-300)
    y = stats.geninvgauss.rvs(p, np.sqrt(S), random_state=rng)
    return float(np.sqrt(S) * y)


def draw_mu(path: np.ndarray, phi: float, sig2: float, rng) -> float:
    T = path.shape[0] - 1
    prec = 1.0 / MU_PRIOR_VAR + (1 - phi * phi) / sig2 + T * (1 - phi) ** 2 / sig2
    num = (1 - phi * phi) * path[0] / sig2 + (1 - phi) * float(np.sum(path[1:] - phi * path[:-1])) / sig2
    return num / prec + rng.standard_normal() / np.sqrt(prec)


def draw_volatility(residuals: np.ndarray, vol: VolState, rng: np.random.Generator, *,
                    update_params: bool = True, likelihood: bool = True) -> VolState:
    """One Gibbs pass over the log-variance path and its AR(1) parameters.

    ``residuals`` must already be divided by ``sqrt(tau)`` under t-errors.
    Updates ``vol`` in place and returns it.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.shape[0] == 0:
        raise ContractError("need a non-empty residual vector")
    if r.shape[0] != vol.logh.shape[0]:
        raise ContractError("residual length differs from the volatility path")
    T = r.shape[0]
    sig2 = vol.sigma ** 2
    if likelihood:
        e2 = r * r
        offset = 1e-10 * max(float(np.mean(e2)), 1e-300)
        ystar = np.log(e2 + offset)
        s = sample_indicators(ystar, vol.logh, rng)
        obs = ystar - MIX_MEANS[s]
        ov = MIX_VARS[s]
    else:
        obs = np.zeros(T)
        ov = np.full(T, np.inf)
    path = _kernels.ffbs_ar1(obs, ov, vol.mu, vol.phi, sig2, rng.standard_normal(T + 1))
    if update_params:
        vol.phi, rej = draw_phi(path, vol.mu, vol.phi, sig2, rng)
        vol.phi_rejections += rej
        sig2 = draw_sigma2(path, vol.mu, vol.phi, rng)
        vol.sigma = float(np.sqrt(sig2))
        vol.mu = draw_mu(path, vol.phi, sig2, rng)
    vol.h0 = float(path[0])
    vol.logh = path[1:]
    return vol


def draw_tau(residuals: np.ndarray, logh: np.ndarray, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Auxiliary scales: ``tau_t ~ IG((nu + 1)/2, (nu + eta_t^2/h_t)/2)``."""
    if not nu > 2:
        raise ContractError("nu must exceed 2")
    r = np.asarray(residuals, dtype=float)
    rate = 0.5 * (nu + r * r * np.exp(-np.asarray(logh)))
    tau = rate / rng.gamma(0.5 * (nu + 1.0), 1.0, size=r.shape[0])
    return np.clip(tau, 1e-12, 1e12)


def nu_loglik(nu: float, tau: np.ndarray, sum_log_tau: float | None = None,
              sum_inv_tau: float | None = None) -> float:
    """Log density of the scales under IG(nu/2, nu/2), as a function of nu."""
    n = tau.shape[0]
    if sum_log_tau is None:
        sum_log_tau = float(np.sum(np.log(tau)))
    if sum_inv_tau is None:
        sum_inv_tau = float(np.sum(1.0 / tau))
    half = 0.5 * nu
    return (n * (half * np.log(half) - special.gammaln(half))
            - (half + 1.0) * sum_log_tau - half * sum_inv_tau)


def draw_nu(tau: np.ndarray, nu_current: float, rng: np.random.Generator, *, step: float = 0.5,
            bounds: tuple[float, float] = NU_BOUNDS) -> tuple[float, bool]:
    """Random-walk Metropolis on ``log(nu - 2)`` under a uniform prior on ``bounds``.

    Returns ``(nu, accepted)``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ContractError("scales must be positive")
    if step == 0:
        return nu_current, True
    lo, hi = bounds
    slt, sit = float(np.sum(np.log(tau))), float(np.sum(1.0 / tau))
    u = np.log(nu_current - 2.0)
    u_prop = u + step * rng.standard_normal()
    nu_prop = 2.0 + np.exp(u_prop)
    if not (lo < nu_prop < hi):
        return nu_current, False
    logr = (nu_loglik(nu_prop, tau, slt, sit) + u_prop) - (nu_loglik(nu_current, tau, slt, sit) + u)
    if np.log(rng.random()) < logr:
        return float(nu_prop), True
    return nu_current, False


def adapt_step(step: float, accept_rate: float, target=(0.25, 0.40), factor: float = 1.1) -> float:
    """Nudge the proposal scale toward the target acceptance band."""
    if accept_rate < target[0]:
        return step / factor
    if accept_rate > target[1]:
        return step * factor
    return step


def propagate_logh(logh_last, mu, phi, sigma, steps: int, rng, size=None):
    """Simulate ``steps`` AR(1) transitions forward from ``logh_last``."""
    x = np.asarray(logh_last, dtype=float)
    for _ in range(steps):
        x = mu + phi * (x - mu) + sigma * rng.standard_normal(size if size is not None else x.shape)
    return x
