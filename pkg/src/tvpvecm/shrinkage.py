"""Horseshoe prior on the stacked vector of constant coefficients and state
scale roots of one equation, written with inverse-gamma auxiliaries.

Hierarchy (group ``k`` is 0 for constant coefficients, 1 for scale roots)::

    bhat_j | psi_j, varrho_k ~ N(0, psi_j * varrho_k)
    psi_j  | rho_j   ~ IG(1/2, 1/rho_j),     rho_j   ~ IG(1/2, 1)
    varrho_k | varpi_k ~ IG(1/2, 1/varpi_k), varpi_k ~ IG(1/2, 1)

``psi`` is the local variance and ``rho`` its auxiliary.  The local-variance
conditional is IG(1, 1/rho + bhat^2 / (2 varrho)) and the auxiliary
conditional IG(1, 1 + 1/psi); the textbook auxiliary-variable sampler for the
horseshoe.  Some write-ups of this sampler swap the labels of the two draws;
the conditionals here are the ones that leave the horseshoe marginal intact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

FLOOR = 1e-12
CEIL = 1e12


def inv_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Draw from IG(shape, rate) (density proportional to x^(-shape-1) exp(-rate/x)).

    Without ``size`` one variate is drawn per element of the broadcast inputs.
    """
    if size is None:
        size = np.broadcast(np.asarray(shape), np.asarray(rate)).shape
    return np.asarray(rate) / rng.gamma(shape, 1.0, size=size)


@dataclass
class HorseshoeState:
    psi: np.ndarray
    rho: np.ndarray
    varrho: np.ndarray  # (2,) global variances for groups (b, theta)
    varpi: np.ndarray  # (2,) their auxiliaries
    group: np.ndarray  # int array in {0, 1}, one entry per coefficient
    n_clamped: int = field(default=0)

    @classmethod
    def initial(cls, n_const: int, n_scale: int) -> "HorseshoeState":
        n = n_const + n_scale
        group = np.r_[np.zeros(n_const, dtype=int), np.ones(n_scale, dtype=int)]
        return cls(np.ones(n), np.ones(n), np.ones(2), np.ones(2), group)

    @classmethod
    def from_prior(cls, n_const: int, n_scale: int, rng: np.random.Generator) -> "HorseshoeState":
        hs = cls.initial(n_const, n_scale)
        n = n_const + n_scale
        hs.rho = inv_gamma(0.5, 1.0, rng, n)
        hs.psi = inv_gamma(0.5, 1.0 / hs.rho, rng, n)
        hs.varpi = inv_gamma(0.5, 1.0, rng, 2)
        hs.varrho = inv_gamma(0.5, 1.0 / hs.varpi, rng, 2)
        return hs

    @property
    def size(self) -> int:
        return self.psi.shape[0]

    def copy(self) -> "HorseshoeState":
        return HorseshoeState(self.psi.copy(), self.rho.copy(), self.varrho.copy(),
                              self.varpi.copy(), self.group.copy(), self.n_clamped)


def prior_variance(hs: HorseshoeState) -> np.ndarray:
    """Prior variances ``varrho_k * psi_j`` of the stacked coefficient vector."""
    return hs.varrho[hs.group] * hs.psi


def _clamp(hs: HorseshoeState, x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x) | np.isinf(x)):
        raise NumericalError(f"NaN in horseshoe {what} draw", stage="shrinkage")
    out = np.clip(x, FLOOR, CEIL)
    hs.n_clamped += int(np.count_nonzero(out != x))
    return out


def local_rate(hs: HorseshoeState, bhat: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # huge coefficients give an infinite rate; clamped later
        return 1.0 / hs.rho + np.asarray(bhat) ** 2 / (2.0 * hs.varrho[hs.group])


def update_local(hs: HorseshoeState, bhat: np.ndarray, rng: np.random.Generator):
    """Redraw local variances ``psi`` and their auxiliaries ``rho`` in place.

    Returns ``(psi, rho)``.
    """
    bhat = np.asarray(bhat, dtype=float)
    if not np.all(np.isfinite(bhat)):
        raise NumericalError("non-finite coefficients entering the horseshoe update",
                             stage="shrinkage")
    hs.psi = _clamp(hs, inv_gamma(1.0, local_rate(hs, bhat), rng), "local")
    hs.rho = _clamp(hs, inv_gamma(1.0, 1.0 + 1.0 / hs.psi, rng), "local auxiliary")
    return hs.psi, hs.rho


def global_params(hs: HorseshoeState, bhat: np.ndarray, k: int) -> tuple[float, float]:
    """Shape and rate of the global-variance conditional for group ``k``."""
    mask = hs.group == k
    n = int(mask.sum())
    shape = (n + 1) / 2.0
    with np.errstate(over="ignore"):
        rate = 1.0 / hs.varpi[k] + 0.5 * float(np.sum(np.asarray(bhat)[mask] ** 2 / hs.psi[mask]))
    return shape, rate


def update_global(hs: HorseshoeState, bhat: np.ndarray, rng: np.random.Generator):
    """Redraw both group-global variances and their auxiliaries in place."""
    bhat = np.asarray(bhat, dtype=float)
    for k in (0, 1):
        shape, rate = global_params(hs, bhat, k)
        hs.varrho[k] = _clamp(hs, inv_gamma(shape, rate, rng), "global")
        hs.varpi[k] = _clamp(hs, inv_gamma(1.0, 1.0 + 1.0 / hs.varrho[k], rng), "global auxiliary")
    return hs.varrho, hs.varpi
