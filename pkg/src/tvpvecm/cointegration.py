"""Long-run matrix: conditional draw, semi-orthogonal normalization and the
assembly of ``Pi_t = alpha_t beta'``.

``beta`` is q x r (r = q for the unrestricted model, r = rbar for a fixed
rank) and ``alpha_t`` is M x r.  The draw is done for ``B = beta'`` in
column-major vec order, which is the order produced by ``kron(w_t', G_t)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ContractError, NumericalError

SINGULAR_EIG = 1e-12


@dataclass
class CointState:
    beta: np.ndarray
    alpha_paths: np.ndarray | None = None
    s0: float = 0.1
    n_skipped: int = 0

    @property
    def q(self) -> int:
        return self.beta.shape[0]

    @property
    def r(self) -> int:
        return self.beta.shape[1]


def whitening(linv: np.ndarray, var: np.ndarray) -> np.ndarray:
    """Per-t inverse square roots ``H_t^{-1/2} L_t^{-1}`` (T x M x M).

    ``linv`` holds the unit lower-triangular ``L_t^{-1}``, ``var`` the T x M
    diagonal of ``H_t`` (times the t-error scales when present).
    """
    if np.any(~(var > 0)):
        bad = int(np.argwhere(~(var > 0))[0, 0])
        raise NumericalError("error covariance is not positive definite", stage="beta", t=bad)
    return linv / np.sqrt(var)[:, :, None]


def beta_posterior(dy: np.ndarray, ax: np.ndarray, w: np.ndarray, alpha_paths: np.ndarray,
                   sinvhalf: np.ndarray, s0: float):
    """Precision and right-hand side of the conditional for ``vec(beta')``.

    Accumulates sum_t x_t' x_t and sum_t x_t' y_t with
    ``x_t = kron(w_t', S_t alpha_t)`` and ``y_t = S_t (dy_t - A_t x_t)``
    without forming the stacked design.
    """
    T, q = w.shape
    r = alpha_paths.shape[2]
    G = np.einsum("tij,tjk->tik", sinvhalf, alpha_paths)  # T x M x r
    ytil = np.einsum("tij,tj->ti", sinvhalf, dy - ax)  # T x M
    GtG = np.einsum("tmi,tmj->tij", G, G)  # T x r x r
    prec = np.einsum("ta,tb,tij->aibj", w, w, GtG).reshape(q * r, q * r)
    rhs = np.einsum("ta,tmi,tm->ai", w, G, ytil).reshape(q * r)
    prec = prec + np.eye(q * r) / s0
    return prec, rhs


def draw_beta(dy, ax, w, alpha_paths, sinvhalf, s0: float, rng: np.random.Generator,
              likelihood: bool = True) -> np.ndarray:
    """Draw the (unnormalized) long-run matrix ``beta`` (q x r).

    ``ax`` is the T x M matrix of ``A_t x_t`` (lagged differences and
    deterministic terms), ``sinvhalf`` the per-t whitening matrices.
    """
    T, q = w.shape
    r = alpha_paths.shape[2]
    if likelihood:
        prec, rhs = beta_posterior(dy, ax, w, alpha_paths, sinvhalf, s0)
    else:
        prec, rhs = np.eye(q * r) / s0, np.zeros(q * r)
    try:
        L = linalg.cholesky(prec, lower=True, check_finite=False)
    except linalg.LinAlgError:
        scale = float(np.mean(np.diag(prec)))
        for jit in (1e-10, 1e-8, 1e-6):
            try:
                L = linalg.cholesky(prec + jit * scale * np.eye(q * r), lower=True, check_finite=False)
                break
            except linalg.LinAlgError:
                continue
        else:
            raise NumericalError("long-run precision not positive definite", stage="beta")
    mean = linalg.cho_solve((L, True), rhs, check_finite=False)
    draw = mean + linalg.solve_triangular(L, rng.standard_normal(q * r), lower=True, trans="T",
                                          check_finite=False)
    Bt = draw.reshape((r, q), order="F")
    return Bt.T.copy()


def normalize(beta_raw: np.ndarray, alpha_paths: np.ndarray | None = None):
    """Map ``(alpha, beta)`` to the pair with ``beta' beta = I``.

    With ``zeta = (beta' beta)^{-1/2}`` returns ``(beta zeta, alpha zeta^{-1})``,
    which leaves every ``alpha_t beta'`` unchanged.  When ``beta' beta`` is
    numerically singular the inputs are returned unchanged and the third
    element of the result is ``False``.
    """
    beta_raw = np.asarray(beta_raw, dtype=float)
    gram = beta_raw.T @ beta_raw
    evals, evecs = np.linalg.eigh(gram)
    if evals.min() < SINGULAR_EIG:
        return beta_raw, alpha_paths, False
    zeta = (evecs / np.sqrt(evals)) @ evecs.T
    zeta_inv = (evecs * np.sqrt(evals)) @ evecs.T
    beta = beta_raw @ zeta
    alpha = None if alpha_paths is None else np.asarray(alpha_paths) @ zeta_inv
    return beta, alpha, True


def assemble_pi(alpha_paths: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """``Pi_t = alpha_t beta'`` for every t (T x M x q)."""
    alpha_paths = np.asarray(alpha_paths, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha_paths.shape[-1] != beta.shape[1]:
        raise ContractError("alpha and beta disagree on the number of relations")
    return alpha_paths @ beta.T
