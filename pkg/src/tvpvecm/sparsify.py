"""Ex-post sparsification of posterior draws.

Penalties are signal adaptive (inverse squared magnitude of the draw) and
the data norms are taken over the full sample, never per period.  All
functions are vectorized over a leading time axis where that makes sense.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError

EIG_FLOOR = 1e-8


@dataclass
class SparseDraw:
    pi_star: np.ndarray | None  # T x M x q
    a_star: np.ndarray  # T x M x J
    prec_star: np.ndarray  # T x M x M
    rank: np.ndarray | None  # T
    phi: float | None = None
    n_projected: int = 0


def column_sq_norms(mat: np.ndarray) -> np.ndarray:
    """Squared Euclidean norms of the columns of a full-data matrix."""
    mat = np.asarray(mat, dtype=float)
    return np.einsum("tj,tj->j", mat, mat)


def savs_group_pi(pi_hat: np.ndarray, w_sq_norms: np.ndarray) -> np.ndarray:
    """Column-wise group soft threshold of ``Pi`` (M x q, or T x M x q).

    With ``n_j`` the column norm and penalty ``1/n_j^2`` the column is zeroed
    when ``1/(2 n_j^3) >= ||W_j||^2`` and otherwise scaled by
    ``1 - 1/(2 ||W_j||^2 n_j^3)``.
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    wn = np.asarray(w_sq_norms, dtype=float)
    n = np.sqrt(np.sum(pi_hat * pi_hat, axis=-2, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        kappa = 1.0 / n ** 2
        keep = (n > 0) & (kappa / (2.0 * n) < wn)
        factor = np.where(keep, 1.0 - kappa / (2.0 * wn * n), 0.0)
    return np.where(keep, pi_hat * factor, 0.0)


def noise_threshold(residuals: np.ndarray) -> float:
    """Largest singular value of the T x M residual matrix."""
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size == 0:
        return 0.0
    return float(np.linalg.norm(residuals, 2))


def singular_values(pi_star: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Singular values of ``W Pi*'`` computed from the Gram matrix ``W'W``.

    Works on M x q or T x M x q input; values sorted in decreasing order.
    """
    pi_star = np.asarray(pi_star, dtype=float)
    core = pi_star @ gram @ np.swapaxes(pi_star, -1, -2)
    core = 0.5 * (core + np.swapaxes(core, -1, -2))
    ev = np.linalg.eigvalsh(core)[..., ::-1]
    return np.sqrt(np.clip(ev, 0.0, None))


def estimate_rank(pi_star: np.ndarray, W: np.ndarray | None, phi: float, *,
                  gram: np.ndarray | None = None) -> np.ndarray | int:
    """Number of singular values of ``W Pi*'`` above the noise level ``phi``."""
    if gram is None:
        W = np.asarray(W, dtype=float)
        gram = W.T @ W
    s = singular_values(pi_star, gram)
    # values equal to zero in exact arithmetic may come back as ~1e-8 * s_max
    tiny = 1e-7 * np.max(s, axis=-1, keepdims=True)
    r = np.sum((s > phi) & (s > tiny), axis=-1)
    return int(r) if np.ndim(r) == 0 else r


def savs_lasso_a(a_hat: np.ndarray, x_sq_norms: np.ndarray) -> np.ndarray:
    """Element-wise SAVS soft threshold with penalty ``1/a^2``.

    ``x_sq_norms`` must broadcast against ``a_hat``.  Elements with
    ``1/|a|^3 >= ||X_j||^2`` become exactly zero; others are scaled by
    ``1 - 1/(||X_j||^2 |a|^3)``.
    """
    a = np.asarray(a_hat, dtype=float)
    xn = np.asarray(x_sq_norms, dtype=float)
    absa = np.abs(a)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        delta = 1.0 / absa ** 2
        keep = (absa > 0) & (delta / absa < xn)
        factor = np.where(keep, 1.0 - delta / (xn * absa), 0.0)
    return np.where(keep, a * factor, 0.0)


def glasso_penalties(prec: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        lam = 1.0 / np.sqrt(np.abs(prec))
    np.fill_diagonal(lam, 0.0)
    return lam


def _prepare(S: np.ndarray):
    """Checks and Cholesky-based inverse for one matrix or a stack."""
    if S.ndim < 2 or S.shape[-1] != S.shape[-2]:
        raise ContractError("covariance must be square")
    scale = np.abs(S).max(axis=(-2, -1), keepdims=True)
    if not np.all(np.abs(S - np.swapaxes(S, -1, -2)) <= 1e-12 * scale + 1e-10 * np.abs(S)):
        raise ContractError("covariance must be symmetric")
    try:
        Lc = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ContractError("covariance is not positive definite") from None
    Linv = np.linalg.inv(Lc)
    return np.swapaxes(Linv, -1, -2) @ Linv


def _finish(theta: np.ndarray):
    """Symmetrize keeping zeros and floor eigenvalues where needed."""
    sym = 0.5 * (theta + np.swapaxes(theta, -1, -2))
    sym[(theta == 0) | (np.swapaxes(theta, -1, -2) == 0)] = 0.0
    ev, evec = np.linalg.eigh(sym)
    floor = EIG_FLOOR * np.abs(ev).max(axis=-1, keepdims=True)
    bad = ev.min(axis=-1) < floor[..., 0]
    if np.any(bad):
        fixed = (evec[bad] * np.maximum(ev[bad], floor[bad])[:, None, :]) @ np.swapaxes(evec[bad], -1, -2)
        sym[bad] = 0.5 * (fixed + np.swapaxes(fixed, -1, -2))
    return sym, bad


def glasso_one_pass(sigma_hat: np.ndarray, *, penalties: np.ndarray | None = None,
                    converge: bool = False, max_iter: int = 200, tol: float = 1e-10,
                    return_info: bool = False):
    """Sparse precision matrix from one graphical-lasso cycle.

    Penalties default to ``|sigma^{-1}_ij|^{-1/2}`` off the diagonal (zero on
    it).  The working covariance starts at ``sigma_hat`` and each column's
    lasso coefficients start from the unpenalized inverse; one cycle over the
    columns with one coordinate sweep each is run (``converge=True`` iterates
    to a fixed point instead).  The result is symmetrized (an entry zeroed in
    either triangle stays zero) and projected to positive definiteness by
    eigenvalue flooring only when needed.

    ``sigma_hat`` may also be a T x M x M stack; ``penalties`` then must
    broadcast against it and the projection flag is returned per matrix.
    """
    S = np.asarray(sigma_hat, dtype=float)
    prec = _prepare(S)
    if penalties is None:
        with np.errstate(divide="ignore"):
            lam = 1.0 / np.sqrt(np.abs(prec))
        idx = np.arange(S.shape[-1])
        lam[..., idx, idx] = 0.0
    else:
        lam = np.broadcast_to(np.asarray(penalties, dtype=float), S.shape)
    n_outer, n_tol = (max_iter, tol) if converge else (1, 0.0)
    stack = S.ndim == 3
    S3 = S if stack else S[None]
    theta = _kernels.glasso_cd_batch(np.ascontiguousarray(S3), np.ascontiguousarray(lam).reshape(S3.shape),
                                     np.ascontiguousarray(prec).reshape(S3.shape), n_outer, 1, n_tol)
    theta, bad = _finish(theta)
    if not stack:
        theta, bad = theta[0], bool(bad[0])
    if return_info:
        return theta, bad
    return theta


def sparsify_draw(pi_hat: np.ndarray | None, a_hat: np.ndarray, sigma_hat: np.ndarray, *,
                  w_sq_norms: np.ndarray | None, x_sq_norms: np.ndarray,
                  gram: np.ndarray | None, phi: float | None,
                  glasso_converge: bool = False) -> SparseDraw:
    """Sparsify every period of one posterior draw.

    ``pi_hat`` is T x M x q (``None`` for models without a long-run block),
    ``a_hat`` T x M x J and ``sigma_hat`` T x M x M.
    """
    a_star = savs_lasso_a(a_hat, x_sq_norms)
    prec_star, proj = glasso_one_pass(sigma_hat, converge=glasso_converge, return_info=True)
    n_proj = int(proj.sum())
    if pi_hat is None:
        return SparseDraw(None, a_star, prec_star, None, phi, n_proj)
    pi_star = savs_group_pi(pi_hat, w_sq_norms)
    rank = estimate_rank(pi_star, None, phi, gram=gram)
    return SparseDraw(pi_star, a_star, prec_star, np.asarray(rank), phi, n_proj)


def pip(draws: np.ndarray) -> np.ndarray:
    """Share of draws (leading axis) in which each entry is non-zero."""
    draws = np.asarray(draws)
    if draws.shape[0] == 0:
        raise ContractError("no draws to summarize")
    return np.mean(draws != 0, axis=0)


def rank_probabilities(ranks: np.ndarray, max_rank: int) -> np.ndarray:
    """PPR matrix (T x (max_rank + 1)) from S x T rank draws."""
    ranks = np.asarray(ranks)
    if ranks.shape[0] == 0:
        raise ContractError("no draws to summarize")
    out = np.stack([np.mean(ranks == r, axis=0) for r in range(max_rank + 1)], axis=-1)
    return out
