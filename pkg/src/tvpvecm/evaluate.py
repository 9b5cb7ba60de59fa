"""Predictive simulation, forecast scoring and model comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import Design
from .errors import ContractError
from .sampler import DrawArchive, ModelConfig, assemble, build_problem, run_mcmc
from .sparsify import glasso_one_pass, savs_group_pi, savs_lasso_a


def _check_origin(archive: DrawArchive, design: Design, row: int) -> int:
    """Number of periods between the end of the archive sample and ``row``."""
    if not 0 < row < design.T:
        raise ContractError(f"forecast row {row} outside the design (T={design.T})")
    stamps = archive.meta.get("timestamps")
    if stamps is None:
        return 1
    last = pd.Timestamp(stamps[-1])
    matches = np.flatnonzero(design.timestamps == last)
    if matches.size == 0:
        raise ContractError("archive window does not belong to this design")
    steps = row - int(matches[0])
    if steps < 1:
        raise ContractError("forecast row must lie after the archive window")
    return steps


def _ldl(sigma: np.ndarray):
    """Unit lower-triangular L and diagonal d with ``sigma = L diag(d) L'``."""
    C = np.linalg.cholesky(sigma)
    diag = np.diagonal(C, axis1=-2, axis2=-1)
    return C / diag[..., None, :], diag ** 2


def predict_one_step(archive: DrawArchive, design: Design, row: int, rng: np.random.Generator, *,
                     sparse: bool | None = None) -> np.ndarray:
    """Simulate the predictive distribution of the levels at design row ``row``.

    The archive must come from a window ending before ``row``; with a gap of
    ``k`` periods the states and log-variances are propagated ``k`` steps
    while the regressors of ``row`` (lagged data only) are taken as observed.
    Returns an S x M array, one simulated level vector per retained draw.
    ``sparse`` defaults to the archive's own setting.
    """
    steps = _check_origin(archive, design, row)
    lay = archive.layout
    cfg = archive.config
    sparse = archive.sparse if sparse is None else sparse
    if sparse and lay.r == 0:
        raise ContractError("sparsified forecasts need a long-run block")
    prob = build_problem(cfg, design.rows(row, row + 1))
    X = prob.X[0]
    w = None if prob.W is None else prob.W[0]
    S, M, T = archive.n_draws, lay.M, archive.T
    # coefficient paths one step ahead: b_{T+k} = b_T + sqrt(k) sqrt_theta * N(0, 1)
    coefs = []
    for i in range(M):
        b = archive.b_last[i]
        st = archive.sqrt_theta[i]
        coefs.append(b + math.sqrt(steps) * st * rng.standard_normal(b.shape))
    # the leading axis of assemble() indexes draws here
    alpha, A, linv = assemble(lay, coefs)
    mu, phi, sig = archive.sv[:, :, 0], archive.sv[:, :, 1], archive.sv[:, :, 2]
    logh = archive.logh[:, -1, :]
    for _ in range(steps):
        logh = mu + phi * (logh - mu) + sig * rng.standard_normal((S, M))
    h = np.exp(logh)
    if cfg.student_t:
        nu = archive.nu
        tau = (nu / 2.0) / rng.gamma(nu / 2.0, 1.0, (S, M))
    else:
        tau = np.ones((S, M))
    a_use = savs_lasso_a(A, archive.x_sq_norms) if sparse else A
    mean = np.einsum("sij,j->si", a_use, X)
    if lay.r:
        pi = np.einsum("smr,sqr->smq", alpha, archive.beta_raw)
        if sparse:
            pi = savs_group_pi(pi, archive.w_sq_norms)
        mean = mean + np.einsum("sij,j->si", pi, w)
    if sparse:
        L = np.linalg.inv(linv)
        sigma = np.einsum("sij,sj,skj->sik", L, h, L)
        prec = glasso_one_pass(sigma, converge=cfg.glasso_converge)
        L, h = _ldl(np.linalg.inv(prec))
    else:
        L = np.linalg.inv(linv)
    eta = rng.standard_normal((S, M)) * np.sqrt(h * tau)
    out = mean + np.einsum("sij,sj->si", L, eta)
    if lay.target == "diff":
        out = out + design.y_prev[row]
    return out


def point_forecast(ensemble: np.ndarray, functional: str = "median") -> np.ndarray:
    if functional == "median":
        return np.median(ensemble, axis=0)
    if functional == "mean":
        return np.mean(ensemble, axis=0)
    raise ContractError("point functional must be 'median' or 'mean'")


def rmse(point_forecasts, actuals) -> tuple[np.ndarray, float]:
    """Per-series and total root mean squared error.

    Inputs are H x M (or length-H for one series); returns ``(per_series, total)``.
    """
    f = np.asarray(point_forecasts, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if f.shape != a.shape:
        raise ContractError(f"forecast shape {f.shape} differs from actual shape {a.shape}")
    if f.size == 0:
        raise ContractError("nothing to score")
    err2 = (f - a) ** 2
    if err2.ndim == 1:
        err2 = err2[:, None]
    return np.sqrt(err2.mean(axis=0)), float(np.sqrt(err2.mean()))


def crps_sample(ensemble, y) -> float | np.ndarray:
    """Sample CRPS ``mean|x - y| - 1/(2 S^2) sum_{s,r} |x_s - x_r|`` via sorting.

    ``ensemble`` is S (one variable) or S x M with ``y`` of length M.
    """
    x = np.asarray(ensemble, dtype=float)
    S = x.shape[0]
    if S < 2:
        raise ContractError("CRPS needs at least two ensemble members")
    y = np.asarray(y, dtype=float)
    xs = np.sort(x, axis=0)
    i = np.arange(1, S + 1).reshape((S,) + (1,) * (x.ndim - 1))
    spread = np.sum((2 * i - S - 1) * xs, axis=0) / S ** 2
    out = np.mean(np.abs(x - y), axis=0) - spread
    return float(out) if np.ndim(out) == 0 else out


def vol_pca(vol_paths) -> tuple[np.ndarray, float, np.ndarray]:
    """First principal component of T x M log-volatility paths.

    Returns ``(scores, explained_share, loadings)``; the sign is chosen so the
    scores correlate positively with the cross-sectional mean.
    """
    V = np.asarray(vol_paths, dtype=float)
    if V.ndim != 2 or V.shape[1] < 2:
        raise ContractError("need a T x M matrix with M >= 2")
    Vc = V - V.mean(axis=0)
    cov = Vc.T @ Vc / max(V.shape[0] - 1, 1)
    ev, evec = np.linalg.eigh(cov)
    load = evec[:, -1]
    scores = Vc @ load
    cm = Vc.mean(axis=1)
    if float(scores @ cm) < 0:
        scores, load = -scores, -load
    total = float(ev.sum())
    share = float(ev[-1] / total) if total > 0 else 0.0
    return scores, share, load


# -- model confidence set ---------------------------------------------------

@dataclass
class MCSResult:
    labels: list[str]
    rank: dict
    pvalue: dict
    alpha: float
    ties: list = field(default_factory=list)
    order: list = field(default_factory=list)

    @property
    def in_set(self) -> dict:
        return {m: self.pvalue[m] >= self.alpha for m in self.labels}

    @property
    def surviving(self) -> list[str]:
        return [m for m in self.labels if self.in_set[m]]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "model": self.labels,
            "rank": [self.rank[m] for m in self.labels],
            "p_value": [self.pvalue[m] for m in self.labels],
            "in_set": [self.in_set[m] for m in self.labels],
        })


def block_bootstrap_indices(H: int, block: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    """``reps`` x H moving-block resampling indices (circular blocks)."""
    n_blocks = -(-H // block)
    starts = rng.integers(0, H, size=(reps, n_blocks))
    idx = (starts[:, :, None] + np.arange(block)[None, None, :]) % H
    return idx.reshape(reps, -1)[:, :H]


def mcs(losses, labels=None, alpha: float = 0.25, *, block: int | None = None,
        reps: int = 5000, seed: int = 0, min_h: int = 20) -> MCSResult:
    """Model confidence set with the max-t statistic and a moving-block bootstrap.

    ``losses`` is H x K.  Models are eliminated one at a time (the one with
    the largest standardized loss relative to the set average); MCS p-values
    are the running maximum of the elimination p-values, and a model belongs
    to the set at level ``alpha`` when its p-value is at least ``alpha``.
    """
    Lm = np.asarray(losses, dtype=float)
    if Lm.ndim != 2:
        raise ContractError("loss matrix must be H x K")
    H, K = Lm.shape
    labels = [str(k) for k in range(K)] if labels is None else [str(v) for v in labels]
    if len(labels) != K:
        raise ContractError("one label per loss column")
    if not np.all(np.isfinite(Lm)):
        raise ContractError("loss matrix has missing cells")
    if K == 1:
        return MCSResult(labels, {labels[0]: 1}, {labels[0]: 1.0}, alpha)
    if H < min_h:
        raise ContractError(f"need at least {min_h} holdout points, got {H}")
    block = block or math.ceil(H ** (1.0 / 3.0))
    rng = np.random.default_rng(seed)
    idx = block_bootstrap_indices(H, block, reps, rng)
    boot_means = Lm[idx].mean(axis=1)  # reps x K
    means = Lm.mean(axis=0)
    alive = list(range(K))
    pvals, order, ties = {}, [], []
    running = 0.0
    while len(alive) > 1:
        a = np.array(alive)
        dbar = means[a] - means[a].mean()
        dboot = boot_means[:, a] - boot_means[:, a].mean(axis=1, keepdims=True)
        centered = dboot - dbar
        var = np.mean(centered ** 2, axis=0)
        scale = np.sqrt(var)
        tol = 1e-12 * max(1.0, float(np.abs(Lm).max()))
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = np.where(scale > tol, dbar / scale,
                             np.where(dbar > tol, np.inf, np.where(dbar < -tol, -np.inf, 0.0)))
            tboot = np.where(scale > tol, centered / np.where(scale > tol, scale, 1.0), 0.0)
        tmax = tstat.max()
        p = float(np.mean(tboot.max(axis=1) >= tmax)) if np.isfinite(tmax) else (0.0 if tmax > 0 else 1.0)
        cand = np.flatnonzero(tstat == tmax)
        if cand.size > 1:
            # worst mean loss first, then the later label
            cand = sorted(cand, key=lambda j: (means[a[j]], a[j]))
            ties.append([labels[a[j]] for j in cand])
            worst = cand[-1]
        else:
            worst = int(cand[0])
        running = max(running, p)
        m = int(a[worst])
        pvals[labels[m]] = running
        order.append(labels[m])
        alive.remove(m)
    pvals[labels[alive[0]]] = 1.0
    order.append(labels[alive[0]])
    ranks = {m: K - k for k, m in enumerate(order)}
    return MCSResult(labels, ranks, pvals, alpha, ties, order)


# -- backtest -----------------------------------------------------------------

@dataclass
class ForecastRun:
    label: str
    window: int
    stride: int
    rows: np.ndarray
    ensembles: list
    actuals: np.ndarray
    timestamps: list
    estimations: int = 0
    error: str | None = None

    def points(self, functional: str = "median") -> np.ndarray:
        return np.stack([point_forecast(e, functional) for e in self.ensembles])

    def crps(self) -> np.ndarray:
        """H x M CRPS values."""
        return np.stack([crps_sample(e, y) for e, y in zip(self.ensembles, self.actuals)])


def backtest(config: ModelConfig, design: Design, *, window: int = 400, n_origins: int = 100,
             stride: int = 1, seed: int | None = None, scales=None, progress=None) -> ForecastRun:
    """Rolling-window one-step-ahead forecasts over the last ``n_origins`` rows.

    The model is re-estimated every ``stride`` origins; in between, the most
    recent archive is reused with states propagated over the gap.  Forecasts
    and actuals are in levels and multiplied by ``scales`` when given.
    """
    if window < 10:
        raise ContractError("window too short")
    first = design.T - n_origins
    if first < window:
        raise ContractError(f"need {window + n_origins} design rows, have {design.T}")
    if stride < 1:
        raise ContractError("stride must be >= 1")
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    ensembles, actuals, rows = [], [], []
    archive = None
    n_est = 0
    for k, row in enumerate(range(first, design.T)):
        if k % stride == 0:
            cfg = ModelConfig.from_dict({**config.to_dict(), "seed": int(seed) + k})
            archive = run_mcmc(cfg, design.rows(row - window, row))
            n_est += 1
        ens = predict_one_step(archive, design, row, rng)
        actual = design.y[row].copy()
        if scales is not None:
            ens = ens * scales
            actual = actual * scales
        ensembles.append(ens)
        actuals.append(actual)
        rows.append(row)
        if progress is not None:
            progress(k + 1, n_origins)
    return ForecastRun(config.name, window, stride, np.asarray(rows), ensembles,
                       np.asarray(actuals), [str(design.timestamps[r]) for r in rows], n_est)


def score_table(runs: list[ForecastRun], names: list[str], functional: str = "median") -> pd.DataFrame:
    """RMSE and CRPS per model (rows) and series plus ``Total`` (columns)."""
    recs = []
    for run in runs:
        per, tot = rmse(run.points(functional), run.actuals)
        crps = run.crps()
        rec = {"model": run.label}
        for j, n in enumerate(names):
            rec[f"rmse_{n}"] = per[j]
        rec["rmse_Total"] = tot
        for j, n in enumerate(names):
            rec[f"crps_{n}"] = float(crps[:, j].mean())
        rec["crps_Total"] = float(crps.mean())
        recs.append(rec)
    return pd.DataFrame(recs)


def loss_matrix(runs: list[ForecastRun], rule: str = "crps", functional: str = "median") -> pd.DataFrame:
    """H x K losses averaged over series (squared error or CRPS)."""
    cols = {}
    for run in runs:
        if rule == "crps":
            cols[run.label] = run.crps().mean(axis=1)
        elif rule == "se":
            cols[run.label] = ((run.points(functional) - run.actuals) ** 2).mean(axis=1)
        else:
            raise ContractError("rule must be 'crps' or 'se'")
    index = pd.Index(runs[0].timestamps, name="timestamp") if runs else None
    return pd.DataFrame(cols, index=index)
