"""Gibbs sampler for the TVP-VECM family and the posterior draw archive.

One sweep runs, in order: the sequential per-equation pass (constant
coefficients and scale roots, horseshoe local/global updates, state paths),
the long-run matrix, the volatilities (plus t-error scales and degrees of
freedom) and, for retained draws of the sparsified model, the ex-post
sparsification.  Benchmark classes reuse the same machinery with a different
target/regressor mapping.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cointegration import assemble_pi, draw_beta, normalize, whitening
from .data import DeterministicRecipe, Design
from .errors import ContractError, NumericalError, ValidationError
from .shrinkage import update_global, update_local
from .sparsify import column_sq_norms, noise_threshold, sparsify_draw
from .states import EquationData, EquationState, draw_constant_scales, ffbs_states
from .volatility import NU_BOUNDS, VolState, adapt_step, draw_nu, draw_tau, draw_volatility

MODEL_CLASSES = ("VECM", "VECM-fixed", "VAR-levels", "VAR-differences",
                 "AR-levels", "AR-differences")
SHORT_NAMES = {"VECM": "VECM", "VECM-fixed": "VECM", "VAR-levels": "VARl",
               "VAR-differences": "VARd", "AR-levels": "ARpl", "AR-differences": "ARpd"}
NU_ADAPT_EVERY = 50


@dataclass
class ModelConfig:
    model_class: str = "VECM"
    rank: int | None = None
    tvp: bool = True
    error_dist: str = "gaussian"
    sparsify: bool = True
    P: int = 2
    draws: int = 6000
    burnin: int = 2000
    thin: int = 3
    seed: int = 0
    s0: float = 0.1
    nu_init: float = 10.0
    nu_bounds: tuple[float, float] = NU_BOUNDS
    nu_step: float = 0.5
    deterministics: DeterministicRecipe = field(default_factory=DeterministicRecipe)
    equation_order: list[int] | None = None
    glasso_converge: bool = False
    likelihood: bool = True
    standardize: bool = False
    threads: int = 1
    label: str | None = None

    @property
    def student_t(self) -> bool:
        return self.error_dist == "student-t"

    @property
    def n_retained(self) -> int:
        return max(0, (self.draws - self.burnin) // self.thin)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        base = SHORT_NAMES.get(self.model_class, self.model_class)
        if self.model_class == "VECM-fixed":
            base = f"VECM-{self.rank}"
        parts = [base, "TVP" if self.tvp else "TIV", "t" if self.student_t else "n"]
        if self.model_class == "VECM" and self.sparsify:
            parts.append("sps")
        return "-".join(parts)

    def problems(self, M: int | None = None) -> list[str]:
        out = []
        if self.model_class not in MODEL_CLASSES:
            out.append(f"model_class: must be one of {', '.join(MODEL_CLASSES)}")
        if self.error_dist not in ("gaussian", "student-t"):
            out.append("error_dist: must be 'gaussian' or 'student-t'")
        if not isinstance(self.P, int) or self.P < 1:
            out.append("P: lag order must be an integer >= 1")
        if self.draws <= 0:
            out.append("draws: must be > 0")
        if self.burnin < 0 or self.burnin >= self.draws:
            out.append("burnin: must satisfy 0 <= burnin < draws")
        if self.thin < 1:
            out.append("thin: must be >= 1")
        if self.s0 <= 0:
            out.append("s0: must be > 0")
        lo, hi = self.nu_bounds
        if not (2 <= lo < hi):
            out.append("nu_bounds: need 2 <= lower < upper")
        elif not (lo < self.nu_init < hi):
            out.append("nu_init: must lie inside nu_bounds")
        if self.model_class == "VECM-fixed":
            if self.rank is None or self.rank < 1:
                out.append("rank: fixed-rank VECM needs rank >= 1")
            elif M is not None and self.rank > M - 1:
                out.append(f"rank: must be in [1, M-1] = [1, {M - 1}]")
        if self.sparsify and self.model_class != "VECM":
            out.append("sparsify: only available for model_class VECM")
        if self.threads < 1:
            out.append("threads: must be >= 1")
        if self.equation_order is not None and M is not None:
            if sorted(self.equation_order) != list(range(M)):
                out.append("equation_order: must be a permutation of 0..M-1")
        return out

    def validate(self, M: int | None = None) -> "ModelConfig":
        probs = self.problems(M)
        if probs:
            raise ValidationError(probs)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deterministics"] = self.deterministics.to_dict()
        d["nu_bounds"] = list(self.nu_bounds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError([f"{k}: unknown model field" for k in sorted(unknown)])
        if "deterministics" in d:
            d["deterministics"] = DeterministicRecipe.from_dict(d["deterministics"])
        if "nu_bounds" in d:
            d["nu_bounds"] = tuple(float(v) for v in d["nu_bounds"])
        if d.get("sparsify") is None:
            d["sparsify"] = d.get("model_class", "VECM") == "VECM"
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Layout:
    """How equation coefficients map into (alpha, A, L^{-1})."""

    M: int
    q: int
    r: int
    J: int
    x_mask: np.ndarray  # M x J bool
    chol: bool
    order: list[int]
    target: str  # "diff" or "level"

    def n_x(self, i: int) -> int:
        return int(self.x_mask[i].sum())

    def preceding(self, i: int) -> list[int]:
        if not self.chol:
            return []
        pos = self.order.index(i)
        return self.order[:pos]

    def K(self, i: int) -> int:
        return self.r + self.n_x(i) + len(self.preceding(i))

    def to_dict(self) -> dict:
        return {"M": self.M, "q": self.q, "r": self.r, "J": self.J,
                "x_mask": self.x_mask.astype(int).tolist(), "chol": self.chol,
                "order": list(self.order), "target": self.target}

    @classmethod
    def from_dict(cls, d: dict) -> "Layout":
        return cls(d["M"], d["q"], d["r"], d["J"], np.asarray(d["x_mask"], dtype=bool),
                   d["chol"], list(d["order"]), d["target"])

    def split(self, coefs: np.ndarray, i: int):
        """Split coefficients (... x K_i) of equation i into alpha, A-row, L^{-1}-row parts."""
        r, nx = self.r, self.n_x(i)
        return coefs[..., :r], coefs[..., r:r + nx], coefs[..., r + nx:]


@dataclass
class Problem:
    """Model-class specific target and regressors built from a design."""

    Y: np.ndarray
    W: np.ndarray | None
    X: np.ndarray
    layout: Layout


def build_problem(config: ModelConfig, design: Design) -> Problem:
    M, P = design.M, design.P
    if P != config.P:
        raise ContractError(f"design built with P={P} but config has P={config.P}")
    mc = config.model_class
    levels = mc in ("VAR-levels", "AR-levels")
    Y = design.y if levels else design.dy
    X = np.hstack([design.ylags, design.c]) if levels else design.x
    J = X.shape[1]
    if mc == "VECM":
        W, r = design.w, design.q
    elif mc == "VECM-fixed":
        W, r = design.w, int(config.rank)
    else:
        W, r = None, 0
    univariate = mc in ("AR-levels", "AR-differences")
    x_mask = np.ones((M, J), dtype=bool)
    if univariate:
        x_mask[:] = False
        for i in range(M):
            x_mask[i, [p * M + i for p in range(P)]] = True
        x_mask[:, M * P:] = True
    order = list(config.equation_order) if config.equation_order is not None else list(range(M))
    layout = Layout(M, design.q, r, J, x_mask, not univariate, order, "level" if levels else "diff")
    return Problem(Y, W, X, layout)


def regressors(problem: Problem, i: int, WB: np.ndarray | None, eps: np.ndarray) -> np.ndarray:
    lay = problem.layout
    blocks = []
    if lay.r:
        blocks.append(WB)
    blocks.append(problem.X[:, lay.x_mask[i]])
    prev = lay.preceding(i)
    if prev:
        blocks.append(-eps[:, prev])
    return np.hstack(blocks)


def assemble(layout: Layout, coefs: list[np.ndarray]):
    """Stack per-equation coefficient paths (T x K_i) into alpha, A and L^{-1}."""
    T = coefs[0].shape[0]
    M, r, J = layout.M, layout.r, layout.J
    alpha = np.zeros((T, M, r))
    A = np.zeros((T, M, J))
    linv = np.broadcast_to(np.eye(M), (T, M, M)).copy()
    for i in range(M):
        a_part, x_part, l_part = layout.split(coefs[i], i)
        alpha[:, i, :] = a_part
        A[:, i, layout.x_mask[i]] = x_part
        prev = layout.preceding(i)
        if prev:
            linv[:, i, prev] = l_part
    return alpha, A, linv


def covariance_paths(linv: np.ndarray, var: np.ndarray) -> np.ndarray:
    """``Sigma_t = L_t diag(var_t) L_t'`` with ``L_t = (L_t^{-1})^{-1}``."""
    L = np.linalg.inv(linv)
    return np.einsum("tij,tj,tkj->tik", L, var, L)


ARCHIVE_FIELDS = ("pi", "a", "linv", "logh", "sv", "nu", "beta", "beta_raw",
                  "pi_star", "a_star", "prec_star", "rank", "phi")


@dataclass
class DrawArchive:
    """Retained posterior draws, their sparsified counterparts and metadata.

    Per-draw arrays carry the draw index on axis 0.  ``b_last`` and
    ``sqrt_theta`` (one R x K_i array per equation) hold what forecasting
    needs to propagate the states beyond the sample.
    """

    config: ModelConfig
    layout: Layout
    names: list[str]
    T: int
    pi: np.ndarray | None
    a: np.ndarray
    linv: np.ndarray
    logh: np.ndarray
    sv: np.ndarray  # R x M x 3 (mu, phi, sigma)
    nu: np.ndarray | None
    beta: np.ndarray | None
    beta_raw: np.ndarray | None
    b_last: list[np.ndarray]
    sqrt_theta: list[np.ndarray]
    pi_star: np.ndarray | None = None
    a_star: np.ndarray | None = None
    prec_star: np.ndarray | None = None
    rank: np.ndarray | None = None
    phi: np.ndarray | None = None
    w_sq_norms: np.ndarray | None = None
    x_sq_norms: np.ndarray | None = None
    gram: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    stage_log: list | None = None

    @property
    def n_draws(self) -> int:
        return self.a.shape[0]

    @property
    def M(self) -> int:
        return self.layout.M

    @property
    def sparse(self) -> bool:
        return self.a_star is not None

    def sigma(self) -> np.ndarray:
        """R x T x M x M covariance paths."""
        L = np.linalg.inv(self.linv)
        return np.einsum("stij,stj,stkj->stik", L, np.exp(self.logh), L)

    # -- persistence ---------------------------------------------------
    def _per_draw_fields(self) -> list[str]:
        names = [f for f in ARCHIVE_FIELDS if getattr(self, f) is not None]
        names += [f"b_last_{i}" for i in range(self.M)] + [f"sqrt_theta_{i}" for i in range(self.M)]
        return names

    def _get(self, name: str, s: int) -> np.ndarray:
        if name.startswith("b_last_"):
            return self.b_last[int(name.rsplit("_", 1)[1])][s]
        if name.startswith("sqrt_theta_"):
            return self.sqrt_theta[int(name.rsplit("_", 1)[1])][s]
        return np.asarray(getattr(self, name)[s], dtype=float)

    def save(self, directory) -> list[Path]:
        """Write ``metadata.json`` and one binary block per draw.

        Block layout: for every field listed in ``metadata.json['fields']``,
        a little-endian uint32 ``ndim``, ``ndim`` uint32 dims, then the values
        as little-endian float64 in row-major order.
        """
        directory = Path(directory)
        (directory / "draws").mkdir(parents=True, exist_ok=True)
        fields = self._per_draw_fields()
        meta = {
            "format": "tvpvecm-archive/1",
            "fields": fields,
            "n_draws": self.n_draws,
            "T": self.T,
            "names": self.names,
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "layout": self.layout.to_dict(),
            "w_sq_norms": None if self.w_sq_norms is None else self.w_sq_norms.tolist(),
            "x_sq_norms": None if self.x_sq_norms is None else self.x_sq_norms.tolist(),
            "gram": None if self.gram is None else self.gram.tolist(),
            "meta": self.meta,
        }
        written = []
        for s in range(self.n_draws):
            path = directory / "draws" / f"draw_{s:06d}.bin"
            with open(path, "wb") as fh:
                for name in fields:
                    arr = np.asarray(self._get(name, s), dtype="<f8", order="C")
                    fh.write(np.asarray([arr.ndim] + list(arr.shape), dtype="<u4").tobytes())
                    fh.write(arr.tobytes(order="C"))
            written.append(path)
        mpath = directory / "metadata.json"
        with open(mpath, "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
        written.append(mpath)
        return written

    @classmethod
    def load(cls, directory) -> "DrawArchive":
        directory = Path(directory)
        with open(directory / "metadata.json") as fh:
            meta = json.load(fh)
        fields = meta["fields"]
        per = {f: [] for f in fields}
        for s in range(meta["n_draws"]):
            buf = (directory / "draws" / f"draw_{s:06d}.bin").read_bytes()
            off = 0
            for name in fields:
                ndim = int(np.frombuffer(buf, "<u4", 1, off)[0])
                off += 4
                dims = tuple(int(d) for d in np.frombuffer(buf, "<u4", ndim, off))
                off += 4 * ndim
                n = int(np.prod(dims)) if dims else 1
                per[name].append(np.frombuffer(buf, "<f8", n, off).reshape(dims).copy())
                off += 8 * n
        stack = {k: np.stack(v) for k, v in per.items()}
        layout = Layout.from_dict(meta["layout"])
        M = layout.M
        arr = lambda k: stack.get(k)  # noqa: E731
        rank = arr("rank")
        return cls(
            config=ModelConfig.from_dict(meta["config"]), layout=layout, names=meta["names"],
            T=meta["T"], pi=arr("pi"), a=arr("a"), linv=arr("linv"), logh=arr("logh"),
            sv=arr("sv"), nu=arr("nu"), beta=arr("beta"), beta_raw=arr("beta_raw"),
            b_last=[stack[f"b_last_{i}"] for i in range(M)],
            sqrt_theta=[stack[f"sqrt_theta_{i}"] for i in range(M)],
            pi_star=arr("pi_star"), a_star=arr("a_star"), prec_star=arr("prec_star"),
            rank=None if rank is None else rank.astype(int), phi=arr("phi"),
            w_sq_norms=None if meta["w_sq_norms"] is None else np.asarray(meta["w_sq_norms"]),
            x_sq_norms=None if meta["x_sq_norms"] is None else np.asarray(meta["x_sq_norms"]),
            gram=None if meta["gram"] is None else np.asarray(meta["gram"]),
            meta=meta["meta"],
        )


def _ols_residual_logvar(Y: np.ndarray, R: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(R, Y, rcond=None)
    res = Y - R @ coef
    return float(np.log(max(np.var(res), 1e-8 * max(np.var(Y), 1e-12))))


class Sampler:
    """Holds the chain state for one model fit; see :func:`run_mcmc`."""

    def __init__(self, config: ModelConfig, design: Design, instrument: bool = False):
        config.validate(design.M)
        self.config = config
        self.design = design
        self.problem = build_problem(config, design)
        self.instrument = instrument
        lay = self.problem.layout
        T, M = self.problem.Y.shape
        self.T, self.M = T, M
        seeds = np.random.SeedSequence(config.seed).spawn(2 * M + 1)
        self.rng_eq = [np.random.default_rng(s) for s in seeds[:M]]
        self.rng_vol = [np.random.default_rng(s) for s in seeds[M:2 * M]]
        self.rng_beta = np.random.default_rng(seeds[2 * M])
        self.states = [EquationState.initial(lay.K(i), T, tvp=config.tvp) for i in range(M)]
        self.beta = np.eye(lay.q, lay.r) if lay.r else None
        self.vols = []
        for i in range(M):
            base = [self.problem.X[:, lay.x_mask[i]]]
            if lay.r:
                base.insert(0, self.problem.W)
            lv = _ols_residual_logvar(self.problem.Y[:, i], np.hstack(base))
            vs = VolState(np.full(T, lv), mu=lv, phi=0.9, sigma=0.3, h0=lv,
                          tau=np.ones(T) if config.student_t else None,
                          nu=config.nu_init if config.student_t else None, nu_step=config.nu_step)
            self.vols.append(vs)
        self.eps = np.zeros((T, M))
        self.eta = np.zeros((T, M))
        self.coefs = [np.zeros((T, lay.K(i))) for i in range(M)]
        self.z_version = 0
        self.beta_version = 0
        self.sweep_index = -1
        self.stage_log: list = []
        self.counters = {"normalize_skipped": 0, "glasso_projected": 0}
        self._nu_batch = np.zeros(M)
        if lay.r:
            self.w_sq_norms = column_sq_norms(self.problem.W)
            self.gram = self.problem.W.T @ self.problem.W
        else:
            self.w_sq_norms = self.gram = None
        self.x_sq_norms = column_sq_norms(self.problem.X)

    # -- helpers ---------------------------------------------------------
    def _log(self, *entry):
        if self.instrument:
            self.stage_log.append((self.sweep_index,) + entry)

    def variances(self) -> np.ndarray:
        v = np.column_stack([vs.h for vs in self.vols])
        if self.config.student_t:
            v = v * np.column_stack([vs.tau for vs in self.vols])
        return v

    def paths(self):
        return assemble(self.problem.layout, self.coefs)

    def reduced_fit(self, alpha, A, beta):
        ax = np.einsum("tij,tj->ti", A, self.problem.X)
        if self.problem.layout.r:
            wb = self.problem.W @ beta
            return np.einsum("tij,tj->ti", alpha, wb) + ax, ax
        return ax, ax

    # -- sweep -----------------------------------------------------------
    def sweep(self):
        cfg, prob, lay = self.config, self.problem, self.problem.layout
        lik = cfg.likelihood
        self.sweep_index += 1
        WB = prob.W @ self.beta if lay.r else None
        self.z_version = self.beta_version
        self._log("rebuild_z")
        h = [vs.h for vs in self.vols]
        for i in lay.order:
            Z = regressors(prob, i, WB, self.eps)
            vs = self.vols[i]
            eq = EquationData(prob.Y[:, i], Z, h[i], vs.tau)
            st = self.states[i]
            rng = self.rng_eq[i]
            bt = st.btilde if cfg.tvp else None
            bhat = draw_constant_scales(eq, bt, st.hs, rng, likelihood=lik, equation=i)
            self._log("step1", i)
            update_local(st.hs, bhat, rng)
            self._log("step2", i)
            update_global(st.hs, bhat, rng)
            self._log("step3-4", i)
            K = eq.K
            st.b0 = bhat[:K]
            if cfg.tvp:
                st.sqrt_theta = bhat[K:]
                st.btilde = ffbs_states(eq, bhat, rng, likelihood=lik, equation=i)
                self._log("step5", i)
            coefs = st.coefficients()
            self.coefs[i] = coefs
            nred = lay.r + lay.n_x(i)
            self.eps[:, i] = prob.Y[:, i] - np.einsum("tk,tk->t", coefs[:, :nred], Z[:, :nred])
        alpha, A, linv = self.paths()
        if lay.r:
            if self.z_version != self.beta_version:
                raise NumericalError("stale long-run regressors", stage="rebuild_z")
            var = self.variances()
            ax = np.einsum("tij,tj->ti", A, prob.X)
            sinvhalf = whitening(linv, var)
            self.beta = draw_beta(prob.Y, ax, prob.W, alpha, sinvhalf, cfg.s0, self.rng_beta,
                                  likelihood=lik)
            self.beta_version += 1
            self._log("step6")
        fit, _ = self.reduced_fit(alpha, A, self.beta)
        self.eps = prob.Y - fit
        self.eta = np.einsum("tij,tj->ti", linv, self.eps)
        if not np.all(np.isfinite(self.eta)):
            raise NumericalError("non-finite residuals", stage="residuals", sweep=self.sweep_index)
        in_burnin = self.sweep_index < cfg.burnin
        for i in range(self.M):
            vs, rng = self.vols[i], self.rng_vol[i]
            resid = self.eta[:, i]
            if cfg.student_t:
                draw_volatility(resid / np.sqrt(vs.tau), vs, rng, likelihood=lik)
                if lik:
                    vs.tau = draw_tau(resid, vs.logh, vs.nu, rng)
                else:
                    vs.tau = vs.nu / 2.0 / rng.gamma(vs.nu / 2.0, 1.0, self.T)
                vs.nu, acc = draw_nu(vs.tau, vs.nu, rng, step=vs.nu_step, bounds=cfg.nu_bounds)
                vs.nu_proposals += 1
                vs.nu_accepts += acc
                self._nu_batch[i] += acc
                if in_burnin and (self.sweep_index + 1) % NU_ADAPT_EVERY == 0:
                    vs.nu_step = adapt_step(vs.nu_step, self._nu_batch[i] / NU_ADAPT_EVERY)
                    self._nu_batch[i] = 0
            else:
                draw_volatility(resid, vs, rng, likelihood=lik)
            self._log("step7", i)
        return alpha, A, linv

    def sparsify(self, alpha, A, linv):
        lay = self.problem.layout
        pi_hat = assemble_pi(alpha, self.beta) if lay.r else None
        sig = covariance_paths(linv, np.column_stack([vs.h for vs in self.vols]))
        phi = noise_threshold(self.eps)
        sd = sparsify_draw(pi_hat, A, sig, w_sq_norms=self.w_sq_norms, x_sq_norms=self.x_sq_norms,
                           gram=self.gram, phi=phi, glasso_converge=self.config.glasso_converge)
        self.counters["glasso_projected"] += sd.n_projected
        self._log("step8")
        return sd


def run_mcmc(config: ModelConfig, design: Design, *, instrument: bool = False,
             progress=None) -> DrawArchive:
    """Run the full sampler and return the archive of retained draws."""
    started = time.time()
    smp = Sampler(config, design, instrument=instrument)
    lay, T, M = smp.problem.layout, smp.T, smp.M
    R = config.n_retained
    if R <= 0:
        raise ValidationError(["draws/burnin/thin: no draws would be retained"])
    q, r, J = lay.q, lay.r, lay.J
    do_sparse = config.model_class == "VECM" and config.sparsify
    store = {
        "pi": np.empty((R, T, M, q)) if r else None,
        "a": np.empty((R, T, M, J)),
        "linv": np.empty((R, T, M, M)),
        "logh": np.empty((R, T, M)),
        "sv": np.empty((R, M, 3)),
        "nu": np.empty((R, M)) if config.student_t else None,
        "beta": np.empty((R, q, r)) if r else None,
        "beta_raw": np.empty((R, q, r)) if r else None,
        "pi_star": np.empty((R, T, M, q)) if do_sparse else None,
        "a_star": np.empty((R, T, M, J)) if do_sparse else None,
        "prec_star": np.empty((R, T, M, M)) if do_sparse else None,
        "rank": np.empty((R, T), dtype=int) if do_sparse else None,
        "phi": np.empty(R) if do_sparse else None,
    }
    b_last = [np.empty((R, lay.K(i))) for i in range(M)]
    sqrt_theta = [np.empty((R, lay.K(i))) for i in range(M)]
    k = 0
    for s in range(config.draws):
        try:
            alpha, A, linv = smp.sweep()
        except NumericalError as err:
            if err.sweep is not None:
                raise
            raise NumericalError(err.detail, stage=err.stage, equation=err.equation,
                                 sweep=s, t=err.t) from err
        if s < config.burnin or (s - config.burnin + 1) % config.thin:
            continue
        if k >= R:
            break
        if r:
            beta_n, _, ok = normalize(smp.beta)
            smp.counters["normalize_skipped"] += not ok
            store["pi"][k] = assemble_pi(alpha, smp.beta)
            store["beta"][k] = beta_n
            store["beta_raw"][k] = smp.beta
        store["a"][k] = A
        store["linv"][k] = linv
        store["logh"][k] = np.column_stack([vs.logh for vs in smp.vols])
        store["sv"][k] = [[vs.mu, vs.phi, vs.sigma] for vs in smp.vols]
        if config.student_t:
            store["nu"][k] = [vs.nu for vs in smp.vols]
        for i in range(M):
            st = smp.states[i]
            b_last[i][k] = st.b0 + st.sqrt_theta * st.btilde[-1]
            sqrt_theta[i][k] = st.sqrt_theta
        if do_sparse:
            sd = smp.sparsify(alpha, A, linv)
            store["pi_star"][k] = sd.pi_star
            store["a_star"][k] = sd.a_star
            store["prec_star"][k] = sd.prec_star
            store["rank"][k] = sd.rank
            store["phi"][k] = sd.phi
        for name in ("pi", "a", "linv", "logh"):
            if store[name] is not None and not np.all(np.isfinite(store[name][k])):
                raise NumericalError(f"NaN in retained draw ({name})", sweep=s)
        k += 1
        if progress is not None:
            progress(k, R)
    meta = {
        "seed": config.seed,
        "config_hash": config.hash(),
        "version": __version__,
        "seconds": round(time.time() - started, 3),
        "timestamps": [str(t) for t in design.timestamps],
        "x_names": list(design.x_names) if lay.target == "diff" else
        [f"{n}_l{p}" for p in range(1, design.P + 1) for n in design.names[:M]] + design.recipe.names(),
        "counters": {
            **smp.counters,
            "horseshoe_clamped": int(sum(st.hs.n_clamped for st in smp.states)),
            "phi_rejections": int(sum(vs.phi_rejections for vs in smp.vols)),
            "nu_acceptance": [vs.nu_accepts / vs.nu_proposals if vs.nu_proposals else None
                              for vs in smp.vols],
        },
        "scales": None if design.scales is None else list(map(float, design.scales)),
    }
    return DrawArchive(
        config=config, layout=lay, names=list(design.names), T=T,
        b_last=b_last, sqrt_theta=sqrt_theta, w_sq_norms=smp.w_sq_norms,
        x_sq_norms=smp.x_sq_norms, gram=smp.gram, meta=meta,
        stage_log=smp.stage_log if instrument else None, **store,
    )


def resparsify(archive: DrawArchive, design: Design, *, glasso_converge: bool = False,
               phi_mode: str = "per_draw") -> DrawArchive:
    """Re-run sparsification on stored draws with different conventions.

    ``phi_mode='point'`` uses one noise level computed from the residuals of
    the posterior-mean coefficient paths instead of one per draw.
    """
    if archive.pi is None:
        raise ContractError("archive has no long-run block to sparsify")
    prob = build_problem(archive.config, design)
    if prob.Y.shape[0] != archive.T:
        raise ContractError("design does not match the archive sample")
    W, X, Y = prob.W, prob.X, prob.Y

    def residuals(pi, a):
        return Y - np.einsum("tij,tj->ti", pi, W) - np.einsum("tij,tj->ti", a, X)

    point_phi = None
    if phi_mode == "point":
        point_phi = noise_threshold(residuals(archive.pi.mean(0), archive.a.mean(0)))
    elif phi_mode != "per_draw":
        raise ContractError("phi_mode must be 'per_draw' or 'point'")
    R = archive.n_draws
    sig = archive.sigma()
    out = {k: [] for k in ("pi_star", "a_star", "prec_star", "rank", "phi")}
    for s in range(R):
        phi = point_phi if point_phi is not None else noise_threshold(residuals(archive.pi[s], archive.a[s]))
        sd = sparsify_draw(archive.pi[s], archive.a[s], sig[s], w_sq_norms=archive.w_sq_norms,
                           x_sq_norms=archive.x_sq_norms, gram=archive.gram, phi=phi,
                           glasso_converge=glasso_converge)
        for k_ in out:
            out[k_].append(getattr(sd, k_ if k_ != "phi" else "phi"))
    new = DrawArchive(**{f: getattr(archive, f) for f in archive.__dataclass_fields__})
    new.pi_star = np.stack(out["pi_star"])
    new.a_star = np.stack(out["a_star"])
    new.prec_star = np.stack(out["prec_star"])
    new.rank = np.stack(out["rank"]).astype(int)
    new.phi = np.asarray(out["phi"], dtype=float)
    new.meta = dict(archive.meta, resparsified={"glasso_converge": glasso_converge, "phi_mode": phi_mode})
    return new
