"""Synthetic cointegrated panels with known truth, for recovery tests."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .data import Panel
from .errors import ValidationError


@dataclass
class SynthSpec:
    """Generator settings.

    ``kappa`` sets the loading ``alpha = -kappa * beta`` for an orthonormal
    ``beta``, so each equilibrium error follows an AR(1) with coefficient
    ``1 - kappa``.  ``tvp_amplitude`` scales a slow sinusoid multiplying the
    loadings and the short-run coefficients.
    """

    M: int = 4
    T: int = 600
    rank: int = 2
    kappa: float = 1.5
    tvp_amplitude: float = 0.0
    a_diag: float = 0.3
    a_offdiag: list = field(default_factory=lambda: [[1, 0, -0.25]])
    chol_offdiag: float = 0.1
    sv_mu: float = 0.0
    sv_phi: float = 0.95
    sv_sigma: float = 0.2
    error_dist: str = "gaussian"
    nu: float = 5.0
    seed: int = 0
    start: str = "2020-01-01"

    def problems(self) -> list[str]:
        out = []
        if self.M < 1:
            out.append("M: must be >= 1")
        if self.T < 10:
            out.append("T: must be >= 10")
        if self.rank < 0 or self.rank >= self.M:
            out.append(f"rank: must satisfy 0 <= rank < M = {self.M}")
        if not 0 < self.kappa < 2:
            out.append("kappa: must lie in (0, 2) for stable equilibrium errors")
        if self.tvp_amplitude < 0:
            out.append("tvp_amplitude: must be >= 0")
        if not abs(self.sv_phi) < 1:
            out.append("sv_phi: must satisfy |phi| < 1")
        if self.sv_sigma < 0:
            out.append("sv_sigma: must be >= 0")
        if self.error_dist not in ("gaussian", "student-t"):
            out.append("error_dist: must be 'gaussian' or 'student-t'")
        if self.error_dist == "student-t" and not self.nu > 2:
            out.append("nu: must exceed 2")
        for entry in self.a_offdiag:
            i, j, _ = entry
            if not (0 <= int(i) < self.M and 0 <= int(j) < self.M) or int(i) == int(j):
                out.append(f"a_offdiag: bad entry {entry}")
        return out

    def validate(self) -> "SynthSpec":
        probs = self.problems()
        if probs:
            raise ValidationError(probs)
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError([f"{k}: unknown synth field" for k in sorted(unknown)])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthResult:
    panel: Panel
    truth: dict

    def write(self, data_path, truth_path) -> None:
        frame = pd.DataFrame(self.panel.levels, columns=self.panel.names,
                             index=pd.Index(self.panel.timestamps.strftime("%Y-%m-%d"), name="timestamp"))
        frame.to_csv(data_path, float_format="%.10g")
        with open(truth_path, "w") as fh:
            json.dump(self.truth, fh)


def _orthonormal(M: int, r: int, rng) -> np.ndarray:
    if r == 0:
        return np.zeros((M, 0))
    Q, R = np.linalg.qr(rng.standard_normal((M, r)))
    return Q * np.sign(np.diag(R))


def generate(spec: SynthSpec) -> SynthResult:
    """Simulate a VECM with one lagged difference, Cholesky SV errors."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    M, T, r = spec.M, spec.T, spec.rank
    beta = _orthonormal(M, r, rng)
    alpha0 = -spec.kappa * beta
    A1 = np.eye(M) * spec.a_diag
    for i, j, v in spec.a_offdiag:
        A1[int(i), int(j)] = v
    L = np.eye(M) + np.tril(np.full((M, M), spec.chol_offdiag), -1)
    wave = 1.0 + spec.tvp_amplitude * np.sin(2 * np.pi * np.arange(T) / T)

    # stationary start for the log-variances
    sd0 = spec.sv_sigma / np.sqrt(1 - spec.sv_phi ** 2)
    logh = np.empty((T, M))
    x = spec.sv_mu + sd0 * rng.standard_normal(M)
    for t in range(T):
        x = spec.sv_mu + spec.sv_phi * (x - spec.sv_mu) + spec.sv_sigma * rng.standard_normal(M)
        logh[t] = x
    z = rng.standard_normal((T, M))
    if spec.error_dist == "student-t":
        tau = (spec.nu / 2.0) / rng.gamma(spec.nu / 2.0, 1.0, (T, M))
    else:
        tau = np.ones((T, M))
    eps = (z * np.sqrt(np.exp(logh) * tau)) @ L.T

    y = np.zeros((T, M))
    pi = np.empty((T, M, M))
    for t in range(T):
        pi[t] = wave[t] * alpha0 @ beta.T
    for t in range(2, T):
        dy_prev = y[t - 1] - y[t - 2]
        y[t] = y[t - 1] + pi[t] @ y[t - 1] + wave[t] * A1 @ dy_prev + eps[t]
    names = [f"y{i + 1}" for i in range(M)]
    stamps = pd.date_range(spec.start, periods=T, freq="D")
    panel = Panel(stamps, y, np.zeros((T, 0)), names)
    truth = {
        "spec": spec.to_dict(),
        "beta": beta.tolist(),
        "alpha": alpha0.tolist(),
        "A1": A1.tolist(),
        "A1_nonzero": (A1 != 0).astype(int).tolist(),
        "L": L.tolist(),
        "pi": pi.tolist(),
        "rank_path": [r if w != 0 else 0 for w in wave],
        "tvp_wave": wave.tolist(),
        "sv": {"mu": spec.sv_mu, "phi": spec.sv_phi, "sigma": spec.sv_sigma},
        "logh": logh.tolist(),
        "nu": spec.nu if spec.error_dist == "student-t" else None,
    }
    return SynthResult(panel, truth)
