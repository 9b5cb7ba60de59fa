"""Summary tables computed from a draw archive (all emitted as CSV)."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .evaluate import vol_pca
from .sampler import DrawArchive
from .sparsify import pip, rank_probabilities

FLOAT_FORMAT = "%.10g"


def _index(archive: DrawArchive) -> pd.Index:
    stamps = archive.meta.get("timestamps") or [str(t) for t in range(archive.T)]
    return pd.Index(stamps, name="timestamp")


def pi_bar(archive: DrawArchive) -> pd.DataFrame | None:
    """Posterior mean of the (sparsified when available) long-run matrix per t."""
    src = archive.pi_star if archive.pi_star is not None else archive.pi
    if src is None:
        return None
    mean = src.mean(axis=0)
    T, M, q = mean.shape
    regs = _regressor_names(archive)
    cols = {f"pi[{archive.names[i]},{regs[j]}]": mean[:, i, j] for i in range(M) for j in range(q)}
    return pd.DataFrame(cols, index=_index(archive))


def _regressor_names(archive: DrawArchive) -> list[str]:
    return [f"{n}_l1" for n in archive.names][: archive.layout.q]


def ppr(archive: DrawArchive) -> pd.DataFrame | None:
    """Posterior probability of each rank value per period; rows sum to one."""
    if archive.rank is None:
        return None
    q = archive.layout.q
    probs = rank_probabilities(archive.rank, q)
    return pd.DataFrame(probs, columns=[f"rank_{r}" for r in range(q + 1)], index=_index(archive))


def pip_tables(archive: DrawArchive) -> dict:
    """Time-averaged posterior inclusion probabilities of Pi and A."""
    out = {}
    rows = archive.names[: archive.M]
    if archive.pi_star is not None:
        out["pip_pi"] = pd.DataFrame(pip(archive.pi_star).mean(axis=0), index=pd.Index(rows, name="equation"),
                                     columns=_regressor_names(archive))
    if archive.a_star is not None:
        xn = archive.meta.get("x_names") or [f"x{j}" for j in range(archive.layout.J)]
        out["pip_a"] = pd.DataFrame(pip(archive.a_star).mean(axis=0), index=pd.Index(rows, name="equation"),
                                    columns=xn)
    return out


def sparse_long(archive: DrawArchive) -> pd.DataFrame | None:
    """Per-period PIPs, rank probabilities and rank path in long format.

    Columns are ``time, entity, statistic, value``.
    """
    if archive.a_star is None:
        return None
    stamps = np.asarray(_index(archive))
    eqs = archive.names[: archive.M]
    parts = []

    def add(values, entities, statistic):
        # values: T x len(entities)
        T, n = values.shape
        parts.append(pd.DataFrame({"time": np.repeat(stamps, n), "entity": np.tile(entities, T),
                                   "statistic": statistic, "value": values.reshape(-1)}))

    if archive.pi_star is not None:
        regs = _regressor_names(archive)
        ents = [f"pi[{e},{r}]" for e in eqs for r in regs]
        add(pip(archive.pi_star).reshape(archive.T, -1), ents, "pip")
    xn = archive.meta.get("x_names") or [f"x{j}" for j in range(archive.layout.J)]
    add(pip(archive.a_star).reshape(archive.T, -1), [f"a[{e},{x}]" for e in eqs for x in xn], "pip")
    if archive.rank is not None:
        q = archive.layout.q
        add(rank_probabilities(archive.rank, q), [f"rank={r}" for r in range(q + 1)], "ppr")
        path = np.column_stack([np.median(archive.rank, axis=0), archive.rank.mean(axis=0)])
        add(path, ["rank_median", "rank_mean"], "rank")
    return pd.concat(parts, ignore_index=True)


def sv_table(archive: DrawArchive) -> pd.DataFrame:
    """Posterior mean and 5%/95% quantiles of the state-equation parameters.

    Rows are (parameter, statistic), columns the series.
    """
    params = {"mu": archive.sv[:, :, 0], "phi": archive.sv[:, :, 1], "sigma": archive.sv[:, :, 2]}
    if archive.nu is not None:
        params["nu"] = archive.nu
    recs, idx = [], []
    for name, draws in params.items():
        for stat, fn in (("mean", lambda d: d.mean(axis=0)),
                         ("q05", lambda d: np.quantile(d, 0.05, axis=0)),
                         ("q95", lambda d: np.quantile(d, 0.95, axis=0))):
            recs.append(fn(draws))
            idx.append((name, stat))
    return pd.DataFrame(recs, columns=archive.names[: archive.M],
                        index=pd.MultiIndex.from_tuples(idx, names=["parameter", "statistic"]))


def volatility_table(archive: DrawArchive) -> pd.DataFrame:
    """Posterior-median log-volatilities per series plus their first principal component."""
    med = np.median(archive.logh, axis=0)
    frame = pd.DataFrame(med, columns=[f"logh_{n}" for n in archive.names[: archive.M]],
                         index=_index(archive))
    if archive.M >= 2:
        scores, share, _ = vol_pca(med)
        frame["pc1"] = scores
        frame.attrs["pc1_share"] = share
    return frame


def write_summaries(archive: DrawArchive, directory) -> list[Path]:
    """Write every applicable summary CSV into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tables = {"pi_bar": pi_bar(archive), "ppr": ppr(archive), "sv_params": sv_table(archive),
              "volatility": volatility_table(archive), **pip_tables(archive),
              "sparse_long": sparse_long(archive)}
    written = []
    for name, frame in tables.items():
        if frame is None:
            continue
        path = directory / f"{name}.csv"
        frame.to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\r\n",
                     index=name != "sparse_long")
        written.append(path)
    return written
