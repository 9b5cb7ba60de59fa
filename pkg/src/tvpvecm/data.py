"""Panel ingestion and construction of the regression design.

Rows of the design are indexed by the raw position ``t`` of the target
period; for lag order ``P`` the first usable target is raw row ``P + 1`` so
that ``Delta y_{t-P}`` exists.  Every design row only uses information dated
``t - 1`` or earlier, apart from the deterministic terms which are calendar
functions of the timestamp at ``t``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, SchemaError

try:  # python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml


DAY_NAMES = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


def read_mapping(path) -> dict:
    """Read a JSON or TOML file (chosen by extension) into a dict."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with open(path, "rb") as fh:
            return _toml.load(fh)
    with open(path) as fh:
        return json.load(fh)


@dataclass(frozen=True)
class DeterministicRecipe:
    """Which deterministic columns enter ``c_t``.

    With an intercept the day-of-week block drops Monday as the reference day.
    """

    intercept: bool = True
    day_of_week: bool = True
    trend: bool = False

    def names(self) -> list[str]:
        out = []
        if self.intercept:
            out.append("const")
        if self.day_of_week:
            days = DAY_NAMES[1:] if self.intercept else DAY_NAMES
            out.extend(f"dow_{d}" for d in days)
        if self.trend:
            out.append("trend")
        return out

    @property
    def n_terms(self) -> int:
        return len(self.names())

    def columns(self, timestamps: pd.DatetimeIndex, positions: np.ndarray) -> np.ndarray:
        """Deterministic matrix for the given timestamps (rows) and raw positions."""
        n = len(timestamps)
        cols = []
        if self.intercept:
            cols.append(np.ones(n))
        if self.day_of_week:
            dow = np.asarray(timestamps.dayofweek)
            first = 1 if self.intercept else 0
            for d in range(first, 7):
                cols.append((dow == d).astype(float))
        if self.trend:
            cols.append(np.asarray(positions, dtype=float))
        if not cols:
            return np.zeros((n, 0))
        return np.column_stack(cols)

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "DeterministicRecipe":
        if d is None:
            return cls()
        return cls(**{k: bool(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "day_of_week": self.day_of_week, "trend": self.trend}


@dataclass
class Panel:
    """Raw multivariate series: ``levels`` is T_raw x M, ``factors`` T_raw x q_f."""

    timestamps: pd.DatetimeIndex
    levels: np.ndarray
    factors: np.ndarray
    names: list[str]
    scales: np.ndarray | None = None

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if self.levels.ndim == 1:
            self.levels = self.levels[:, None]
        n = self.levels.shape[0]
        if self.factors is None:
            self.factors = np.zeros((n, 0))
        self.factors = np.asarray(self.factors, dtype=float).reshape(n, -1)
        self.timestamps = pd.DatetimeIndex(self.timestamps)
        if len(self.timestamps) != n:
            raise DataError("timestamps and levels differ in length")
        if self.levels.shape[1] < 1:
            raise DataError("panel needs at least one endogenous series")
        if n > 1 and not self.timestamps.is_monotonic_increasing or self.timestamps.has_duplicates:
            raise DataError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(self.levels)) and np.all(np.isfinite(self.factors))):
            raise DataError("panel contains missing or non-finite values")
        if len(self.names) != self.M + self.q_f:
            raise DataError(f"expected {self.M + self.q_f} names, got {len(self.names)}")

    @property
    def T_raw(self) -> int:
        return self.levels.shape[0]

    @property
    def M(self) -> int:
        return self.levels.shape[1]

    @property
    def q_f(self) -> int:
        return self.factors.shape[1]

    @property
    def endogenous(self) -> list[str]:
        return list(self.names[: self.M])

    def slice(self, start: int, stop: int) -> "Panel":
        return Panel(self.timestamps[start:stop], self.levels[start:stop],
                     self.factors[start:stop], list(self.names), self.scales)

    def standardized(self) -> "Panel":
        """Divide each endogenous series by the s.d. of its first differences.

        The scales are kept on the returned panel so forecasts can be mapped
        back to price units before scoring.
        """
        sd = np.std(np.diff(self.levels, axis=0), axis=0, ddof=1)
        sd = np.where(sd > 0, sd, 1.0)
        return Panel(self.timestamps, self.levels / sd, self.factors, list(self.names), sd)


def _interpolate(frame: pd.DataFrame, columns: Sequence[str], policy: str) -> pd.DataFrame:
    missing = frame[list(columns)].isna()
    if not missing.values.any():
        return frame
    if policy == "reject":
        rows, cols = np.nonzero(missing.values)
        r, c = rows[0], cols[0]
        raise DataError(f"missing value at row {r + 1}, column {columns[c]!r}")
    if policy != "linear":
        raise SchemaError(f"unknown interpolation policy {policy!r}")
    out = frame.copy()
    out[list(columns)] = out[list(columns)].interpolate(method="linear", limit_direction="both")
    if out[list(columns)].isna().values.any():
        raise DataError("column is entirely missing; cannot interpolate")
    return out


def load_panel(path, schema: Mapping | str | Path | None = None,
               interpolation: str = "linear") -> Panel:
    """Read a CSV into a :class:`Panel`.

    ``schema`` maps ``timestamp`` to the time column, ``endogenous`` and
    ``exogenous`` to lists of numeric columns, and optionally ``average`` to
    ``{new_name: [columns]}`` groups that are averaged into one endogenous
    series before modeling.  Without a schema the first column is the
    timestamp and every other column is endogenous.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    if schema is not None and not isinstance(schema, Mapping):
        schema = read_mapping(schema)
    frame = pd.read_csv(path)
    if frame.shape[1] < 2:
        raise SchemaError("CSV needs a timestamp column and at least one series")
    schema = dict(schema or {})
    ts_col = schema.get("timestamp", frame.columns[0])
    averages = dict(schema.get("average", {}))
    exog = list(schema.get("exogenous", []))
    averaged = {c for cols in averages.values() for c in cols}
    if "endogenous" in schema:
        endog = list(schema["endogenous"])
    else:
        endog = [c for c in frame.columns if c != ts_col and c not in exog and c not in averaged]
        endog += list(averages)
    needed = [ts_col] + [c for c in endog if c not in averages] + exog + sorted(averaged)
    absent = [c for c in needed if c not in frame.columns]
    if absent:
        raise SchemaError(f"missing column(s): {', '.join(map(str, absent))}")
    if not endog:
        raise SchemaError("schema declares no endogenous column")

    stamps = pd.to_datetime(frame[ts_col])
    if stamps.isna().any():
        raise DataError("unparseable timestamp")
    if not stamps.is_monotonic_increasing or stamps.duplicated().any():
        raise DataError("timestamps are not strictly increasing")

    numeric = [c for c in needed[1:]]
    for c in numeric:
        frame[c] = pd.to_numeric(frame[c], errors="coerce")
    frame = _interpolate(frame, numeric, interpolation)
    for name, cols in averages.items():
        frame[name] = frame[list(cols)].mean(axis=1)

    levels = frame[endog].to_numpy(dtype=float)
    factors = frame[exog].to_numpy(dtype=float) if exog else np.zeros((len(frame), 0))
    return Panel(pd.DatetimeIndex(stamps), levels, factors, [str(c) for c in endog + exog])


@dataclass
class Design:
    """Full-data regression matrices for one panel and lag order.

    ``dy`` (T x M), ``w`` (T x q), ``x`` (T x J) follow the VECM layout;
    ``y`` and ``ylags`` carry levels for the VAR-in-levels remapping.
    """

    dy: np.ndarray
    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    y_prev: np.ndarray
    ylags: np.ndarray
    c: np.ndarray
    timestamps: pd.DatetimeIndex
    positions: np.ndarray
    P: int
    recipe: DeterministicRecipe
    names: list[str]
    M: int
    q_f: int
    scales: np.ndarray | None = None
    x_names: list[str] = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.dy.shape[0]

    @property
    def q(self) -> int:
        return self.M + self.q_f

    @property
    def N(self) -> int:
        return self.c.shape[1]

    @property
    def J(self) -> int:
        return self.M * self.P + self.N

    def rows(self, start: int, stop: int) -> "Design":
        s = slice(start, stop)
        return Design(self.dy[s], self.w[s], self.x[s], self.y[s], self.y_prev[s], self.ylags[s],
                      self.c[s], self.timestamps[s], self.positions[s], self.P, self.recipe,
                      list(self.names), self.M, self.q_f, self.scales, list(self.x_names))

    def to_frame(self) -> pd.DataFrame:
        endog = self.names[: self.M]
        cols = {}
        for i, n in enumerate(endog):
            cols[f"d_{n}"] = self.dy[:, i]
        for j, n in enumerate(self.names):
            cols[f"w_{n}_l1"] = self.w[:, j]
        for j, n in enumerate(self.x_names):
            cols[f"x_{n}"] = self.x[:, j]
        return pd.DataFrame(cols, index=pd.Index(self.timestamps, name="timestamp"))

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path)


def build_design(panel: Panel, P: int, deterministics: DeterministicRecipe | None = None) -> Design:
    """Assemble ``dy``, ``w`` and ``x`` for lag order ``P``.

    ``T = T_raw - P - 1``.  Row ``k`` targets raw period ``t = P + 1 + k``:
    ``dy = y_t - y_{t-1}``, ``w = (y_{t-1}, f_{t-1})`` and
    ``x = (dy_{t-1}, ..., dy_{t-P}, c_t)``.
    """
    from .errors import ContractError

    if P < 1:
        raise ContractError("lag order P must be >= 1")
    recipe = deterministics or DeterministicRecipe()
    T_raw, M = panel.levels.shape
    if T_raw <= P + 2:
        raise ContractError(f"need more than P + 2 = {P + 2} rows, got {T_raw}")
    levels = panel.levels
    diffs = np.diff(levels, axis=0)  # diffs[s] = y_{s+1} - y_s
    t = np.arange(P + 1, T_raw)
    dy = diffs[t - 1]
    w = np.hstack([levels[t - 1], panel.factors[t - 1]])
    lagged = [diffs[t - 1 - p] for p in range(1, P + 1)]
    ylags = np.hstack([levels[t - p] for p in range(1, P + 1)])
    c = recipe.columns(panel.timestamps[t], t)
    x = np.hstack(lagged + [c])
    endog = panel.endogenous
    x_names = [f"{n}_d_l{p}" for p in range(1, P + 1) for n in endog] + recipe.names()
    return Design(dy=dy, w=w, x=x, y=levels[t], y_prev=levels[t - 1], ylags=ylags, c=c,
                  timestamps=panel.timestamps[t], positions=t, P=P, recipe=recipe,
                  names=list(panel.names), M=M, q_f=panel.q_f, scales=panel.scales,
                  x_names=x_names)
