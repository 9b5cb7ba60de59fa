import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from tvpvecm.data import DeterministicRecipe, Panel, build_design, load_panel, read_mapping
from tvpvecm.errors import ContractError, DataError, SchemaError


def write_csv(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_row_load_is_identity(tmp_path):
    p = write_csv(tmp_path, "date,a,b\n2021-01-01,1.25,3\n2021-01-02,2.5,-1e-3\n2021-01-03,7,0.1\n")
    panel = load_panel(p)
    assert panel.T_raw == 3
    assert panel.names == ["a", "b"]
    np.testing.assert_array_equal(panel.levels, [[1.25, 3], [2.5, -1e-3], [7, 0.1]])


def test_linear_interpolation_fills_gap_with_neighbor_mean(tmp_path):
    p = write_csv(tmp_path, "date,a\n2021-01-01,1\n2021-01-02,\n2021-01-03,4\n")
    panel = load_panel(p, interpolation="linear")
    assert panel.levels[1, 0] == 2.5


def test_reject_policy_names_offending_cell(tmp_path):
    p = write_csv(tmp_path, "date,a,b\n2021-01-01,1,1\n2021-01-02,2,\n2021-01-03,4,3\n")
    with pytest.raises(DataError, match=r"row 2, column 'b'"):
        load_panel(p, interpolation="reject")


def test_missing_column_is_schema_error(tmp_path):
    p = write_csv(tmp_path, "date,a\n2021-01-01,1\n2021-01-02,2\n")
    with pytest.raises(SchemaError, match="zz"):
        load_panel(p, {"timestamp": "date", "endogenous": ["a", "zz"]})


def test_non_monotone_timestamps_rejected(tmp_path):
    p = write_csv(tmp_path, "date,a\n2021-01-02,1\n2021-01-01,2\n2021-01-03,2\n")
    with pytest.raises(DataError, match="increasing"):
        load_panel(p)


def test_schema_split_and_average(tmp_path):
    p = write_csv(tmp_path, "t,h1,h2,p,f\n2021-01-01,1,3,5,9\n2021-01-02,2,4,6,8\n")
    schema = {"timestamp": "t", "endogenous": ["p", "night"], "exogenous": ["f"],
              "average": {"night": ["h1", "h2"]}}
    panel = load_panel(p, schema)
    assert panel.names == ["p", "night", "f"]
    np.testing.assert_array_equal(panel.levels, [[5, 2], [6, 3]])
    np.testing.assert_array_equal(panel.factors, [[9], [8]])


def test_read_mapping_toml_and_json(tmp_path):
    (tmp_path / "a.toml").write_text('x = 1\n[s]\ny = "z"\n')
    (tmp_path / "a.json").write_text('{"x": 1, "s": {"y": "z"}}')
    assert read_mapping(tmp_path / "a.toml") == read_mapping(tmp_path / "a.json")


def small_panel(levels, factors=None, start="2021-01-04"):
    levels = np.asarray(levels, dtype=float)
    if levels.ndim == 1:
        levels = levels[:, None]
    T, M = levels.shape
    f = np.zeros((T, 0)) if factors is None else np.asarray(factors, dtype=float)
    names = [f"y{i}" for i in range(M)] + [f"f{i}" for i in range(f.shape[1])]
    return Panel(pd.date_range(start, periods=T), levels, f, names)


def test_design_worked_example():
    # M = 1, y = (1, 2, 4, 7), P = 1, intercept only
    d = build_design(small_panel([1, 2, 4, 7]), 1, DeterministicRecipe(True, False))
    assert d.T == 2
    np.testing.assert_array_equal(d.dy, [[2], [3]])
    np.testing.assert_array_equal(d.w, [[2], [4]])
    np.testing.assert_array_equal(d.x, [[1, 1], [2, 1]])


def test_dimensions():
    rng = np.random.default_rng(0)
    d = build_design(small_panel(rng.standard_normal((20, 3))), 2, DeterministicRecipe(True, False))
    assert d.J == 7 and d.x.shape[1] == 7
    assert d.q == d.M == 3
    assert d.T == 20 - 2 - 1
    d = build_design(small_panel(rng.standard_normal((20, 2)), rng.standard_normal((20, 2))), 1)
    assert d.q == 4 and d.w.shape == (d.T, 4)


def test_too_few_rows_and_bad_lag():
    with pytest.raises(ContractError):
        build_design(small_panel([1.0, 2, 3]), 1)
    with pytest.raises(ContractError):
        build_design(small_panel([1.0, 2, 3, 4, 5]), 0)


@settings(max_examples=40, deadline=None)
@given(T=st.integers(6, 40), M=st.integers(1, 3), P=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_reintegration_and_lag_alignment(T, M, P, seed):
    if T <= P + 2:
        return
    rng = np.random.default_rng(seed)
    y = np.cumsum(rng.normal(scale=10, size=(T, M)), axis=0) + 50
    f = rng.standard_normal((T, 1))
    d = build_design(small_panel(y, f), P)
    # re-integrating dy from y_P recovers the levels
    rec = y[P] + np.cumsum(d.dy, axis=0)
    np.testing.assert_allclose(rec, y[P + 1:], rtol=1e-10, atol=1e-10 * np.abs(y).max())
    # w rows are the previous period's level/factor rows
    np.testing.assert_array_equal(d.w, np.hstack([y, f])[P:-1])
    # first lagged difference block equals the previous row's dy
    np.testing.assert_array_equal(d.x[1:, :M], d.dy[:-1])


def test_day_of_week_dummies_repeat_weekly():
    d = build_design(small_panel(np.arange(30.0)), 1, DeterministicRecipe(True, True))
    c = d.c
    assert set(np.unique(c[:, 1:])) <= {0.0, 1.0}
    assert c.shape[1] == 7  # intercept + six days, Monday is the reference
    np.testing.assert_array_equal(c[7:], c[:-7])
    mondays = np.asarray(d.timestamps.dayofweek) == 0
    assert np.all(c[mondays, 1:] == 0)
    assert np.all(c[~mondays, 1:].sum(axis=1) == 1)


def test_recipe_without_intercept_keeps_all_days():
    r = DeterministicRecipe(intercept=False, day_of_week=True, trend=True)
    assert r.names()[:7] == [f"dow_{d}" for d in ("mon", "tue", "wed", "thu", "fri", "sat", "sun")]
    assert r.n_terms == 8
    assert DeterministicRecipe.from_dict(r.to_dict()) == r


def test_standardize_records_scales():
    rng = np.random.default_rng(1)
    p = small_panel(np.cumsum(rng.normal(scale=[1, 5], size=(50, 2)), axis=0))
    s = p.standardized()
    np.testing.assert_allclose(np.std(np.diff(s.levels, axis=0), axis=0, ddof=1), 1.0)
    np.testing.assert_allclose(s.levels * s.scales, p.levels)
    assert build_design(s, 1).scales is s.scales


def test_design_csv_export(tmp_path):
    d = build_design(small_panel(np.arange(12.0)), 1, DeterministicRecipe(True, False))
    d.to_csv(tmp_path / "design.csv")
    frame = pd.read_csv(tmp_path / "design.csv")
    assert list(frame.columns) == ["timestamp", "d_y0", "w_y0_l1", "x_y0_d_l1", "x_const"]
    assert len(frame) == d.T
