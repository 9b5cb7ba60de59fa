import json

import numpy as np
import pandas as pd
import pytest

from tvpvecm.cli import RunConfig, main
from tvpvecm.errors import ValidationError

FAST = {"draws": 40, "burnin": 20, "thin": 2, "P": 1, "seed": 5,
        "deterministics": {"intercept": True, "day_of_week": False, "trend": False}}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def synth(tmp_path, name="syn", **spec):
    spec = {"M": 2, "T": 150, "rank": 1, "seed": 1, **spec}
    out = tmp_path / name
    assert main(["synth", "--spec", str(write_json(tmp_path / f"{name}.json", spec)), "--out", str(out)]) == 0
    return out


def test_synth_outputs_and_truth(tmp_path):
    out = synth(tmp_path, rank=0)
    truth = json.loads((out / "truth.json").read_text())
    assert np.all(np.asarray(truth["pi"]) == 0)
    frame = pd.read_csv(out / "data.csv")
    assert frame.shape == (150, 3)
    out = synth(tmp_path, "flat", tvp_amplitude=0.0)
    pi = np.asarray(json.loads((out / "truth.json").read_text())["pi"])
    assert np.all(pi == pi[0])
    assert main(["verify", str(out)]) == 0


def test_synth_infeasible_rank(tmp_path, capsys):
    spec = write_json(tmp_path / "s.json", {"M": 2, "rank": 2})
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 2
    assert "rank" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def estimate(tmp_path, data, out, model=None, extra=()):
    cfg = write_json(tmp_path / f"{out}.json", {"model": {**FAST, **(model or {})}})
    return main(["estimate", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / out), *extra])


def test_estimate_summaries_and_determinism(tmp_path):
    data = synth(tmp_path) / "data.csv"
    assert estimate(tmp_path, data, "e1") == 0
    assert estimate(tmp_path, data, "e2") == 0
    ppr = pd.read_csv(tmp_path / "e1" / "summaries" / "ppr.csv", index_col=0)
    np.testing.assert_allclose(ppr.sum(axis=1), 1.0)
    files = sorted(p.name for p in (tmp_path / "e1" / "summaries").iterdir())
    assert {"ppr.csv", "pi_bar.csv", "pip_pi.csv", "pip_a.csv", "sv_params.csv", "volatility.csv",
            "sparse_long.csv"} <= set(files)
    for name in files:
        a = (tmp_path / "e1" / "summaries" / name).read_bytes()
        assert a == (tmp_path / "e2" / "summaries" / name).read_bytes()
    long = pd.read_csv(tmp_path / "e1" / "summaries" / "sparse_long.csv")
    assert list(long.columns) == ["time", "entity", "statistic", "value"]
    manifest = json.loads((tmp_path / "e1" / "manifest.json").read_text())
    listed = set(manifest["outputs"])
    on_disk = {str(p.relative_to(tmp_path / "e1")) for p in (tmp_path / "e1").rglob("*")
               if p.is_file() and p.name != "manifest.json"}
    assert listed == on_disk
    assert main(["verify", str(tmp_path / "e1")]) == 0
    (tmp_path / "e1" / "summaries" / "ppr.csv").write_text("tampered")
    assert main(["verify", str(tmp_path / "e1")]) == 2
    assert main(["report", str(tmp_path / "e2"), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "ppr.csv").read_bytes() == (tmp_path / "e2" / "summaries" / "ppr.csv").read_bytes()


def test_invalid_lag_is_named(tmp_path, capsys):
    data = synth(tmp_path) / "data.csv"
    assert estimate(tmp_path, data, "bad", {"P": 0}) == 2
    err = capsys.readouterr().err
    assert "validation error: models[0].P" in err
    assert not (tmp_path / "bad").exists()


def test_all_problems_listed(tmp_path, capsys):
    data = synth(tmp_path) / "data.csv"
    assert estimate(tmp_path, data, "bad", {"P": 0, "thin": 0, "error_dist": "x"}) == 2
    err = capsys.readouterr().err
    assert err.count("validation error") >= 3


def test_output_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("TVPVECM_OUTPUT", str(tmp_path / "root"))
    spec = write_json(tmp_path / "s.json", {"M": 2, "T": 50, "rank": 1, "seed": 3})
    assert main(["synth", "--spec", str(spec)]) == 0
    assert (tmp_path / "root" / "synth-seed3" / "data.csv").is_file()


def test_refuses_to_overwrite_foreign_directory(tmp_path):
    foreign = tmp_path / "mine"
    foreign.mkdir()
    (foreign / "notes.txt").write_text("keep")
    spec = write_json(tmp_path / "s.json", {"M": 2, "T": 50, "rank": 1})
    assert main(["synth", "--spec", str(spec), "--out", str(foreign)]) == 2
    assert (foreign / "notes.txt").read_text() == "keep"


def test_config_round_trip():
    raw = {"data": {"path": "x.csv", "interpolation": "reject"},
           "models": [{"model_class": "VECM", **FAST}, {"model_class": "AR-differences", "tvp": False}],
           "backtest": {"window": 100, "n_origins": 30, "stride": 5}, "mcs": {"alpha": 0.1}}
    cfg = RunConfig.from_dict(raw)
    again = RunConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.hash() == cfg.hash()
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValidationError) as exc:
        RunConfig.from_dict({"models": [{}, {}], "mcs": {"alpha": 2}, "extra": 1})
    assert len(exc.value.problems) == 3


def backtest_cfg(tmp_path, models, name="bt"):
    return write_json(tmp_path / f"{name}.json", {
        "models": [{**FAST, "draws": 60, "burnin": 20, "thin": 2, **m} for m in models],
        "backtest": {"window": 80, "n_origins": 30, "stride": 10}, "mcs": {"reps": 500}})


def test_backtest_single_model(tmp_path):
    data = synth(tmp_path) / "data.csv"
    cfg = backtest_cfg(tmp_path, [{"model_class": "VECM"}])
    assert main(["backtest", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "b")]) == 0
    res = pd.read_csv(tmp_path / "b" / "mcs_crps.csv")
    assert res["in_set"].tolist() == [True]
    loss = pd.read_csv(tmp_path / "b" / "loss_se.csv", index_col=0)
    assert loss.shape == (30, 1)
    manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert manifest["stride"] == 10


def test_backtest_broken_entry_is_excluded(tmp_path):
    data = synth(tmp_path) / "data.csv"
    cfg = backtest_cfg(tmp_path, [{"model_class": "AR-differences", "sparsify": False},
                                  {"model_class": "VECM-fixed", "rank": 3, "sparsify": False}])
    assert main(["backtest", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "b")]) == 4
    excl = pd.read_csv(tmp_path / "b" / "excluded.csv")
    assert excl["model"].tolist() == ["VECM-3-TVP-n"]
    scores = pd.read_csv(tmp_path / "b" / "scores.csv")
    assert scores["model"].tolist() == ["ARpd-TVP-n"]


@pytest.mark.slow
def test_random_walk_benchmarks_agree(tmp_path):
    rng = np.random.default_rng(0)
    y = np.cumsum(rng.standard_normal((260, 2)), axis=0)
    frame = pd.DataFrame(y, columns=["a", "b"],
                         index=pd.Index(pd.date_range("2020-01-01", periods=260).strftime("%Y-%m-%d"),
                                        name="timestamp"))
    frame.to_csv(tmp_path / "rw.csv")
    cfg = write_json(tmp_path / "g.json", {
        "models": [{**FAST, "draws": 600, "burnin": 200, "thin": 2, "model_class": m, "sparsify": False,
                    "tvp": False} for m in ("AR-differences", "VAR-differences")],
        "backtest": {"window": 150, "n_origins": 100, "stride": 10}, "mcs": {"reps": 500}})
    assert main(["backtest", "--config", str(cfg), "--data", str(tmp_path / "rw.csv"),
                 "--out", str(tmp_path / "b")]) == 0
    scores = pd.read_csv(tmp_path / "b" / "scores.csv").set_index("model")
    ratio = scores.loc["ARpd-TIV-n", "rmse_Total"] / scores.loc["VARd-TIV-n", "rmse_Total"]
    assert abs(ratio - 1) <= 0.1
