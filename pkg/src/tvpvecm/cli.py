"""Command-line interface: ``tvpvecm {estimate,backtest,synth,report,verify}``.

Exit codes: 0 success, 2 validation/contract error, 3 numerical failure,
4 backtest grid completed only partially.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import pandas as pd

from . import __version__
from .data import build_design, load_panel, read_mapping
from .errors import ContractError, NumericalError, ValidationError
from .evaluate import backtest, loss_matrix, mcs, score_table
from .sampler import DrawArchive, ModelConfig, run_mcmc
from .summaries import FLOAT_FORMAT, write_summaries
from .synth import SynthSpec, generate

log = logging.getLogger("tvpvecm")

OUTPUT_ENV = "TVPVECM_OUTPUT"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4


@dataclass
class DataSection:
    path: str | None = None
    schema: dict | None = None
    interpolation: str = "linear"
    standardize: bool = False


@dataclass
class BacktestSection:
    window: int = 400
    n_origins: int = 100
    stride: int = 1
    functional: str = "median"
    rules: list = field(default_factory=lambda: ["se", "crps"])


@dataclass
class MCSSection:
    alpha: float = 0.25
    reps: int = 5000
    block: int | None = None
    seed: int = 0


@dataclass
class RunConfig:
    """One declarative run description (data, model grid, backtest, MCS)."""

    data: DataSection = field(default_factory=DataSection)
    models: list = field(default_factory=lambda: [ModelConfig()])
    backtest: BacktestSection = field(default_factory=BacktestSection)
    mcs: MCSSection = field(default_factory=MCSSection)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        problems = []
        known = {"data", "model", "models", "backtest", "mcs"}
        problems += [f"{k}: unknown section" for k in sorted(set(d) - known)]

        def section(klass, key):
            raw = d.get(key) or {}
            bad = set(raw) - set(klass.__dataclass_fields__)
            problems.extend(f"{key}.{k}: unknown field" for k in sorted(bad))
            return klass(**{k: v for k, v in raw.items() if k not in bad})

        data = section(DataSection, "data")
        bt = section(BacktestSection, "backtest")
        mc = section(MCSSection, "mcs")
        raw_models = d.get("models")
        if raw_models is None:
            raw_models = [d["model"]] if "model" in d else [{}]
        models = []
        for k, m in enumerate(raw_models):
            try:
                cfg = ModelConfig.from_dict(m)
            except ValidationError as err:
                problems += [f"models[{k}].{p}" for p in err.problems]
                continue
            except TypeError as err:
                problems.append(f"models[{k}]: {err}")
                continue
            problems += [f"models[{k}].{p}" for p in cfg.problems()]
            models.append(cfg)
        if data.interpolation not in ("linear", "reject"):
            problems.append("data.interpolation: must be 'linear' or 'reject'")
        if bt.stride < 1:
            problems.append("backtest.stride: must be >= 1")
        if bt.functional not in ("median", "mean"):
            problems.append("backtest.functional: must be 'median' or 'mean'")
        if not set(bt.rules) <= {"se", "crps"}:
            problems.append("backtest.rules: allowed values are 'se' and 'crps'")
        if not 0 < mc.alpha < 1:
            problems.append("mcs.alpha: must lie in (0, 1)")
        labels = [m.name for m in models]
        if len(set(labels)) != len(labels):
            problems.append("models: labels must be unique (set 'label' to disambiguate)")
        if problems:
            raise ValidationError(problems)
        return cls(data, models, bt, mc)

    def to_dict(self) -> dict:
        return {"data": asdict(self.data), "models": [m.to_dict() for m in self.models],
                "backtest": asdict(self.backtest), "mcs": asdict(self.mcs)}

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path, overrides: dict | None = None) -> RunConfig:
    raw = read_mapping(path) if path else {}
    if overrides:
        if "models" not in raw:
            raw = dict(raw)
            raw["models"] = [raw.pop("model", {})]
        raw["models"] = [{**m, **overrides} for m in raw["models"]]
    return RunConfig.from_dict(raw)


def _output_dir(arg, command: str, tag: str) -> Path:
    if arg:
        return Path(arg)
    root = Path(os.environ.get(OUTPUT_ENV, "tvpvecm-output"))
    return root / f"{command}-{tag}"


class _Staging:
    """Write into a temporary sibling directory; move into place on success."""

    def __init__(self, target: Path):
        self.target = target

    def __enter__(self) -> Path:
        t = self.target
        if t.exists() and (not t.is_dir() or (any(t.iterdir()) and not (t / "manifest.json").is_file())):
            raise ContractError(f"refusing to replace {t}: not an earlier tvpvecm output directory")
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.target.name}-", dir=self.target.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.target.exists():
            shutil.rmtree(self.target)
        self.tmp.rename(self.target)
        return False


def write_manifest(out: Path, *, command: str, inputs: list, config_hash: str | None,
                   seed, started: float, extra: dict | None = None) -> Path:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "command": command,
        "version": __version__,
        "config_hash": config_hash,
        "seed": seed,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "inputs": {str(Path(k).resolve()): sha256_file(k) for k in inputs if k},
        "outputs": {str(p.relative_to(out)): sha256_file(p) for p in files},
        **(extra or {}),
    }
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return path


def _prepare_data(cfg: RunConfig, data_arg):
    path = data_arg or cfg.data.path
    if not path:
        raise ValidationError(["data.path: no data file given (config or --data)"])
    panel = load_panel(path, cfg.data.schema, interpolation=cfg.data.interpolation)
    if cfg.data.standardize:
        panel = panel.standardized()
    return path, panel


def _model_overrides(args) -> dict:
    out = {}
    for key in ("seed", "draws", "burnin", "thin", "P", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


# -- subcommands --------------------------------------------------------------

def cmd_estimate(args) -> int:
    started = time.time()
    cfg = load_config(args.config, _model_overrides(args))
    if len(cfg.models) != 1:
        raise ValidationError(["models: estimate takes exactly one model"])
    model = cfg.models[0]
    data_path, panel = _prepare_data(cfg, args.data)
    design = build_design(panel, model.P, model.deterministics)
    model.validate(design.M)
    out = _output_dir(args.out, "estimate", cfg.hash())
    with _Staging(out) as tmp:
        archive = run_mcmc(model, design)
        archive.save(tmp / "archive")
        write_summaries(archive, tmp / "summaries")
        with open(tmp / "config.json", "w") as fh:
            json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
        write_manifest(tmp, command="estimate", inputs=[args.config, data_path],
                       config_hash=cfg.hash(), seed=model.seed, started=started,
                       extra={"model": model.name, "scales": archive.meta.get("scales")})
    print(out)
    return EXIT_OK


def _run_one(payload):
    model_dict, design, bt = payload
    model = ModelConfig.from_dict(model_dict)
    try:
        run = backtest(model, design, window=bt["window"], n_origins=bt["n_origins"],
                       stride=bt["stride"], scales=design.scales)
        return run, None
    except (ContractError, NumericalError) as err:
        return None, f"{type(err).__name__}: {err}"


def cmd_backtest(args) -> int:
    started = time.time()
    cfg = load_config(args.config, _model_overrides(args))
    data_path, panel = _prepare_data(cfg, args.data)
    bt = asdict(cfg.backtest)
    payloads, excluded = [], {}
    for model in cfg.models:
        try:
            design = build_design(panel, model.P, model.deterministics)
            model.validate(design.M)
            payloads.append((model.to_dict(), design, bt))
        except ContractError as err:
            excluded[model.name] = f"{type(err).__name__}: {err}"
    threads = max([m.threads for m in cfg.models] + [args.threads or 1])
    if threads > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, payloads))
    else:
        results = [_run_one(p) for p in payloads]
    runs = []
    for (mdict, _, _), (run, err) in zip(payloads, results):
        name = ModelConfig.from_dict(mdict).name
        if run is None:
            excluded[name] = err
        else:
            runs.append(run)
    for name, why in excluded.items():
        log.warning("model %s excluded from comparison: %s", name, why)
    if not runs:
        raise NumericalError("every model in the grid failed")
    out = _output_dir(args.out, "backtest", cfg.hash())
    names = panel.endogenous
    with _Staging(out) as tmp:
        write = dict(float_format=FLOAT_FORMAT, lineterminator="\r\n")
        score_table(runs, names, cfg.backtest.functional).to_csv(tmp / "scores.csv", index=False, **write)
        for rule in cfg.backtest.rules:
            lm = loss_matrix(runs, rule, cfg.backtest.functional)
            lm.to_csv(tmp / f"loss_{rule}.csv", **write)
            res = mcs(lm.to_numpy(), list(lm.columns), cfg.mcs.alpha, block=cfg.mcs.block,
                      reps=cfg.mcs.reps, seed=cfg.mcs.seed)
            res.to_frame().to_csv(tmp / f"mcs_{rule}.csv", index=False, **write)
        pd.DataFrame({"model": list(excluded), "reason": list(excluded.values())}).to_csv(
            tmp / "excluded.csv", index=False, lineterminator="\r\n")
        write_manifest(tmp, command="backtest", inputs=[args.config, data_path],
                       config_hash=cfg.hash(), seed=[m.seed for m in cfg.models], started=started,
                       extra={"stride": cfg.backtest.stride, "window": cfg.backtest.window,
                              "excluded": excluded})
    print(out)
    return EXIT_PARTIAL if excluded else EXIT_OK


def cmd_synth(args) -> int:
    started = time.time()
    raw = read_mapping(args.spec) if args.spec else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = SynthSpec.from_dict(raw).validate()
    out = _output_dir(args.out, "synth", f"seed{spec.seed}")
    with _Staging(out) as tmp:
        res = generate(spec)
        res.write(tmp / "data.csv", tmp / "truth.json")
        write_manifest(tmp, command="synth", inputs=[args.spec], config_hash=None,
                       seed=spec.seed, started=started)
    print(out)
    return EXIT_OK


def cmd_report(args) -> int:
    started = time.time()
    src = Path(args.archive)
    archive = DrawArchive.load(src / "archive" if (src / "archive").is_dir() else src)
    out = _output_dir(args.out, "report", archive.config.hash())
    with _Staging(out) as tmp:
        write_summaries(archive, tmp)
        write_manifest(tmp, command="report", inputs=sorted(src.rglob("metadata.json")),
                       config_hash=archive.config.hash(), seed=archive.config.seed, started=started)
    print(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    path = Path(args.manifest)
    if path.is_dir():
        path = path / "manifest.json"
    with open(path) as fh:
        manifest = json.load(fh)
    root = path.parent
    bad = []
    for name, digest in manifest["outputs"].items():
        p = root / name
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(f"output changed or missing: {name}")
    for name, digest in manifest["inputs"].items():
        p = Path(name)
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(f"input changed or missing: {name}")
    listed = set(manifest["outputs"])
    extra = [str(p.relative_to(root)) for p in root.rglob("*")
             if p.is_file() and p.name != "manifest.json" and str(p.relative_to(root)) not in listed]
    bad += [f"file not in manifest: {n}" for n in sorted(extra)]
    for line in bad:
        print(line)
    if bad:
        return EXIT_VALIDATION
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvpvecm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="run configuration (JSON or TOML)")
        if data:
            p.add_argument("--data", help="CSV file; overrides data.path")
        p.add_argument("--out", help=f"output directory (default under ${OUTPUT_ENV})")
        p.add_argument("--seed", type=int)
        p.add_argument("--draws", type=int)
        p.add_argument("--burnin", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--P", type=int)
        p.add_argument("--threads", type=int)

    p = sub.add_parser("estimate", help="fit one model and write the archive and summaries")
    common(p)
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("backtest", help="rolling-window forecasts for a model grid, losses and MCS")
    common(p)
    p.set_defaults(func=cmd_backtest)
    p = sub.add_parser("synth", help="generate a synthetic panel with known truth")
    p.add_argument("--spec", help="generator settings (JSON or TOML)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("report", help="summary CSVs from a saved archive")
    p.add_argument("archive", help="archive directory or estimate output directory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    p = sub.add_parser("verify", help="re-hash inputs and outputs listed in a manifest")
    p.add_argument("manifest", help="manifest.json or the directory holding it")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValidationError as err:
        for p in err.problems:
            print(f"validation error: {p}", file=sys.stderr)
        return EXIT_VALIDATION
    except ContractError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
