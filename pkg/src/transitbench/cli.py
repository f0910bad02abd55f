"""Command-line entry point: ``transitbench {bench,explain,scenario,synth} --config run.json``.

Outputs are assembled in a hidden sibling directory and moved into place
only when the whole run succeeds, so a failed run never leaves partial
files behind. Exit codes: 0 ok, 2 configuration error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd

from . import __version__
from .dataset import Dataset, Schema, encode, filter_subset, load_survey, stratified_kfold
from .errors import ConfigError, DataError, TransitBenchError
from .mcomp import ScoreMatrix, build_report, pvalue_heatmap_frame
from .metrics import HIGHER_BETTER, METRICS, cv_score, score_matrix_frame, scores_frame, summary_frame
from .models import FittedModel, RegressorSpec, fit
from .synth import SynthConfig, synth_generate, travel_survey_config

log = logging.getLogger("transitbench")

ENV_OUT = "TRANSITBENCH_OUT"
COMMANDS = ("bench", "explain", "scenario", "synth")
EXPLAIN_METHODS = ("importance", "pdp", "ice", "shap", "lime")
FLOAT_FORMAT = "%.12g"


@dataclass
class RunConfig:
    data: dict
    models: list[RegressorSpec] = field(default_factory=list)
    k: int = 10
    seed: int = 0
    metrics: tuple[str, ...] = METRICS
    alpha: float = 0.05
    weighted: bool = False
    subset: dict = field(default_factory=dict)
    explain: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    output: str | None = None
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path = Path(".")) -> "RunConfig":
        known = {"data", "models", "k", "seed", "metrics", "alpha", "weighted", "subset", "explain",
                 "scenario", "output"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "data" not in doc:
            raise ConfigError("config needs a 'data' section")
        seed = int(doc.get("seed", 0))
        models = [RegressorSpec.from_dict(m, default_seed=seed) for m in doc.get("models", [])]
        cfg = cls(
            data=dict(doc["data"]), models=models, k=int(doc.get("k", 10)), seed=seed,
            metrics=tuple(doc.get("metrics", METRICS)), alpha=float(doc.get("alpha", 0.05)),
            weighted=bool(doc.get("weighted", False)), subset=dict(doc.get("subset", {})),
            explain=dict(doc.get("explain", {})), scenario=dict(doc.get("scenario", {})),
            output=doc.get("output"), base_dir=base_dir,
        )
        cfg.check()
        return cfg

    def check(self) -> None:
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}; choose from {METRICS}")
        labels = [m.label for m in self.models]
        dupes = {x for x in labels if labels.count(x) > 1}
        if dupes:
            raise ConfigError(f"duplicate model names {sorted(dupes)}; give each spec a 'name'")
        methods = self.explain.get("methods", [])
        unknown = [m for m in methods if m not in EXPLAIN_METHODS]
        if unknown:
            raise ConfigError(f"unknown explain method(s) {unknown}; choose from {EXPLAIN_METHODS}")

    def to_dict(self) -> dict:
        return {
            "data": self.data,
            "models": [{"family": m.family, "name": m.label, "seed": m.seed, **dict(m.params)} for m in self.models],
            "k": self.k, "seed": self.seed, "metrics": list(self.metrics), "alpha": self.alpha,
            "weighted": self.weighted, "subset": self.subset, "explain": self.explain,
            "scenario": self.scenario, "output": self.output,
        }

    def model(self, label: str | None) -> RegressorSpec:
        if label is None:
            if len(self.models) != 1:
                raise ConfigError("several models configured; name the one to use")
            return self.models[0]
        for m in self.models:
            if m.label == label:
                return m
        raise ConfigError(f"no model named {label!r}; configured: {[m.label for m in self.models]}")


# --- data -------------------------------------------------------------------------------

def synth_config_of(data: dict, seed: int) -> SynthConfig:
    if "preset" in data:
        if data["preset"] != "travel_survey":
            raise ConfigError(f"unknown synthetic preset {data['preset']!r}")
        return travel_survey_config(
            n=int(data.get("n", 2000)), seed=int(data.get("seed", seed)),
            nonlinear=bool(data.get("nonlinear", True)), mode=data.get("mode", "zinb"),
        )
    if "synth" in data:
        doc = dict(data["synth"])
        doc.setdefault("seed", seed)
        return SynthConfig.from_dict(doc)
    raise ConfigError("data section needs 'path' + 'schema', 'synth', or 'preset'")


def load_data(cfg: RunConfig) -> Dataset:
    data = cfg.data
    if "path" in data:
        if "schema" not in data:
            raise ConfigError("data.path needs a data.schema file")
        schema = Schema.load(cfg.base_dir / data["schema"])
        ds = load_survey(cfg.base_dir / data["path"], schema)
    else:
        ds = synth_generate(synth_config_of(data, cfg.seed))
    if cfg.subset:
        ds = filter_subset(ds, cfg.subset)
    return ds


# --- writers ----------------------------------------------------------------------------

def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(doc, path: Path) -> Path:
    path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _fit_all(cfg: RunConfig, X, ds: Dataset, specs) -> dict[str, FittedModel]:
    w = ds.weights if cfg.weighted else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return {s.label: fit(s, X, ds.y, w) for s in specs}


# --- bench ------------------------------------------------------------------------------

def _cv_job(args):
    spec, X, y, folds, w, weighted = args
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return cv_score(spec, X, y, folds, weights=w, fit_weighted=weighted)


def run_benchmark(cfg: RunConfig, out: Path, plots: bool = False, jobs: int = 1) -> list[Path]:
    if not cfg.models:
        raise ConfigError("bench needs at least one model spec")
    ds = load_data(cfg)
    X = encode(ds)
    folds = stratified_kfold(ds, cfg.k, cfg.seed)
    w = ds.weights if cfg.weighted else None
    tasks = [(s, X, ds.y, folds, w, cfg.weighted) for s in cfg.models]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fold_scores = list(pool.map(_cv_job, tasks))
    else:
        fold_scores = [_cv_job(t) for t in tasks]
    results = {s.label: fs for s, fs in zip(cfg.models, fold_scores)}

    written = [
        write_csv(scores_frame(results)[["fold", "model", *cfg.metrics, "n"]], out / "scores.csv"),
        write_csv(score_matrix_frame(results), out / "score_matrix.csv"),
        write_csv(summary_frame(results), out / "summary.csv"),
    ]
    folds.to_csv(out / "folds.csv")
    written.append(out / "folds.csv")

    tests: dict[str, Any] = {}
    if len(results) >= 2:
        for metric in cfg.metrics:
            sm = ScoreMatrix.from_fold_scores(results, metric, HIGHER_BETTER[metric])
            tests[metric] = build_report(sm, cfg.alpha)
            written.append(write_csv(pvalue_heatmap_frame(sm, cfg.alpha), out / f"pvalues_{metric}.csv"))
    else:
        tests["note"] = "multiple-comparison tests need at least two models"
    written.append(write_json(tests, out / "tests.json"))

    if plots:
        from . import plotting

        long = scores_frame(results)
        for metric in cfg.metrics:
            written.append(plotting.fold_scores_boxplot(long, metric, out / f"scores_{metric}.svg"))
            if metric in tests:
                heat = pd.read_csv(out / f"pvalues_{metric}.csv")
                written.append(plotting.pvalue_heatmap(heat, cfg.alpha, out / f"pvalues_{metric}.svg"))
                written.append(plotting.rank_graph(tests[metric]["mean_ranks"], tests[metric]["not_different"],
                                                   out / f"rank_graph_{metric}.svg"))
    return written


# --- explain ----------------------------------------------------------------------------

def _sample_rows(spec, n: int, seed: int) -> np.ndarray:
    if isinstance(spec, int):
        return np.sort(np.random.default_rng(seed).choice(n, size=min(spec, n), replace=False))
    rows = np.asarray(spec, dtype=int)
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise ConfigError(f"row ids must be in [0, {n})")
    return rows


def run_explain(cfg: RunConfig, out: Path, plots: bool = False, jobs: int = 1) -> list[Path]:
    from .interpret import (
        beeswarm_frame, ice, lime_explain, make_grid, pdp, permutation_importance, shap_many,
    )

    ex = cfg.explain
    methods = list(ex.get("methods", EXPLAIN_METHODS))
    if not methods:
        raise ConfigError("explain.methods is empty")
    spec = cfg.model(ex.get("model"))
    ds = load_data(cfg)
    X = encode(ds)
    model = _fit_all(cfg, X, ds, [spec])[spec.label]
    features = ex.get("features") or X.schema.feature_names
    grid_size = int(ex.get("grid_size", 20))
    seed = cfg.seed
    written: list[Path] = []

    if "importance" in methods:
        rep = permutation_importance(model, X, ds.y, metric=ex.get("metric", "rmse"),
                                     repeats=int(ex.get("repeats", 5)), seed=seed)
        written.append(write_csv(rep.to_frame(), out / "importance.csv"))
    grids = {f: make_grid(X, f, grid_size) for f in features} if {"pdp", "ice"} & set(methods) else {}
    if "pdp" in methods:
        frame = pd.concat([pdp(model, X, g).to_frame() for g in grids.values()], ignore_index=True)
        written.append(write_csv(frame, out / "pdp.csv"))
    if "ice" in methods:
        sample = ex.get("ice_sample", 200)
        frame = pd.concat([ice(model, X, g, sample=sample, seed=seed).to_frame() for g in grids.values()],
                          ignore_index=True)
        written.append(write_csv(frame, out / "ice.csv"))
    if "shap" in methods:
        rows = _sample_rows(ex.get("shap_rows", 50), ds.n, seed)
        background = _sample_rows(ex.get("background", 100), ds.n, seed + 1)
        kw = {}
        method = ex.get("shap_method", "exact")
        if method == "sampled":
            kw = {"n_coalitions": int(ex.get("n_coalitions", 2000)), "seed": seed}
        exps = shap_many(model, X, rows, background, method, **kw)
        written.append(write_csv(beeswarm_frame(exps, rows), out / "shap.csv"))
        envelope = {
            "method": method, "model": spec.label, "background_ids": background.tolist(),
            "instances": [{"instance": int(r), "base": e.base, "prediction": e.prediction,
                           "residual_adjusted": e.residual_adjusted} for r, e in zip(rows, exps)],
        }
        written.append(write_json(envelope, out / "shap.json"))
    lime_doc = None
    if "lime" in methods:
        lime_cfg = ex.get("lime", {})
        entries = []
        for r in _sample_rows(ex.get("instances", [0, 1]), ds.n, seed):
            e = lime_explain(model, X.values[r], X, num_samples=int(lime_cfg.get("num_samples", 5000)),
                             K=lime_cfg.get("K"), kernel_width=lime_cfg.get("kernel_width"), seed=seed)
            entries.append({"instance": int(r), **e.to_dict()})
        lime_doc = {"model": spec.label, "entries": entries}
        written.append(write_json(lime_doc, out / "lime.json"))

    if plots:
        from . import plotting

        if "importance" in methods:
            written.append(plotting.importance_bars(pd.read_csv(out / "importance.csv"), out / "importance.svg"))
        if "pdp" in methods:
            pdp_frame = pd.read_csv(out / "pdp.csv", dtype={"grid_value": str})
            ice_frame = pd.read_csv(out / "ice.csv", dtype={"grid_value": str}) if "ice" in methods else None
            for f in features:
                written.append(plotting.pdp_ice(pdp_frame, ice_frame, f, out / f"pdp_{f}.svg"))
        if "shap" in methods:
            written.append(plotting.shap_beeswarm(pd.read_csv(out / "shap.csv"), out / "shap_beeswarm.svg"))
        if lime_doc:
            for entry in lime_doc["entries"]:
                written.append(plotting.lime_bars(entry, out / f"lime_{entry['instance']}.svg"))
    return written


# --- scenario ---------------------------------------------------------------------------

def run_scenario(cfg: RunConfig, out: Path, plots: bool = False, jobs: int = 1) -> list[Path]:
    from .spatial import DEFAULT_BINS, DEFAULT_DELTAS, HexGrid, new_trips_map, sensitivity_curve, spaef_matrix

    sc = cfg.scenario
    if not cfg.models:
        raise ConfigError("scenario needs at least one model spec")
    labels = sc.get("models") or [m.label for m in cfg.models]
    specs = [cfg.model(lb) for lb in labels]
    feature = sc.get("feature", "access")
    deltas = np.asarray(sc.get("deltas", DEFAULT_DELTAS), dtype=float)
    hex_size = float(sc.get("hex_size", 1000.0))
    bins = int(sc.get("bins", DEFAULT_BINS))
    subgroup = sc.get("subset", {})

    ds = load_data(cfg)
    X = encode(ds)
    if feature not in X.names:
        raise DataError(f"scenario feature {feature!r} is not a model feature")
    models = _fit_all(cfg, X, ds, specs)
    target = filter_subset(ds, subgroup) if subgroup else ds
    if target.n == 0:
        raise DataError(f"scenario subset {subgroup} is empty")
    Xs = encode(target)
    label = ",".join(f"{k}={v}" for k, v in subgroup.items()) or "all"
    weights = target.weights if cfg.weighted else None

    curves = [sensitivity_curve(models[lb], Xs, feature, deltas, lb, label, weights=weights).to_frame()
              for lb in labels]
    written = [write_csv(pd.concat(curves, ignore_index=True), out / "sensitivity.csv")]

    maps = {}
    if target.coords is None:
        msg = "dataset has no coordinates; hex maps and SPAEF skipped"
        warnings.warn(msg, stacklevel=2)
        print(f"warning: {msg}", file=sys.stderr)
    else:
        grid = HexGrid.for_points(ds.coords, hex_size)
        for lb in labels:
            maps[lb] = new_trips_map(models[lb], Xs, target.coords, feature, float(deltas[-1]), grid)
            maps[lb].to_csv(out / f"hexmap_{lb}.csv")
            written.append(out / f"hexmap_{lb}.csv")
        written.append(write_csv(spaef_matrix(maps, bins), out / "spaef_matrix.csv"))

    if plots:
        from . import plotting

        written.append(plotting.sensitivity_lines(pd.read_csv(out / "sensitivity.csv"), out / "sensitivity.svg"))
        for lb in maps:
            written.append(plotting.hex_map(pd.read_csv(out / f"hexmap_{lb}.csv"), hex_size,
                                            out / f"hexmap_{lb}.svg", title=lb))
        if maps:
            written.append(plotting.spaef_heatmap(pd.read_csv(out / "spaef_matrix.csv"), out / "spaef_matrix.svg"))
    return written


# --- synth ------------------------------------------------------------------------------

def run_synth(cfg: RunConfig, out: Path, plots: bool = False, jobs: int = 1) -> list[Path]:
    if "path" in cfg.data:
        raise ConfigError("synth needs a 'synth' or 'preset' data section, not a file path")
    scfg = synth_config_of(cfg.data, cfg.seed)
    ds = synth_generate(scfg)
    if cfg.subset:
        ds = filter_subset(ds, cfg.subset)
    ds.to_csv(out / "data.csv")
    ds.schema.save(out / "schema.json")
    write_json(scfg.to_dict(), out / "synth_config.json")
    return [out / "data.csv", out / "schema.json", out / "synth_config.json"]


RUNNERS: dict[str, Callable[..., list[Path]]] = {
    "bench": run_benchmark,
    "explain": run_explain,
    "scenario": run_scenario,
    "synth": run_synth,
}


# --- orchestration ----------------------------------------------------------------------

def _versions() -> dict:
    out = {"python": platform.python_version(), "transitbench": __version__}
    for pkg in ("numpy", "scipy", "pandas", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def resolve_output(command: str, cfg: RunConfig, flag: str | None) -> Path:
    out = Path(flag or cfg.output or f"{command}_out")
    root = os.environ.get(ENV_OUT)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def execute(command: str, cfg: RunConfig, out: Path, plots: bool = False, jobs: int = 1) -> Path:
    """Run one subcommand into ``out`` atomically and write its manifest."""
    if out.exists() and any(out.iterdir()) and not (out / "manifest.json").exists():
        raise ConfigError(f"refusing to overwrite non-empty directory {out} that is not a previous run")
    out.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out.name}.partial-", dir=out.parent))
    start = time.perf_counter()
    try:
        files = RUNNERS[command](cfg, staging, plots=plots, jobs=jobs)
        canonical = json.dumps(cfg.to_dict(), sort_keys=True, default=_json_default)
        manifest = {
            "command": command,
            "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "versions": _versions(),
            "wall_time_s": round(time.perf_counter() - start, 3),
            "outputs": sorted(p.name for p in files),
        }
        write_json(manifest, staging / "manifest.json")
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    staging.rename(out)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transitbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help=f"output directory (relative paths honour ${ENV_OUT})")
        p.add_argument("--seed", type=int)
        p.add_argument("--k", type=int, help="number of CV folds")
        p.add_argument("--alpha", type=float)
        p.add_argument("--plots", action="store_true", help="also write SVG figures")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for model fits")
    return parser


def load_config(path: str, overrides: dict) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(doc, base_dir=p.parent)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config, {"seed": args.seed, "k": args.k, "alpha": args.alpha})
        out = resolve_output(args.command, cfg, args.out)
        execute(args.command, cfg, out, plots=args.plots, jobs=args.jobs)
    except TransitBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
