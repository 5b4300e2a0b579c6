"""
Experiment runner: generate, mask, impute with every configured method,
score against the complete data, aggregate.

Repetition r draws its data from the stream SeedSequence([seed, r]), so all
methods see the same (X, M). Method k in repetition r runs FCS with the
stream SeedSequence([seed, r, k]).
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .data import DataError, DataMatrix, IncompleteData, MissingMask, read_csv, write_csv
from .evaluation import (StandardizedTable, energy_distance, observed_only_quantile,
                         quantile_downstream, rmse, standardize)
from .fcs import FcsConfig, impute
from .mechanisms import CATALOGUE, generate, make_spec
from .models import ModelKind

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
METRICS = ("energy", "rmse")
EXTERNAL = "external"
DEFAULT_N = {"appB-gaussmix6": 1500, "appC-nonlinear6": 1500}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    kind: str
    params: dict = field(default_factory=dict)
    name: Optional[str] = None

    @property
    def label(self):
        return self.name or self.kind


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: str
    methods: tuple
    n: Optional[int] = None
    repetitions: int = 10
    seed: int = 0
    mechanism_params: dict = field(default_factory=dict)
    metrics: tuple = METRICS
    downstream: tuple = ()
    iterations: int = 10
    output_dir: Optional[str] = None
    jobs: int = 1
    save_completed: bool = False
    external: Optional[dict] = None
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if not self.methods:
            raise ConfigError("method list is empty")
        if self.mechanism != EXTERNAL and self.mechanism not in CATALOGUE:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}")
        if self.mechanism == EXTERNAL and not self.external:
            raise ConfigError("mechanism 'external' needs complete/incomplete CSV paths")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        for m in self.metrics:
            if m not in METRICS:
                raise ConfigError(f"unknown metric {m!r}")
        for m in self.methods:
            try:
                ModelKind(m.kind)
            except ValueError:
                raise ConfigError(f"unknown method kind {m.kind!r}") from None
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError("method labels must be unique")
        for task in self.downstream:
            if task.get("task") != "quantile":
                raise ConfigError(f"unknown downstream task {task!r}")
            if not 0 < float(task.get("alpha", 0.1)) < 1:
                raise ConfigError("quantile alpha must lie in (0, 1)")

    @property
    def sample_size(self):
        return self.n if self.n is not None else DEFAULT_N.get(self.mechanism, 5000)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        try:
            methods = tuple(
                MethodSpec(m) if isinstance(m, str) else MethodSpec(m["kind"], dict(m.get("params", {})),
                                                                    m.get("name"))
                for m in raw.pop("methods")
            )
            mech = raw.pop("mechanism")
            if isinstance(mech, dict):
                raw["mechanism_params"] = dict(mech.get("params", {}))
                mech = mech["name"]
            raw["metrics"] = tuple(raw.get("metrics", METRICS))
            raw["downstream"] = tuple(dict(t) for t in raw.get("downstream", ()))
            return cls(mechanism=mech, methods=methods, **raw)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self):
        out = asdict(self)
        out["methods"] = [asdict(m) for m in self.methods]
        out["metrics"] = list(self.metrics)
        out["downstream"] = list(self.downstream)
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def golden_configs() -> dict:
    """Bundled experiment configs, by file stem."""
    out = {}
    root = resources.files("marimpute") / "configs"
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = ExperimentConfig.from_dict(json.loads(entry.read_text()))
    return out


@dataclass(frozen=True)
class ScoreReport:
    method: str
    repetition: int
    energy: float = float("nan")
    rmse: float = float("nan")
    downstream: dict = field(default_factory=dict)
    seconds: float = 0.0
    error: Optional[str] = None


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    scores: tuple
    standardized: StandardizedTable
    ranking: dict
    wall_clock: dict

    def metric(self, method, metric):
        """Raw per-repetition values of one metric for one method."""
        rows = sorted((s for s in self.scores if s.method == method), key=lambda s: s.repetition)
        return np.array([getattr(s, metric) for s in rows], dtype=float)

    def mean(self, method, metric):
        return float(np.nanmean(self.metric(method, metric)))

    def to_dict(self):
        return {
            "config": self.config,
            "scores": [asdict(s) for s in self.scores],
            "standardized": self.standardized.values,
            "ranking": self.ranking,
            "wall_clock": self.wall_clock,
        }


# --------------------------------------------------------------------------
# Seeds and data

def stream_seed(*keys) -> int:
    """Deterministic 32-bit seed derived from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def ingest_csv_pair(complete_path, incomplete_path):
    """Read a complete CSV and its NA-masked counterpart.

    Raises DataError on shape mismatch, NA in the complete file, or observed
    cells of the incomplete file that disagree with the complete one.
    """
    full, names = read_csv(complete_path, allow_na=False)
    part, names2 = read_csv(incomplete_path, allow_na=True)
    if full.shape != part.shape:
        raise DataError(f"shape mismatch: {full.shape} vs {part.shape}")
    obs = ~np.isnan(part)
    if not np.array_equal(full[obs], part[obs]):
        raise DataError("observed cells of the incomplete file differ from the complete file")
    x = DataMatrix(full, names)
    return x, IncompleteData(part, MissingMask(np.isnan(part)), names2)


def repetition_data(cfg: ExperimentConfig, r: int):
    """(complete DataMatrix, IncompleteData) for repetition r."""
    if cfg.mechanism == EXTERNAL:
        return ingest_csv_pair(cfg.external["complete"], cfg.external["incomplete"])
    spec = make_spec(cfg.mechanism, **cfg.mechanism_params)
    g = generate(spec, cfg.sample_size, stream_seed(cfg.seed, r))
    inc = IncompleteData(np.where(g.mask.entries, np.nan, g.x.values), g.mask)
    return g.x, inc


# --------------------------------------------------------------------------
# Running

def _score(cfg, method, r, x, completed, seconds):
    c = completed.completed[0]
    energy = energy_distance(c.values, x.values) if "energy" in cfg.metrics else float("nan")
    err = rmse(c, x) if "rmse" in cfg.metrics and c.source_mask.entries.any() else float("nan")
    down = {}
    for task in cfg.downstream:
        j, alpha = int(task.get("column", 0)), float(task.get("alpha", 0.1))
        down[f"quantile_{j}_{alpha}"] = quantile_downstream(c, j, alpha)
    return ScoreReport(method.label, r, energy, err, down, seconds)


def run_repetition(cfg: ExperimentConfig, r: int):
    """All methods on repetition r; returns (scores, completed datasets by method)."""
    x, inc = repetition_data(cfg, r)
    spec = None if cfg.mechanism == EXTERNAL else make_spec(cfg.mechanism, **cfg.mechanism_params)
    scores, completed = [], {}
    for k, method in enumerate(cfg.methods):
        fcs = FcsConfig(iterations=cfg.iterations, model=method.kind, params=method.params,
                        seed=stream_seed(cfg.seed, r, k))
        t0 = time.perf_counter()
        try:
            run = impute(inc, fcs, spec)
            seconds = time.perf_counter() - t0
            scores.append(_score(cfg, method, r, x, run, seconds))
            completed[method.label] = run.completed[0]
        except Exception as exc:  # one failing method must not sink the others
            log.warning("method %s failed on repetition %d: %s", method.label, r, exc)
            scores.append(ScoreReport(method.label, r, seconds=time.perf_counter() - t0,
                                      error=f"{type(exc).__name__}: {exc}"))
    return scores, completed


def _run_repetition_worker(args):
    raw, r = args
    scores, completed = run_repetition(ExperimentConfig.from_dict(raw), r)
    return scores, {k: v.values for k, v in completed.items()}


def _standardized(cfg, scores):
    labels = [m.label for m in cfg.methods]
    reps = cfg.repetitions
    table = {}
    for metric in cfg.metrics:
        raw = np.full((len(labels), reps), np.nan)
        for s in scores:
            raw[labels.index(s.method), s.repetition] = -getattr(s, metric)
        std = standardize(raw)
        table[metric] = {lab: [None if np.isnan(v) else float(v) for v in std[i]]
                         for i, lab in enumerate(labels)}
    return StandardizedTable(table)


def _ranking(cfg, table: StandardizedTable):
    out = {}
    for metric in cfg.metrics:
        means = {lab: table.mean(metric, lab) for lab in table.values[metric]}
        ordered = sorted(means, key=lambda k: (np.isnan(means[k]), -np.nan_to_num(means[k])))
        out[metric] = ordered
    return out


def run_experiment(cfg: ExperimentConfig, plot_data: bool = False) -> ExperimentReport:
    """Run every repetition and method, then standardize and rank.

    Repetitions run in a process pool when ``cfg.jobs > 1``; results are
    collected in repetition order, so the report does not depend on the pool.
    """
    reps = range(cfg.repetitions)
    completed_all = {}
    scores = []
    if cfg.jobs > 1 and cfg.repetitions > 1:
        raw = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_repetition_worker, [(raw, r) for r in reps]))
        for r, (s, c) in zip(reps, results):
            scores.extend(s)
            completed_all[r] = c
    else:
        for r in reps:
            s, c = run_repetition(cfg, r)
            scores.extend(s)
            completed_all[r] = {k: v.values for k, v in c.items()}
    table = _standardized(cfg, scores)
    ranking = _ranking(cfg, table)
    wall = {m.label: [s.seconds for s in scores if s.method == m.label] for m in cfg.methods}
    report = ExperimentReport(cfg.to_dict(), tuple(scores), table, ranking, wall)
    if cfg.output_dir:
        write_report(report, cfg.output_dir, plot_data=plot_data,
                     completed=completed_all if cfg.save_completed else None)
    return report


def write_report(report: ExperimentReport, out_dir, plot_data=False, completed=None):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_jsonable(report.to_dict()), fh, indent=2)
    metrics = report.config["metrics"]
    with open(os.path.join(out_dir, "scores.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "rep", "metric", "value"])
        for s in report.scores:
            for metric in metrics:
                w.writerow([s.method, s.repetition, metric, repr(float(getattr(s, metric)))])
            for key, v in sorted(s.downstream.items()):
                w.writerow([s.method, s.repetition, key, repr(float(v))])
    with open(os.path.join(out_dir, "standardized.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "rep", "metric", "value"])
        for metric, by_method in report.standardized.values.items():
            for method, vals in by_method.items():
                for r, v in enumerate(vals):
                    w.writerow([method, r, metric, "NA" if v is None else repr(v)])
    if plot_data:
        with open(os.path.join(out_dir, "plot_data.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "method", "mean", "sd"])
            for metric, by_method in report.standardized.values.items():
                for method, vals in by_method.items():
                    v = np.array([np.nan if x is None else x for x in vals], dtype=float)
                    ok = v[~np.isnan(v)]
                    w.writerow([metric, method,
                                repr(float(ok.mean())) if ok.size else "NA",
                                repr(float(ok.std())) if ok.size else "NA"])
    if completed:
        for r, by_method in completed.items():
            for method, values in by_method.items():
                write_csv(os.path.join(out_dir, f"completed_{method}_{r}.csv"), values)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    return obj


# --------------------------------------------------------------------------
# Quantile study

OBSERVED_ONLY = "observed-only"


@dataclass(frozen=True)
class QuantileStudy:
    alpha: float
    column: int
    estimates: dict  # estimator label -> array over repetitions

    def mean(self, label):
        return float(np.nanmean(self.estimates[label]))

    def table(self):
        return {k: [float(v) for v in vals] for k, vals in self.estimates.items()}


def run_quantile_study(cfg: ExperimentConfig, alpha: float = 0.1, column: int = 0,
                       include_observed_only: bool = True) -> QuantileStudy:
    """alpha-quantile of one column estimated per repetition by each method.

    ``observed-only`` uses the observed entries alone; every configured
    method imputes first and then takes the quantile of the completed column.
    """
    if cfg.mechanism != "ex-fgm3":
        raise ConfigError("the quantile study is defined on ex-fgm3")
    estimates = {}
    if include_observed_only:
        estimates[OBSERVED_ONLY] = np.empty(cfg.repetitions)
    for m in cfg.methods:
        estimates[m.label] = np.full(cfg.repetitions, np.nan)
    spec = make_spec(cfg.mechanism, **cfg.mechanism_params)
    for r in range(cfg.repetitions):
        _, inc = repetition_data(cfg, r)
        if include_observed_only:
            estimates[OBSERVED_ONLY][r] = observed_only_quantile(inc, column, alpha)
        for k, m in enumerate(cfg.methods):
            fcs = FcsConfig(iterations=cfg.iterations, model=m.kind, params=m.params,
                            seed=stream_seed(cfg.seed, r, k))
            try:
                run = impute(inc, fcs, spec)
            except Exception as exc:
                log.warning("method %s failed on repetition %d: %s", m.label, r, exc)
                continue
            estimates[m.label][r] = quantile_downstream(run.completed[0], column, alpha)
    return QuantileStudy(alpha, column, estimates)


def write_quantile_study(study: QuantileStudy, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "quantile_study.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "rep", "value"])
        for label, vals in study.estimates.items():
            for r, v in enumerate(vals):
                w.writerow([label, r, "NA" if np.isnan(v) else repr(float(v))])
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_jsonable({"alpha": study.alpha, "column": study.column,
                             "estimates": study.table(),
                             "means": {k: study.mean(k) for k in study.estimates}}), fh, indent=2)
