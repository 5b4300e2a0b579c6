"""
Fully conditional specification (chained equations).

Missing cells start at their column mean. Each sweep visits the columns
with missing entries; the column's model is fit on the rows where it is
observed, using the current completed values of the other columns as
features, and its missing cells are overwritten by draws (or predicted
means, for mean-type models).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .data import CompletedDataset, IncompleteData
from .mechanisms import MissingOracle
from .models import ModelKind, fit_model, min_leaf_of


class FcsError(ValueError):
    pass


@dataclass(frozen=True)
class FcsConfig:
    """Settings of one FCS run.

    ``model`` is a single kind for every column or a per-column mapping
    (column index -> kind). ``params`` likewise holds one dict or a mapping
    column -> dict of model parameters.
    """

    iterations: int = 10
    model: Union[str, ModelKind, dict] = ModelKind.FOREST_SAMPLE
    params: dict = field(default_factory=dict)
    visit_order: str = "ascending"
    chains: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.visit_order not in ("ascending", "random-per-sweep"):
            raise ValueError(f"unknown visit order {self.visit_order!r}")

    def kind_for(self, j) -> ModelKind:
        if isinstance(self.model, dict):
            kind = self.model.get(j, self.model.get(str(j)))
            if kind is None:
                raise FcsError(f"no model given for column {j}")
            return ModelKind(kind)
        return ModelKind(self.model)

    def params_for(self, j) -> dict:
        p = self.params
        if p and all(isinstance(k, int) or str(k).isdigit() for k in p):
            return dict(p.get(j, p.get(str(j), {})))
        return dict(p)


@dataclass(frozen=True)
class ImputationRun:
    completed: tuple
    trace: tuple  # per chain: (iterations, d, 2) array of imputed-cell mean and variance


def _chain(data: IncompleteData, cfg: FcsConfig, rng, spec, start=None):
    x = np.array(data.values if start is None else start, dtype=float)
    mask = data.mask.entries
    n, d = x.shape
    targets = [j for j in range(d) if mask[:, j].any()]
    trace = np.full((cfg.iterations, d, 2), np.nan)
    if not targets:
        return x, trace[:0]
    if start is None:
        for j in targets:
            x[mask[:, j], j] = np.mean(data.values[~mask[:, j], j])
    for t in range(cfg.iterations):
        order = list(targets)
        if cfg.visit_order == "random-per-sweep":
            order = [targets[i] for i in rng.permutation(len(targets))]
        for j in order:
            miss = mask[:, j]
            obs = ~miss
            feats = np.delete(x, j, axis=1)
            model = fit_model(cfg.kind_for(j), feats[obs], x[obs, j], cfg.params_for(j),
                              rng=rng, spec=spec, column=j)
            x[miss, j] = model.impute(feats[miss], rng)
        for j in targets:
            v = x[mask[:, j], j]
            trace[t, j] = (v.mean(), v.var())
    return x, trace


def _validate(data: IncompleteData, cfg: FcsConfig):
    mask = data.mask.entries
    for j in range(mask.shape[1]):
        if not mask[:, j].any():
            continue
        n_obs = int((~mask[:, j]).sum())
        if n_obs == 0:
            raise FcsError(f"column {j} has no observed entries")
        need = max(10, 2 * min_leaf_of(cfg.kind_for(j), cfg.params_for(j)))
        if n_obs < need:
            warnings.warn(f"column {j} has only {n_obs} observed entries (< {need})",
                          RuntimeWarning, stacklevel=3)


def impute(data: IncompleteData, cfg: FcsConfig, spec=None, start=None) -> ImputationRun:
    """Run ``cfg.chains`` independent FCS chains.

    Chains draw from independent streams spawned from ``cfg.seed``; the
    same seed reproduces every chain bit for bit. ``spec`` is required only
    when some column uses the true sampler. ``start`` (a completed matrix
    agreeing with ``data`` on observed cells) replaces the mean fill as the
    initial state, which lets a run continue from an earlier one.
    """
    _validate(data, cfg)
    if start is not None:
        start = np.asarray(getattr(start, "values", start), dtype=float)
        if start.shape != data.shape or np.isnan(start).any():
            raise FcsError("start must be a complete matrix of the data's shape")
        start = np.where(data.mask.entries, start, data.values)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    completed, traces = [], []
    for ss in streams:
        x, trace = _chain(data, cfg, np.random.default_rng(ss), spec, start)
        out = np.where(data.mask.entries, x, data.values)
        completed.append(CompletedDataset(out, data.mask))
        traces.append(trace)
    return ImputationRun(tuple(completed), tuple(traces))


def impute_with_truth(data: IncompleteData, cfg: FcsConfig, spec, start=None) -> ImputationRun:
    """FCS where every column draws from the mechanism's analytic conditional."""
    if spec.conditional_oracle is None:
        raise MissingOracle(f"{spec.name} has no conditional oracle")
    truth = FcsConfig(cfg.iterations, ModelKind.TRUE_SAMPLER, {}, cfg.visit_order, cfg.chains,
                      cfg.seed)
    return impute(data, truth, spec, start)
