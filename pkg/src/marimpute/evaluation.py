"""Scores for completed datasets: energy distance, RMSE, quantiles, standardization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .data import CompletedDataset, DataMatrix

BLOCK = 2048
EPS = 1e-6


def _values(a):
    if isinstance(a, (DataMatrix, CompletedDataset)):
        a = a.values
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def _mean_distance(a, b):
    """Mean Euclidean distance over all pairs, summed in fixed row blocks."""
    total = 0.0
    for i in range(0, a.shape[0], BLOCK):
        row = 0.0
        for k in range(0, b.shape[0], BLOCK):
            row += cdist(a[i:i + BLOCK], b[k:k + BLOCK]).sum()
        total += row
    return total / (a.shape[0] * b.shape[0])


def _canonical(a, b):
    """Order a pair of samples independently of argument order."""
    if a.shape != b.shape:
        return (a, b) if a.shape < b.shape else (b, a)
    key_a, key_b = a.tobytes(), b.tobytes()
    return (a, b) if key_a <= key_b else (b, a)


def energy_distance(a, b) -> float:
    """V-statistic estimate of 2E|X-Y| - E|X-X'| - E|Y-Y'|.

    All pairs, diagonal included, with the Euclidean norm. The arguments are
    put in a canonical order first so the result is bit-identical under
    swapping them.
    """
    a, b = _values(a), _values(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ValueError("both samples need at least one row")
    a, b = _canonical(a, b)
    cross = _mean_distance(a, b)
    within = _mean_distance(a, a) + _mean_distance(b, b)
    return max(2.0 * cross - within, 0.0)


def rmse(completed, truth) -> float:
    """Root mean squared error over the originally missing cells."""
    if not isinstance(completed, CompletedDataset):
        raise TypeError("rmse needs a CompletedDataset (it carries the mask)")
    t = _values(truth)
    if t.shape != completed.shape:
        raise ValueError(f"shape mismatch: {completed.shape} vs {t.shape}")
    m = completed.source_mask.entries
    if not m.any():
        raise ValueError("no missing cells to score")
    diff = completed.values[m] - t[m]
    return float(np.sqrt(np.mean(diff * diff)))


def quantile_downstream(completed, j: int, alpha: float) -> float:
    """Empirical alpha-quantile of column j, linear interpolation between order statistics."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return float(np.quantile(_values(completed)[:, j], alpha))


def observed_only_quantile(data, j: int, alpha: float) -> float:
    """Same quantile computed on the observed entries of column j only."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    col = np.asarray(data.values, dtype=float)[:, j]
    col = col[~data.mask.entries[:, j]]
    if col.size == 0:
        raise ValueError(f"column {j} has no observed entries")
    return float(np.quantile(col, alpha))


def fgm_biased_quantile(alpha: float) -> float:
    """alpha-quantile of X1 among rows with X1 observed under the ex-fgm3 mechanism.

    There p(x1 | M_1 = 0) = 2 (7 + x1) / 15 on [0, 1], with CDF
    (x1^2 + 14 x1) / 15, whose inverse is -7 + sqrt(49 + 15 alpha).
    """
    return -7.0 + np.sqrt(49.0 + 15.0 * alpha)


@dataclass(frozen=True)
class StandardizedTable:
    """Per metric: method -> repetition -> value in (-1, 0)."""

    values: dict = field(default_factory=dict)

    def mean(self, metric, method):
        v = np.asarray(self.values[metric][method], dtype=float)
        return float(np.nanmean(v)) if np.any(~np.isnan(v)) else float("nan")


def standardize(raw, eps: float = EPS) -> np.ndarray:
    """Affine min-max map of negative scores onto [-1 + eps, -eps].

    ``raw`` is any array of scores where larger is better; NaN entries (failed
    runs) stay NaN and are ignored for the range. If all finite values are
    equal they map to -0.5.
    """
    raw = np.asarray(raw, dtype=float)
    out = np.full(raw.shape, np.nan)
    ok = ~np.isnan(raw)
    if not ok.any():
        return out
    lo, hi = raw[ok].min(), raw[ok].max()
    if hi == lo:
        out[ok] = -0.5
        return out
    t = (raw[ok] - lo) / (hi - lo)
    vals = np.clip((-1.0 + eps) + t * (1.0 - 2.0 * eps), -1.0 + eps, -eps)
    vals[raw[ok] == hi] = -eps  # pin the top endpoint against rounding
    out[ok] = vals
    return out
