"""
Sequential factorization check.

For an ordering of the mask coordinates, P(M=m | x) factors into
P(M_{pi(k)} = m_{pi(k)} | M_{pi(<k)} = m_{pi(<k)}, x). Each factor is
evaluated on the grid and flagged when it varies along a coordinate that
pattern m masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditions import DEFAULT_TOL, _evaluation
from .grid import SUPPORT_THRESHOLD, missing_axes


@dataclass(frozen=True)
class FactorStep:
    step: int
    column: int
    passed: bool
    max_variation: float
    pattern: tuple


@dataclass(frozen=True)
class GraphicalReport:
    permutation: tuple
    steps: tuple

    @property
    def passed(self):
        return all(s.passed for s in self.steps)


def _variation(arr, axes):
    """Largest spread of arr along the given axes, NaN entries ignored."""
    if not axes:
        return 0.0
    hi = np.where(np.isnan(arr), -np.inf, arr).max(axis=tuple(axes))
    lo = np.where(np.isnan(arr), np.inf, arr).min(axis=tuple(axes))
    spread = hi - lo
    spread = spread[np.isfinite(spread)]
    return float(spread.max()) if spread.size else 0.0


def graphical_factor_check(spec, permutation=None, grid=None, tol: float = DEFAULT_TOL):
    """Check every sequential factor of P(M=m|x) for dependence on masked values."""
    ev = _evaluation(spec, grid)
    d = spec.d
    perm = tuple(range(d)) if permutation is None else tuple(int(p) for p in permutation)
    if sorted(perm) != list(range(d)):
        raise ValueError(f"{perm} is not a permutation of 0..{d - 1}")
    pats = spec.patterns
    support = ev.support[..., None]
    pi = np.where(support, ev.pi, np.nan)

    steps = []
    for step, col in enumerate(perm):
        prefix = list(perm[:step])
        worst, worst_pat = 0.0, None
        for k in range(spec.n_patterns):
            m = pats[k]
            same_prefix = np.all(pats[:, prefix] == m[prefix], axis=1)
            same_next = same_prefix & (pats[:, col] == m[col])
            den = pi[..., same_prefix].sum(axis=-1)
            num = pi[..., same_next].sum(axis=-1)
            factor = np.where(den > SUPPORT_THRESHOLD, num / np.where(den > 0, den, 1.0), np.nan)
            v = _variation(factor, missing_axes(m))
            if worst_pat is None or v > worst:
                worst, worst_pat = v, tuple(int(b) for b in m)
        steps.append(FactorStep(step, col, worst <= tol, worst, worst_pat))
    return GraphicalReport(perm, tuple(steps))
