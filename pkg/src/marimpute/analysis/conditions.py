"""
Quadrature checks of MAR variants, overlap and positivity.

Everything is phrased through the selection probabilities. For a pattern
m', a block S of coordinates and a point x,

    r(x) = P(M=m' | x) / P(M=m' | x_{S^c}),
    P(M=m' | x_{S^c}) = int P(M=m'|x) p(x) dx_S / int p(x) dx_S,

equals p(x_S | x_{S^c}, M=m') / p(x_S | x_{S^c}). A conditional of the
block is unchanged by conditioning on M=m' exactly when r = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .grid import (SUPPORT_THRESHOLD, GridEvaluation, UnsupportedSpec, missing_axes,
                   safe_ratio)

DEFAULT_TOL = 1e-6


class Condition(str, Enum):
    SM_MAR_II = "SM-MAR-II"
    PMM_MAR = "PMM-MAR"
    CIMAR = "CIMAR"
    EMAR = "EMAR"
    MCAR = "MCAR"
    RMAR = "RMAR"
    OVERLAP = "OVERLAP"
    POSITIVITY = "POSITIVITY"


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    passed: bool
    max_violation: float
    witness: Optional[tuple]
    tolerance: float = DEFAULT_TOL
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "condition": self.condition,
            "passed": bool(self.passed),
            "max_violation": float(self.max_violation),
            "witness": None if self.witness is None else list(self.witness),
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def _evaluation(spec, grid):
    if isinstance(grid, GridEvaluation):
        return grid
    return GridEvaluation(spec, grid)


def selection_average(ev: GridEvaluation, k: int, block):
    """P(M=m_k | x_{S^c}) on the grid (broadcast along S), NaN off support."""
    block = list(block)
    if not block:
        return np.where(ev.support, ev.pi[..., k], np.nan)
    num = ev.integrate(ev.joint[..., k], block)
    den = ev.integrate(ev.f, block)
    avg = safe_ratio(num, den)
    return np.broadcast_to(avg, ev.shape)


def selection_ratio(ev: GridEvaluation, k: int, block):
    """r(x) for pattern index k and block S, NaN where undefined.

    Defined on the support of p(x) and where the conditioning point carries
    positive mass under pattern k.
    """
    block = list(block)
    if not block:
        return np.where(ev.support & (ev.pi[..., k] > 0), 1.0, np.nan)
    mass = np.broadcast_to(ev.integrate(ev.joint[..., k], block), ev.shape)
    avg = selection_average(ev, k, block)
    r = safe_ratio(ev.pi[..., k], avg)
    r[~ev.support | (mass <= SUPPORT_THRESHOLD)] = np.nan
    return r


def _worst(violation, ev, detail_fn=None):
    """Max of a violation array (NaN ignored) with its grid point."""
    flat = violation.reshape(-1)
    if np.all(np.isnan(flat)):
        return 0.0, None, None
    i = int(np.nanargmax(flat))
    return float(flat[i]), ev.point(i), i


class _Tracker:
    def __init__(self):
        self.value = 0.0
        self.witness = None
        self.detail = {}

    def update(self, value, witness, detail):
        if witness is not None and (self.witness is None or value > self.value):
            self.value, self.witness, self.detail = value, witness, detail


def _ratio_condition(ev, pairs):
    """Max |r - 1| over (pattern index, block) pairs."""
    tr = _Tracker()
    for k, block in pairs:
        r = selection_ratio(ev, k, block)
        v, w, i = _worst(np.abs(r - 1.0), ev)
        tr.update(v, w, {"pattern": ev.spec.patterns[k].tolist(), "block": list(block),
                         "ratio": None if i is None else float(r.reshape(-1)[i])})
    return tr


def _probability_condition(ev, pairs):
    """Max |P(M=m|x) - P(M=m|x_{S^c})| over (pattern index, block) pairs."""
    tr = _Tracker()
    for k, block in pairs:
        avg = selection_average(ev, k, block)
        diff = np.where(ev.support, np.abs(ev.pi[..., k] - avg), np.nan)
        v, w, i = _worst(diff, ev)
        tr.update(v, w, {"pattern": ev.spec.patterns[k].tolist(), "block": list(block)})
    return tr


def check_condition(spec, condition, grid=None, tol: float = DEFAULT_TOL, j: Optional[int] = None):
    """Evaluate one condition on a quadrature grid and report its worst violation.

    Parameters
    ----------
    spec : MechanismSpec
        Must expose a density and bounds.
    condition : str or Condition
    grid : GridSpec, GridEvaluation or None
        Defaults to the mechanism's default grid.
    tol : float
        Absolute tolerance on the violation measure.
    j : int, optional
        Column index, required for OVERLAP.
    """
    condition = Condition(condition)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if condition in (Condition.OVERLAP, Condition.POSITIVITY):
        return check_overlap(spec, j, grid, condition=condition, tol=tol)
    ev = _evaluation(spec, grid)
    pats = spec.patterns
    k_all = range(spec.n_patterns)

    if condition is Condition.SM_MAR_II:
        tr = _probability_condition(ev, [(k, missing_axes(pats[k])) for k in k_all])
    elif condition is Condition.PMM_MAR:
        tr = _ratio_condition(ev, [(k, missing_axes(pats[k])) for k in k_all])
    elif condition is Condition.CIMAR:
        tr = _ratio_condition(ev, [(kp, missing_axes(pats[k])) for k in k_all for kp in k_all])
    elif condition is Condition.EMAR:
        k0 = spec.complete_index
        if k0 is None:
            raise UnsupportedSpec(f"EMAR needs the complete pattern; {spec.name} has none")
        pairs = [(k, missing_axes(pats[k])) for k in k_all]
        pairs += [(k0, missing_axes(pats[k])) for k in k_all]
        tr = _ratio_condition(ev, pairs)
    elif condition is Condition.MCAR:
        tr = _Tracker()
        for k in k_all:
            pm = ev.pattern_mass[k]
            if pm <= SUPPORT_THRESHOLD:
                continue
            r = np.where(ev.support, ev.pi[..., k] / pm, np.nan)
            v, w, i = _worst(np.abs(r - 1.0), ev)
            tr.update(v, w, {"pattern": pats[k].tolist()})
    elif condition is Condition.RMAR:
        always = ~pats.any(axis=0)
        block = [a for a in range(spec.d) if not always[a]]
        tr = _probability_condition(ev, [(k, block) for k in k_all])
    else:  # pragma: no cover
        raise UnsupportedSpec(str(condition))

    return ConditionReport(condition.value, tr.value <= tol, tr.value, tr.witness, tol, tr.detail)


def check_overlap(spec, j, grid=None, condition=Condition.OVERLAP, tol: float = DEFAULT_TOL):
    """Support nesting of X_{-j} across M_j, or positivity of the complete pattern.

    OVERLAP reports the largest p(x_{-j} | M_j=1) found where
    p(x_{-j} | M_j=0) vanishes. POSITIVITY reports the largest p(x) found
    where P(M=0 | x) vanishes; ``j`` is ignored for it.
    """
    condition = Condition(condition)
    ev = _evaluation(spec, grid)
    if condition is Condition.POSITIVITY:
        k0 = spec.complete_index
        if k0 is None:
            raise UnsupportedSpec(f"{spec.name} has no complete pattern")
        bad = np.where(ev.pi[..., k0] <= SUPPORT_THRESHOLD, ev.f, np.nan)
        bad[~ev.support] = np.nan
        v, w, _ = _worst(bad, ev)
        return ConditionReport(condition.value, v <= tol, v, w, tol)
    if condition is not Condition.OVERLAP:
        raise UnsupportedSpec(f"check_overlap handles OVERLAP and POSITIVITY, not {condition}")
    if j is None or not 0 <= j < spec.d:
        raise ValueError(f"OVERLAP needs a column index in [0, {spec.d})")
    miss = spec.patterns[:, j].astype(bool)
    mass_miss = ev.pattern_mass[miss].sum()
    if mass_miss <= SUPPORT_THRESHOLD:
        return ConditionReport(condition.value, True, 0.0, None, tol, {"column": j})
    p_miss = ev.integrate(ev.joint[..., miss].sum(axis=-1), [j]) / mass_miss
    mass_obs = ev.pattern_mass[~miss].sum()
    if mass_obs <= SUPPORT_THRESHOLD:
        p_obs = np.zeros_like(p_miss)
    else:
        p_obs = ev.integrate(ev.joint[..., ~miss].sum(axis=-1), [j]) / mass_obs
    bad = np.where(p_obs <= SUPPORT_THRESHOLD, p_miss, np.nan)
    bad = np.broadcast_to(bad, ev.shape)
    v, w, _ = _worst(bad, ev)
    if w is not None:
        w = tuple(np.nan if a == j else c for a, c in enumerate(w))
    return ConditionReport(condition.value, v <= tol, v, w, tol, {"column": j})


# --------------------------------------------------------------------------
# Per-pattern conditionals

@dataclass(frozen=True)
class PatternConditional:
    """p(x_S | x_{S^c}, M=m) for one pattern and block.

    ``bayes`` normalizes p(x) P(M=m|x) over the block directly. ``via_ratio``
    multiplies the unconditional p(x_S | x_{S^c}) by the selection ratio r.
    Both are grid arrays with NaN where the density is undefined.
    """

    spec: object
    pattern: tuple
    block: tuple
    evaluation: GridEvaluation
    bayes: np.ndarray
    via_ratio: np.ndarray

    def __call__(self, x):
        """Evaluate at arbitrary points by quadrature over the block."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.block:
            return np.ones(x.shape[0])
        ev = self.evaluation
        k = self.spec.pattern_index(self.pattern)
        sub = ev.grid.sub(self.block)
        nodes = [sub.axis(i) for i in range(sub.d)]
        mesh = np.meshgrid(*[n for n, _ in nodes], indexing="ij")
        wmesh = np.meshgrid(*[w for _, w in nodes], indexing="ij")
        s_pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        s_w = np.prod(np.stack([w.reshape(-1) for w in wmesh], axis=1), axis=1)
        g = s_pts.shape[0]
        full = np.repeat(x, g, axis=0)
        full[:, list(self.block)] = np.tile(s_pts, (x.shape[0], 1))
        joint = self.spec.density(full) * self.spec.probs(full)[:, k]
        norm = (joint.reshape(x.shape[0], g) * s_w).sum(axis=1)
        num = self.spec.density(x) * self.spec.probs(x)[:, k]
        return safe_ratio(num, norm)


def pattern_conditional(spec, m, block, grid=None) -> PatternConditional:
    """Density of the block given the rest within pattern m, on the grid.

    Raises ValueError when the pattern has no mass on the grid.
    """
    ev = _evaluation(spec, grid)
    k = spec.pattern_index(m)
    block = tuple(sorted(int(b) for b in block))
    if ev.pattern_mass[k] <= SUPPORT_THRESHOLD:
        raise ValueError(f"pattern {tuple(m)} has zero mass on the grid")
    if not block:
        ones = np.where(ev.joint[..., k] > SUPPORT_THRESHOLD, 1.0, np.nan)
        return PatternConditional(spec, tuple(int(b) for b in m), block, ev, ones, ones.copy())
    joint = ev.joint[..., k]
    bayes = safe_ratio(joint, ev.integrate(joint, block))
    uncond = safe_ratio(ev.f, ev.integrate(ev.f, block))
    via_ratio = uncond * selection_ratio(ev, k, block)
    undefined = ~(ev.integrate(joint, block) > SUPPORT_THRESHOLD)
    undefined = np.broadcast_to(undefined, ev.shape)
    bayes[undefined] = np.nan
    via_ratio = np.where(undefined, np.nan, via_ratio)
    # off the density support both routes give zero density; below the support
    # threshold only the selection ratio is undefined, the Bayes route is not
    bayes[(joint <= 0) & ~undefined] = 0.0
    via_ratio[~ev.support & ~undefined] = 0.0
    return PatternConditional(spec, tuple(int(b) for b in m), block, ev, bayes, via_ratio)
