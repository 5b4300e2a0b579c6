"""
Identifiability oracles: the single-column pattern mixture h* and the
existence of simplex weights that rebuild a block conditional from donor
patterns.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conditions import _evaluation
from .grid import SUPPORT_THRESHOLD, missing_axes, safe_ratio


def observing_patterns(spec, block):
    """Indices of patterns in which every column of the block is observed."""
    block = list(block)
    if not block:
        return list(range(spec.n_patterns))
    return [k for k in range(spec.n_patterns) if not spec.patterns[k, block].any()]


def hstar_oracle(spec, j: int, x, grid=None):
    """Evaluate h*(x_j | x_{-j}) at one or more points.

    The mixture runs over patterns observing column j, each pattern weighted
    by p(x_{-j}, M=m) and contributing p(x_j | x_{-j}, M=m). The x_j
    integrals use the grid's rule along axis j.

    Raises
    ------
    ValueError
        If some x_{-j} carries no mass under any observing pattern.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ev = _evaluation(spec, grid)
    nodes, weights = ev.grid.axis(j)
    donors = observing_patterns(spec, [j])
    q, g = x.shape[0], nodes.size
    line = np.repeat(x, g, axis=0)
    line[:, j] = np.tile(nodes, q)
    joint_line = (spec.density(line)[:, None] * spec.probs(line)).reshape(q, g, -1)
    marg = np.einsum("qgk,g->qk", joint_line, weights)[:, donors]
    total = marg.sum(axis=1)
    if np.any(total <= SUPPORT_THRESHOLD):
        bad = int(np.flatnonzero(total <= SUPPORT_THRESHOLD)[0])
        raise ValueError(f"x_-j at query {bad} lies outside the observed-pattern support")
    at_x = spec.density(x)[:, None] * spec.probs(x)[:, donors]
    out = np.zeros(q)
    for c in range(len(donors)):
        w = marg[:, c] / total
        cond = safe_ratio(at_x[:, c], marg[:, c])
        out += np.where(w > 0, w * np.nan_to_num(cond), 0.0)
    return out


def hstar_grid(spec, j: int, grid=None):
    """h*(x_j | x_{-j}) on every grid point; NaN where x_{-j} has no donor mass."""
    ev = _evaluation(spec, grid)
    donors = observing_patterns(spec, [j])
    joint = ev.joint[..., donors]
    marg = ev.integrate(joint, [j])
    total = marg.sum(axis=-1)
    w = safe_ratio(marg, total[..., None])
    cond = np.nan_to_num(safe_ratio(joint, marg))
    out = np.where(np.isnan(w), 0.0, w * cond).sum(axis=-1)
    undefined = np.broadcast_to(~(total > SUPPORT_THRESHOLD), ev.shape)
    return np.where(undefined, np.nan, out)


# --------------------------------------------------------------------------
# Simplex-constrained least squares

def project_simplex(v, allowed=None):
    """Euclidean projection of each row of v onto the probability simplex.

    Coordinates with ``allowed`` False are pinned to zero.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float)).copy()
    if allowed is not None:
        v[~allowed] = -1e300
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    idx = np.arange(1, v.shape[1] + 1)
    cond = u - css / idx > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def _objective(Q, c, w):
    return np.einsum("pi,pij,pj->p", w, Q, w) - 2 * np.einsum("pi,pi->p", c, w)


def simplex_least_squares(Q, c, allowed, iterations=500, restarts=5, seed=0, score=None):
    """Minimize w'Qw - 2c'w over the simplex, batched over the leading axis.

    Projected gradient from ``restarts`` Dirichlet starting points, followed by
    an exact pass over active sets: for each support T the equality-constrained
    stationary point is solved directly and kept if feasible. With at most a
    handful of donors the enumeration is cheap and certifies the optimum.

    ``score`` maps (P, k) weights to (P,) values used to pick among the
    candidates; it defaults to the quadratic objective. Near a perfect fit that
    objective cancels against |b|^2 and cannot resolve residuals below about
    sqrt(machine eps), so callers holding the design should pass the residual
    norm instead.
    """
    score = score if score is not None else (lambda w: _objective(Q, c, w))
    P, k = c.shape
    rng = np.random.default_rng(seed)
    lam = np.linalg.eigvalsh(Q)[:, -1]
    step = 1.0 / (2 * np.maximum(lam, 1e-300))
    best_w = project_simplex(np.ones((P, k)), allowed)
    best_f = score(best_w)
    for _ in range(restarts):
        w = project_simplex(rng.dirichlet(np.ones(k), size=P), allowed)
        for _ in range(iterations):
            grad = 2 * (np.einsum("pij,pj->pi", Q, w) - c)
            w = project_simplex(w - step[:, None] * grad, allowed)
        f = score(w)
        better = f < best_f
        best_w[better], best_f[better] = w[better], f[better]

    for size in range(1, k + 1):
        for support in itertools.combinations(range(k), size):
            s = list(support)
            ok = allowed[:, s].all(axis=1)
            if not ok.any():
                continue
            kkt = np.zeros((P, size + 1, size + 1))
            kkt[:, :size, :size] = Q[:, s][:, :, s]
            kkt[:, :size, size] = 1.0
            kkt[:, size, :size] = 1.0
            rhs = np.concatenate([c[:, s], np.ones((P, 1))], axis=1)
            sol = np.einsum("pij,pj->pi", np.linalg.pinv(kkt), rhs)[:, :size]
            feasible = ok & np.all(sol >= -1e-12, axis=1) & np.isclose(sol.sum(axis=1), 1.0)
            w = np.zeros((P, k))
            w[:, s] = np.maximum(sol, 0.0)
            w /= np.maximum(w.sum(axis=1, keepdims=True), 1e-300)
            f = score(w)
            better = feasible & (f < best_f)
            best_w[better], best_f[better] = w[better], f[better]
    return best_w


@dataclass(frozen=True)
class WeightExistenceResult:
    residual: float
    weights: Optional[np.ndarray]
    witness: Optional[tuple]
    donors: tuple
    residuals: np.ndarray


def weight_existence(spec, m, grid=None, iterations=500, restarts=5, seed=0):
    """Best simplex mixture of donor-pattern conditionals for the block of m.

    For pattern m with missing block S, the donors are the patterns observing
    all of S. At each grid value of x_{S^c} the weights minimize the L2 gap
    (over x_S) between the mixture of p(x_S | x_{S^c}, M=m') and the target
    p(x_S | x_{S^c}). Donors with no mass at that x_{S^c} get weight zero.

    Returns the largest residual over conditioning points, the weights at
    that point (ordered as ``donors``) and the point itself, with the block
    coordinates reported as NaN.
    """
    ev = _evaluation(spec, grid)
    k = spec.pattern_index(m)
    block = missing_axes(spec.patterns[k])
    donors = observing_patterns(spec, block)
    if not donors:
        raise ValueError(f"no pattern observes the block of {tuple(m)}")
    d = spec.d
    rest = [a for a in range(d) if a not in block]
    if not block:
        return WeightExistenceResult(0.0, None, None, tuple(donors), np.zeros(0))

    order = rest + block
    joint = np.transpose(ev.joint[..., donors], order + [d])
    f = np.transpose(ev.f, order)
    n_rest = int(np.prod([ev.shape[a] for a in rest])) if rest else 1
    n_block = int(np.prod([ev.shape[a] for a in block]))
    joint = joint.reshape(n_rest, n_block, len(donors))
    f = f.reshape(n_rest, n_block)
    wb = np.ones(1)
    for a in block:
        wb = np.multiply.outer(wb, ev.weights[a]).reshape(-1)

    mass = np.einsum("pgk,g->pk", joint, wb)
    avail = mass > SUPPORT_THRESHOLD
    comps = np.where(avail[:, None, :], joint / np.where(avail, mass, 1.0)[:, None, :], 0.0)
    fmass = f @ wb
    target = f / np.where(fmass > 0, fmass, 1.0)[:, None]
    active = avail.any(axis=1) & (fmass > SUPPORT_THRESHOLD)

    residuals = np.full(n_rest, np.nan)
    weights = np.zeros((n_rest, len(donors)))
    if active.any():
        A, b, al = comps[active], target[active], avail[active]
        Q = np.einsum("pgi,g,pgj->pij", A, wb, A)
        c = np.einsum("pgi,g,pg->pi", A, wb, b)

        def residual(w):
            gap = np.einsum("pgk,pk->pg", A, w) - b
            return np.sqrt(np.einsum("pg,g->p", gap * gap, wb))

        w = simplex_least_squares(Q, c, al, iterations, restarts, seed, score=residual)
        residuals[active] = residual(w)
        weights[active] = w
    if not np.any(active):
        return WeightExistenceResult(0.0, None, None, tuple(donors), residuals)

    i = int(np.nanargmax(residuals))
    rest_shape = [ev.shape[a] for a in rest]
    witness = [np.nan] * d
    if rest:
        pos = np.unravel_index(i, rest_shape)
        for a, p in zip(rest, pos):
            witness[a] = float(ev.axes[a][p])
    return WeightExistenceResult(float(residuals[i]), weights[i], tuple(witness),
                                 tuple(donors), residuals)
