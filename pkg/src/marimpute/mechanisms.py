"""
Synthetic missingness mechanisms.

Each mechanism is a :class:`MechanismSpec`: a data law for X together with
an evaluable selection probability P(M = m | X = x) over a finite list of
patterns. Low-dimensional specs also carry a joint density and a bounding
box so the quadrature checkers in :mod:`marimpute.analysis` can use them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .data import DataMatrix, MissingMask


class UnknownMechanism(KeyError):
    pass


class MissingOracle(ValueError):
    """Raised when a spec has no analytic conditional for a requested column."""


# --------------------------------------------------------------------------
# FGM copula

def fgm_density(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    inside = (x1 >= 0) & (x1 <= 1) & (x2 >= 0) & (x2 <= 1)
    return np.where(inside, 1.0 + (2 * x1 - 1) * (2 * x2 - 1), 0.0)


def fgm_conditional_cdf(x2, x1):
    """F(x2 | x1) = x2 + (2 x1 - 1) x2 (x2 - 1) on [0, 1]."""
    x2 = np.clip(np.asarray(x2, dtype=float), 0.0, 1.0)
    return x2 + (2 * np.asarray(x1) - 1) * x2 * (x2 - 1)


def fgm_conditional_ppf(u, x1):
    """Invert F(. | x1) at u.

    Solves a t^2 + (1 - a) t - u = 0 with a = 2 x1 - 1 and keeps the root in
    [0, 1], written as 2u / ((1 - a) + sqrt((1 - a)^2 + 4 a u)) so that the
    a -> 0 limit needs no special case.
    """
    u = np.asarray(u, dtype=float)
    a = 2 * np.asarray(x1, dtype=float) - 1
    b = 1 - a
    disc = np.maximum(b * b + 4 * a * u, 0.0)
    denom = b + np.sqrt(disc)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0, 2 * u / denom, 0.0)
    return np.clip(t, 0.0, 1.0)


def fgm_conditional_mean(x1):
    return 0.5 + (np.asarray(x1, dtype=float) - 0.5) / 3.0


def sample_fgm_pair(rng: np.random.Generator, size: Optional[int] = None):
    """Draw (X1, X2) from the FGM copula with uniform marginals.

    X1 is uniform; X2 is obtained by inverting the conditional CDF at a
    fresh uniform. With ``size=None`` a single pair is returned as a tuple,
    otherwise an array of shape (size, 2).
    """
    n = 1 if size is None else int(size)
    x1 = rng.random(n)
    x2 = fgm_conditional_ppf(rng.random(n), x1)
    if size is None:
        return float(x1[0]), float(x2[0])
    return np.column_stack([x1, x2])


# --------------------------------------------------------------------------
# Conditional oracles

@dataclass(frozen=True)
class ColumnLaw:
    """Analytic law of X_j given the remaining coordinates.

    All callables take full rows ``x`` of shape (n, d); column j of ``x`` is
    ignored except by ``density``, which evaluates p(x_j | x_{-j}).
    """

    sample: Callable  # (x, rng) -> (n,)
    mean: Callable  # (x) -> (n,)
    density: Callable  # (x) -> (n,)


@dataclass(frozen=True)
class ConditionalOracle:
    laws: dict

    def law(self, j: int) -> ColumnLaw:
        try:
            return self.laws[j]
        except KeyError:
            raise MissingOracle(f"no analytic conditional for column {j}") from None

    def sample(self, j, x, rng):
        return self.law(j).sample(np.atleast_2d(x), rng)

    def mean(self, j, x):
        return self.law(j).mean(np.atleast_2d(x))

    def density(self, j, x):
        return self.law(j).density(np.atleast_2d(x))

    @property
    def columns(self):
        return tuple(sorted(self.laws))


def _uniform_law(j):
    def density(x):
        v = x[:, j]
        return ((v >= 0) & (v <= 1)).astype(float)

    return ColumnLaw(
        sample=lambda x, rng: rng.random(x.shape[0]),
        mean=lambda x: np.full(x.shape[0], 0.5),
        density=density,
    )


def _fgm_law(j, partner):
    return ColumnLaw(
        sample=lambda x, rng: fgm_conditional_ppf(rng.random(x.shape[0]), x[:, partner]),
        mean=lambda x: fgm_conditional_mean(x[:, partner]),
        density=lambda x: fgm_density(x[:, j], x[:, partner]),
    )


def _gaussian_law(j, mean_fn, var):
    sd = np.sqrt(var)
    return ColumnLaw(
        sample=lambda x, rng: mean_fn(x) + sd * rng.standard_normal(x.shape[0]),
        mean=mean_fn,
        density=lambda x: stats.norm.pdf(x[:, j], loc=mean_fn(x), scale=sd),
    )


# --------------------------------------------------------------------------
# Spec

@dataclass(frozen=True)
class MechanismSpec:
    """A missingness mechanism in selection-model form.

    ``probs(x)`` returns the (n, k) matrix of P(M = patterns[k] | X = x_i).
    ``per_pattern`` switches generation to a stratified draw of an equal
    number of rows from each pattern-specific law.
    """

    name: str
    d: int
    patterns: np.ndarray
    prob_fn: Callable
    data_sampler: Callable
    density: Optional[Callable] = None
    bounds: Optional[tuple] = None
    conditional_oracle: Optional[ConditionalOracle] = None
    quadrature: str = "gauss-legendre"
    per_pattern: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.patterns, dtype=np.int8)
        if p.ndim != 2 or p.shape[1] != self.d:
            raise ValueError(f"patterns must have shape (k, {self.d})")
        p.setflags(write=False)
        object.__setattr__(self, "patterns", p)

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]

    def pattern_index(self, m) -> int:
        m = np.asarray(m, dtype=np.int8)
        hits = np.flatnonzero(np.all(self.patterns == m, axis=1))
        if hits.size == 0:
            raise ValueError(f"pattern {tuple(m)} not in {self.name}")
        return int(hits[0])

    def probs(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.prob_fn(x), dtype=float)

    def prob(self, m, x) -> np.ndarray:
        return self.probs(x)[:, self.pattern_index(m)]

    def sample_x(self, rng, n) -> np.ndarray:
        return np.asarray(self.data_sampler(rng, n), dtype=float)

    @property
    def complete_index(self) -> Optional[int]:
        """Index of the all-observed pattern, or None if it is absent."""
        hits = np.flatnonzero(~self.patterns.any(axis=1))
        return int(hits[0]) if hits.size else None


@dataclass(frozen=True)
class GeneratedSample:
    x: DataMatrix
    mask: MissingMask
    spec_id: str
    seed: int
    pattern_labels: np.ndarray = None


def generate(spec: MechanismSpec, n: int, seed: int) -> GeneratedSample:
    """Draw n i.i.d. (X, M) rows; identical seeds give identical output."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if spec.per_pattern is not None:
        k = spec.n_patterns
        sizes = np.full(k, n // k)
        sizes[: n % k] += 1
        blocks = [spec.per_pattern(rng, i, int(s)) for i, s in enumerate(sizes)]
        x = np.vstack(blocks)
        labels = np.repeat(np.arange(k), sizes)
        order = rng.permutation(n)
        x, labels = x[order], labels[order]
    else:
        x = spec.sample_x(rng, n)
        p = spec.probs(x)
        cum = np.cumsum(p, axis=1)
        u = rng.random(n)[:, None] * cum[:, -1:]
        labels = np.minimum((u >= cum).sum(axis=1), spec.n_patterns - 1)
    mask = spec.patterns[labels].astype(bool)
    return GeneratedSample(DataMatrix(x), MissingMask(mask), spec.name, int(seed), labels)


# --------------------------------------------------------------------------
# Catalogue

def _ex1_uniform3():
    def probs(x):
        x1 = x[:, 0]
        return np.column_stack([2 * x1 / 3, 2 / 3 - 2 * x1 / 3, np.full_like(x1, 1 / 3)])

    return MechanismSpec(
        name="ex1-uniform3",
        d=3,
        patterns=[(0, 0, 0), (0, 1, 0), (1, 0, 0)],
        prob_fn=probs,
        data_sampler=lambda rng, n: rng.random((n, 3)),
        density=_box_density(3),
        bounds=((0.0, 1.0),) * 3,
        conditional_oracle=ConditionalOracle({j: _uniform_law(j) for j in range(3)}),
    )


def _box_density(d):
    def density(x):
        inside = np.all((x >= 0) & (x <= 1), axis=1)
        return inside.astype(float)

    return density


def _ex_nonoverlap():
    # X2 | m1 ~ U[0,1], X2 | m2 ~ U[1,2] with equal pattern weights, so X2 ~ U[0,2]
    # and P(M = m1 | x) = 1{x2 <= 1}; X1 | X2 ~ U[0, X2].
    def sampler(rng, n):
        x2 = 2 * rng.random(n)
        return np.column_stack([x2 * rng.random(n), x2])

    def probs(x):
        first = (x[:, 1] <= 1.0).astype(float)
        return np.column_stack([first, 1.0 - first])

    def density(x):
        x1, x2 = x[:, 0], x[:, 1]
        inside = (x1 >= 0) & (x1 <= x2) & (x2 > 0) & (x2 <= 2)
        # half weight on the edge x1 = x2, where grid nodes can sit exactly
        edge = np.where(x1 == x2, 0.5, 1.0)
        return np.where(inside, 0.5 * edge / np.where(x2 > 0, x2, 1.0), 0.0)

    def x1_density(x):
        x1, x2 = x[:, 0], x[:, 1]
        ok = (x1 >= 0) & (x1 <= x2) & (x2 > 0)
        return np.where(ok, 1.0 / np.where(x2 > 0, x2, 1.0), 0.0)

    def x2_density(x):
        # p(x2 | x1) proportional to 1/x2 on [x1, 2]
        x1, x2 = x[:, 0], x[:, 1]
        ok = (x2 >= x1) & (x2 <= 2) & (x1 > 0)
        norm = np.log(2.0 / np.where(x1 > 0, x1, 1.0))
        return np.where(ok, 1.0 / (np.where(x2 > 0, x2, 1.0) * norm), 0.0)

    def x2_sample(x, rng):
        x1 = np.maximum(x[:, 0], 1e-300)
        return x1 * (2.0 / x1) ** rng.random(x.shape[0])

    def x2_mean(x):
        x1 = np.maximum(x[:, 0], 1e-300)
        return (2.0 - x1) / np.log(2.0 / x1)

    oracle = ConditionalOracle({
        0: ColumnLaw(sample=lambda x, rng: x[:, 1] * rng.random(x.shape[0]),
                     mean=lambda x: x[:, 1] / 2, density=x1_density),
        1: ColumnLaw(sample=x2_sample, mean=x2_mean, density=x2_density),
    })
    return MechanismSpec(
        name="ex-nonoverlap",
        d=2,
        patterns=[(0, 0), (1, 0)],
        prob_fn=probs,
        data_sampler=sampler,
        density=density,
        bounds=((0.0, 2.0), (0.0, 2.0)),
        conditional_oracle=oracle,
        quadrature="midpoint",
    )


_EX2_COV = np.array([[2.0, 1.0], [1.0, 1.0]])


def _ex2_gauss_shift(weight=0.5, shift=5.0):
    means = np.array([[0.0, 0.0], [shift, shift]])
    w = np.array([weight, 1 - weight])
    dists = [stats.multivariate_normal(mean=mu, cov=_EX2_COV) for mu in means]

    def log_components(x):
        return np.column_stack([np.log(w[k]) + dists[k].logpdf(x).reshape(-1) for k in range(2)])

    def probs(x):
        lc = log_components(x)
        lc -= lc.max(axis=1, keepdims=True)
        e = np.exp(lc)
        return e / e.sum(axis=1, keepdims=True)

    def density(x):
        return np.exp(log_components(x)).sum(axis=1)

    def sampler(rng, n):
        comp = rng.random(n) >= w[0]
        z = rng.multivariate_normal(np.zeros(2), _EX2_COV, size=n)
        return z + means[comp.astype(int)]

    # X1 | X2 = N(x2, 1) in both components.
    x1_law = _gaussian_law(0, lambda x: x[:, 1].astype(float), 1.0)

    # X2 | X1: mixture with component posteriors from X1 ~ N(mu_k1, 2).
    def x2_parts(x):
        x1 = x[:, 0]
        lp = np.column_stack([np.log(w[k]) + stats.norm.logpdf(x1, means[k, 0], np.sqrt(2.0))
                              for k in range(2)])
        lp -= lp.max(axis=1, keepdims=True)
        post = np.exp(lp)
        post /= post.sum(axis=1, keepdims=True)
        locs = means[:, 1][None, :] + 0.5 * (x1[:, None] - means[:, 0][None, :])
        return post, locs

    def x2_sample(x, rng):
        post, locs = x2_parts(x)
        k = (rng.random(x.shape[0]) >= post[:, 0]).astype(int)
        return locs[np.arange(x.shape[0]), k] + np.sqrt(0.5) * rng.standard_normal(x.shape[0])

    def x2_mean(x):
        post, locs = x2_parts(x)
        return (post * locs).sum(axis=1)

    def x2_density(x):
        post, locs = x2_parts(x)
        return (post * stats.norm.pdf(x[:, 1][:, None], locs, np.sqrt(0.5))).sum(axis=1)

    oracle = ConditionalOracle({0: x1_law, 1: ColumnLaw(x2_sample, x2_mean, x2_density)})
    lo, hi = -6.0, shift + 6.0
    return MechanismSpec(
        name="ex2-gauss-shift",
        d=2,
        patterns=[(0, 0), (1, 0)],
        prob_fn=probs,
        data_sampler=sampler,
        density=density,
        bounds=((lo - 3.0, hi + 3.0), (lo, hi)),
        conditional_oracle=oracle,
        params={"weight": weight, "shift": shift},
    )


def _fgm_sampler(d):
    def sampler(rng, n):
        pair = sample_fgm_pair(rng, n)
        rest = rng.random((n, d - 2))
        return np.hstack([pair, rest])

    return sampler


def _fgm_box_density(d):
    def density(x):
        inside = np.all((x >= 0) & (x <= 1), axis=1)
        return np.where(inside, fgm_density(x[:, 0], x[:, 1]), 0.0)

    return density


def _fgm_oracle(d):
    laws = {0: _fgm_law(0, 1), 1: _fgm_law(1, 0)}
    laws.update({j: _uniform_law(j) for j in range(2, d)})
    return ConditionalOracle(laws)


def _ex_fgm4():
    def probs(x):
        x1, x2 = x[:, 0], x[:, 1]
        return np.column_stack([(x1 + x2) / 3, (1 - x1) / 3, (1 - x2) / 3,
                                np.full_like(x1, 1 / 3)])

    return MechanismSpec(
        name="ex-fgm4",
        d=3,
        patterns=[(0, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0)],
        prob_fn=probs,
        data_sampler=_fgm_sampler(3),
        density=_fgm_box_density(3),
        bounds=((0.0, 1.0),) * 3,
        conditional_oracle=_fgm_oracle(3),
    )


def _ex_fgm3(d=3):
    d = int(d)
    if d < 3:
        raise ValueError("ex-fgm3 needs d >= 3")

    def probs(x):
        x1, x2 = x[:, 0], x[:, 1]
        return np.column_stack([(x1 + x2) / 3, (2 - x1) / 3, (1 - x2) / 3])

    pats = np.zeros((3, d), dtype=np.int8)
    pats[1, 1] = 1
    pats[2, 0] = 1
    return MechanismSpec(
        name="ex-fgm3",
        d=d,
        patterns=pats,
        prob_fn=probs,
        data_sampler=_fgm_sampler(d),
        density=_fgm_box_density(d),
        bounds=((0.0, 1.0),) * d,
        conditional_oracle=_fgm_oracle(d),
        params={"d": d},
    )


def _app_a_uniform5():
    def probs(x):
        x1 = x[:, 0]
        return np.column_stack([x1 / 3, 2 / 3 - x1 / 3, np.full_like(x1, 1 / 3)])

    pats = np.zeros((3, 5), dtype=np.int8)
    pats[1, 1] = 1
    pats[2, 0] = 1
    return MechanismSpec(
        name="appA-uniform5",
        d=5,
        patterns=pats,
        prob_fn=probs,
        data_sampler=lambda rng, n: rng.random((n, 5)),
        density=_box_density(5),
        bounds=((0.0, 1.0),) * 5,
        conditional_oracle=ConditionalOracle({j: _uniform_law(j) for j in range(5)}),
    )


def toeplitz_cov(k=3, rho=0.5):
    idx = np.arange(k)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _nonlinear_f(xo):
    x1, x2, x3 = xo[:, 0], xo[:, 1], xo[:, 2]
    return np.column_stack([x3 * np.sin(x1 * x2), x2 * (x2 > 0), np.arctan(x1) * np.arctan(x2)])


def _gauss_mixture6(name, link):
    """Shared construction of the two six-column shifted mixtures.

    The always-observed block X_O (columns 3..5) is Gaussian with a
    pattern-specific mean and Toeplitz covariance; the first three columns
    are link(X_O) plus N(0, 4) noise. Pattern k masks column k.
    """
    cov = toeplitz_cov()
    centers = np.array([5.0, 0.0, -5.0])
    block = [stats.multivariate_normal(mean=np.full(3, c), cov=cov) for c in centers]
    noise_var = 4.0

    def per_pattern(rng, k, size):
        xo = rng.multivariate_normal(np.full(3, centers[k]), cov, size=size)
        xm = link(xo) + np.sqrt(noise_var) * rng.standard_normal((size, 3))
        return np.hstack([xm, xo])

    def sampler(rng, n):
        comp = rng.integers(0, 3, size=n)
        out = np.empty((n, 6))
        for k in range(3):
            idx = np.flatnonzero(comp == k)
            out[idx] = per_pattern(rng, k, idx.size)
        return out

    def probs(x):
        xo = x[:, 3:6]
        lc = np.column_stack([block[k].logpdf(xo).reshape(-1) for k in range(3)])
        lc -= lc.max(axis=1, keepdims=True)
        e = np.exp(lc)
        return e / e.sum(axis=1, keepdims=True)

    laws = {j: _gaussian_law(j, (lambda x, j=j: link(x[:, 3:6])[:, j]), noise_var)
            for j in range(3)}
    pats = np.zeros((3, 6), dtype=np.int8)
    pats[0, 0] = pats[1, 1] = pats[2, 2] = 1
    return MechanismSpec(
        name=name,
        d=6,
        patterns=pats,
        prob_fn=probs,
        data_sampler=sampler,
        conditional_oracle=ConditionalOracle(laws),
        per_pattern=per_pattern,
    )


def _app_b():
    coef = np.tile([0.5, 1.0, 1.5], (3, 1))
    return _gauss_mixture6("appB-gaussmix6", lambda xo: xo @ coef.T)


def _app_c():
    return _gauss_mixture6("appC-nonlinear6", _nonlinear_f)


def _mcar_bernoulli(p=0.3, cols=None, d=3):
    d = int(d)
    p = float(p)
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    cols = tuple(range(d)) if cols is None else tuple(int(c) for c in cols)
    if any(not 0 <= c < d for c in cols):
        raise ValueError(f"cols {cols} out of range for d={d}")
    pats = np.zeros((2 ** len(cols), d), dtype=np.int8)
    for i, bits in enumerate(itertools.product((0, 1), repeat=len(cols))):
        pats[i, list(cols)] = bits
    nmiss = pats[:, list(cols)].sum(axis=1)
    weights = p ** nmiss * (1 - p) ** (len(cols) - nmiss)

    def probs(x):
        return np.broadcast_to(weights, (x.shape[0], weights.size)).copy()

    return MechanismSpec(
        name="mcar-bernoulli",
        d=d,
        patterns=pats,
        prob_fn=probs,
        data_sampler=lambda rng, n: rng.random((n, d)),
        density=_box_density(d),
        bounds=((0.0, 1.0),) * d,
        conditional_oracle=ConditionalOracle({j: _uniform_law(j) for j in range(d)}),
        params={"p": p, "cols": list(cols), "d": d},
    )


def _ex5_uniform4():
    # Non-identifiability of a two-column block from its donor patterns.
    def probs(x):
        x1, x2 = x[:, 0], x[:, 1]
        return np.column_stack([(x1 + x2) / 8, 1 / 4 - x2 / 8, 1 / 4 - x1 / 8,
                                np.full_like(x1, 1 / 2)])

    return MechanismSpec(
        name="ex5-uniform4",
        d=4,
        patterns=[(0, 0, 0, 0), (0, 0, 1, 0), (0, 1, 0, 0), (1, 1, 0, 0)],
        prob_fn=probs,
        data_sampler=lambda rng, n: rng.random((n, 4)),
        density=_box_density(4),
        bounds=((0.0, 1.0),) * 4,
        conditional_oracle=ConditionalOracle({j: _uniform_law(j) for j in range(4)}),
    )


def _ex6_uniform4():
    # Satisfies the fully-observed-pattern condition but not the all-pattern one.
    def probs(x):
        x2, x4 = x[:, 1], x[:, 3]
        return np.column_stack([x4 / 2, x2 / 2, 1 / 2 - x2 / 2, 1 / 2 - x4 / 2])

    return MechanismSpec(
        name="ex6-uniform4",
        d=4,
        patterns=[(0, 0, 0, 0), (1, 0, 0, 0), (1, 0, 1, 0), (0, 1, 1, 0)],
        prob_fn=probs,
        data_sampler=lambda rng, n: rng.random((n, 4)),
        density=_box_density(4),
        bounds=((0.0, 1.0),) * 4,
        conditional_oracle=ConditionalOracle({j: _uniform_law(j) for j in range(4)}),
    )


CATALOGUE = {
    "ex1-uniform3": _ex1_uniform3,
    "ex-nonoverlap": _ex_nonoverlap,
    "ex2-gauss-shift": _ex2_gauss_shift,
    "ex-fgm4": _ex_fgm4,
    "ex-fgm3": _ex_fgm3,
    "appA-uniform5": _app_a_uniform5,
    "appB-gaussmix6": _app_b,
    "appC-nonlinear6": _app_c,
    "mcar-bernoulli": _mcar_bernoulli,
    "ex5-uniform4": _ex5_uniform4,
    "ex6-uniform4": _ex6_uniform4,
}


def make_spec(name: str, **params) -> MechanismSpec:
    """Look up a named mechanism; keyword arguments are mechanism parameters."""
    try:
        factory = CATALOGUE[name]
    except KeyError:
        raise UnknownMechanism(f"unknown mechanism {name!r}; known: {sorted(CATALOGUE)}") from None
    return factory(**params)
