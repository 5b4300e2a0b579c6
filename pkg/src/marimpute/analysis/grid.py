"""Tensor-product quadrature grids and cached evaluations of p(x) and P(M=m|x)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_NODES = 8
MAX_DIM = 4
SUPPORT_THRESHOLD = 1e-10


class UnsupportedSpec(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Per-dimension node counts and ranges plus a quadrature rule tag."""

    nodes: tuple
    ranges: tuple
    rule: str = "gauss-legendre"

    def __post_init__(self):
        if len(self.nodes) != len(self.ranges):
            raise ValueError("nodes and ranges must have one entry per dimension")
        if any(n < MIN_NODES for n in self.nodes):
            raise ValueError(f"need at least {MIN_NODES} nodes per dimension")
        if self.rule not in ("gauss-legendre", "midpoint"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        for lo, hi in self.ranges:
            if not hi > lo:
                raise ValueError(f"empty range ({lo}, {hi})")

    @property
    def d(self):
        return len(self.nodes)

    def axis(self, k):
        """Nodes and weights of axis k."""
        n = self.nodes[k]
        lo, hi = self.ranges[k]
        if self.rule == "gauss-legendre":
            t, w = np.polynomial.legendre.leggauss(n)
            return lo + (hi - lo) * (t + 1) / 2, w * (hi - lo) / 2
        h = (hi - lo) / n
        return lo + h * (np.arange(n) + 0.5), np.full(n, h)

    def sub(self, axes):
        axes = list(axes)
        return GridSpec(tuple(self.nodes[a] for a in axes), tuple(self.ranges[a] for a in axes),
                        self.rule)


def default_grid(spec, nodes=None, rule=None) -> GridSpec:
    """Grid covering the mechanism's bounding box, 32 nodes per axis (16 when d = 4)."""
    if spec.bounds is None or spec.density is None:
        raise UnsupportedSpec(f"{spec.name} has no analytic density for quadrature")
    if spec.d > MAX_DIM:
        raise UnsupportedSpec(f"{spec.name}: quadrature limited to d <= {MAX_DIM}, got {spec.d}")
    if nodes is None:
        nodes = 32 if spec.d <= 3 else 16
    if np.isscalar(nodes):
        nodes = (int(nodes),) * spec.d
    return GridSpec(tuple(nodes), tuple(spec.bounds), rule or spec.quadrature)


def tensor_points(grid: GridSpec):
    """All grid points as an (N, d) array in C order, plus the axis node arrays."""
    axes = [grid.axis(k)[0] for k in range(grid.d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1), axes


class GridEvaluation:
    """Density and selection probabilities of a spec evaluated once on a grid.

    Arrays are shaped like the tensor grid (one axis per coordinate); the
    pattern axis, where present, comes last.
    """

    def __init__(self, spec, grid: GridSpec | None = None):
        if grid is None:
            grid = default_grid(spec)
        if spec.density is None:
            raise UnsupportedSpec(f"{spec.name} has no analytic density")
        if grid.d != spec.d:
            raise ValueError(f"grid has {grid.d} axes, spec has d={spec.d}")
        if spec.d > MAX_DIM:
            raise UnsupportedSpec(f"quadrature limited to d <= {MAX_DIM}")
        self.spec = spec
        self.grid = grid
        self.shape = tuple(grid.nodes)
        pts, self.axes = tensor_points(grid)
        self.points = pts
        self.weights = [grid.axis(k)[1] for k in range(grid.d)]
        self.f = np.asarray(spec.density(pts), dtype=float).reshape(self.shape)
        self.pi = spec.probs(pts).reshape(self.shape + (spec.n_patterns,))

    @cached_property
    def joint(self):
        """p(x, M=m) on the grid, pattern axis last."""
        return self.f[..., None] * self.pi

    @cached_property
    def pattern_mass(self):
        """P(M = m) by quadrature over the whole grid."""
        return self.integrate(self.joint, range(self.spec.d)).reshape(-1)

    def integrate(self, arr, axes):
        """Weighted sum over the given coordinate axes, keeping them as size-1 dims."""
        out = arr
        for a in sorted(set(axes)):
            shape = [1] * out.ndim
            shape[a] = -1
            out = (out * self.weights[a].reshape(shape)).sum(axis=a, keepdims=True)
        return out

    def point(self, flat_index):
        return tuple(float(v) for v in self.points[flat_index])

    @property
    def support(self):
        return self.f > SUPPORT_THRESHOLD


def missing_axes(pattern):
    return [int(a) for a in np.flatnonzero(pattern)]


def safe_ratio(num, den, threshold=SUPPORT_THRESHOLD):
    """num / den where den exceeds the threshold, NaN elsewhere."""
    num, den = np.broadcast_arrays(num, den)
    out = np.full(num.shape, np.nan)
    ok = den > threshold
    out[ok] = num[ok] / den[ok]
    return out
