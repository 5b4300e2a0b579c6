"""
Bagged regression forests with weighted-empirical conditional output.

For a query x the forest assigns training row i the weight

    w_i(x) = (1/B) sum_b  c_bi 1{i in leaf_b(x)} / |leaf_b(x)|,

where c_bi is the bootstrap multiplicity of row i in tree b and leaf sizes
count repeats. Sampling picks a tree uniformly and then a member of its leaf
uniformly, which draws row i with probability exactly w_i(x). ``predict``
returns sum_i w_i(x) y_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import FittedConditionalModel, ModelKind, as_features
from .tree import grow_tree

DEFAULT_TREES = 100
DEFAULT_MIN_LEAF = 5


def default_mtry(n_features: int) -> int:
    return max(1, n_features // 3)


@dataclass(frozen=True, eq=False)
class ForestModel(FittedConditionalModel):
    """Forest of flat trees sharing one training response vector.

    With ``pooled`` set, sampling draws uniformly from the union of the
    query's leaves over all trees (repeats kept) instead of weighting trees
    equally; this is the leaf-pooling donor scheme of chained-equation
    random-forest imputation.
    """

    trees: tuple
    response: np.ndarray
    kind: ModelKind = ModelKind.FOREST_SAMPLE
    pooled: bool = False

    @property
    def n_trees(self):
        return len(self.trees)

    def leaves(self, features):
        f = np.ascontiguousarray(as_features(features))
        return np.column_stack([t.apply(f) for t in self.trees])

    def weights(self, features) -> np.ndarray:
        """(queries, training rows) matrix of forest weights."""
        leaves = self.leaves(features)
        q = leaves.shape[0]
        w = np.zeros((q, self.response.size))
        for b, t in enumerate(self.trees):
            for i in range(q):
                rows = t.leaf_rows(leaves[i, b])
                # pooled donors count every leaf member once, across all trees
                np.add.at(w[i], rows, 1.0 if self.pooled else 1.0 / rows.size)
        return w / w.sum(axis=1, keepdims=True)

    def predict(self, features):
        leaves = self.leaves(features)
        means = np.column_stack([t.value[leaves[:, b]] for b, t in enumerate(self.trees)])
        return means.mean(axis=1)

    def oob_predict(self, features):
        """Out-of-bag mean prediction for the training rows.

        Each row is averaged over the trees whose bootstrap left it out;
        rows that every tree saw come back as NaN.
        """
        leaves = self.leaves(features)
        n = leaves.shape[0]
        total, count = np.zeros(n), np.zeros(n)
        for b, t in enumerate(self.trees):
            out = np.ones(n, dtype=bool)
            out[t.order] = False
            total[out] += t.value[leaves[out, b]]
            count[out] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(count > 0, total / count, np.nan)

    def sample(self, features, rng):
        leaves = self.leaves(features)
        q = leaves.shape[0]
        starts = np.column_stack([t.start[leaves[:, b]] for b, t in enumerate(self.trees)])
        ends = np.column_stack([t.end[leaves[:, b]] for b, t in enumerate(self.trees)])
        sizes = ends - starts
        if self.pooled:
            cum = np.cumsum(sizes, axis=1)
            u = rng.random(q) * cum[:, -1]
            tree = np.minimum((u[:, None] >= cum).sum(axis=1), self.n_trees - 1)
        else:
            tree = rng.integers(0, self.n_trees, size=q)
        idx = np.arange(q)
        size = sizes[idx, tree]
        pos = starts[idx, tree] + np.minimum((rng.random(q) * size).astype(np.int64), size - 1)
        out = np.empty(q)
        for b in np.unique(tree):
            sel = tree == b
            out[sel] = self.response[self.trees[b].order[pos[sel]]]
        return out


def fit_forest(features, response, n_trees=DEFAULT_TREES, min_leaf=DEFAULT_MIN_LEAF, mtry=None,
               max_depth=None, bootstrap=True, kind=ModelKind.FOREST_SAMPLE, pooled=False,
               rng=None) -> ForestModel:
    """Fit B trees, each on a bootstrap resample with per-split feature subsets.

    ``mtry`` defaults to max(1, floor(p/3)) for p features. With
    ``bootstrap=False`` every tree sees all rows once.
    """
    X = np.ascontiguousarray(as_features(features))
    y = np.ascontiguousarray(np.asarray(response, dtype=float).reshape(-1))
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    p = X.shape[1]
    mtry = default_mtry(p) if mtry is None else min(int(mtry), p)
    n = y.size
    trees = []
    for _ in range(int(n_trees)):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(grow_tree(X, y, rows, min_leaf=min_leaf, max_depth=max_depth, mtry=mtry,
                               rng=rng))
    return ForestModel(tuple(trees), y, ModelKind(kind), bool(pooled))
