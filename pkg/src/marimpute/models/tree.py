"""
Regression trees grown by greedy variance reduction.

Nodes are stored as flat arrays. Each node owns a contiguous segment
``order[start:end]`` of training row positions, so leaves keep their
training responses without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .base import FittedConditionalModel, ModelKind, as_features

LEAF = -1


@numba.njit(cache=True)
def _best_split(X, y, order, start, end, features, min_leaf):
    """Best (feature, threshold, gain) over the candidate features.

    Gain is S_L^2/n_L + S_R^2/n_R of the node-centered response; maximizing
    it minimizes the summed squared error of the two children. Ties keep the
    first candidate found.
    """
    n = end - start
    mean = 0.0
    for i in range(start, end):
        mean += y[order[i]]
    mean /= n
    best_gain = -1.0
    best_f = -1
    best_thr = 0.0
    xs = np.empty(n)
    ys = np.empty(n)
    for fi in range(features.size):
        f = features[fi]
        for i in range(n):
            xs[i] = X[order[start + i], f]
        perm = np.argsort(xs, kind="mergesort")
        for i in range(n):
            ys[i] = y[order[start + perm[i]]] - mean
        total = 0.0
        for i in range(n):
            total += ys[i]
        left = 0.0
        for i in range(n - 1):
            left += ys[i]
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            a = xs[perm[i]]
            b = xs[perm[i + 1]]
            if not a < b:
                continue
            right = total - left
            gain = left * left / nl + right * right / nr
            if gain > best_gain:
                best_gain = gain
                best_f = f
                thr = 0.5 * (a + b)
                if not thr < b:
                    thr = a
                best_thr = thr
    return best_f, best_thr, best_gain


@numba.njit(cache=True)
def _grow(X, y, rows, min_leaf, max_depth, mtry, keys):
    n = rows.size
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    start = np.zeros(cap, dtype=np.int64)
    end = np.zeros(cap, dtype=np.int64)
    value = np.zeros(cap)
    order = rows.copy()
    buf = np.empty(n, dtype=np.int64)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    n_nodes = 1
    start[0] = 0
    end[0] = n
    stack_node[0] = 0
    stack_depth[0] = 0
    top = 1
    all_features = np.arange(p)
    while top > 0:
        top -= 1
        node = stack_node[top]
        depth = stack_depth[top]
        s = start[node]
        e = end[node]
        size = e - s
        acc = 0.0
        lo = np.inf
        hi = -np.inf
        for i in range(s, e):
            v = y[order[i]]
            acc += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        value[node] = acc / size
        if size < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or not lo < hi:
            continue
        if mtry < p:
            cand = np.argsort(keys[node])[:mtry]
        else:
            cand = all_features
        f, thr, gain = _best_split(X, y, order, s, e, cand, min_leaf)
        if f < 0:
            continue
        nl = 0
        nr = 0
        for i in range(s, e):
            r = order[i]
            if X[r, f] <= thr:
                order[s + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for i in range(nr):
            order[s + nl + i] = buf[i]
        feature[node] = f
        threshold[node] = thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        start[lc] = s
        end[lc] = s + nl
        start[rc] = s + nl
        end[rc] = e
        stack_node[top] = rc
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lc
        stack_depth[top] = depth + 1
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            start[:n_nodes], end[:n_nodes], value[:n_nodes], order)


@numba.njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat-array regression tree.

    ``order[start[k]:end[k]]`` lists the training row indices (with
    bootstrap repeats) routed to node k; ``response`` is the full training
    response they index into.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    value: np.ndarray
    order: np.ndarray
    response: np.ndarray

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def leaves(self):
        return np.flatnonzero(self.feature == LEAF)

    def apply(self, features):
        f = np.ascontiguousarray(as_features(features))
        return _apply(f, self.feature, self.threshold, self.left, self.right)

    def leaf_rows(self, leaf):
        return self.order[self.start[leaf]:self.end[leaf]]

    def leaf_size(self, leaf):
        return self.end[leaf] - self.start[leaf]

    def depth(self):
        depth = np.zeros(self.n_nodes, dtype=int)
        for k in range(self.n_nodes):
            if self.feature[k] != LEAF:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())


def grow_tree(features, response, rows=None, min_leaf=5, max_depth=None, mtry=None,
              rng: Optional[np.random.Generator] = None) -> Tree:
    """Grow one tree on ``features[rows]``.

    Parameters
    ----------
    rows : array of int, optional
        Training row indices, repeats allowed (bootstrap). Defaults to all rows.
    mtry : int, optional
        Features tried per split; all of them when None. A random subset is
        drawn at each node from ``rng`` when mtry is below the feature count.
    """
    X = np.ascontiguousarray(as_features(features))
    y = np.ascontiguousarray(np.asarray(response, dtype=float).reshape(-1))
    if X.shape[0] != y.shape[0]:
        raise ValueError("features and response differ in length")
    rows = np.arange(y.size) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot grow a tree on zero rows")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    p = X.shape[1]
    mtry = p if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}]")
    if mtry < p:
        rng = rng if rng is not None else np.random.default_rng(0)
        keys = rng.random((2 * rows.size + 1, p))
    else:
        keys = np.zeros((1, p))
    md = -1 if max_depth is None else int(max_depth)
    parts = _grow(X, y, rows, int(min_leaf), md, mtry, keys)
    return Tree(*parts, response=y)


@dataclass(frozen=True, eq=False)
class CartModel(FittedConditionalModel):
    tree: Tree
    kind: ModelKind = ModelKind.CART_SAMPLE

    def predict(self, features):
        return self.tree.value[self.tree.apply(features)]

    def sample(self, features, rng):
        t = self.tree
        leaves = t.apply(features)
        size = t.end[leaves] - t.start[leaves]
        pick = t.start[leaves] + np.minimum((rng.random(leaves.size) * size).astype(np.int64),
                                            size - 1)
        return t.response[t.order[pick]]


def fit_cart(features, response, min_leaf=5, max_depth=None, kind=ModelKind.CART_SAMPLE):
    """Single tree using every feature at every split; leaves sample their responses."""
    return CartModel(grow_tree(features, response, min_leaf=min_leaf, max_depth=max_depth),
                     ModelKind(kind))
