"""Conditional models of one column given the rest, behind a common interface."""

from __future__ import annotations

import numpy as np

from .base import FittedConditionalModel, ModelKind
from .forest import ForestModel, default_mtry, fit_forest
from .linear import LinearGaussianModel, fit_gaussian_linear
from .tree import CartModel, Tree, fit_cart, grow_tree
from .truth import TrueSamplerModel, true_sampler

_FOREST_KEYS = {"n_trees", "min_leaf", "mtry", "max_depth", "bootstrap", "pooled"}
_CART_KEYS = {"min_leaf", "max_depth"}


def min_leaf_of(kind, params=None) -> int:
    """Leaf size the model will use (1 for models without leaves)."""
    kind = ModelKind(kind)
    if kind in (ModelKind.CART_SAMPLE, ModelKind.FOREST_SAMPLE, ModelKind.FOREST_MEAN):
        return int((params or {}).get("min_leaf", 5))
    return 1


def fit_model(kind, features, response, params=None, rng=None, spec=None, column=None):
    """Fit a model of the given kind.

    ``spec`` and ``column`` are only used by the true sampler. Unknown
    parameters raise ValueError so that config typos surface early.
    """
    kind = ModelKind(kind)
    params = dict(params or {})
    if kind in (ModelKind.GAUSSIAN_DRAW, ModelKind.REGRESSION_MEAN):
        _check(params, set(), kind)
        return fit_gaussian_linear(features, response, kind=kind)
    if kind is ModelKind.CART_SAMPLE:
        _check(params, _CART_KEYS, kind)
        return fit_cart(features, response, kind=kind, **params)
    if kind in (ModelKind.FOREST_SAMPLE, ModelKind.FOREST_MEAN):
        _check(params, _FOREST_KEYS, kind)
        return fit_forest(features, response, kind=kind,
                          rng=rng if rng is not None else np.random.default_rng(0), **params)
    if spec is None or column is None:
        raise ValueError("true-sampler needs the mechanism spec and the column index")
    _check(params, set(), kind)
    return true_sampler(spec, column)


def _check(params, allowed, kind):
    extra = set(params) - allowed
    if extra:
        raise ValueError(f"unknown parameters for {kind.value}: {sorted(extra)}")


__all__ = [
    "FittedConditionalModel", "ModelKind", "ForestModel", "default_mtry", "fit_forest",
    "LinearGaussianModel", "fit_gaussian_linear", "CartModel", "Tree", "fit_cart", "grow_tree",
    "TrueSamplerModel", "true_sampler", "fit_model", "min_leaf_of",
]
