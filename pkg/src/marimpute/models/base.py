from __future__ import annotations

from enum import Enum

import numpy as np


class ModelKind(str, Enum):
    GAUSSIAN_DRAW = "gaussian-draw"
    REGRESSION_MEAN = "regression-mean"
    CART_SAMPLE = "cart-sample"
    FOREST_SAMPLE = "forest-sample"
    FOREST_MEAN = "forest-mean"
    TRUE_SAMPLER = "true-sampler"

    @property
    def distributional(self) -> bool:
        """True when imputation draws from the fitted conditional, False when it plugs in the mean."""
        return self not in (ModelKind.REGRESSION_MEAN, ModelKind.FOREST_MEAN)


class FittedConditionalModel:
    """A fitted model of one response column given the other columns.

    Subclasses implement ``sample`` and ``predict`` on a (rows, d-1) feature
    array. ``impute`` dispatches on the model kind.
    """

    kind: ModelKind

    def sample(self, features, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def predict(self, features) -> np.ndarray:
        raise NotImplementedError

    def impute(self, features, rng: np.random.Generator) -> np.ndarray:
        if self.kind.distributional:
            return self.sample(features, rng)
        return self.predict(features)


def as_features(features) -> np.ndarray:
    f = np.asarray(features, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if f.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {f.shape}")
    return f
