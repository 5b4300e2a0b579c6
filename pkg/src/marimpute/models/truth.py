from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mechanisms import MissingOracle
from .base import FittedConditionalModel, ModelKind, as_features


@dataclass(frozen=True, eq=False)
class TrueSamplerModel(FittedConditionalModel):
    """Analytic conditional of column j taken from a mechanism's oracle."""

    spec: object
    column: int
    kind: ModelKind = ModelKind.TRUE_SAMPLER

    def _rows(self, features):
        f = as_features(features)
        if f.shape[1] != self.spec.d - 1:
            raise ValueError(f"expected {self.spec.d - 1} feature columns, got {f.shape[1]}")
        return np.insert(f, self.column, np.nan, axis=1)

    def sample(self, features, rng):
        return self.spec.conditional_oracle.sample(self.column, self._rows(features), rng)

    def predict(self, features):
        return self.spec.conditional_oracle.mean(self.column, self._rows(features))


def true_sampler(spec, j: int) -> TrueSamplerModel:
    if spec.conditional_oracle is None:
        raise MissingOracle(f"{spec.name} has no conditional oracle")
    spec.conditional_oracle.law(j)
    return TrueSamplerModel(spec, int(j))
