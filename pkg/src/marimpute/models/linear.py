from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import FittedConditionalModel, ModelKind, as_features


@dataclass(frozen=True, eq=False)
class LinearGaussianModel(FittedConditionalModel):
    """Least-squares fit with intercept and a homoscedastic Gaussian residual.

    ``coef[0]`` is the intercept. ``ridge`` records whether the fallback
    penalty was needed because the design was rank deficient.
    """

    coef: np.ndarray
    sigma2: float
    kind: ModelKind = ModelKind.GAUSSIAN_DRAW
    ridge: bool = False

    def predict(self, features):
        f = as_features(features)
        return self.coef[0] + f @ self.coef[1:]

    def sample(self, features, rng):
        mu = self.predict(features)
        return mu + np.sqrt(self.sigma2) * rng.standard_normal(mu.shape[0])


def fit_gaussian_linear(features, response, kind=ModelKind.GAUSSIAN_DRAW) -> LinearGaussianModel:
    """Regress the response on the features.

    The residual variance is RSS / (rows - p) with p the number of
    coefficients including the intercept. When the design is rank deficient
    or has no residual degrees of freedom, a ridge penalty
    1e-8 * trace(X'X) / p is added and the model is flagged.
    """
    f = as_features(features)
    y = np.asarray(response, dtype=float).reshape(-1)
    if f.shape[0] != y.shape[0]:
        raise ValueError("features and response differ in length")
    if y.size == 0:
        raise ValueError("cannot fit on zero rows")
    design = np.column_stack([np.ones(y.size), f])
    n, p = design.shape
    ridge = n <= p or np.linalg.matrix_rank(design) < p
    if ridge:
        gram = design.T @ design
        lam = 1e-8 * max(np.trace(gram), 1e-300) / p
        coef = np.linalg.solve(gram + lam * np.eye(p), design.T @ y)
    else:
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
    resid = y - design @ coef
    dof = max(n - p, 1)
    sigma2 = float(resid @ resid / dof)
    return LinearGaussianModel(coef, sigma2, ModelKind(kind), bool(ridge))
