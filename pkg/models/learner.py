"""Fitted lasso model container."""

from dataclasses import dataclass

import numpy as np

from config import LearnerConfig


@dataclass(frozen=True)
class LassoModel:
    """
    Immutable penalized regression fit.

    Coefficients and intercept are on the original covariate scale;
    ``x_mean``/``x_scale`` are the standardization used at fit time
    (zero-variance columns carry scale 1 and coefficient 0).

    Attributes:
        intercept: Unpenalized intercept.
        coefficients: Slopes, length p.
        penalty: Lambda on the standardized scale.
        family: 'gaussian' or 'binomial'.
        x_mean: Column means of the training design.
        x_scale: Column standard deviations (population) of the training design.
        sweeps: Coordinate descent sweeps used (summed over IRLS steps).
        converged: Whether the tolerance was reached within the sweep budget.
        link_clamp: Bound on the binomial linear predictor used at fit time.
    """

    intercept: float
    coefficients: np.ndarray
    penalty: float
    family: str
    x_mean: np.ndarray
    x_scale: np.ndarray
    sweeps: int = 0
    converged: bool = True
    link_clamp: float = LearnerConfig.LINK_CLAMP

    @property
    def n_features(self) -> int:
        return int(self.coefficients.shape[0])

    @property
    def standardized_coefficients(self) -> np.ndarray:
        return self.coefficients * self.x_scale

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.coefficients))
