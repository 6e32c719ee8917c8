"""
Run settings for tests and simulations.

``TestConfig`` drives one homogeneity test; ``DgpConfig`` describes one
simulated data generating process. Defaults come from ``config.py`` and
therefore from the environment.
"""

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from config import LearnerConfig, SimDefaults, TestDefaults
from exceptions import ConfigurationError, ScenarioError


@dataclass(frozen=True)
class LearnerSettings:
    """Lasso settings shared by every nuisance fit of a run."""

    cv_folds: int = LearnerConfig.CV_FOLDS
    grid_size: int = LearnerConfig.LAMBDA_GRID_SIZE
    min_ratio: float = LearnerConfig.LAMBDA_MIN_RATIO
    tolerance: float = LearnerConfig.CD_TOLERANCE
    max_sweeps: int = LearnerConfig.CD_MAX_SWEEPS
    irls_max_iter: int = LearnerConfig.IRLS_MAX_ITER
    weight_floor: float = LearnerConfig.IRLS_WEIGHT_FLOOR
    link_clamp: float = LearnerConfig.LINK_CLAMP
    lambda_policy: str = LearnerConfig.LAMBDA_POLICY

    def validate(self) -> None:
        if self.cv_folds < 2:
            raise ConfigurationError(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.grid_size < 1:
            raise ConfigurationError(f"grid_size must be >= 1, got {self.grid_size}")
        if not 0.0 < self.min_ratio < 1.0:
            raise ConfigurationError("min_ratio must lie in (0, 1)")
        if self.tolerance <= 0 or self.max_sweeps < 1:
            raise ConfigurationError("tolerance must be > 0 and max_sweeps >= 1")
        if self.lambda_policy not in ('per_fold', 'global'):
            raise ConfigurationError(
                f"lambda_policy must be 'per_fold' or 'global', got '{self.lambda_policy}'"
            )


@dataclass(frozen=True)
class TestConfig:
    """
    Settings of one homogeneity test.

    Attributes:
        folds: Cross-fitting fold count K.
        epsilon: Trimming threshold; propensities outside [eps, 1-eps] are trimmed.
        seed: Seed of the fold plan and of every internal CV split.
        mode: 'cate', 'clate' or 'did'.
        learner: Lasso settings.
        workers: Threads used for per-(fold, cell) nuisance fits.
        clate_bracket: 'orthogonal' or 'printed' complement bracket of the
            CLATE score (see scores.clate_score).
    """

    # keeps pytest from collecting this class
    __test__ = False

    folds: int = TestDefaults.FOLDS
    epsilon: float = TestDefaults.EPSILON
    seed: int = TestDefaults.SEED
    mode: str = TestDefaults.MODE
    learner: LearnerSettings = field(default_factory=LearnerSettings)
    workers: int = TestDefaults.WORKERS
    clate_bracket: str = TestDefaults.CLATE_BRACKET

    def validate(self) -> None:
        if self.folds < 2:
            raise ConfigurationError(f"folds must be >= 2, got {self.folds}")
        if not 0.0 <= self.epsilon < 0.5:
            raise ConfigurationError(f"epsilon must lie in [0, 0.5), got {self.epsilon}")
        if self.mode not in TestDefaults.MODES:
            raise ConfigurationError(
                f"mode must be one of {TestDefaults.MODES}, got '{self.mode}'"
            )
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.clate_bracket not in ('orthogonal', 'printed'):
            raise ConfigurationError(
                f"clate_bracket must be 'orthogonal' or 'printed', got '{self.clate_bracket}'"
            )
        self.learner.validate()

    def with_updates(self, **changes) -> 'TestConfig':
        return replace(self, **changes)


DESIGNS = ('experimental', 'mixed', 'iv', 'panel')


@dataclass(frozen=True)
class DgpConfig:
    """
    Simulated data generating process.

    Attributes:
        n: Sample size.
        p: Covariate dimension.
        delta: Heterogeneity strength (extra effect of site Z=1).
        rho: Confounding strength in observational sites (mixed/panel).
        q: Treatment probability in experimental sites.
        pi_site: Pr(Z = 1).
        beta_nonzero: Count s of nonzero index coefficients.
        beta_value: Value v of each nonzero coefficient.
        design: 'experimental', 'mixed', 'iv' or 'panel'.
        seed: Scenario seed; replication seeds are derived from it.
    """

    n: int
    p: int = SimDefaults.DIMENSION
    delta: float = 0.0
    rho: float = 0.0
    q: float = SimDefaults.TREATMENT_PROB
    pi_site: float = SimDefaults.SITE_PROB
    beta_nonzero: int = SimDefaults.BETA_NONZERO
    beta_value: float = SimDefaults.BETA_VALUE
    design: str = 'experimental'
    seed: int = 0

    # Site-specific compliance intercepts of the IV design (Z = 0, Z = 1)
    compliance_intercepts: Tuple[float, float] = (0.4, 1.2)

    def validate(self) -> None:
        if self.n < 50:
            raise ScenarioError(f"n must be >= 50, got {self.n}")
        if self.p < 1:
            raise ScenarioError(f"p must be >= 1, got {self.p}")
        if not 0.0 < self.q < 1.0:
            raise ScenarioError(f"q must lie in (0, 1), got {self.q}")
        if not 0.0 < self.pi_site < 1.0:
            raise ScenarioError(f"pi_site must lie in (0, 1), got {self.pi_site}")
        if self.beta_nonzero < 0:
            raise ScenarioError("beta_nonzero must be >= 0")
        if self.design not in DESIGNS:
            raise ScenarioError(f"design must be one of {DESIGNS}, got '{self.design}'")

    def beta(self) -> np.ndarray:
        """Sparse coefficient vector: first s entries equal v, rest 0."""
        beta = np.zeros(self.p)
        beta[:min(self.beta_nonzero, self.p)] = self.beta_value
        return beta

    def with_updates(self, **changes) -> 'DgpConfig':
        return replace(self, **changes)
