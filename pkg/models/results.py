"""
Result data models.

Scores, test results and simulation summaries. The key=value record
format lives in utils/records.py.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class ScoreSample:
    """
    Per-observation score values.

    Attributes:
        psi: Score contribution excluding the -theta term (NaN on trimmed rows).
        trimmed: True where the observation was excluded by trimming.
        theta_hat: Mean of psi over retained rows.
        per_site_terms: Site -> mean of the squared, linear and augmentation
            components of that site's double difference on retained rows.
    """

    psi: np.ndarray
    trimmed: np.ndarray
    theta_hat: float
    per_site_terms: Dict[int, Dict[str, float]] = field(default_factory=dict)

    @property
    def retained(self) -> np.ndarray:
        return ~self.trimmed

    @property
    def retained_psi(self) -> np.ndarray:
        return self.psi[~self.trimmed]


@dataclass(frozen=True)
class TestResult:
    """
    Outcome of one homogeneity test.

    ``p_value`` is the two-sided normal tail of theta_hat / se.
    """

    # keeps pytest from collecting this class
    __test__ = False

    theta_hat: float
    se: float
    p_value: float
    n: int
    n_eff: int
    n_trimmed: int
    epsilon: float
    folds: int
    seed: int
    mode: str
    kish_n_eff: float = float('nan')
    per_site_diagnostics: Dict[str, float] = field(default_factory=dict)
    site_labels: Tuple[str, ...] = ()

    @property
    def z_stat(self) -> float:
        return self.theta_hat / self.se

    def rejects(self, level: float = 0.05) -> bool:
        return self.p_value < level


@dataclass(frozen=True)
class SimReport:
    """
    Aggregates of one simulation scenario at one sample size.

    Attributes:
        scenario: Scenario id.
        n: Sample size per replication.
        mean_theta: Average theta_hat over successful replications.
        std: Standard deviation of theta_hat across replications.
        mean_se: Average estimated standard error.
        reject_rate_5pct: Fraction of replications with p < 0.05.
        mean_n_eff: Average retained sample size.
        replications: Replications requested (R).
        failed: Replications that raised and were excluded.
    """

    scenario: str
    n: int
    mean_theta: float
    std: float
    mean_se: float
    reject_rate_5pct: float
    mean_n_eff: float
    replications: int
    failed: int = 0
    elapsed_sec: Optional[float] = None

    @property
    def succeeded(self) -> int:
        return self.replications - self.failed
