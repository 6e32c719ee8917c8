"""
Nuisance prediction containers.

A ``NuisanceFit`` holds the out-of-fold predictions that one site's score
terms need: for the site itself ("own") and for the pooled complement of
all other sites ("comp").
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

OWN = 'own'
COMPLEMENT = 'comp'
PARTS = (OWN, COMPLEMENT)
ARMS = (0, 1)

NuisanceKey = Tuple[int, str]


@dataclass(frozen=True)
class NuisanceFit:
    """
    Out-of-fold nuisance predictions for one site z.

    Attributes:
        site: Site index z.
        mode: 'cate' (outcome/propensity = mu/p) or 'clate' (m, r, pi).
        outcome: (arm, part) -> mu_hat_{d,X,z} / mu_hat_{d,X,z-} (CATE)
            or m_hat_{w,X,z} / m_hat_{w,X,z-} (CLATE).
        propensity: (arm, part) -> p_hat_{d,z}(X) / p_hat_{d,z-}(X)
            or pi_hat_{w,z}(X) / pi_hat_{w,z-}(X).
        treatment: (arm, part) -> r_hat_{w,X,z} / r_hat_{w,X,z-} (CLATE only).
        fold_of_prediction: Fold whose held-out model produced row i's
            predictions (None for analytic nuisances).
        penalties: Cell label -> penalties selected per fold (diagnostics).
    """

    site: int
    mode: str
    outcome: Dict[NuisanceKey, np.ndarray]
    propensity: Dict[NuisanceKey, np.ndarray]
    treatment: Dict[NuisanceKey, np.ndarray] = field(default_factory=dict)
    fold_of_prediction: Optional[np.ndarray] = None
    penalties: Dict[str, Tuple[float, ...]] = field(default_factory=dict)

    def mu(self, arm: int, part: str = OWN) -> np.ndarray:
        return self.outcome[(arm, part)]

    def r(self, arm: int, part: str = OWN) -> np.ndarray:
        return self.treatment[(arm, part)]

    def p(self, arm: int, part: str = OWN) -> np.ndarray:
        return self.propensity[(arm, part)]

    def shifted(self, block: str, key: NuisanceKey, delta: np.ndarray) -> 'NuisanceFit':
        """Copy with ``delta`` added to one prediction vector of a block."""
        arrays = dict(getattr(self, block))
        arrays[key] = arrays[key] + delta
        return replace(self, **{block: arrays})


@dataclass(frozen=True)
class Augmentation:
    """
    Inverse-propensity-weighted residual terms of one site.

    ``a_y_z`` is A^(Y)_{X,z}, the own-site difference of weighted outcome
    residuals between the two arms; ``a_y_zc`` the same for the pooled
    complement. ``a_d_*`` are the treatment analogues (CLATE only).
    Each term is zero on rows whose indicator cell does not match.
    """

    a_y_z: np.ndarray
    a_y_zc: np.ndarray
    a_d_z: Optional[np.ndarray] = None
    a_d_zc: Optional[np.ndarray] = None
