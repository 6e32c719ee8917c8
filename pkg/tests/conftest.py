"""Test configuration for pytest."""

import os
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import numpy as np
import pytest

from models.nuisance import COMPLEMENT, OWN, NuisanceFit
from models.settings import LearnerSettings, TestConfig


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: Monte Carlo acceptance runs (enable with RUN_SLOW=1)"
    )


def pytest_collection_modifyitems(config, items):
    if os.getenv('RUN_SLOW') == '1':
        return
    skip_slow = pytest.mark.skip(reason="set RUN_SLOW=1 to run")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def fast_learner():
    """Small grid and CV so nuisance fits stay quick."""
    return LearnerSettings(cv_folds=3, grid_size=8)


@pytest.fixture
def fast_config(fast_learner):
    """Two-fold cross-fitting with the fast learner."""
    return TestConfig(folds=2, epsilon=0.05, seed=11, mode='cate', learner=fast_learner, workers=1)


@pytest.fixture
def make_fit():
    """
    Factory for NuisanceFit objects with constant prediction vectors.

    ``outcome``/``treatment`` map (arm, part) -> value; ``propensity`` is
    one value for every cell.
    """
    def factory(n, site, mode, outcome, propensity=0.25, treatment=None):
        def expand(values):
            return {key: np.full(n, float(v)) for key, v in values.items()}

        cells = {(a, part): propensity for a in (0, 1) for part in (OWN, COMPLEMENT)}
        return NuisanceFit(
            site=site,
            mode=mode,
            outcome=expand(outcome),
            propensity=expand(cells),
            treatment=expand(treatment or {}),
        )

    return factory
