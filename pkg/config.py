"""
Configuration management module for the cross-site homogeneity test.

This module handles all configuration settings including:
- File paths (output, logs)
- Lasso learner parameters
- Test defaults (folds, trimming, seed)
- Simulation defaults
- Logging configuration

All settings can be overridden using environment variables.
"""

import os
from pathlib import Path
from typing import Dict, Optional, Tuple
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class PathConfig:
    """File path configuration."""

    OUTPUT_DIR = Path(os.getenv('OUTPUT_DIR', './output'))
    LOG_DIR = Path(os.getenv('LOG_DIR', './logs'))

    @classmethod
    def ensure_output_dirs(cls):
        """Create output directories if they don't exist."""
        cls.OUTPUT_DIR.mkdir(parents=True, exist_ok=True)
        cls.LOG_DIR.mkdir(parents=True, exist_ok=True)


class LearnerConfig:
    """Lasso learner configuration."""

    CV_FOLDS = int(os.getenv('CV_FOLDS', 5))
    """Internal folds used to pick the penalty of every nuisance fit."""

    LAMBDA_GRID_SIZE = int(os.getenv('LAMBDA_GRID_SIZE', 25))
    """Number of log-spaced penalties between lambda_max and its floor."""

    LAMBDA_MIN_RATIO = float(os.getenv('LAMBDA_MIN_RATIO', 1e-3))
    """Smallest grid penalty as a fraction of lambda_max."""

    CD_TOLERANCE = float(os.getenv('CD_TOLERANCE', 1e-7))
    """Coordinate descent stops when the max coefficient change is below this."""

    CD_MAX_SWEEPS = int(os.getenv('CD_MAX_SWEEPS', 10000))

    IRLS_MAX_ITER = int(os.getenv('IRLS_MAX_ITER', 100))

    IRLS_WEIGHT_FLOOR = float(os.getenv('IRLS_WEIGHT_FLOOR', 1e-5))
    """Lower bound on logistic working weights p(1-p)."""

    LINK_CLAMP = float(os.getenv('LINK_CLAMP', 35.0))
    """Linear predictors are clamped to +/- this value before the logistic link."""

    LAMBDA_POLICY = os.getenv('LAMBDA_POLICY', 'per_fold')
    """'per_fold' picks lambda on every training fold, 'global' once per cell."""


class TestDefaults:
    """Defaults for a single homogeneity test run."""

    # keeps pytest from collecting this class
    __test__ = False

    FOLDS = int(os.getenv('CROSSFIT_FOLDS', 5))
    EPSILON = float(os.getenv('TRIM_EPSILON', 0.05))
    SEED = int(os.getenv('SEED', 20240601))
    MODE = os.getenv('TEST_MODE', 'cate').lower()
    MIN_SITE_SIZE = int(os.getenv('MIN_SITE_SIZE', 0))
    WORKERS = int(os.getenv('FIT_WORKERS', 1))
    CLATE_BRACKET = os.getenv('CLATE_BRACKET', 'orthogonal').lower()

    MODES = ('cate', 'clate', 'did')


class SimDefaults:
    """Monte Carlo harness defaults."""

    REPLICATIONS = int(os.getenv('SIM_REPLICATIONS', 1000))
    DIMENSION = int(os.getenv('SIM_DIMENSION', 100))
    WORKERS = int(os.getenv('SIM_WORKERS', os.cpu_count() or 1))
    SAMPLE_SIZES: Tuple[int, ...] = (500, 2000, 8000)

    # Sparse outcome/selection index: first BETA_NONZERO coordinates equal BETA_VALUE
    BETA_NONZERO = int(os.getenv('SIM_BETA_NONZERO', 10))
    BETA_VALUE = float(os.getenv('SIM_BETA_VALUE', 0.5))
    TREATMENT_PROB = float(os.getenv('SIM_TREATMENT_PROB', 0.5))
    SITE_PROB = float(os.getenv('SIM_SITE_PROB', 0.5))

    SIGNIFICANCE = 0.05


class LogConfig:
    """Logging configuration."""

    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('LOG_FILE', 'cate_homogeneity.log')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

    # Rotating log settings
    MAX_LOG_SIZE = 10 * 1024 * 1024  # 10 MB
    BACKUP_COUNT = 5  # Keep 5 backup files

    # Third-party loggers held at WARNING regardless of LOG_LEVEL
    QUIET_LOGGERS = ('numba',)


class Config:
    """Main configuration class combining all configs."""

    paths = PathConfig
    learner = LearnerConfig
    test = TestDefaults
    sim = SimDefaults
    logging = LogConfig

    @classmethod
    def validate(cls) -> Tuple[bool, Optional[str]]:
        """
        Validate the entire configuration.

        Returns:
            Tuple of (is_valid, error_message).
        """
        problems = []
        if cls.learner.CV_FOLDS < 2:
            problems.append(f"CV_FOLDS must be >= 2 (got {cls.learner.CV_FOLDS})")
        if cls.learner.LAMBDA_GRID_SIZE < 1:
            problems.append("LAMBDA_GRID_SIZE must be >= 1")
        if not 0.0 < cls.learner.LAMBDA_MIN_RATIO < 1.0:
            problems.append("LAMBDA_MIN_RATIO must lie in (0, 1)")
        if cls.learner.LAMBDA_POLICY not in ('per_fold', 'global'):
            problems.append("LAMBDA_POLICY must be 'per_fold' or 'global'")
        if cls.test.FOLDS < 2:
            problems.append(f"CROSSFIT_FOLDS must be >= 2 (got {cls.test.FOLDS})")
        if not 0.0 <= cls.test.EPSILON < 0.5:
            problems.append("TRIM_EPSILON must lie in [0, 0.5)")
        if cls.test.MODE not in cls.test.MODES:
            problems.append(f"TEST_MODE must be one of {cls.test.MODES}")
        if cls.test.CLATE_BRACKET not in ('orthogonal', 'printed'):
            problems.append("CLATE_BRACKET must be 'orthogonal' or 'printed'")

        if problems:
            return False, "Invalid configuration:\n" + "\n".join(
                f"  - {p}" for p in problems
            )

        # Ensure output directories exist
        try:
            cls.paths.ensure_output_dirs()
        except Exception as e:
            return False, f"Failed to create output directories: {e}"

        return True, None

    @classmethod
    def as_dict(cls) -> Dict[str, object]:
        """Flat snapshot of the effective defaults (used in run logs)."""
        return {
            'cv_folds': cls.learner.CV_FOLDS,
            'grid_size': cls.learner.LAMBDA_GRID_SIZE,
            'tolerance': cls.learner.CD_TOLERANCE,
            'max_sweeps': cls.learner.CD_MAX_SWEEPS,
            'folds': cls.test.FOLDS,
            'epsilon': cls.test.EPSILON,
            'seed': cls.test.SEED,
            'mode': cls.test.MODE,
            'min_site_size': cls.test.MIN_SITE_SIZE,
        }


# Convenience exports
__all__ = [
    'Config',
    'PathConfig',
    'LearnerConfig',
    'TestDefaults',
    'SimDefaults',
    'LogConfig',
]
