"""
Utility package.

Learners, cross-fitting, scores, the test engine, ingestion, result
records and the Monte Carlo harness.
"""
from .logging_config import setup_logging, get_logger, log_run_settings
from .learners import (
    fit_lasso,
    fit_lasso_cv,
    lambda_grid,
    lambda_path,
    cv_lambda,
    predict
)
from .crossfit import (
    make_folds,
    NuisanceFitter,
    fit_nuisances,
    fit_nuisances_cate,
    fit_nuisances_clate
)
from .scores import (
    did_transform,
    augmentations,
    cate_score,
    clate_score,
    orthogonality_probe
)
from .engine import (
    trim,
    run_test,
    epsilon_sweep,
    balance_table
)
from .ingest import load_sites, ingest
from .records import format_record, parse_records, write_records, read_records
from .simulation import generate, run_scenario, benchmark_grid, summary_frame

__all__ = [
    # Logging
    'setup_logging',
    'get_logger',
    'log_run_settings',

    # Learners
    'fit_lasso',
    'fit_lasso_cv',
    'lambda_grid',
    'lambda_path',
    'cv_lambda',
    'predict',

    # Cross-fitting
    'make_folds',
    'NuisanceFitter',
    'fit_nuisances',
    'fit_nuisances_cate',
    'fit_nuisances_clate',

    # Scores
    'did_transform',
    'augmentations',
    'cate_score',
    'clate_score',
    'orthogonality_probe',

    # Engine
    'trim',
    'run_test',
    'epsilon_sweep',
    'balance_table',

    # Ingestion and records
    'load_sites',
    'ingest',
    'format_record',
    'parse_records',
    'write_records',
    'read_records',

    # Simulation
    'generate',
    'run_scenario',
    'benchmark_grid',
    'summary_frame',
]
