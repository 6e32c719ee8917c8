"""
Test assembly: trimming, point estimate, standard error and p-value.

The statistic is computed at theta = 0: theta_hat is the mean of the
retained scores, se = sd(retained scores) / sqrt(n_eff), and the p-value
is the two-sided normal tail of theta_hat / se.
"""

from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import norm

from exceptions import (
    DegenerateSampleError,
    DegenerateVarianceError,
    InputValidationError,
)
from models.nuisance import COMPLEMENT, OWN, NuisanceFit
from models.results import ScoreSample, TestResult
from models.settings import TestConfig
from models.site_data import SiteDataset
from utils.crossfit import fit_nuisances, make_folds
from utils.logging_config import get_logger
from utils.scores import did_transform, score_sample

logger = get_logger(__name__)


def _arm_variable(data: SiteDataset, fits: Dict[int, NuisanceFit]) -> np.ndarray:
    mode = next(iter(fits.values())).mode
    if mode == 'clate':
        if data.w is None:
            raise InputValidationError("CLATE nuisances need the instrument column")
        return data.w
    return data.d


def active_propensities(data: SiteDataset, fits: Dict[int, NuisanceFit]) -> np.ndarray:
    """
    Propensities whose indicators are active for each observation.

    Returns:
        Array (n, L): column z - 1 holds p_{a_i, z}(X_i) when Z_i = z and
        p_{a_i, z-}(X_i) otherwise, a_i being the observation's arm.
    """
    arm = _arm_variable(data, fits).astype(np.int64)
    active = np.empty((data.n, data.n_sites))
    for col, z in enumerate(data.sites):
        fit = fits[int(z)]
        own = data.z == z
        for a in (0, 1):
            rows = arm == a
            active[rows & own, col] = fit.p(a, OWN)[rows & own]
            active[rows & ~own, col] = fit.p(a, COMPLEMENT)[rows & ~own]
    return active


def trim(
    fits: Dict[int, NuisanceFit],
    epsilon: float,
    data: SiteDataset,
) -> np.ndarray:
    """
    Trim mask: True where any active propensity lies outside [eps, 1 - eps].

    Enlarging epsilon never un-trims a row.
    """
    if not 0.0 <= epsilon < 0.5:
        raise InputValidationError(f"epsilon must lie in [0, 0.5), got {epsilon}")
    active = active_propensities(data, fits)
    inside = (active >= epsilon) & (active <= 1.0 - epsilon)
    return ~np.all(inside, axis=1)


def kish_n_eff(data: SiteDataset, fits: Dict[int, NuisanceFit], retained: np.ndarray) -> float:
    """Kish effective size of the inverse own-cell propensity weights."""
    arm = _arm_variable(data, fits).astype(np.int64)
    own = np.empty(data.n)
    for z in data.sites:
        fit = fits[int(z)]
        rows = data.z == z
        own[rows] = np.where(arm[rows] == 1, fit.p(1, OWN)[rows], fit.p(0, OWN)[rows])
    weights = 1.0 / own[retained]
    if weights.size == 0:
        return 0.0
    return float(weights.sum() ** 2 / np.sum(weights ** 2))


def two_sided_p_value(theta_hat: float, se: float) -> float:
    """2 * (1 - Phi(|theta_hat / se|))."""
    return float(2.0 * norm.sf(abs(theta_hat / se)))


def normal_inference(psi: np.ndarray) -> Tuple[float, float, float]:
    """
    Point estimate, standard error and p-value from retained scores.

    Raises:
        DegenerateSampleError: Fewer than two scores.
        DegenerateVarianceError: The scores are constant.
    """
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[0]
    if n < 2:
        raise DegenerateSampleError(n, n)
    theta_hat = float(psi.mean())
    sd = float(psi.std(ddof=1))
    if not np.isfinite(sd) or sd <= 1e-12 * max(1.0, abs(theta_hat)):
        raise DegenerateVarianceError(n)
    se = sd / np.sqrt(n)
    return theta_hat, se, two_sided_p_value(theta_hat, se)


def prepare_data(data: SiteDataset, mode: str) -> SiteDataset:
    """Validate for ``mode``; DiD data is routed through the outcome difference."""
    data.validate(mode)
    if mode == 'did':
        data = did_transform(data)
    return data


def run_test(
    data: SiteDataset,
    config: Optional[TestConfig] = None,
    fit: Optional[Dict[int, NuisanceFit]] = None,
) -> TestResult:
    """
    Run one homogeneity test.

    Args:
        data: Multi-site dataset.
        config: Test settings (defaults from the environment).
        fit: Precomputed nuisances (site -> NuisanceFit) to reuse a cross-fit.

    Returns:
        TestResult.

    Raises:
        DegenerateSampleError: Fewer than two observations survive trimming.
        DegenerateVarianceError: Retained scores are constant.
    """
    config = config or TestConfig()
    config.validate()
    data = prepare_data(data, config.mode)

    if fit is None:
        plan = make_folds(data.n, config.folds, config.seed)
        fit = fit_nuisances(data, plan, config)

    trimmed = trim(fit, config.epsilon, data)
    retained = ~trimmed
    n_eff = int(retained.sum())
    if n_eff < 2:
        raise DegenerateSampleError(n_eff, data.n)

    sample: ScoreSample = score_sample(config.mode, data, fit, trimmed, config.clate_bracket)
    theta_hat, se, p_value = normal_inference(sample.retained_psi)

    diagnostics = {
        data.site_label(site): terms['plain']
        for site, terms in sorted(sample.per_site_terms.items())
    }
    result = TestResult(
        theta_hat=theta_hat,
        se=se,
        p_value=p_value,
        n=data.n,
        n_eff=n_eff,
        n_trimmed=data.n - n_eff,
        epsilon=config.epsilon,
        folds=config.folds,
        seed=config.seed,
        mode=config.mode,
        kish_n_eff=kish_n_eff(data, fit, retained),
        per_site_diagnostics=diagnostics,
        site_labels=tuple(data.site_labels),
    )
    logger.info(
        f"[{config.mode}] theta={theta_hat:.4g} se={se:.4g} p={p_value:.4g} "
        f"n_eff={n_eff}/{data.n} (eps={config.epsilon})"
    )
    return result


def epsilon_sweep(
    data: SiteDataset,
    config: TestConfig,
    epsilons: Iterable[float],
) -> List[TestResult]:
    """One TestResult per epsilon, all sharing a single cross-fit."""
    config.validate()
    prepared = prepare_data(data, config.mode)
    plan = make_folds(prepared.n, config.folds, config.seed)
    fits = fit_nuisances(prepared, plan, config)
    results = []
    for epsilon in epsilons:
        step = config.with_updates(epsilon=float(epsilon))
        results.append(run_test(prepared, step, fit=fits))
    return results


def balance_table(
    data: SiteDataset,
    covariates: Optional[Sequence[str]] = None,
) -> pd.DataFrame:
    """
    Covariate balance between treated and control units.

    SMD = (mean_treated - mean_control) / sqrt((s1^2 + s0^2) / 2) with
    sample standard deviations. A zero pooled SD gives SMD 0 and
    ``zero_sd=True``. The last row ('N') holds the arm counts.
    """
    names = list(data.covariate_names)
    covariates = list(covariates) if covariates is not None else names
    unknown = [c for c in covariates if c not in names]
    if unknown:
        raise InputValidationError(f"unknown covariates: {unknown}")

    frame = pd.DataFrame(data.x, columns=names)
    treated = frame.loc[data.d == 1, covariates]
    control = frame.loc[data.d == 0, covariates]
    if treated.empty or control.empty:
        raise InputValidationError("balance needs both treated and control units")

    table = pd.DataFrame({
        'variable': covariates,
        'mean_control': control.mean().to_numpy(),
        'sd_control': control.std().to_numpy(),
        'mean_treated': treated.mean().to_numpy(),
        'sd_treated': treated.std().to_numpy(),
    })
    pooled = np.sqrt((table['sd_treated'] ** 2 + table['sd_control'] ** 2) / 2.0)
    zero_sd = ~(pooled > 0)
    diff = table['mean_treated'] - table['mean_control']
    table['smd'] = np.where(zero_sd, 0.0, diff / pooled.where(~zero_sd, 1.0))
    table['zero_sd'] = zero_sd.to_numpy()

    counts = pd.DataFrame([{
        'variable': 'N',
        'mean_control': float(len(control)),
        'sd_control': np.nan,
        'mean_treated': float(len(treated)),
        'sd_treated': np.nan,
        'smd': np.nan,
        'zero_sd': False,
    }])
    return pd.concat([table, counts], ignore_index=True)


__all__ = [
    'active_propensities',
    'trim',
    'kish_n_eff',
    'two_sided_p_value',
    'normal_inference',
    'prepare_data',
    'run_test',
    'epsilon_sweep',
    'balance_table',
]
