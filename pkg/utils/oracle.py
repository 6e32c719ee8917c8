"""
Analytic nuisance functions of the simulated designs.

Used to check the scores at the truth: the mean score, the population
value of the homogeneity functional and the orthogonality probe.
Site index z corresponds to the binary site indicator Zb = z - 1.
"""

from typing import Dict, Optional

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from exceptions import ScenarioError
from models.nuisance import COMPLEMENT, OWN, NuisanceFit
from models.settings import DgpConfig
from models.site_data import SiteDataset


def _truncated_mean_u(index: np.ndarray, rho: float, treated: bool) -> np.ndarray:
    """E[U | D, X] when D = 1{X'b + rho U + V > 0} with U, V standard normal."""
    scale = np.sqrt(1.0 + rho ** 2)
    a = index / scale
    if treated:
        ratio = np.exp(norm.logpdf(a) - norm.logcdf(a))
        return rho / scale * ratio
    ratio = np.exp(norm.logpdf(a) - norm.logsf(a))
    return -rho / scale * ratio


def _site_weight(dgp: DgpConfig, site: int) -> float:
    return dgp.pi_site if site == 2 else 1.0 - dgp.pi_site


def _cate_cells(dgp: DgpConfig, x: np.ndarray, site: int):
    """(mu_0, mu_1, Pr(D=1 | X, Z)) for one site on rows x."""
    beta = dgp.beta()
    index = x @ beta
    zb = float(site - 1)
    effect = 1.0 + index + dgp.delta * zb

    if dgp.design == 'panel':
        treat_prob = norm.cdf(0.5 * index / np.sqrt(1.0 + dgp.rho ** 2))
        return np.full(x.shape[0], 0.5), 0.5 + effect, treat_prob

    observational = dgp.design == 'mixed' and site == 1
    if observational:
        treat_prob = norm.cdf(index / np.sqrt(1.0 + dgp.rho ** 2))
        mu_0 = index + _truncated_mean_u(index, dgp.rho, treated=False)
        mu_1 = effect + index + _truncated_mean_u(index, dgp.rho, treated=True)
    else:
        treat_prob = np.full(x.shape[0], dgp.q)
        mu_0 = index.copy()
        mu_1 = effect + index
    return mu_0, mu_1, treat_prob


def _clate_cells(dgp: DgpConfig, x: np.ndarray, site: int):
    """(m_0, m_1, r_0, r_1) for one site of the IV design."""
    beta = dgp.beta()
    index = x @ beta
    zb = site - 1
    compliance = expit(dgp.compliance_intercepts[zb] + 0.5 * x[:, 0])
    effect = 1.0 + index + dgp.delta * zb
    return index.copy(), compliance * effect + index, np.zeros(x.shape[0]), compliance


def true_nuisances(data: SiteDataset, dgp: DgpConfig) -> Dict[int, NuisanceFit]:
    """
    True nuisances of every site evaluated at the rows of ``data``.

    For the panel design the outcome means refer to y_post - y_pre.

    Raises:
        ScenarioError: The dataset does not have the two simulated sites.
    """
    if data.n_sites != 2:
        raise ScenarioError(f"simulated designs have 2 sites, data has {data.n_sites}")
    fits = {}
    for site in (1, 2):
        other = 3 - site
        w_own, w_other = _site_weight(dgp, site), _site_weight(dgp, other)
        if dgp.design == 'iv':
            m0, m1, r0, r1 = _clate_cells(dgp, data.x, site)
            m0c, m1c, r0c, r1c = _clate_cells(dgp, data.x, other)
            half = np.full(data.n, 0.5)
            fits[site] = NuisanceFit(
                site=site,
                mode='clate',
                outcome={(0, OWN): m0, (1, OWN): m1, (0, COMPLEMENT): m0c, (1, COMPLEMENT): m1c},
                treatment={(0, OWN): r0, (1, OWN): r1, (0, COMPLEMENT): r0c, (1, COMPLEMENT): r1c},
                propensity={
                    (0, OWN): half * w_own, (1, OWN): half * w_own,
                    (0, COMPLEMENT): half * w_other, (1, COMPLEMENT): half * w_other,
                },
            )
            continue

        mu0, mu1, prob = _cate_cells(dgp, data.x, site)
        mu0c, mu1c, prob_c = _cate_cells(dgp, data.x, other)
        fits[site] = NuisanceFit(
            site=site,
            mode='cate',
            outcome={(0, OWN): mu0, (1, OWN): mu1, (0, COMPLEMENT): mu0c, (1, COMPLEMENT): mu1c},
            propensity={
                (0, OWN): (1.0 - prob) * w_own, (1, OWN): prob * w_own,
                (0, COMPLEMENT): (1.0 - prob_c) * w_other, (1, COMPLEMENT): prob_c * w_other,
            },
        )
    return fits


def population_theta(dgp: DgpConfig) -> Optional[float]:
    """
    Population value of the homogeneity functional where it has a closed form.

    Unconfounded CATE designs and the panel design give 2 * delta^2; the IV
    design gives 0 under homogeneous compliers (delta = 0). Returns None
    otherwise.
    """
    if dgp.design in ('experimental', 'panel'):
        return 2.0 * dgp.delta ** 2
    if dgp.design == 'mixed' and dgp.rho == 0.0:
        return 2.0 * dgp.delta ** 2
    if dgp.design == 'iv' and dgp.delta == 0.0:
        return 0.0
    return None


__all__ = ['true_nuisances', 'population_theta']
