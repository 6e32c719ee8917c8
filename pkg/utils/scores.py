"""
Orthogonal score functions of the homogeneity test.

CATE score, per observation (theta excluded):

    psi = sum_z [ DD_z^2 + 2 DD_z * aug_z + DD_z + aug_z ]

    DD_z  = mu_{1,z} - mu_{0,z} - mu_{1,z-} + mu_{0,z-}
    aug_z = A_z - A_z-
    A_z   = 1{D=1,Z=z}(Y - mu_{1,z}) / p_{1,z} - 1{D=0,Z=z}(Y - mu_{0,z}) / p_{0,z}

and A_z- the same over the pooled complement Z != z.

CLATE score, with gbar = m_1 - m_0, hbar = r_1 - r_0, g = gbar + A^Y,
h = hbar + A^D and cross-products Tbar = gbar_z hbar_z- - gbar_z- hbar_z,
T = g_z h_z- - g_z- h_z:

    psi = sum_z [ Tbar^2 + T + 2 Tbar (A^Y_z h_z- - A^Y_z- h_z)
                             + 2 Tbar (A^D_z g_z- - A^D_z- g_z) ]

The 'printed' bracket variant adds the two complement residual terms
instead of differencing them.
"""

from dataclasses import replace
from typing import Callable, Dict, NamedTuple, Optional, Tuple

import numpy as np

from exceptions import InputValidationError, ModeError, OverlapError
from models.nuisance import COMPLEMENT, OWN, Augmentation, NuisanceFit
from models.results import ScoreSample
from models.site_data import SiteDataset
from utils.logging_config import get_logger

logger = get_logger(__name__)

BRACKETS = ('orthogonal', 'printed')


def did_transform(data: SiteDataset) -> SiteDataset:
    """Replace the outcome by the panel difference y_post - y_pre."""
    missing = [name for name in ('y_pre', 'y_post') if getattr(data, name) is None]
    if missing:
        raise ModeError('did', missing)
    if data.y_pre.shape != data.y_post.shape:
        raise InputValidationError(
            f"y_pre has shape {data.y_pre.shape} but y_post has {data.y_post.shape}"
        )
    return replace(data, y=data.y_post - data.y_pre)


def _weighted_residual(
    response: np.ndarray,
    mean: np.ndarray,
    indicator: np.ndarray,
    propensity: np.ndarray,
    retained: np.ndarray,
    site: int,
) -> np.ndarray:
    """1{cell} (response - mean) / propensity, zero outside the cell."""
    bad = indicator & retained & ~(propensity > 0.0)
    if np.any(bad):
        raise OverlapError(site, int(bad.sum()))
    out = np.zeros(response.shape[0])
    np.divide(response - mean, propensity, out=out, where=indicator)
    return out


def _arm_difference(data, fit, response, means, arm_variable, part, retained, sign=-1.0):
    """Residual bracket of one part: treated term plus ``sign`` times control term."""
    if part == OWN:
        in_part = data.z == fit.site
    else:
        in_part = data.z != fit.site
    treated = _weighted_residual(
        response, means[(1, part)], in_part & (arm_variable == 1),
        fit.p(1, part), retained, fit.site,
    )
    control = _weighted_residual(
        response, means[(0, part)], in_part & (arm_variable == 0),
        fit.p(0, part), retained, fit.site,
    )
    return treated + sign * control


def augmentations(
    data: SiteDataset,
    fit: NuisanceFit,
    retained: Optional[np.ndarray] = None,
    complement_sign: float = -1.0,
) -> Augmentation:
    """
    Inverse-propensity-weighted residual terms of one site.

    Args:
        data: Dataset (outcome present; instrument present for CLATE fits).
        fit: Nuisance predictions of the site.
        retained: Rows where a zero propensity is an error (default all).
        complement_sign: Sign of the control term inside the complement
            brackets; -1 gives the A_{z-} difference, +1 the summed variant.
    """
    retained = np.ones(data.n, dtype=bool) if retained is None else retained
    if fit.mode == 'clate':
        if data.w is None:
            raise ModeError('clate', ['instrument'])
        arm = data.w
    else:
        arm = data.d

    a_y_z = _arm_difference(data, fit, data.y, fit.outcome, arm, OWN, retained)
    a_y_zc = _arm_difference(data, fit, data.y, fit.outcome, arm, COMPLEMENT, retained,
                             complement_sign)
    if fit.mode != 'clate':
        return Augmentation(a_y_z=a_y_z, a_y_zc=a_y_zc)

    a_d_z = _arm_difference(data, fit, data.d, fit.treatment, arm, OWN, retained)
    a_d_zc = _arm_difference(data, fit, data.d, fit.treatment, arm, COMPLEMENT, retained,
                             complement_sign)
    return Augmentation(a_y_z=a_y_z, a_y_zc=a_y_zc, a_d_z=a_d_z, a_d_zc=a_d_zc)


def _retained_mask(data: SiteDataset, trimmed: Optional[np.ndarray]) -> np.ndarray:
    if trimmed is None:
        return np.ones(data.n, dtype=bool)
    trimmed = np.asarray(trimmed, dtype=bool)
    if trimmed.shape != (data.n,):
        raise InputValidationError(
            f"trim mask has shape {trimmed.shape}, expected ({data.n},)"
        )
    return ~trimmed


def _assemble(
    psi: np.ndarray,
    retained: np.ndarray,
    terms: Dict[int, Dict[str, np.ndarray]],
) -> ScoreSample:
    psi = np.where(retained, psi, np.nan)
    n_kept = int(retained.sum())
    theta_hat = float(psi[retained].mean()) if n_kept else float('nan')
    per_site = {
        site: {
            name: (float(values[retained].mean()) if n_kept else float('nan'))
            for name, values in parts.items()
        }
        for site, parts in terms.items()
    }
    return ScoreSample(psi=psi, trimmed=~retained, theta_hat=theta_hat, per_site_terms=per_site)


def _check_fits(data: SiteDataset, fits: Dict[int, NuisanceFit], mode: str) -> None:
    missing = [int(z) for z in data.sites if int(z) not in fits]
    if missing:
        raise InputValidationError(f"nuisance predictions missing for sites {missing}")
    for z, fit in fits.items():
        if fit.mode != mode:
            raise InputValidationError(
                f"site {z} carries {fit.mode} nuisances, expected {mode}"
            )
    if data.y is None:
        raise ModeError(mode, ['outcome'])


def cate_score(
    data: SiteDataset,
    fits: Dict[int, NuisanceFit],
    trimmed: Optional[np.ndarray] = None,
) -> ScoreSample:
    """
    Evaluate the CATE double-difference score.

    Args:
        data: CATE-mode dataset (DiD data after ``did_transform``).
        fits: Site index -> NuisanceFit for every site.
        trimmed: True on rows excluded by trimming (default none).

    Returns:
        ScoreSample with psi NaN on trimmed rows.

    Raises:
        OverlapError: A retained row needs a zero propensity.
    """
    _check_fits(data, fits, 'cate')
    retained = _retained_mask(data, trimmed)
    psi = np.zeros(data.n)
    terms = {}
    for z in data.sites:
        fit = fits[int(z)]
        plain = fit.mu(1, OWN) - fit.mu(0, OWN) - fit.mu(1, COMPLEMENT) + fit.mu(0, COMPLEMENT)
        aug = augmentations(data, fit, retained)
        correction = aug.a_y_z - aug.a_y_zc
        squared = plain ** 2
        linear = plain + correction
        cross = 2.0 * plain * correction
        psi += squared + cross + linear
        terms[int(z)] = {
            'plain': plain,
            'squared': squared,
            'linear': linear,
            'augmentation': cross + correction,
        }
    return _assemble(psi, retained, terms)


def clate_score(
    data: SiteDataset,
    fits: Dict[int, NuisanceFit],
    trimmed: Optional[np.ndarray] = None,
    bracket: str = 'orthogonal',
) -> ScoreSample:
    """
    Evaluate the CLATE cross-product score.

    ``bracket='orthogonal'`` differences the two complement residual
    terms, which keeps the score insensitive to first-order errors in the
    complement nuisances; ``'printed'`` adds them.
    """
    if bracket not in BRACKETS:
        raise InputValidationError(f"bracket must be one of {BRACKETS}, got '{bracket}'")
    if data.w is None:
        raise ModeError('clate', ['instrument'])
    _check_fits(data, fits, 'clate')
    retained = _retained_mask(data, trimmed)
    complement_sign = -1.0 if bracket == 'orthogonal' else 1.0

    psi = np.zeros(data.n)
    terms = {}
    for z in data.sites:
        fit = fits[int(z)]
        g_bar_z = fit.mu(1, OWN) - fit.mu(0, OWN)
        g_bar_zc = fit.mu(1, COMPLEMENT) - fit.mu(0, COMPLEMENT)
        h_bar_z = fit.r(1, OWN) - fit.r(0, OWN)
        h_bar_zc = fit.r(1, COMPLEMENT) - fit.r(0, COMPLEMENT)

        aug = augmentations(data, fit, retained)
        g_z, g_zc = g_bar_z + aug.a_y_z, g_bar_zc + aug.a_y_zc
        h_z, h_zc = h_bar_z + aug.a_d_z, h_bar_zc + aug.a_d_zc

        if complement_sign < 0:
            bracket_y_zc, bracket_d_zc = aug.a_y_zc, aug.a_d_zc
        else:
            summed = augmentations(data, fit, retained, complement_sign)
            bracket_y_zc, bracket_d_zc = summed.a_y_zc, summed.a_d_zc

        plain = g_bar_z * h_bar_zc - g_bar_zc * h_bar_z
        full = g_z * h_zc - g_zc * h_z
        cross_y = aug.a_y_z * h_zc - bracket_y_zc * h_z
        cross_d = bracket_d_zc * g_z - aug.a_d_z * g_zc
        correction = 2.0 * plain * (cross_y + cross_d)

        psi += plain ** 2 + full + correction
        terms[int(z)] = {
            'plain': plain,
            'squared': plain ** 2,
            'linear': full,
            'augmentation': correction,
        }
    return _assemble(psi, retained, terms)


def score_sample(
    mode: str,
    data: SiteDataset,
    fits: Dict[int, NuisanceFit],
    trimmed: Optional[np.ndarray] = None,
    bracket: str = 'orthogonal',
) -> ScoreSample:
    """Dispatch to the score of a test mode ('did' data must be transformed)."""
    if mode == 'clate':
        return clate_score(data, fits, trimmed, bracket)
    if mode == 'did' and data.y is None:
        data = did_transform(data)
    return cate_score(data, fits, trimmed)


class Perturbation(NamedTuple):
    """
    Direction of a nuisance perturbation.

    Attributes:
        site: Site whose NuisanceFit is perturbed.
        block: 'outcome', 'treatment' or 'propensity'.
        key: (arm, part) of the prediction vector.
        direction: Per-observation direction values.
    """

    site: int
    block: str
    key: Tuple[int, str]
    direction: np.ndarray


def orthogonality_probe(
    score: str,
    data: SiteDataset,
    fits: Dict[int, NuisanceFit],
    perturbation: Perturbation,
    t: float,
    bracket: str = 'orthogonal',
) -> float:
    """
    M(eta0 + t * d_eta) - M(eta0), with M the mean score excluding theta.

    Both evaluations use the same sample, so the difference is the mean of
    per-observation differences. For an orthogonal score it decays as t^2.
    """
    if score not in ('cate', 'clate'):
        raise InputValidationError(f"score must be 'cate' or 'clate', got '{score}'")
    if t == 0:
        return 0.0
    site = int(perturbation.site)
    if site not in fits:
        raise InputValidationError(f"no nuisance fit for site {site}")
    shifted = dict(fits)
    shifted[site] = fits[site].shifted(
        perturbation.block, perturbation.key, t * np.asarray(perturbation.direction, dtype=float)
    )

    evaluate: Callable = cate_score if score == 'cate' else (
        lambda d, f: clate_score(d, f, None, bracket)
    )
    base = evaluate(data, fits).psi
    moved = evaluate(data, shifted).psi
    return float(np.mean(moved - base))


__all__ = [
    'BRACKETS',
    'Perturbation',
    'augmentations',
    'cate_score',
    'clate_score',
    'did_transform',
    'orthogonality_probe',
    'score_sample',
]
