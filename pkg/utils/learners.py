"""
Penalized regression learners for nuisance functions.

Lasso linear regression and lasso-penalized logistic regression, both fit
by cyclic coordinate descent on standardized columns with an unpenalized
intercept. The logistic fit wraps the same weighted kernel in an
iteratively reweighted least squares loop.

Objectives (beta on the standardized scale):
    gaussian:  (1/2n) * sum (y - b0 - x beta)^2 + lambda * |beta|_1
    binomial:  (1/n) * negative log-likelihood    + lambda * |beta|_1

The inner loops are numba kernels compiled with ``nogil`` so that
per-cell fits running in a thread pool do not serialize.
"""

from typing import List, Optional, Tuple

import numpy as np
from numba import njit
from scipy.special import expit

from exceptions import (
    DegenerateResponseError,
    DimensionMismatchError,
    InputValidationError,
)
from models.learner import LassoModel
from models.settings import LearnerSettings
from models.site_data import FoldPlan
from utils.logging_config import get_logger

logger = get_logger(__name__)

FAMILIES = ('gaussian', 'binomial')


@njit(nogil=True, cache=True)
def _soft_threshold(value, threshold):
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


@njit(nogil=True, cache=True)
def _sweep(xs, v, resid, beta, b0, curvature, lam, coords):
    """One pass over ``coords`` plus the intercept; returns the max change."""
    n = xs.shape[0]
    max_change = 0.0
    for j in coords:
        if curvature[j] <= 0.0:
            continue
        grad = 0.0
        for i in range(n):
            grad += v[i] * xs[i, j] * resid[i]
        old = beta[j]
        new = _soft_threshold(grad + curvature[j] * old, lam) / curvature[j]
        diff = new - old
        if diff != 0.0:
            beta[j] = new
            for i in range(n):
                resid[i] -= xs[i, j] * diff
            if abs(diff) > max_change:
                max_change = abs(diff)

    v_sum = 0.0
    shift = 0.0
    for i in range(n):
        v_sum += v[i]
        shift += v[i] * resid[i]
    shift /= v_sum
    if shift != 0.0:
        b0[0] += shift
        for i in range(n):
            resid[i] -= shift
        if abs(shift) > max_change:
            max_change = abs(shift)
    return max_change


@njit(nogil=True, cache=True)
def _weighted_cd(xs, z, v, beta, b0, lam, tol, max_sweeps):
    """
    Minimize 1/2 * sum v_i (z_i - b0 - x_i beta)^2 + lam * |beta|_1 in place.

    Full sweeps alternate with sweeps over the active set until a full
    sweep changes nothing by more than ``tol``.
    Returns (sweeps used, converged).
    """
    n, p = xs.shape
    resid = np.empty(n)
    for i in range(n):
        acc = z[i] - b0[0]
        for j in range(p):
            acc -= xs[i, j] * beta[j]
        resid[i] = acc

    curvature = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += v[i] * xs[i, j] * xs[i, j]
        curvature[j] = acc

    all_coords = np.arange(p)
    sweeps = 0
    while sweeps < max_sweeps:
        change = _sweep(xs, v, resid, beta, b0, curvature, lam, all_coords)
        sweeps += 1
        if change < tol:
            return sweeps, True
        active = np.nonzero(beta != 0.0)[0]
        while sweeps < max_sweeps:
            change = _sweep(xs, v, resid, beta, b0, curvature, lam, active)
            sweeps += 1
            if change < tol:
                break
    return sweeps, False


@njit(nogil=True, cache=True)
def _logistic_cd(xs, y, beta, b0, lam, tol, max_sweeps, max_iter, floor, clamp):
    """IRLS outer loop around ``_weighted_cd``; returns (sweeps, converged)."""
    n, p = xs.shape
    z = np.empty(n)
    v = np.empty(n)
    beta_prev = np.empty(p)
    total = 0
    for _step in range(max_iter):
        for i in range(n):
            acc = b0[0]
            for j in range(p):
                acc += xs[i, j] * beta[j]
            acc = min(max(acc, -clamp), clamp)
            prob = 1.0 / (1.0 + np.exp(-acc))
            w = max(prob * (1.0 - prob), floor)
            z[i] = acc + (y[i] - prob) / w
            v[i] = w / n
        beta_prev[:] = beta
        b0_prev = b0[0]
        used, _inner = _weighted_cd(xs, z, v, beta, b0, lam, tol, max_sweeps - total)
        total += used

        change = abs(b0[0] - b0_prev)
        for j in range(p):
            change = max(change, abs(beta[j] - beta_prev[j]))
        if change < tol:
            return total, True
        if total >= max_sweeps:
            break
    return total, False


def _check_inputs(x, y, family: str) -> Tuple[np.ndarray, np.ndarray]:
    if family not in FAMILIES:
        raise InputValidationError(f"family must be one of {FAMILIES}, got '{family}'")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise InputValidationError(f"design matrix must be (rows>=2, cols>=1), got {x.shape}")
    if y.shape != (x.shape[0],):
        raise InputValidationError(
            f"response length {y.shape} does not match {x.shape[0]} rows"
        )
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise InputValidationError("non-finite values in design or response")
    if family == 'binomial':
        if not np.all((y == 0.0) | (y == 1.0)):
            raise InputValidationError("binomial response must be coded 0/1")
        if np.all(y == y[0]):
            raise DegenerateResponseError(float(y[0]), y.shape[0])
    return x, y


def standardize(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Center and scale columns to mean 0 and population variance 1.

    Zero-variance columns become all-zero with scale sentinel 1.
    """
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    flat = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(flat, 1.0, scale)
    xs = (x - mean) / scale
    xs[:, flat] = 0.0
    return np.ascontiguousarray(xs), mean, scale


def _to_model(b0, beta_std, lam, family, mean, scale, sweeps, converged, clamp) -> LassoModel:
    coefficients = beta_std / scale
    intercept = float(b0 - np.dot(mean, coefficients))
    return LassoModel(
        intercept=intercept,
        coefficients=coefficients,
        penalty=float(lam),
        family=family,
        x_mean=mean,
        x_scale=scale,
        sweeps=int(sweeps),
        converged=bool(converged),
        link_clamp=float(clamp),
    )


def _initial_intercept(y: np.ndarray, family: str) -> float:
    ybar = float(y.mean())
    if family == 'gaussian':
        return ybar
    return float(np.log(ybar / (1.0 - ybar)))


def _solve(xs, y, family, lam, beta, b0, settings: LearnerSettings):
    if family == 'gaussian':
        v = np.full(xs.shape[0], 1.0 / xs.shape[0])
        return _weighted_cd(xs, y, v, beta, b0, lam, settings.tolerance, settings.max_sweeps)
    return _logistic_cd(
        xs, y, beta, b0, lam, settings.tolerance, settings.max_sweeps,
        settings.irls_max_iter, settings.weight_floor, settings.link_clamp,
    )


def fit_lasso(
    x,
    y,
    family: str = 'gaussian',
    penalty: float = 0.0,
    settings: Optional[LearnerSettings] = None,
) -> LassoModel:
    """
    Fit one lasso model at a fixed penalty.

    Args:
        x: Design matrix (n, p).
        y: Response; 0/1 for the binomial family.
        family: 'gaussian' or 'binomial'.
        penalty: Nonnegative lambda on the standardized scale.
        settings: Solver settings (tolerance, sweep budget, IRLS controls).

    Returns:
        LassoModel with coefficients on the original covariate scale.

    Raises:
        InputValidationError: Non-finite or misshaped inputs, negative penalty.
        DegenerateResponseError: Binomial response with a single class.
    """
    settings = settings or LearnerSettings()
    x, y = _check_inputs(x, y, family)
    if not np.isfinite(penalty) or penalty < 0:
        raise InputValidationError(f"penalty must be a nonnegative number, got {penalty}")

    xs, mean, scale = standardize(x)
    beta = np.zeros(xs.shape[1])
    b0 = np.array([_initial_intercept(y, family)])
    sweeps, converged = _solve(xs, y, family, float(penalty), beta, b0, settings)
    if not converged:
        logger.warning(
            f"{family} lasso at lambda={penalty:.3g} stopped after {sweeps} sweeps "
            f"without reaching tolerance {settings.tolerance:g}"
        )
    return _to_model(b0[0], beta, penalty, family, mean, scale, sweeps, converged,
                     settings.link_clamp)


def lambda_max(x, y, family: str = 'gaussian') -> float:
    """
    Smallest penalty at which every coefficient is zero.

    For both families this is max_j |(1/n) sum x_ij (y_i - ybar)| on the
    standardized design.
    """
    x, y = _check_inputs(x, y, family)
    xs, _, _ = standardize(x)
    return float(np.max(np.abs(xs.T @ (y - y.mean()))) / x.shape[0])


def lambda_grid(
    x,
    y,
    family: str = 'gaussian',
    grid_size: int = 25,
    min_ratio: float = 1e-3,
) -> np.ndarray:
    """Log-spaced penalties from lambda_max down to min_ratio * lambda_max."""
    top = lambda_max(x, y, family)
    if top <= 0.0:
        # response orthogonal to every column: nothing to shrink
        return np.zeros(1)
    if grid_size == 1:
        return np.array([top])
    return np.geomspace(top, top * min_ratio, grid_size)


def lambda_path(
    x,
    y,
    family: str = 'gaussian',
    lambdas=None,
    settings: Optional[LearnerSettings] = None,
) -> List[LassoModel]:
    """
    Fit a sequence of decreasing penalties with warm starts.

    Args:
        lambdas: Penalties in decreasing order; defaults to ``lambda_grid``.

    Returns:
        One LassoModel per penalty, same order.
    """
    settings = settings or LearnerSettings()
    x, y = _check_inputs(x, y, family)
    if lambdas is None:
        lambdas = lambda_grid(x, y, family, settings.grid_size, settings.min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0) or np.any(np.diff(lambdas) > 0):
        raise InputValidationError("penalties must be nonnegative and decreasing")

    xs, mean, scale = standardize(x)
    beta = np.zeros(xs.shape[1])
    b0 = np.array([_initial_intercept(y, family)])
    models = []
    for lam in lambdas:
        sweeps, converged = _solve(xs, y, family, float(lam), beta, b0, settings)
        models.append(_to_model(b0[0], beta.copy(), lam, family, mean, scale, sweeps, converged,
                                settings.link_clamp))
    return models


def predict(model: LassoModel, x) -> np.ndarray:
    """
    Predict conditional means.

    Gaussian models return the linear predictor; binomial models return
    probabilities, the linear predictor being clamped to +/- the link
    clamp first so outputs stay strictly inside (0, 1).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != model.n_features:
        raise DimensionMismatchError(model.n_features, x.shape[1])
    eta = model.intercept + x @ model.coefficients
    if model.family == 'gaussian':
        return eta
    return expit(np.clip(eta, -model.link_clamp, model.link_clamp))


def constant_model(
    value: float,
    family: str,
    n_features: int,
    settings: Optional[LearnerSettings] = None,
) -> LassoModel:
    """
    Intercept-only model predicting ``value``.

    For the binomial family a value of 0 or 1 maps to the clamped link
    bound of ``settings``; used when a treatment cell is single-class
    (perfect compliance).
    """
    settings = settings or LearnerSettings()
    if family == 'binomial':
        clamp = settings.link_clamp
        if value <= 0.0:
            intercept = -clamp
        elif value >= 1.0:
            intercept = clamp
        else:
            intercept = float(np.log(value / (1.0 - value)))
    else:
        intercept = float(value)
    return LassoModel(
        intercept=intercept,
        coefficients=np.zeros(n_features),
        penalty=0.0,
        family=family,
        x_mean=np.zeros(n_features),
        x_scale=np.ones(n_features),
        link_clamp=settings.link_clamp,
    )


def penalized_objective(model: LassoModel, x, y) -> float:
    """Objective value of ``model`` on (x, y) with its own penalty."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    eta = model.intercept + x @ model.coefficients
    if model.family == 'gaussian':
        loss = 0.5 * np.sum((y - eta) ** 2) / n
    else:
        loss = np.sum(np.logaddexp(0.0, eta) - y * eta) / n
    return float(loss + model.penalty * np.sum(np.abs(model.standardized_coefficients)))


def deviance(family: str, y: np.ndarray, prediction: np.ndarray) -> np.ndarray:
    """Per-observation deviance: squared error or binomial deviance."""
    if family == 'gaussian':
        return (y - prediction) ** 2
    prediction = np.clip(prediction, 1e-15, 1.0 - 1e-15)
    return -2.0 * (y * np.log(prediction) + (1.0 - y) * np.log1p(-prediction))


def cv_lambda(
    x,
    y,
    family: str = 'gaussian',
    folds: int = 5,
    grid_size: int = 25,
    seed: int = 0,
    settings: Optional[LearnerSettings] = None,
) -> float:
    """
    Pick the penalty minimizing mean out-of-fold deviance.

    The grid is built on the full data; every CV training split fits the
    whole path with warm starts. Binomial splits are stratified by class.
    Ties resolve to the larger penalty.

    Returns:
        The selected penalty.
    """
    settings = settings or LearnerSettings()
    x, y = _check_inputs(x, y, family)
    if folds < 2:
        raise InputValidationError(f"CV folds must be >= 2, got {folds}")
    if x.shape[0] < folds:
        raise InputValidationError(f"{x.shape[0]} rows cannot be split into {folds} CV folds")

    grid = lambda_grid(x, y, family, grid_size, settings.min_ratio)
    if grid.size == 1:
        return float(grid[0])

    strata = None
    if family == 'binomial':
        minority = int(min(y.sum(), y.size - y.sum()))
        if minority < 2:
            logger.warning(
                f"binomial response has {minority} minority rows; using lambda_max"
            )
            return float(grid[0])
        folds = min(folds, minority)
        strata = y

    plan = FoldPlan.build(x.shape[0], folds, seed, strata=strata)
    loss = np.zeros(grid.size)
    for _, train, test in plan.splits():
        path = lambda_path(x[train], y[train], family, grid, settings)
        for g, model in enumerate(path):
            loss[g] += deviance(family, y[test], predict(model, x[test])).sum()
    loss /= x.shape[0]

    best = int(np.argmin(loss))
    logger.debug(
        f"cv_lambda[{family}] n={x.shape[0]} selected lambda={grid[best]:.4g} "
        f"(grid index {best}/{grid.size - 1})"
    )
    return float(grid[best])


def fit_lasso_cv(
    x,
    y,
    family: str = 'gaussian',
    settings: Optional[LearnerSettings] = None,
    seed: int = 0,
    penalty: Optional[float] = None,
) -> LassoModel:
    """
    Fit the nuisance learner used by cross-fitting.

    Selects the penalty by internal CV unless ``penalty`` is given, then
    refits on all rows along the path down to the selected penalty.
    """
    settings = settings or LearnerSettings()
    x, y = _check_inputs(x, y, family)
    if penalty is None:
        penalty = cv_lambda(x, y, family, settings.cv_folds, settings.grid_size, seed, settings)

    grid = lambda_grid(x, y, family, settings.grid_size, settings.min_ratio)
    lambdas = np.append(grid[grid > penalty], penalty)
    return lambda_path(x, y, family, lambdas, settings)[-1]


__all__ = [
    'FAMILIES',
    'fit_lasso',
    'lambda_max',
    'lambda_grid',
    'lambda_path',
    'cv_lambda',
    'fit_lasso_cv',
    'predict',
    'constant_model',
    'penalized_objective',
    'deviance',
    'standardize',
]
