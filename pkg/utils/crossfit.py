"""
K-fold cross-fitting of nuisance functions.

For every fold k the nuisance learners are trained on the rows outside
fold k and predict the rows inside it. Each site z needs models for its
own cell and for the pooled complement z- of all other sites; models are
cached by (fold, role, arm, training sites) so a model shared by two
sites (at L=2 the complement of site 1 is site 2) is fitted once.

Roles:
    outcome     gaussian lasso of Y on X within an arm cell (mu or m)
    treatment   binomial lasso of D on X within an instrument cell (r, CLATE only)
    propensity  binomial lasso of the joint indicator 1{A=a, Z in sites}
                on all training rows (p or pi)
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np

from exceptions import DegenerateResponseError, InputValidationError, InsufficientCellError
from models.learner import LassoModel
from models.nuisance import ARMS, COMPLEMENT, OWN, NuisanceFit
from models.settings import TestConfig
from models.site_data import FoldPlan, SiteDataset
from utils.learners import constant_model, cv_lambda, fit_lasso_cv, predict
from utils.logging_config import get_logger

logger = get_logger(__name__)

ROLES = ('outcome', 'treatment', 'propensity')
FAMILY = {'outcome': 'gaussian', 'treatment': 'binomial', 'propensity': 'binomial'}
SYMBOL = {
    'cate': {'outcome': 'mu', 'propensity': 'p'},
    'clate': {'outcome': 'm', 'treatment': 'r', 'propensity': 'pi'},
}


class CellKey(NamedTuple):
    """Identity of one nuisance model; fold 0 denotes the full sample."""

    fold: int
    role: str
    arm: int
    sites: Tuple[int, ...]


def make_folds(n: int, k: int, seed: int) -> FoldPlan:
    """
    Balanced random partition of n rows into k folds.

    Raises:
        InputValidationError: k < 2 or n < k.
    """
    if k < 2:
        raise InputValidationError(f"fold count must be >= 2, got {k}")
    if n < k:
        raise InputValidationError(f"{n} observations cannot fill {k} folds")
    return FoldPlan.build(n, k, seed)


class NuisanceFitter:
    """
    Fits and caches the per-(fold, cell) nuisance models of one dataset.

    Usage:
        fitter = NuisanceFitter(data, plan, config)
        fitter.fit(fitter.cell_keys(z) for z in data.sites)
        fit_z = fitter.assemble(z)
    """

    def __init__(self, data: SiteDataset, plan: FoldPlan, config: TestConfig):
        if plan.n != data.n:
            raise InputValidationError(
                f"fold plan covers {plan.n} rows, dataset has {data.n}"
            )
        self.data = data
        self.plan = plan
        self.config = config
        self.mode = 'clate' if config.mode == 'clate' else 'cate'
        self.arm_variable = data.w if self.mode == 'clate' else data.d
        self._models: Dict[CellKey, LassoModel] = {}
        self._penalties: Dict[CellKey, float] = {}

    @property
    def roles(self) -> Tuple[str, ...]:
        if self.mode == 'clate':
            return ROLES
        return ('outcome', 'propensity')

    def sites_for(self, z: int, part: str) -> Tuple[int, ...]:
        if part == OWN:
            return (int(z),)
        return tuple(int(s) for s in self.data.sites if s != z)

    def cell_keys(self, z: int) -> List[CellKey]:
        keys = []
        for fold in range(1, self.plan.k + 1):
            for role in self.roles:
                for arm in ARMS:
                    for part in (OWN, COMPLEMENT):
                        keys.append(CellKey(fold, role, arm, self.sites_for(z, part)))
        return keys

    def label(self, key: CellKey) -> str:
        symbol = SYMBOL[self.mode][key.role]
        arm_name = 'w' if self.mode == 'clate' else 'd'
        sites = ','.join(self.data.site_label(s) for s in key.sites)
        return f"{symbol}[{arm_name}={key.arm}, z in {{{sites}}}]"

    def _rows(self, key: CellKey, train: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        in_sites = np.isin(self.data.z, key.sites)
        in_arm = self.arm_variable == key.arm
        if key.role == 'propensity':
            return train, (in_arm & in_sites)[train].astype(float)
        rows = train & in_arm & in_sites
        response = self.data.y if key.role == 'outcome' else self.data.d
        return rows, response[rows]

    def _seed(self, key: CellKey) -> int:
        role_index = ROLES.index(key.role)
        sequence = np.random.SeedSequence(
            [self.config.seed, key.fold, role_index, key.arm, *key.sites]
        )
        return int(sequence.generate_state(1)[0])

    def _train_mask(self, fold: int) -> np.ndarray:
        if fold == 0:
            return np.ones(self.data.n, dtype=bool)
        return self.plan.assignments != fold

    def _fit_global_penalty(self, key: CellKey) -> float:
        rows, response = self._rows(key, self._train_mask(0))
        family = FAMILY[key.role]
        try:
            return cv_lambda(
                self.data.x[rows], response, family,
                self.config.learner.cv_folds, self.config.learner.grid_size,
                self._seed(key), self.config.learner,
            )
        except DegenerateResponseError:
            return 0.0

    def _fit_cell(self, key: CellKey) -> LassoModel:
        settings = self.config.learner
        rows, response = self._rows(key, self._train_mask(key.fold))
        n_rows = int(response.shape[0])
        family = FAMILY[key.role]

        if key.role == 'propensity':
            n_cell = int(response.sum())
            if n_cell == 0:
                raise InsufficientCellError(self.label(key), key.fold, 0)
        else:
            required = max(2, settings.cv_folds) if settings.lambda_policy == 'per_fold' else 2
            if n_rows < required:
                raise InsufficientCellError(self.label(key), key.fold, n_rows, required)
            if key.role == 'treatment' and np.all(response == response[0]):
                logger.debug(
                    f"[fold {key.fold}] {self.label(key)} single-class ({response[0]:g}); "
                    f"using a constant model"
                )
                return constant_model(
                    float(response[0]), family, self.data.x.shape[1], settings
                )

        penalty = None
        if settings.lambda_policy == 'global':
            penalty = self._penalties[key._replace(fold=0)]
        model = fit_lasso_cv(
            self.data.x[rows], response, family, settings, self._seed(key), penalty
        )
        logger.debug(
            f"[fold {key.fold}] {self.label(key)} n={n_rows} lambda={model.penalty:.4g} "
            f"nonzero={model.n_nonzero}"
        )
        return model

    def _run(self, func, keys: List[CellKey]) -> List:
        workers = self.config.workers
        if workers <= 1 or len(keys) <= 1:
            return [func(key) for key in keys]
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='crossfit') as pool:
            return list(pool.map(func, keys))

    def fit(self, keys: Iterable) -> None:
        """Fit every key not yet cached; accepts keys or iterables of keys."""
        wanted: List[CellKey] = []
        seen = set(self._models)
        for item in keys:
            group = [item] if isinstance(item, CellKey) else list(item)
            for key in group:
                if key not in seen:
                    seen.add(key)
                    wanted.append(key)
        if not wanted:
            return

        if self.config.learner.lambda_policy == 'global':
            globals_needed = sorted({k._replace(fold=0) for k in wanted} - set(self._penalties))
            for key, penalty in zip(globals_needed, self._run(self._fit_global_penalty, globals_needed)):
                self._penalties[key] = penalty

        logger.debug(f"Fitting {len(wanted)} nuisance models with {self.config.workers} worker(s)")
        for key, model in zip(wanted, self._run(self._fit_cell, wanted)):
            self._models[key] = model

    def model(self, key: CellKey) -> LassoModel:
        return self._models[key]

    @property
    def n_models(self) -> int:
        return len(self._models)

    def _predict_block(self, role: str, arm: int, sites: Tuple[int, ...]) -> np.ndarray:
        out = np.empty(self.data.n)
        for fold, _, test in self.plan.splits():
            out[test] = predict(self.model(CellKey(fold, role, arm, sites)), self.data.x[test])
        return out

    def assemble(self, z: int) -> NuisanceFit:
        """Out-of-fold predictions of every nuisance of site z."""
        blocks: Dict[str, Dict[Tuple[int, str], np.ndarray]] = {r: {} for r in self.roles}
        penalties: Dict[str, Tuple[float, ...]] = {}
        for role in self.roles:
            for arm in ARMS:
                for part in (OWN, COMPLEMENT):
                    sites = self.sites_for(z, part)
                    blocks[role][(arm, part)] = self._predict_block(role, arm, sites)
                    label = self.label(CellKey(0, role, arm, sites))
                    penalties[label] = tuple(
                        self.model(CellKey(fold, role, arm, sites)).penalty
                        for fold in range(1, self.plan.k + 1)
                    )
        return NuisanceFit(
            site=int(z),
            mode=self.mode,
            outcome=blocks['outcome'],
            propensity=blocks['propensity'],
            treatment=blocks.get('treatment', {}),
            fold_of_prediction=self.plan.assignments.copy(),
            penalties=penalties,
        )


def _prepared(data: SiteDataset, config: TestConfig, mode: str) -> Tuple[SiteDataset, TestConfig]:
    if config.mode != mode:
        config = config.with_updates(mode=mode)
    if mode == 'did' and data.y is None:
        from utils.scores import did_transform
        data = did_transform(data)
    data.validate('clate' if mode == 'clate' else 'cate')
    return data, config


def fit_nuisances_cate(
    data: SiteDataset,
    plan: FoldPlan,
    z: int,
    config: Optional[TestConfig] = None,
) -> NuisanceFit:
    """
    Cross-fit mu_{d,X,z}, mu_{d,X,z-}, p_{d,z}(X) and p_{d,z-}(X) for one site.

    Raises:
        InsufficientCellError: A fold's training cell is empty or smaller
            than the internal CV fold count.
    """
    data, config = _prepared(data, config or TestConfig(), 'cate')
    fitter = NuisanceFitter(data, plan, config)
    fitter.fit(fitter.cell_keys(z))
    return fitter.assemble(z)


def fit_nuisances_clate(
    data: SiteDataset,
    plan: FoldPlan,
    z: int,
    config: Optional[TestConfig] = None,
) -> NuisanceFit:
    """Cross-fit m, r and pi (own site and complement) for one site."""
    data, config = _prepared(data, config or TestConfig(), 'clate')
    fitter = NuisanceFitter(data, plan, config)
    fitter.fit(fitter.cell_keys(z))
    return fitter.assemble(z)


def fit_nuisances(
    data: SiteDataset,
    plan: FoldPlan,
    config: TestConfig,
) -> Dict[int, NuisanceFit]:
    """
    Cross-fit the nuisances of every site for the configured mode.

    Returns:
        Dict site index -> NuisanceFit.
    """
    data, config = _prepared(data, config, config.mode)
    fitter = NuisanceFitter(data, plan, config)
    fitter.fit(fitter.cell_keys(z) for z in data.sites)
    fits = {int(z): fitter.assemble(z) for z in data.sites}
    logger.info(
        f"Cross-fitted {fitter.n_models} nuisance models "
        f"({config.mode}, K={plan.k}, L={data.n_sites}, n={data.n})"
    )
    return fits


__all__ = [
    'CellKey',
    'NuisanceFitter',
    'make_folds',
    'fit_nuisances_cate',
    'fit_nuisances_clate',
    'fit_nuisances',
]
