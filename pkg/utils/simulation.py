"""
Monte Carlo harness.

Generates the simulated multi-site designs, runs the homogeneity test on
R replications per scenario and aggregates size/power summaries.

Designs (X ~ N(0, I_p), site indicator Zb ~ Bernoulli(pi), U, V ~ N(0, 1)):
    experimental  D ~ Bernoulli(q);  Y = D + D X'b + delta D Zb + X'b + U
    mixed         Zb = 1 randomized as above, Zb = 0 observational with
                  D = 1{X'b + rho U + V > 0}
    iv            W ~ Bernoulli(0.5), one-sided noncompliance
                  D = W * Bernoulli(expit(g_Zb + 0.5 X_1)),
                  Y = D (1 + X'b + delta Zb) + X'b + U
    panel         D = 1{0.5 X'b + rho U + V > 0},
                  Y0 = X'b + U + e0,  Y1 = X'b + U + 0.5 + D (1 + X'b + delta Zb) + e1
"""

import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit
from tqdm import tqdm

from config import SimDefaults
from exceptions import HomogeneityTestError, ScenarioError
from models.results import SimReport, TestResult
from models.settings import DgpConfig, TestConfig
from models.site_data import SiteDataset
from utils.engine import run_test
from utils.logging_config import get_logger

logger = get_logger(__name__)

DESIGN_MODE = {'experimental': 'cate', 'mixed': 'cate', 'iv': 'clate', 'panel': 'did'}
SITE_LABELS = ('0', '1')

SUMMARY_COLUMNS = ['scenario', 'N', 'theta', 'std', 'mean_se', 'reject_5pct',
                   'n_eff_mean', 'R', 'failed']


def generate(config: DgpConfig, seed: int) -> SiteDataset:
    """
    Draw one dataset from a design.

    Sites are indexed 1 (Zb = 0) and 2 (Zb = 1) with labels '0' and '1'.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    n, p = config.n, config.p
    x = rng.standard_normal((n, p))
    zb = (rng.random(n) < config.pi_site).astype(np.int64)
    u = rng.standard_normal(n)
    v = rng.standard_normal(n)
    index = x @ config.beta()
    names = tuple(f"x{j + 1}" for j in range(p))

    if config.design == 'iv':
        w = (rng.random(n) < 0.5).astype(float)
        gamma = np.asarray(config.compliance_intercepts)[zb]
        takes = rng.random(n) < expit(gamma + 0.5 * x[:, 0])
        d = w * takes
        y = d * (1.0 + index + config.delta * zb) + index + u
        return SiteDataset.from_arrays(y, d, zb + 1, x, w=w,
                                       site_labels=SITE_LABELS, covariate_names=names)

    if config.design == 'panel':
        d = (0.5 * index + config.rho * u + v > 0).astype(float)
        e0 = rng.standard_normal(n)
        e1 = rng.standard_normal(n)
        y_pre = index + u + e0
        y_post = index + u + 0.5 + d * (1.0 + index + config.delta * zb) + e1
        return SiteDataset.from_arrays(None, d, zb + 1, x, y_pre=y_pre, y_post=y_post,
                                       site_labels=SITE_LABELS, covariate_names=names)

    d = (rng.random(n) < config.q).astype(float)
    if config.design == 'mixed':
        observational = zb == 0
        d_obs = (index + config.rho * u + v > 0).astype(float)
        d = np.where(observational, d_obs, d)
    y = d + d * index + config.delta * d * zb + index + u
    return SiteDataset.from_arrays(y, d, zb + 1, x,
                                   site_labels=SITE_LABELS, covariate_names=names)


def replication_seed(scenario_seed: int, replication: int) -> int:
    """Seed of replication r, independent of scheduling."""
    return int(np.random.SeedSequence([scenario_seed, replication]).generate_state(1)[0])


def scenario_id(dgp: DgpConfig) -> str:
    return f"{dgp.design}_delta{dgp.delta:g}_rho{dgp.rho:g}"


def run_scenario(
    dgp: DgpConfig,
    test: TestConfig,
    replications: int,
    workers: Optional[int] = None,
    scenario: Optional[str] = None,
    progress: bool = False,
    replication_log: Optional[List[Dict[str, object]]] = None,
) -> SimReport:
    """
    Run ``replications`` independent generate -> run_test cycles.

    Replications that raise a HomogeneityTestError (e.g. an empty cell at
    small n) are counted as failed and excluded from the aggregates.

    Args:
        dgp: Design configuration.
        test: Test settings; the mode follows the design.
        replications: R >= 1.
        workers: Concurrent replications (default SimDefaults.WORKERS).
        scenario: Scenario id for reports and logs.
        progress: Show a tqdm progress bar.
        replication_log: If given, one dict per replication is appended,
            ordered by replication index.

    Raises:
        ScenarioError: Invalid R or every replication failed.
    """
    if replications < 1:
        raise ScenarioError(f"replications must be >= 1, got {replications}")
    dgp.validate()
    scenario = scenario or scenario_id(dgp)
    test = test.with_updates(mode=DESIGN_MODE[dgp.design], workers=1)
    test.validate()
    workers = max(1, workers or SimDefaults.WORKERS)

    def one(r: int) -> Tuple[int, int, Optional[TestResult], str]:
        seed = replication_seed(dgp.seed, r)
        try:
            data = generate(dgp, seed)
            return r, seed, run_test(data, test.with_updates(seed=seed)), ''
        except HomogeneityTestError as e:
            return r, seed, None, str(e)

    started = time.time()
    outcomes = []
    with tqdm(total=replications, desc=f"{scenario} N={dgp.n}", disable=not progress) as bar:
        if workers == 1:
            for r in range(replications):
                outcomes.append(one(r))
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=workers, thread_name_prefix='replication') as pool:
                for outcome in pool.map(one, range(replications)):
                    outcomes.append(outcome)
                    bar.update(1)
    outcomes.sort(key=lambda item: item[0])

    results = [res for _, _, res, _ in outcomes if res is not None]
    failed = replications - len(results)
    for r, seed, res, reason in outcomes:
        if res is None:
            logger.warning(f"[{scenario} N={dgp.n}] replication {r} (seed {seed}) failed: {reason}")
        if replication_log is not None:
            replication_log.append({
                'scenario': scenario,
                'N': dgp.n,
                'replication': r,
                'seed': seed,
                'theta': res.theta_hat if res else np.nan,
                'se': res.se if res else np.nan,
                'p_value': res.p_value if res else np.nan,
                'n_eff': res.n_eff if res else np.nan,
                'status': 'ok' if res else 'failed',
                'error': reason,
            })
    if not results:
        raise ScenarioError(f"all {replications} replications of {scenario} N={dgp.n} failed")

    thetas = np.array([res.theta_hat for res in results])
    report = SimReport(
        scenario=scenario,
        n=dgp.n,
        mean_theta=float(thetas.mean()),
        std=float(thetas.std(ddof=1)) if thetas.size > 1 else 0.0,
        mean_se=float(np.mean([res.se for res in results])),
        reject_rate_5pct=float(np.mean([res.p_value < SimDefaults.SIGNIFICANCE for res in results])),
        mean_n_eff=float(np.mean([res.n_eff for res in results])),
        replications=replications,
        failed=failed,
        elapsed_sec=time.time() - started,
    )
    logger.info(
        f"[{scenario} N={dgp.n}] theta={report.mean_theta:.4f} std={report.std:.4f} "
        f"se={report.mean_se:.4f} reject={report.reject_rate_5pct:.3f} "
        f"n_eff={report.mean_n_eff:.1f} failed={failed}/{replications}"
    )
    return report


BENCHMARK_SCENARIOS: Tuple[Tuple[str, str, float, float], ...] = (
    ('experimental-homogeneous', 'experimental', 0.0, 0.0),
    ('experimental-heterogeneous', 'experimental', 1.0, 0.0),
    ('mixed-homogeneous', 'mixed', 0.0, 0.0),
    ('mixed-confounded', 'mixed', 0.0, 0.5),
    ('mixed-heterogeneous', 'mixed', 1.0, 0.0),
    ('mixed-heterogeneous-confounded', 'mixed', 1.0, 0.5),
)


def benchmark_grid(
    seed: int = 0,
    sample_sizes: Sequence[int] = SimDefaults.SAMPLE_SIZES,
    p: int = SimDefaults.DIMENSION,
) -> List[Tuple[str, DgpConfig]]:
    """Six benchmark scenarios crossed with the sample sizes."""
    grid = []
    for index, (name, design, delta, rho) in enumerate(BENCHMARK_SCENARIOS):
        for n in sample_sizes:
            scenario_seed = int(np.random.SeedSequence([seed, index, n]).generate_state(1)[0])
            grid.append((name, DgpConfig(n=n, p=p, delta=delta, rho=rho,
                                         design=design, seed=scenario_seed)))
    return grid


def summary_frame(reports: Iterable[SimReport]) -> pd.DataFrame:
    """Summary table with one row per (scenario, N)."""
    rows = [{
        'scenario': rep.scenario,
        'N': rep.n,
        'theta': rep.mean_theta,
        'std': rep.std,
        'mean_se': rep.mean_se,
        'reject_5pct': rep.reject_rate_5pct,
        'n_eff_mean': rep.mean_n_eff,
        'R': rep.replications,
        'failed': rep.failed,
    } for rep in reports]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


__all__ = [
    'DESIGN_MODE',
    'generate',
    'replication_seed',
    'scenario_id',
    'run_scenario',
    'benchmark_grid',
    'summary_frame',
]
