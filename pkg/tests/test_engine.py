"""
Tests for trimming, inference and the full test run.
"""
import numpy as np
import pytest

from exceptions import (
    DegenerateSampleError,
    DegenerateVarianceError,
    InputValidationError,
    ModeError,
)
from models.nuisance import COMPLEMENT, OWN
from models.settings import DgpConfig
from models.site_data import SiteDataset
from utils.engine import (
    active_propensities,
    balance_table,
    epsilon_sweep,
    kish_n_eff,
    normal_inference,
    run_test,
    trim,
    two_sided_p_value,
)
from utils.simulation import generate

Z = np.array([1, 1, 1, 1, 2, 2, 2, 2])
D = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=float)
X = np.arange(8, dtype=float).reshape(-1, 1)

OUTCOMES = {(0, OWN): 0.0, (1, OWN): 1.0, (0, COMPLEMENT): 0.0, (1, COMPLEMENT): 1.0}


@pytest.fixture
def toy():
    return SiteDataset.from_arrays(D.copy(), D, Z, X)


class TestInference:
    """Normal approximation arithmetic."""

    def test_reference_p_value(self):
        assert 0.045 <= two_sided_p_value(0.012, 0.006) <= 0.047

    def test_symmetric_in_sign(self):
        assert two_sided_p_value(-0.012, 0.006) == two_sided_p_value(0.012, 0.006)

    def test_constant_scores_are_degenerate(self):
        with pytest.raises(DegenerateVarianceError):
            normal_inference(np.full(50, 0.3))

    def test_too_few_scores(self):
        with pytest.raises(DegenerateSampleError):
            normal_inference(np.array([1.0]))

    def test_scale_invariance(self):
        psi = np.random.default_rng(0).normal(0.1, 1.0, 200)
        _, _, p_value = normal_inference(psi)
        _, _, scaled = normal_inference(7.5 * psi)
        assert scaled == pytest.approx(p_value)

    def test_standard_error(self):
        psi = np.array([1.0, 2.0, 3.0, 4.0])
        theta, se, _ = normal_inference(psi)
        assert theta == 2.5
        assert se == pytest.approx(np.std(psi, ddof=1) / 2.0)


class TestTrim:
    """Trim mask over active propensities."""

    def test_all_half_retained(self, toy, make_fit):
        fits = {z: make_fit(8, z, 'cate', OUTCOMES, propensity=0.5) for z in (1, 2)}
        assert not trim(fits, 0.05, toy).any()

    def test_small_active_propensity_excluded(self, toy, make_fit):
        fits = {z: make_fit(8, z, 'cate', OUTCOMES, propensity=0.25) for z in (1, 2)}
        low = np.zeros(8)
        low[1] = 0.03 - 0.25
        fits[1] = fits[1].shifted('propensity', (1, OWN), low)
        mask = trim(fits, 0.05, toy)
        assert list(np.flatnonzero(mask)) == [1]

    def test_inactive_propensity_ignored(self, toy, make_fit):
        fits = {z: make_fit(8, z, 'cate', OUTCOMES, propensity=0.25) for z in (1, 2)}
        low = np.zeros(8)
        # row 0 is a control unit: p_{1,z} does not enter its terms
        low[0] = 0.03 - 0.25
        fits[1] = fits[1].shifted('propensity', (1, OWN), low)
        assert not trim(fits, 0.05, toy).any()

    def test_active_columns(self, toy, make_fit):
        fits = {z: make_fit(8, z, 'cate', OUTCOMES, propensity=0.25) for z in (1, 2)}
        assert active_propensities(toy, fits).shape == (8, 2)

    def test_monotone_in_epsilon(self, toy, make_fit):
        rng = np.random.default_rng(1)
        fits = {z: make_fit(8, z, 'cate', OUTCOMES, propensity=0.25) for z in (1, 2)}
        for z in (1, 2):
            for key in list(fits[z].propensity):
                fits[z] = fits[z].shifted('propensity', key, rng.uniform(-0.24, 0.6, 8))
        previous = trim(fits, 0.0, toy)
        for epsilon in (0.05, 0.1, 0.2, 0.3, 0.45):
            current = trim(fits, epsilon, toy)
            assert np.all(current[previous])
            previous = current

    def test_invalid_epsilon(self, toy, make_fit):
        fits = {z: make_fit(8, z, 'cate', OUTCOMES) for z in (1, 2)}
        with pytest.raises(InputValidationError):
            trim(fits, 0.5, toy)

    def test_kish_equal_weights(self, toy, make_fit):
        fits = {z: make_fit(8, z, 'cate', OUTCOMES, propensity=0.25) for z in (1, 2)}
        assert kish_n_eff(toy, fits, np.ones(8, dtype=bool)) == pytest.approx(8.0)


class TestRunTest:
    """End-to-end runs on simulated data."""

    @pytest.fixture
    def data(self):
        return generate(DgpConfig(n=600, p=5, design='experimental', seed=3), seed=12)

    def test_result_bookkeeping(self, data, fast_config):
        result = run_test(data, fast_config)
        assert result.n == 600
        assert result.n_eff + result.n_trimmed == result.n
        assert result.se > 0
        assert 0.0 <= result.p_value <= 1.0
        assert result.site_labels == ('0', '1')
        assert set(result.per_site_diagnostics) == {'0', '1'}
        assert result.p_value == pytest.approx(two_sided_p_value(result.theta_hat, result.se))

    def test_deterministic(self, data, fast_config):
        assert run_test(data, fast_config) == run_test(data, fast_config)

    def test_thread_count_does_not_change_result(self, data, fast_config):
        assert run_test(data, fast_config) == run_test(data, fast_config.with_updates(workers=4))

    def test_epsilon_sweep_shares_fit(self, fast_config):
        data = generate(DgpConfig(n=600, p=5, design='mixed', rho=0.5, seed=3), seed=12)
        low, high = epsilon_sweep(data, fast_config, [0.05, 0.10])
        assert low.epsilon == 0.05 and high.epsilon == 0.10
        assert high.n_eff <= low.n_eff
        assert low == run_test(data, fast_config.with_updates(epsilon=0.05))

    def test_everything_trimmed(self, data, fast_config):
        with pytest.raises(DegenerateSampleError):
            run_test(data, fast_config.with_updates(epsilon=0.49))

    def test_did_mode_runs_on_panel(self, fast_config):
        data = generate(DgpConfig(n=600, p=5, design='panel', seed=3), seed=12)
        result = run_test(data, fast_config.with_updates(mode='did'))
        assert result.mode == 'did'
        assert result.n == 600

    def test_did_mode_needs_panel_columns(self, data, fast_config):
        with pytest.raises(ModeError):
            run_test(data, fast_config.with_updates(mode='did'))

    def test_clate_mode(self, fast_config):
        data = generate(DgpConfig(n=800, p=5, design='iv', seed=3), seed=12)
        result = run_test(data, fast_config.with_updates(mode='clate'))
        assert result.mode == 'clate'
        assert np.isfinite(result.theta_hat)


class TestBalanceTable:
    """Standardized mean differences."""

    def test_identical_groups(self):
        x = np.array([[1.0, 5.0], [1.0, 5.0], [2.0, 7.0], [2.0, 7.0]])
        data = SiteDataset.from_arrays(np.zeros(4), [0, 1, 0, 1], [1, 1, 2, 2], x)
        table = balance_table(data)
        np.testing.assert_allclose(table['smd'].iloc[:2], 0.0)

    def test_unit_difference(self):
        x = np.array([-1.0, 0.0, 1.0, 0.0, 1.0, 2.0]).reshape(-1, 1)
        data = SiteDataset.from_arrays(np.zeros(6), [0, 0, 0, 1, 1, 1], [1, 2, 1, 2, 1, 2], x)
        row = balance_table(data).iloc[0]
        assert row['mean_control'] == 0.0
        assert row['mean_treated'] == 1.0
        assert row['smd'] == pytest.approx(1.0)

    def test_zero_pooled_sd_flagged(self):
        x = np.column_stack([np.full(4, 3.0), [0.0, 1.0, 2.0, 3.0]])
        data = SiteDataset.from_arrays(np.zeros(4), [0, 1, 0, 1], [1, 1, 2, 2], x)
        table = balance_table(data)
        assert table['smd'].iloc[0] == 0.0
        assert bool(table['zero_sd'].iloc[0])
        assert not bool(table['zero_sd'].iloc[1])

    def test_count_row(self):
        data = SiteDataset.from_arrays(np.zeros(4), [0, 1, 1, 1], [1, 1, 2, 2], np.eye(4)[:, :2])
        last = balance_table(data).iloc[-1]
        assert last['variable'] == 'N'
        assert last['mean_control'] == 1.0
        assert last['mean_treated'] == 3.0

    def test_randomized_design_is_balanced(self):
        data = generate(DgpConfig(n=18_000, p=10, design='experimental', seed=1), seed=2)
        table = balance_table(data)
        assert (table['smd'].iloc[:-1].abs() < 0.07).all()

    def test_unknown_covariate(self, toy):
        with pytest.raises(InputValidationError):
            balance_table(toy, ['age'])
