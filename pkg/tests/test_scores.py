"""
Tests for the CATE/CLATE scores, the DiD transform and the orthogonality probe.
"""
import numpy as np
import pytest

from exceptions import InputValidationError, ModeError, OverlapError
from models.nuisance import COMPLEMENT, OWN
from models.settings import DgpConfig
from models.site_data import SiteDataset
from utils.oracle import population_theta, true_nuisances
from utils.scores import (
    Perturbation,
    augmentations,
    cate_score,
    clate_score,
    did_transform,
    orthogonality_probe,
)
from utils.simulation import generate

# two sites, both arms in each
Z = np.array([1, 1, 1, 1, 2, 2, 2, 2])
D = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=float)
X = np.arange(8, dtype=float).reshape(-1, 1)


def cate_fits(make_fit, effect_1, effect_2):
    """Plug-ins with mu_0 = 0 and mu_1 = site effect; complement = other site."""
    own_1 = {(0, OWN): 0.0, (1, OWN): effect_1, (0, COMPLEMENT): 0.0, (1, COMPLEMENT): effect_2}
    own_2 = {(0, OWN): 0.0, (1, OWN): effect_2, (0, COMPLEMENT): 0.0, (1, COMPLEMENT): effect_1}
    return {1: make_fit(8, 1, 'cate', own_1), 2: make_fit(8, 2, 'cate', own_2)}


class TestCateScore:
    """Hand-evaluated CATE scores."""

    def test_homogeneous_zero_residuals(self, make_fit):
        data = SiteDataset.from_arrays(D.copy(), D, Z, X)
        sample = cate_score(data, cate_fits(make_fit, 1.0, 1.0))
        np.testing.assert_allclose(sample.psi, 0.0)
        assert sample.theta_hat == 0.0

    def test_heterogeneous_zero_residuals(self, make_fit):
        """Site effects 1 and 0: psi = 1 + 1 + 1 - 1 = 2."""
        y = np.where(Z == 1, D, 0.0)
        data = SiteDataset.from_arrays(y, D, Z, X)
        sample = cate_score(data, cate_fits(make_fit, 1.0, 0.0))
        np.testing.assert_allclose(sample.psi, 2.0)
        assert sample.per_site_terms[1]['plain'] == pytest.approx(1.0)
        assert sample.per_site_terms[2]['plain'] == pytest.approx(-1.0)

    def test_residuals_enter_through_augmentation(self, make_fit):
        y = D + 0.5 * (Z == 1) * D
        data = SiteDataset.from_arrays(y, D, Z, X)
        fits = cate_fits(make_fit, 1.0, 1.0)
        aug = augmentations(data, fits[1])
        # treated site-1 rows carry residual 0.5 / 0.25
        np.testing.assert_allclose(aug.a_y_z, np.where((Z == 1) & (D == 1), 2.0, 0.0))
        np.testing.assert_allclose(aug.a_y_zc, 0.0)

    def test_trimmed_rows_are_nan(self, make_fit):
        data = SiteDataset.from_arrays(D.copy(), D, Z, X)
        trimmed = np.zeros(8, dtype=bool)
        trimmed[0] = True
        sample = cate_score(data, cate_fits(make_fit, 1.0, 1.0), trimmed)
        assert np.isnan(sample.psi[0])
        assert sample.retained_psi.shape == (7,)

    def test_zero_propensity_on_retained_row(self, make_fit):
        data = SiteDataset.from_arrays(D.copy(), D, Z, X)
        fits = cate_fits(make_fit, 1.0, 1.0)
        fits[1] = fits[1].shifted('propensity', (1, OWN), np.full(8, -0.25))
        with pytest.raises(OverlapError):
            cate_score(data, fits)

    def test_missing_site_fit(self, make_fit):
        data = SiteDataset.from_arrays(D.copy(), D, Z, X)
        fits = cate_fits(make_fit, 1.0, 1.0)
        del fits[2]
        with pytest.raises(InputValidationError):
            cate_score(data, fits)


class TestClateScore:
    """Hand-evaluated CLATE scores with perfect compliance."""

    @staticmethod
    def clate_fits(make_fit, g_1, g_2):
        treatment = {(0, OWN): 0.0, (1, OWN): 1.0, (0, COMPLEMENT): 0.0, (1, COMPLEMENT): 1.0}
        own_1 = {(0, OWN): 0.0, (1, OWN): g_1, (0, COMPLEMENT): 0.0, (1, COMPLEMENT): g_2}
        own_2 = {(0, OWN): 0.0, (1, OWN): g_2, (0, COMPLEMENT): 0.0, (1, COMPLEMENT): g_1}
        return {
            1: make_fit(8, 1, 'clate', own_1, treatment=treatment),
            2: make_fit(8, 2, 'clate', own_2, treatment=treatment),
        }

    def test_identical_sites(self, make_fit):
        data = SiteDataset.from_arrays(D.copy(), D, Z, X, w=D)
        sample = clate_score(data, self.clate_fits(make_fit, 1.0, 1.0))
        np.testing.assert_allclose(sample.psi, 0.0)

    def test_hand_example(self, make_fit):
        """g = (1, 0.5), h = (1, 1): psi = 0.25 + 0.25 + 0.5 - 0.5."""
        y = np.where(Z == 1, D, 0.5 * D)
        data = SiteDataset.from_arrays(y, D, Z, X, w=D)
        sample = clate_score(data, self.clate_fits(make_fit, 1.0, 0.5))
        np.testing.assert_allclose(sample.psi, 0.5)

    @pytest.mark.parametrize('bracket', ['orthogonal', 'printed'])
    def test_first_stage_residual_offsets_plug_in(self, make_fit, bracket):
        """
        Site 1 predicts r_1 = 0.5 while its treated rows all take D = 1.

        Site 1: g = (1, 0.5), h = (0.5, 1), plain = 0.75 and A^D_z = 2 on
        rows 1 and 3, so its psi is 0.5625 + 0.75 - 1.25 A^D_z. Site 2
        adds 0.25 - 0.5.
        """
        y = np.where(Z == 1, D, 0.5 * D)
        data = SiteDataset.from_arrays(y, D, Z, X, w=D)
        fits = self.clate_fits(make_fit, 1.0, 0.5)
        fits[1] = fits[1].shifted('treatment', (1, OWN), np.full(8, -0.5))
        sample = clate_score(data, fits, bracket=bracket)
        expected = np.where((Z == 1) & (D == 1), -1.4375, 1.0625)
        np.testing.assert_allclose(sample.psi, expected)
        assert sample.per_site_terms[1]['plain'] == pytest.approx(0.75)

    def test_brackets_agree_without_residuals(self, make_fit):
        y = np.where(Z == 1, D, 0.5 * D)
        data = SiteDataset.from_arrays(y, D, Z, X, w=D)
        fits = self.clate_fits(make_fit, 1.0, 0.5)
        orthogonal = clate_score(data, fits, bracket='orthogonal')
        printed = clate_score(data, fits, bracket='printed')
        np.testing.assert_allclose(orthogonal.psi, printed.psi)

    def test_requires_instrument(self, make_fit):
        data = SiteDataset.from_arrays(D.copy(), D, Z, X)
        with pytest.raises(ModeError):
            clate_score(data, self.clate_fits(make_fit, 1.0, 1.0))

    def test_unknown_bracket(self, make_fit):
        data = SiteDataset.from_arrays(D.copy(), D, Z, X, w=D)
        with pytest.raises(InputValidationError):
            clate_score(data, self.clate_fits(make_fit, 1.0, 1.0), bracket='mirrored')


class TestDidTransform:
    """Panel outcome differencing."""

    def test_equal_periods_give_zero(self):
        y0 = np.linspace(0, 1, 8)
        data = SiteDataset.from_arrays(None, D, Z, X, y_pre=y0, y_post=y0)
        np.testing.assert_array_equal(did_transform(data).y, np.zeros(8))

    def test_treated_shift_gives_treatment(self):
        y0 = np.linspace(0, 1, 8)
        data = SiteDataset.from_arrays(None, D, Z, X, y_pre=y0, y_post=y0 + D)
        np.testing.assert_allclose(did_transform(data).y, D)

    def test_missing_panel_column(self):
        data = SiteDataset.from_arrays(None, D, Z, X, y_pre=np.zeros(8))
        with pytest.raises(ModeError):
            did_transform(data)


@pytest.fixture(scope='module')
def experimental_oracle():
    dgp = DgpConfig(n=200_000, p=10, design='experimental', seed=0)
    data = generate(dgp, seed=77)
    return dgp, data, true_nuisances(data, dgp)


@pytest.fixture(scope='module')
def iv_oracle():
    dgp = DgpConfig(n=200_000, p=10, design='iv', seed=0)
    data = generate(dgp, seed=78)
    return dgp, data, true_nuisances(data, dgp)


@pytest.fixture(scope='module')
def heterogeneous_iv_oracle():
    """Complier effects differ by delta = 1, so the plug-in cross products are nonzero."""
    dgp = DgpConfig(n=200_000, p=10, design='iv', delta=1.0, seed=0)
    data = generate(dgp, seed=80)
    return dgp, data, true_nuisances(data, dgp)


class TestOracleMoments:
    """Mean score at the true nuisances."""

    def test_cate_mean_zero_under_homogeneity(self, experimental_oracle):
        dgp, data, fits = experimental_oracle
        psi = cate_score(data, fits).psi
        assert abs(psi.mean() - population_theta(dgp)) < 4 * psi.std() / np.sqrt(data.n)

    def test_cate_mean_under_heterogeneity(self):
        dgp = DgpConfig(n=200_000, p=10, delta=1.0, design='experimental', seed=0)
        data = generate(dgp, seed=79)
        psi = cate_score(data, true_nuisances(data, dgp)).psi
        assert population_theta(dgp) == 2.0
        assert abs(psi.mean() - 2.0) < 4 * psi.std() / np.sqrt(data.n)

    def test_clate_mean_zero_for_homogeneous_compliers(self, iv_oracle):
        _, data, fits = iv_oracle
        psi = clate_score(data, fits).psi
        assert abs(psi.mean()) < 4 * psi.std() / np.sqrt(data.n)

    def test_clate_mean_under_heterogeneous_compliers(self, heterogeneous_iv_oracle):
        """With two sites the linear terms cancel and the mean is sum_z E[plain_z^2]."""
        _, data, fits = heterogeneous_iv_oracle
        sample = clate_score(data, fits)
        terms = sample.per_site_terms
        target = terms[1]['squared'] + terms[2]['squared']
        assert target > 0.1
        assert terms[1]['plain'] == pytest.approx(-terms[2]['plain'])
        psi = sample.psi
        assert abs(psi.mean() - target) < 4 * psi.std() / np.sqrt(data.n)

    def test_double_differences_antisymmetric(self, experimental_oracle):
        _, data, fits = experimental_oracle
        terms = cate_score(data, fits).per_site_terms
        assert terms[1]['plain'] == pytest.approx(-terms[2]['plain'])


class TestOrthogonalityProbe:
    """Second-order sensitivity to nuisance perturbations."""

    def test_zero_step(self, experimental_oracle):
        _, data, fits = experimental_oracle
        move = Perturbation(1, 'outcome', (1, OWN), np.ones(data.n))
        assert orthogonality_probe('cate', data, fits, move, 0.0) == 0.0

    def test_cate_outcome_perturbation_is_quadratic(self, experimental_oracle):
        _, data, fits = experimental_oracle
        move = Perturbation(1, 'outcome', (1, OWN), np.ones(data.n))
        small = orthogonality_probe('cate', data, fits, move, 0.5)
        large = orthogonality_probe('cate', data, fits, move, 1.0)
        # population value is -t^2 for a unit direction
        assert small == pytest.approx(-0.25, abs=0.05)
        assert 3.0 <= large / small <= 5.0

    def test_cate_complement_outcome_perturbation(self, experimental_oracle):
        _, data, fits = experimental_oracle
        move = Perturbation(2, 'outcome', (0, COMPLEMENT), np.tanh(data.x[:, 0]))
        small = orthogonality_probe('cate', data, fits, move, 0.5)
        large = orthogonality_probe('cate', data, fits, move, 1.0)
        assert 3.0 <= large / small <= 5.0

    def test_cate_propensity_perturbation_has_no_first_order_effect(self, experimental_oracle):
        _, data, fits = experimental_oracle
        move = Perturbation(1, 'propensity', (1, OWN), np.ones(data.n))
        assert abs(orthogonality_probe('cate', data, fits, move, 0.05)) < 0.01

    def test_unknown_score(self, experimental_oracle):
        _, data, fits = experimental_oracle
        move = Perturbation(1, 'outcome', (1, OWN), np.ones(data.n))
        with pytest.raises(InputValidationError):
            orthogonality_probe('ate', data, fits, move, 0.1)


def first_order_change(data, fits, move, t):
    """Per-observation central difference of the CLATE score along ``move``."""
    def moved(step):
        shifted = dict(fits)
        shifted[move.site] = fits[move.site].shifted(move.block, move.key, step * move.direction)
        return clate_score(data, shifted).psi

    return (moved(t) - moved(-t)) / (2.0 * t)


class TestClateOrthogonality:
    """First-order insensitivity of the CLATE score where the cross products are nonzero."""

    @pytest.mark.parametrize('site,block,key', [
        (1, 'outcome', (1, OWN)),
        (1, 'outcome', (0, COMPLEMENT)),
        (2, 'outcome', (1, COMPLEMENT)),
        (1, 'treatment', (1, OWN)),
        (1, 'treatment', (1, COMPLEMENT)),
        (2, 'treatment', (0, OWN)),
        (2, 'treatment', (0, COMPLEMENT)),
    ])
    def test_regression_blocks(self, heterogeneous_iv_oracle, site, block, key):
        _, data, fits = heterogeneous_iv_oracle
        move = Perturbation(site, block, key, np.tanh(data.x[:, 0]) + 0.5)
        change = first_order_change(data, fits, move, 0.25)
        assert abs(change.mean()) < 4 * change.std() / np.sqrt(data.n)

    @pytest.mark.parametrize('site,key', [(1, (1, OWN)), (2, (0, COMPLEMENT))])
    def test_instrument_propensity_blocks(self, heterogeneous_iv_oracle, site, key):
        _, data, fits = heterogeneous_iv_oracle
        move = Perturbation(site, 'propensity', key, np.tanh(data.x[:, 0]) + 0.5)
        change = first_order_change(data, fits, move, 0.01)
        assert abs(change.mean()) < 4 * change.std() / np.sqrt(data.n)

    def test_probe_splits_into_odd_and_even_parts(self, heterogeneous_iv_oracle):
        """The score is quadratic in r, so the probe splits exactly into t and t^2 parts."""
        _, data, fits = heterogeneous_iv_oracle
        move = Perturbation(1, 'treatment', (1, OWN), np.tanh(data.x[:, 0]) + 0.5)
        t = 0.25
        ahead = orthogonality_probe('clate', data, fits, move, t)
        behind = orthogonality_probe('clate', data, fits, move, -t)
        slope = first_order_change(data, fits, move, t)
        assert (ahead - behind) / (2 * t) == pytest.approx(slope.mean(), abs=1e-9)
        assert abs(ahead - behind) < 4 * 2 * t * slope.std() / np.sqrt(data.n)
