"""Tests for the bi-exponential longitudinal submodel."""

import numpy as np
import pytest
from scipy.stats import norm

from jointcat.model.biexp import (
    BiomarkerParams,
    LatentCharacteristics,
    TrajectoryDivergenceError,
    iwres,
    longitudinal_loglik,
    mean_trajectory,
    trajectory_and_gradient,
)


class TestMeanTrajectory:
    """Test cases for mean_trajectory."""

    def test_starts_at_baseline(self):
        """Should equal B at t = 0."""
        chars = LatentCharacteristics(np.log(18.6), np.log(0.24), np.log(4.76))

        assert mean_trajectory(chars, 0.0) == pytest.approx(18.6)

    def test_matches_closed_form(self):
        """Should evaluate B [exp(G t) + exp(-D t) - 1]."""
        chars = LatentCharacteristics(np.log(2.0), np.log(0.5), np.log(3.0))
        t = np.array([0.5, 1.0, 2.0])
        expected = 2.0 * (np.exp(0.5 * t) + np.exp(-3.0 * t) - 1.0)

        np.testing.assert_allclose(mean_trajectory(chars, t), expected)

    def test_decays_then_regrows(self):
        """Should dip below baseline before regrowth dominates."""
        chars = LatentCharacteristics(0.0, np.log(0.2), np.log(5.0))
        t = np.array([0.0, 0.5, 20.0])
        values = mean_trajectory(chars, t)

        assert values[1] < values[0] < values[2]

    def test_raises_on_overflow(self):
        """Should raise TrajectoryDivergenceError when exp(G t) would overflow."""
        chars = LatentCharacteristics(0.0, np.log(800.0), 0.0)

        with pytest.raises(TrajectoryDivergenceError):
            mean_trajectory(chars, 1.0)

    def test_rejects_negative_time(self):
        """Should reject negative times."""
        chars = LatentCharacteristics(0.0, 0.0, 0.0)

        with pytest.raises(ValueError):
            mean_trajectory(chars, -1.0)

    def test_rejects_non_finite_characteristics(self):
        """Should reject NaN latent characteristics."""
        with pytest.raises(ValueError):
            LatentCharacteristics(np.nan, 0.0, 0.0)


class TestTrajectoryGradient:
    """Test cases for trajectory_and_gradient."""

    def test_gradient_matches_finite_differences(self):
        """Should match central differences in each latent characteristic."""
        rng = np.random.default_rng(3)
        latent = rng.uniform(-0.5, 0.5, size=(5, 3))
        t = rng.uniform(0.0, 2.0, size=5)
        _, dmu = trajectory_and_gradient(latent, t)
        h = 1e-6
        for c in range(3):
            up, down = latent.copy(), latent.copy()
            up[:, c] += h
            down[:, c] -= h
            numeric = (
                trajectory_and_gradient(up, t)[0] - trajectory_and_gradient(down, t)[0]
            ) / (2 * h)
            np.testing.assert_allclose(dmu[:, c], numeric, rtol=1e-6, atol=1e-8)

    def test_returns_none_on_overflow(self):
        """Should signal overflow with None instead of raising."""
        latent = np.array([[0.0, np.log(800.0), 0.0]])

        assert trajectory_and_gradient(latent, np.array([1.0])) is None


class TestBiomarkerParams:
    """Test cases for BiomarkerParams validation."""

    def test_rejects_non_positive_definite_omega(self):
        """Should reject an indefinite covariance."""
        omega = np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]])

        with pytest.raises(ValueError):
            BiomarkerParams(np.zeros(3), 1.0, omega)

    def test_rejects_non_positive_sigma2(self):
        """Should reject a zero residual variance."""
        with pytest.raises(ValueError):
            BiomarkerParams(np.zeros(3), 0.0, np.eye(3))


class TestLongitudinalLoglik:
    """Test cases for longitudinal_loglik."""

    def test_matches_normal_density(self, cohort):
        """Should sum Normal log densities around the fitted means."""
        params = BiomarkerParams(np.array([1.0, -1.0, 0.5]), 0.3, np.eye(3))
        effects = np.zeros((cohort.n_patients, 3))
        mask = cohort.obs_biomarker == 0
        chars = LatentCharacteristics(1.0, -1.0, 0.5)
        mu = mean_trajectory(chars, cohort.obs_time[mask])
        expected = norm.logpdf(cohort.obs_value[mask], mu, np.sqrt(0.3)).sum()

        result = longitudinal_loglik(cohort, params, effects, biomarker=1)

        assert result == pytest.approx(expected)


class TestIwres:
    """Test cases for iwres."""

    def test_scales_residuals_per_biomarker(self, cohort):
        """Should divide residuals by the biomarker's sigma_hat."""
        fitted = cohort.obs_value - 1.0
        table = iwres(cohort, fitted, {1: 0.5, 2: 2.0})

        assert len(table) == cohort.n_observations
        assert list(table.columns) == ["patient_id", "biomarker", "time", "iwres"]
        first = table[table["biomarker"] == 1]["iwres"]
        second = table[table["biomarker"] == 2]["iwres"]
        np.testing.assert_allclose(first, 2.0)
        np.testing.assert_allclose(second, 0.5)

    def test_rejects_misaligned_fits(self, cohort):
        """Should require one fitted value per observation."""
        with pytest.raises(ValueError):
            iwres(cohort, np.zeros(3), 1.0)

    def test_rejects_non_positive_sigma(self, cohort):
        """Should reject a zero sigma_hat."""
        with pytest.raises(ValueError):
            iwres(cohort, cohort.obs_value, 0.0)
