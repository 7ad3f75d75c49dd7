"""Tests for the predict command helpers."""

import numpy as np
import pandas as pd
import pytest

from jointcat.commands.predict import (
    new_patient_probabilities,
    thin,
    trajectory_bands,
)
from jointcat.utils.artifacts import FitArtifacts


def make_fit(cohort, mode="joint", n_draws=4, latent=None):
    """FitArtifacts over ``cohort`` with zero coefficients and unit Omega."""
    K, Q, P = 2, cohort.n_categories - 1, cohort.n_covariates
    arrays = {"beta": np.zeros((n_draws, Q, P + 1))}
    if mode == "joint":
        arrays.update(
            alpha=np.zeros((n_draws, Q, K, 3)),
            theta=np.zeros((n_draws, K, 3)),
            sigma2=np.ones((n_draws, K)),
            omega=np.broadcast_to(np.eye(3), (n_draws, K, 3, 3)).copy(),
        )
        if latent is None:
            latent = np.zeros((n_draws, K, cohort.n_patients, 3))
    return FitArtifacts(
        paths=None,
        manifest={"mode": mode},
        cohort=cohort,
        draws=pd.DataFrame({"chain": np.ones(n_draws)}),
        arrays=arrays,
        latent=latent if mode == "joint" else None,
    )


class TestThin:
    """Test cases for thin."""

    def test_keeps_every_draw_under_the_cap(self):
        """Should return all indices when there are few draws."""
        assert thin(5, 10).tolist() == [0, 1, 2, 3, 4]

    def test_spreads_indices_over_the_run(self):
        """Should keep the first and last draw when thinning."""
        kept = thin(1000, 11)

        assert len(kept) == 11
        assert kept[0] == 0 and kept[-1] == 999

    def test_rejects_non_positive_cap(self):
        """Should reject max_draws below one."""
        with pytest.raises(ValueError):
            thin(10, 0)


class TestTrajectoryBands:
    """Test cases for trajectory_bands."""

    def test_finite_bands_for_moderate_characteristics(self, cohort):
        """Should give a finite band that contains the mean."""
        fit = make_fit(cohort)
        pid = cohort.patient_ids[0]

        bands = trajectory_bands(fit, pid, grid_points=5)

        assert len(bands) == 2 * 5
        assert bands[["mean", "ci_low", "ci_high"]].notna().all().all()
        assert (bands["ci_low"] <= bands["mean"] + 1e-12).all()
        assert (bands["mean"] <= bands["ci_high"] + 1e-12).all()

    def test_overflowing_biomarker_gets_nan_band(self, cohort):
        """Should write NaN for the overflowing biomarker and keep the other."""
        latent = np.zeros((4, 2, cohort.n_patients, 3))
        latent[:, 1, 0, 1] = 10.0
        fit = make_fit(cohort, latent=latent)
        pid = cohort.patient_ids[0]

        bands = trajectory_bands(fit, pid, grid_points=5)

        first = bands[bands["biomarker"] == cohort.biomarker_name(1)]
        second = bands[bands["biomarker"] == cohort.biomarker_name(2)]
        assert first["mean"].notna().all()
        assert second[["mean", "ci_low", "ci_high"]].isna().all().all()


class TestNewPatientProbabilities:
    """Test cases for new_patient_probabilities."""

    def test_zero_coefficients_give_uniform_categories(self, cohort):
        """Should give 1/J for every category when beta is zero."""
        fit = make_fit(cohort, mode="categorical")
        X = np.zeros((2, cohort.n_covariates))

        phi = new_patient_probabilities(fit, X, np.random.default_rng(0))

        assert phi.shape == (4, 2, 3)
        np.testing.assert_allclose(phi, 1.0 / 3.0)

    def test_joint_fit_draws_latent_characteristics(self, cohort):
        """Should depend on the latent draw once alpha is nonzero."""
        fit = make_fit(cohort)
        fit.arrays["alpha"][:, 0, 0, 0] = 2.0
        X = np.zeros((3, cohort.n_covariates))

        phi = new_patient_probabilities(fit, X, np.random.default_rng(1))

        assert phi.shape == (4, 3, 3)
        np.testing.assert_allclose(phi.sum(axis=-1), 1.0)
        assert np.ptp(phi[:, :, 0]) > 0.0

    def test_same_seed_gives_same_probabilities(self, cohort):
        """Should be reproducible for a fixed generator seed."""
        fit = make_fit(cohort)
        fit.arrays["alpha"][:, 1, 1, 2] = -1.0
        X = np.zeros((2, cohort.n_covariates))

        first = new_patient_probabilities(fit, X, np.random.default_rng(5))
        second = new_patient_probabilities(fit, X, np.random.default_rng(5))

        np.testing.assert_array_equal(first, second)
