"""Tests for the synthetic cohort generator."""

import json
import os
import tempfile

import numpy as np
import pandas as pd
import pytest

from jointcat.model.biexp import LatentCharacteristics, mean_trajectory
from jointcat.model.posterior import JointPosterior, Mode, constrained_names
from jointcat.model.simulator import (
    DEFAULT_OMEGA,
    CovariateSpec,
    ObservationSchedule,
    SimulationError,
    SimulationScenario,
    default_scenario,
    recovery_check,
    simulate,
    simulate_tables,
    write_simulation,
)
from tests.conftest import make_draws


class TestObservationSchedule:
    """Test cases for ObservationSchedule."""

    def test_renewal_starts_at_zero_within_horizon(self):
        """Should measure at t = 0 and never past the horizon."""
        schedule = ObservationSchedule(rate=4.0, horizon=1.5)
        times = schedule.draw(np.random.default_rng(0))

        assert times[0] == 0.0
        assert np.all(np.diff(times) > 0)
        assert times.max() <= 1.5

    def test_grid_returns_sorted_unique_times(self):
        """Should give everyone the same sorted grid."""
        schedule = ObservationSchedule(kind="grid", times=(1.0, 0.0, 0.5, 1.0))

        assert schedule.draw(np.random.default_rng(0)).tolist() == [0.0, 0.5, 1.0]

    def test_rejects_unknown_kind(self):
        """Should only accept renewal or grid schedules."""
        with pytest.raises(SimulationError):
            ObservationSchedule(kind="weekly")

    def test_rejects_negative_grid_time(self):
        """Should reject negative grid times."""
        with pytest.raises(SimulationError):
            ObservationSchedule(kind="grid", times=(-1.0, 0.0))


class TestCovariateSpec:
    """Test cases for CovariateSpec."""

    def test_factor_probabilities_must_sum_to_one(self):
        """Should reject factor probabilities that do not sum to 1."""
        with pytest.raises(SimulationError):
            CovariateSpec(
                "ecog", kind="factor", levels=("0", "1"), probabilities=(0.5, 0.4)
            )

    def test_lognormal_values_are_positive(self):
        """Should draw nonnegative laboratory-like values."""
        spec = CovariateSpec("ldh", mean=1.0, sd=0.5)
        values = spec.draw(200, np.random.default_rng(1))

        assert len(values) == 200
        assert min(values) > 0.0

    def test_missing_rate_blanks_values(self):
        """Should blank roughly missing_rate of the draws."""
        spec = CovariateSpec("ldh", missing_rate=0.5)
        values = spec.draw(1000, np.random.default_rng(2))

        share = sum(v is None for v in values) / 1000
        assert 0.4 < share < 0.6


class TestSimulationScenario:
    """Test cases for SimulationScenario validation."""

    def test_default_scenario_derives_beta(self):
        """Should build beta from the default design and association."""
        scenario = default_scenario(n_patients=10)

        assert scenario.beta.shape == (2, 5)
        assert scenario.n_covariate_columns == 4

    def test_requires_beta_for_custom_design(self):
        """Should refuse to guess beta for a non-default covariate set."""
        with pytest.raises(SimulationError):
            SimulationScenario(covariates=(CovariateSpec("x1"),))

    def test_rejects_misshapen_beta(self):
        """Should check beta against the category count and design width."""
        with pytest.raises(SimulationError) as exc_info:
            SimulationScenario(beta=np.zeros((2, 3)))

        assert "beta must have shape (2, 5)" in str(exc_info.value)

    def test_rejects_non_spd_omega(self):
        """Should name the biomarker with an invalid covariance."""
        omega = DEFAULT_OMEGA.copy()
        omega[1] = -np.eye(3)

        with pytest.raises(SimulationError) as exc_info:
            SimulationScenario(omega=omega)

        assert "biomarker 2" in str(exc_info.value)

    def test_rejects_duplicate_covariate_names(self):
        """Should require unique covariate names."""
        with pytest.raises(SimulationError):
            SimulationScenario(
                covariates=(CovariateSpec("x1"), CovariateSpec("x1")),
                beta=np.zeros((2, 3)),
            )

    def test_from_mapping_keeps_defaults_for_absent_keys(self):
        """Should override only the keys present in the mapping."""
        scenario = SimulationScenario.from_mapping(
            {
                "n_patients": 12,
                "seed": 5,
                "schedule": {"kind": "grid", "times": [0, 1]},
            }
        )

        assert scenario.n_patients == 12
        assert scenario.seed == 5
        assert scenario.schedule.times == (0.0, 1.0)
        np.testing.assert_allclose(scenario.omega, DEFAULT_OMEGA)

    def test_from_mapping_rejects_unknown_fields(self):
        """Should turn unexpected schedule fields into SimulationError."""
        with pytest.raises(SimulationError):
            SimulationScenario.from_mapping({"schedule": {"kind": "grid", "every": 2}})

    def test_to_dict_round_trips(self):
        """Should rebuild an equivalent scenario from its dictionary."""
        scenario = default_scenario(n_patients=15, seed=3)

        rebuilt = SimulationScenario.from_mapping(scenario.to_dict())

        assert rebuilt.to_dict() == scenario.to_dict()


class TestSimulate:
    """Test cases for simulate_tables and simulate."""

    def test_same_seed_gives_same_tables(self):
        """Should be reproducible from the scenario seed."""
        scenario = default_scenario(n_patients=40, seed=11)

        first = simulate_tables(scenario)
        second = simulate_tables(scenario)

        pd.testing.assert_frame_equal(first[0], second[0])
        pd.testing.assert_frame_equal(first[1], second[1])
        np.testing.assert_allclose(first[2].phi, second[2].phi)

    def test_tables_read_back_as_cohort(self):
        """Should produce tables that load under the scenario's schema."""
        scenario = default_scenario(n_patients=40, seed=11)

        cohort, truth = simulate(scenario)

        assert cohort.n_patients == 40
        assert cohort.covariate_names == ("x1", "x2", "ecog[1]", "ecog[2+]")
        assert set(np.unique(cohort.treatments)) <= {1, 2, 3}
        assert truth.latent.shape == (2, 40, 3)
        np.testing.assert_allclose(truth.phi.sum(axis=1), 1.0)

    def test_every_patient_measured_at_baseline(self):
        """Should give each patient a t = 0 measurement of both biomarkers."""
        longitudinal, _, _ = simulate_tables(default_scenario(n_patients=40, seed=2))
        at_zero = longitudinal[longitudinal["time"] == 0.0]

        assert len(at_zero) == 2 * 40

    def test_truth_keys_match_draw_names(self):
        """Should key the population truth like the posterior draws."""
        _, truth = simulate(default_scenario(n_patients=40, seed=11))

        expected = constrained_names(Mode.JOINT, truth.covariate_names, 3)
        assert list(truth.population_values(Mode.JOINT)) == expected
        values = truth.population_values(Mode.JOINT)
        assert values["omega.k1.12"] == pytest.approx(DEFAULT_OMEGA[0][0, 1])

    def test_without_association_treatment_ignores_latent(self):
        """Should allow alpha = None and report zero association truth."""
        scenario = SimulationScenario(
            n_patients=40, seed=4, alpha=None, beta=np.zeros((2, 5))
        )

        _, truth = simulate(scenario)

        np.testing.assert_allclose(truth.phi, 1.0 / 3.0)
        values = truth.population_values(Mode.JOINT)
        assert values["alpha.j1.k1.baseline"] == 0.0


@pytest.fixture(scope="module")
def large_simulation():
    """Default scenario at n = 5000."""
    return simulate_tables(default_scenario(n_patients=5000, seed=3))


class TestSimulatorProperties:
    """Distributional checks of the generative model."""

    def test_random_effect_moments_match_omega(self, large_simulation):
        """Should reproduce zero means and Omega within four standard errors."""
        effects = large_simulation[2].params.effects
        n = effects.shape[1]

        for k, omega in enumerate(DEFAULT_OMEGA):
            variances = np.diag(omega)
            mean_se = np.sqrt(variances / n)
            cov_se = np.sqrt((np.outer(variances, variances) + omega**2) / n)

            assert np.all(np.abs(effects[k].mean(axis=0)) < 4 * mean_se)
            assert np.all(np.abs(np.cov(effects[k].T) - omega) < 4 * cov_se)

    def test_baseline_measurement_has_unit_slope(self, large_simulation):
        """Should regress y(0) on exp(B*) with slope 1 +- 0.05."""
        longitudinal, _, truth = large_simulation
        index = {pid: i for i, pid in enumerate(truth.patient_ids)}
        at_zero = longitudinal[longitudinal["time"] == 0.0]

        for k in (1, 2):
            rows = at_zero[at_zero["biomarker"] == k]
            patients = rows["patient_id"].map(index).to_numpy()
            baseline = np.exp(truth.latent[k - 1, patients, 0])
            slope = np.polyfit(baseline, rows["value"].to_numpy(), 1)[0]

            assert slope == pytest.approx(1.0, abs=0.05)

    def test_noiseless_limit_reproduces_mean_trajectory(self):
        """Should put observations on the mean curve when sigma2 is 1e-12."""
        scenario = SimulationScenario(
            n_patients=50, seed=8, sigma2=np.full(2, 1e-12)
        )
        longitudinal, _, truth = simulate_tables(scenario)
        index = {pid: i for i, pid in enumerate(truth.patient_ids)}

        for k in (1, 2):
            rows = longitudinal[longitudinal["biomarker"] == k]
            patients = rows["patient_id"].map(index).to_numpy()
            chars = LatentCharacteristics.from_array(truth.latent[k - 1, patients])
            expected = mean_trajectory(chars, rows["time"].to_numpy())

            np.testing.assert_allclose(
                rows["value"].to_numpy(), expected, rtol=0.0, atol=1e-5
            )

    def test_zero_coefficients_give_uniform_treatments(self):
        """Should draw each of three categories about a third of the time."""
        scenario = SimulationScenario(
            n_patients=3000, seed=6, alpha=None, beta=np.zeros((2, 5))
        )

        _, baseline, _ = simulate_tables(scenario)

        frequencies = baseline["treatment"].value_counts(normalize=True)
        np.testing.assert_allclose(frequencies.sort_index(), 1.0 / 3.0, atol=0.035)

    def test_zero_association_matches_no_sharing(self):
        """Should give the same treatments and categorical likelihood as alpha None."""
        beta = default_scenario().beta
        shared = SimulationScenario(
            n_patients=40, seed=12, beta=beta, alpha=np.zeros((2, 2, 3))
        )
        unshared = SimulationScenario(n_patients=40, seed=12, beta=beta, alpha=None)

        cohort, truth = simulate(shared)
        _, _, plain = simulate_tables(unshared)

        np.testing.assert_array_equal(truth.phi, plain.phi)
        joint = JointPosterior(cohort, Mode.JOINT)
        categorical = JointPosterior(cohort, Mode.CATEGORICAL_ONLY)
        joint_terms = joint.components(joint.unconstrain(truth.params))
        categorical_terms = categorical.components(truth.params.beta.ravel())
        assert joint_terms["categorical"] == pytest.approx(
            categorical_terms["categorical"], rel=1e-12
        )


class TestWriteSimulation:
    """Test cases for write_simulation."""

    def test_writes_inputs_truth_and_scenario(self):
        """Should write both CSV inputs, truth.json and scenario.json."""
        scenario = default_scenario(n_patients=40, seed=11)
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_simulation(scenario, os.path.join(tmp, "sim"))

            assert sorted(paths) == ["baseline", "longitudinal", "scenario", "truth"]
            for path in paths.values():
                assert path.exists()
            baseline = pd.read_csv(paths["baseline"])
            truth = json.loads(paths["truth"].read_text())

        columns = ["patient_id", "x1", "x2", "ecog", "treatment"]
        assert list(baseline.columns) == columns
        assert len(truth["patients"]) == 40
        assert "theta.k1.baseline" in truth["population"]


class TestRecoveryCheck:
    """Test cases for recovery_check."""

    def test_flags_values_outside_interval(self):
        """Should mark a truth far outside the draws as missed."""
        rng = np.random.default_rng(0)
        frame = pd.DataFrame({"a": rng.normal(size=2000), "b": rng.normal(size=2000)})

        report = recovery_check({"a": 0.0, "b": 5.0, "absent": 1.0}, frame)

        assert report.missed == ["b"]
        assert report.coverage == pytest.approx(0.5)
        assert report.to_dict()["n_parameters"] == 2

    def test_refuses_non_converged_draws(self):
        """Should raise NonConvergedError before computing coverage."""
        from jointcat.inference.diagnostics import NonConvergedError

        rng = np.random.default_rng(1)
        values = rng.normal(size=(2, 200, 1))
        values[1] += 5.0

        with pytest.raises(NonConvergedError):
            recovery_check({"x1": 0.0}, make_draws(values))
