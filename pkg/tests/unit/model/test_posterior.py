"""Tests for the joint log posterior and its parameter transforms."""

import numpy as np
import pandas as pd
import pytest
from scipy.stats import invwishart

from jointcat.model.data_model import Cohort
from jointcat.model.posterior import (
    GradientUndefinedError,
    JointPosterior,
    Mode,
    ModelParameters,
    Parameterization,
    ParameterLayout,
    PriorConfig,
    constrain,
    constrained_names,
    draw_arrays,
    grad_log_posterior,
    inverse_wishart_logpdf,
    log_jacobian,
    log_prior,
    transform,
)


def finite_difference(posterior, u, h=1e-5):
    numeric = np.empty_like(u)
    for i in range(u.size):
        up, down = u.copy(), u.copy()
        up[i] += h
        down[i] -= h
        numeric[i] = (posterior(up) - posterior(down)) / (2 * h)
    return numeric


class TestMode:
    """Test cases for Mode.parse."""

    def test_accepts_short_alias(self):
        """Should read 'categorical' as the categorical-only mode."""
        assert Mode.parse("categorical") is Mode.CATEGORICAL_ONLY
        assert Mode.parse("Categorical-Only") is Mode.CATEGORICAL_ONLY
        assert Mode.parse(Mode.JOINT) is Mode.JOINT

    def test_rejects_unknown_mode(self):
        """Should name the accepted modes in the error."""
        with pytest.raises(ValueError) as exc_info:
            Mode.parse("survival")

        assert "joint or categorical" in str(exc_info.value)


class TestPriorConfig:
    """Test cases for PriorConfig validation."""

    def test_rejects_non_positive_scale(self):
        """Should reject a zero coefficient sd."""
        with pytest.raises(ValueError):
            PriorConfig(coef_sd=0.0)

    def test_rejects_improper_inverse_wishart(self):
        """Should need more than two degrees of freedom."""
        with pytest.raises(ValueError):
            PriorConfig(omega_df=2.0)


class TestInverseWishart:
    """Test cases for inverse_wishart_logpdf."""

    def test_matches_scipy(self):
        """Should agree with scipy's inverse-Wishart density."""
        omega = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 0.5]])

        expected = invwishart.logpdf(omega, df=4, scale=np.eye(3))

        assert inverse_wishart_logpdf(omega, 4.0, 1.0) == pytest.approx(expected)


class TestParameterLayout:
    """Test cases for ParameterLayout."""

    def test_joint_layout_size(self, toy_cohort):
        """Should count every population block and random effect."""
        layout = ParameterLayout.for_cohort(toy_cohort, Mode.JOINT)
        P, n = toy_cohort.n_covariates, toy_cohort.n_patients

        assert layout.size == 6 + 2 + 12 + 2 * n * 3 + 2 * (P + 1) + 2 * 2 * 3

    def test_categorical_layout_holds_beta_only(self, toy_cohort):
        """Should only hold the categorical coefficients."""
        layout = ParameterLayout.for_cohort(toy_cohort, "categorical")

        assert list(layout.shapes) == ["beta"]
        assert layout.size == 2 * (toy_cohort.n_covariates + 1)

    def test_unpack_rejects_wrong_length(self, toy_cohort):
        """Should reject vectors of the wrong length."""
        layout = ParameterLayout.for_cohort(toy_cohort)

        with pytest.raises(ValueError):
            layout.unpack(np.zeros(layout.size + 1))


class TestGradient:
    """Test cases for the analytic gradient."""

    @pytest.mark.parametrize("mode", [Mode.JOINT, Mode.CATEGORICAL_ONLY])
    @pytest.mark.parametrize(
        "parameterization",
        [Parameterization.NONCENTERED, Parameterization.CENTERED],
    )
    def test_matches_finite_differences(self, toy_cohort, mode, parameterization):
        """Should match central differences at 100 random points."""
        posterior = JointPosterior(toy_cohort, mode, parameterization)
        rng = np.random.default_rng(7)
        for _ in range(100):
            u = rng.uniform(-0.5, 0.5, posterior.n_parameters)
            value, grad = posterior.evaluate_with_gradient(u)
            numeric = finite_difference(posterior, u)

            assert np.isfinite(value)
            error = np.linalg.norm(grad - numeric) / max(np.linalg.norm(grad), 1.0)
            assert error < 1e-5

    def test_returns_minus_inf_for_non_finite_input(self, toy_cohort):
        """Should give (-inf, zeros) at a non-finite point."""
        posterior = JointPosterior(toy_cohort)
        u = np.zeros(posterior.n_parameters)
        u[0] = np.nan

        value, grad = posterior.evaluate_with_gradient(u)

        assert value == -np.inf
        assert not grad.any()

    def test_returns_minus_inf_when_trajectory_overflows(self, toy_cohort):
        """Should treat an overflowing regrowth rate as zero density."""
        posterior = JointPosterior(toy_cohort)
        u = np.zeros(posterior.n_parameters)
        u[posterior.layout.slices["theta"].start + 1] = 8.0

        assert posterior(u) == -np.inf
        with pytest.raises(GradientUndefinedError):
            grad_log_posterior(u, toy_cohort)


class TestComponents:
    """Test cases for the additive log posterior terms."""

    def test_terms_sum_to_value(self, toy_cohort):
        """Should decompose the value into its named terms."""
        posterior = JointPosterior(toy_cohort)
        u = np.random.default_rng(2).uniform(-0.5, 0.5, posterior.n_parameters)
        terms = posterior.components(u)

        assert set(terms) == {
            "prior",
            "jacobian",
            "random_effects",
            "longitudinal.k1",
            "longitudinal.k2",
            "categorical",
        }
        assert sum(terms.values()) == pytest.approx(posterior(u))

    def test_prior_and_jacobian_match_constrained_space(self, toy_cohort):
        """Should agree with log_prior and log_jacobian of the same point."""
        posterior = JointPosterior(toy_cohort)
        u = np.random.default_rng(3).uniform(-0.5, 0.5, posterior.n_parameters)
        terms = posterior.components(u)

        assert terms["prior"] == pytest.approx(log_prior(posterior.constrain(u)))
        assert terms["jacobian"] == pytest.approx(log_jacobian(u, posterior.layout))

    def test_parameterizations_differ_by_effects_jacobian(self, toy_cohort):
        """Should differ only in the random-effects term, by n sum log|L_kk|."""
        noncentered = JointPosterior(toy_cohort, parameterization="noncentered")
        centered = JointPosterior(toy_cohort, parameterization="centered")
        u = np.random.default_rng(4).uniform(-0.5, 0.5, noncentered.n_parameters)
        params = noncentered.constrain(u)
        a = noncentered.components(u)
        b = centered.components(centered.unconstrain(params))

        L = np.linalg.cholesky(params.omega)
        log_det = np.log(np.diagonal(L, axis1=1, axis2=2)).sum()
        n = toy_cohort.n_patients
        assert b["random_effects"] - a["random_effects"] == pytest.approx(
            -n * log_det
        )
        for name in ("longitudinal.k1", "longitudinal.k2", "categorical", "prior"):
            assert b[name] == pytest.approx(a[name])

    def test_categorical_only_at_zero_is_uniform(self, toy_cohort):
        """Should give n log(1/3) when every coefficient is zero."""
        posterior = JointPosterior(toy_cohort, "categorical")
        terms = posterior.components(np.zeros(posterior.n_parameters))

        assert terms["categorical"] == pytest.approx(
            toy_cohort.n_patients * np.log(1 / 3)
        )


class TestLogJacobian:
    """Test cases for log_jacobian against a numerical Jacobian."""

    @staticmethod
    def constrained_entries(u, layout):
        params = constrain(u, layout)
        rows, cols = np.tril_indices(3)
        entries = params.omega[:, rows, cols].ravel()
        return np.concatenate([params.sigma2, entries])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_numerical_determinant(self, seed):
        """Should equal log|det J| of (log sigma2, raw Cholesky) -> (sigma2, Omega)."""
        rng = np.random.default_rng(seed)
        A = 0.5 * rng.standard_normal((2, 3, 3))
        omega = A @ np.swapaxes(A, -1, -2) + 0.5 * np.eye(3)
        params = ModelParameters(
            beta=np.zeros((2, 1)),
            alpha=np.zeros((2, 2, 3)),
            theta=np.zeros((2, 3)),
            sigma2=rng.uniform(0.2, 2.0, 2),
            omega=omega,
            effects=np.zeros((2, 1, 3)),
        )
        u, log_det = transform(params)
        layout = ParameterLayout.for_parameters(params)
        slices = layout.slices
        free = np.r_[
            np.arange(layout.size)[slices["log_sigma2"]],
            np.arange(layout.size)[slices["chol"]],
        ]

        h = 1e-5
        jacobian = np.empty((free.size, free.size))
        for col, i in enumerate(free):
            up, down = u.copy(), u.copy()
            up[i] += h
            down[i] -= h
            jacobian[:, col] = (
                self.constrained_entries(up, layout)
                - self.constrained_entries(down, layout)
            ) / (2 * h)

        sign, numeric = np.linalg.slogdet(jacobian)
        assert sign != 0
        assert log_det == pytest.approx(numeric, abs=1e-6)
        assert log_jacobian(u, layout) == pytest.approx(log_det)


def split_cohort(cohort, ids):
    """Sub-cohort of ``ids`` keeping the parent's treated covariates."""
    index = [cohort.patient_index[pid] for pid in ids]
    keep = set(ids)
    return Cohort.from_arrays(
        patient_ids=list(ids),
        X=np.asarray(cohort.X)[index],
        treatments=np.asarray(cohort.treatments)[index],
        observations=[o for o in cohort.observations if o.patient_id in keep],
        covariate_names=cohort.covariate_names,
        covariate_groups=cohort.covariate_groups,
        n_categories=cohort.n_categories,
    )


class TestAdditivity:
    """Test cases for the log posterior over disjoint cohorts."""

    @pytest.mark.parametrize("mode", [Mode.JOINT, Mode.CATEGORICAL_ONLY])
    @pytest.mark.parametrize(
        "parameterization",
        [Parameterization.NONCENTERED, Parameterization.CENTERED],
    )
    def test_likelihood_adds_and_prior_counts_once(
        self, cohort, mode, parameterization
    ):
        """Should equal the sum over halves minus one copy of prior and Jacobian."""
        full = JointPosterior(cohort, mode, parameterization)
        u = np.random.default_rng(9).uniform(-0.5, 0.5, full.n_parameters)
        params = full.constrain(u)
        shared = full.components(u)
        halves = [cohort.patient_ids[:3], cohort.patient_ids[3:]]

        total = 0.0
        for ids in halves:
            part = JointPosterior(split_cohort(cohort, ids), mode, parameterization)
            if params.is_joint:
                index = [cohort.patient_index[pid] for pid in ids]
                part_params = ModelParameters(
                    beta=params.beta,
                    alpha=params.alpha,
                    theta=params.theta,
                    sigma2=params.sigma2,
                    omega=params.omega,
                    effects=params.effects[:, index],
                )
            else:
                part_params = params
            total += part.log_density_at(part_params)

        expected = full(u) + shared["prior"] + shared["jacobian"]
        assert total == pytest.approx(expected, rel=1e-9)


class TestTransforms:
    """Test cases for constrain/unconstrain and the stored draws."""

    def test_unconstrain_inverts_constrain(self, toy_cohort):
        """Should recover the unconstrained vector from its parameters."""
        posterior = JointPosterior(toy_cohort)
        u = np.random.default_rng(5).uniform(-0.5, 0.5, posterior.n_parameters)

        np.testing.assert_allclose(posterior.unconstrain(posterior.constrain(u)), u)

    def test_log_density_at_ignores_unused_blocks(self, toy_cohort):
        """Should evaluate joint parameters under the categorical-only model."""
        joint = JointPosterior(toy_cohort)
        categorical = JointPosterior(toy_cohort, "categorical")
        u = np.random.default_rng(6).uniform(-0.5, 0.5, joint.n_parameters)
        params = joint.constrain(u)

        expected = categorical(params.beta.ravel())
        assert categorical.log_density_at(params) == pytest.approx(expected)

    def test_rejects_non_spd_omega(self):
        """Should reject an indefinite random-effects covariance."""
        omega = -np.eye(3)[np.newaxis]
        with pytest.raises(ValueError):
            ModelParameters(
                beta=np.zeros((2, 2)),
                theta=np.zeros((1, 3)),
                sigma2=np.ones(1),
                omega=omega,
                effects=np.zeros((1, 2, 3)),
            )

    def test_constrained_draw_round_trips_through_draw_arrays(self, toy_cohort):
        """Should rebuild beta, alpha and symmetric Omega from named columns."""
        posterior = JointPosterior(toy_cohort)
        rng = np.random.default_rng(8)
        us = rng.uniform(-0.5, 0.5, size=(3, posterior.n_parameters))
        frame = pd.DataFrame(
            [posterior.constrained_draw(u) for u in us], columns=posterior.names
        )

        arrays = draw_arrays(
            frame, Mode.JOINT, toy_cohort.covariate_names, toy_cohort.n_categories
        )

        for s, u in enumerate(us):
            params = posterior.constrain(u)
            np.testing.assert_allclose(arrays["beta"][s], params.beta)
            np.testing.assert_allclose(arrays["alpha"][s], params.alpha)
            np.testing.assert_allclose(arrays["sigma2"][s], params.sigma2)
            np.testing.assert_allclose(arrays["omega"][s], params.omega)

    def test_draw_arrays_reports_missing_columns(self, toy_cohort):
        """Should raise KeyError naming absent draw columns."""
        frame = pd.DataFrame({"beta.j1.intercept": [0.0]})

        with pytest.raises(KeyError):
            draw_arrays(frame, "categorical", toy_cohort.covariate_names, 3)

    def test_names_follow_storage_order(self, toy_cohort):
        """Should list theta, sigma2, omega, beta then alpha."""
        names = constrained_names(Mode.JOINT, ("age",), 3)

        assert names[0] == "theta.k1.baseline"
        assert names[6] == "sigma2.k1"
        assert names[8] == "omega.k1.11"
        assert names[20:22] == ["beta.j1.intercept", "beta.j1.age"]
        assert names[-1] == "alpha.j2.k2.decay"
        assert len(names) == 6 + 2 + 12 + 4 + 12

    def test_latent_draw_is_none_for_categorical_only(self, toy_cohort):
        """Should expose no latent characteristics without the longitudinal part."""
        posterior = JointPosterior(toy_cohort, "categorical")

        assert posterior.latent_draw(np.zeros(posterior.n_parameters)) is None
