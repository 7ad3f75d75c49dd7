"""Joint log posterior over an unconstrained parameter vector.

The target combines the bi-exponential likelihood of both biomarkers, the
categorical likelihood with shared latent characteristics, the random-effects
densities and the priors:

    theta, beta, alpha ~ Normal(0, 10^2)
    sigma2_k           ~ half-Cauchy(0, 5)        (on the variance)
    Omega_k            ~ inverse-Wishart(I_3, 4)

Constrained blocks are mapped to the real line (sigma2 -> log sigma2, Omega -> its
Cholesky factor with log-diagonal) and the log-Jacobian of that map is added to the
density. Gradients are analytic.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular
from scipy.special import multigammaln

from jointcat.model.biexp import (
    CHARACTERISTICS,
    LOG_2PI,
    BiomarkerParams,
    trajectory_and_gradient,
)
from jointcat.model.categorical import CategoricalParams, log_probabilities
from jointcat.model.data_model import N_BIOMARKERS, Cohort

logger = logging.getLogger(__name__)

TRIL = np.tril_indices(3)
DIAG_POSITIONS = (0, 2, 5)
OMEGA_ENTRIES = ("11", "12", "13", "22", "23", "33")
_OMEGA_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
# Exponent of L_jj in the log-Jacobian of raw -> Omega (3x3, log-diagonal).
_CHOL_JACOBIAN_COEF = np.array([4.0, 3.0, 2.0])


class GradientUndefinedError(ArithmeticError):
    """Raised when the gradient is requested where the log posterior is -inf."""


class Mode(str, Enum):
    JOINT = "joint"
    CATEGORICAL_ONLY = "categorical_only"

    @classmethod
    def parse(cls, value: Union[str, "Mode"]) -> "Mode":
        """Accept enum members, their values and the short alias 'categorical'."""
        if isinstance(value, Mode):
            return value
        text = str(value).strip().lower().replace("-", "_")
        if text == "categorical":
            return cls.CATEGORICAL_ONLY
        try:
            return cls(text)
        except ValueError:
            raise ValueError(
                f"Unknown model mode '{value}' (expected joint or categorical)"
            ) from None


class Parameterization(str, Enum):
    NONCENTERED = "noncentered"
    CENTERED = "centered"


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the weakly informative priors."""

    coef_sd: float = 10.0
    sigma2_scale: float = 5.0
    omega_df: float = 4.0
    omega_scale: float = 1.0

    def __post_init__(self):
        if self.coef_sd <= 0 or self.sigma2_scale <= 0 or self.omega_scale <= 0:
            raise ValueError("prior scales must be positive")
        if self.omega_df <= 2:
            raise ValueError(f"omega_df must exceed 2 (got {self.omega_df})")


@dataclass(frozen=True, eq=False)
class ModelParameters:
    """All model parameters and random effects in constrained space.

    Longitudinal blocks are None for the categorical-only model.

    Attributes:
        beta: (J-1, P+1) categorical coefficients, intercept first
        alpha: (J-1, K, 3) association coefficients
        theta: (K, 3) population log-characteristics
        sigma2: (K,) residual variances
        omega: (K, 3, 3) random-effects covariances
        effects: (K, n, 3) random effects b_ki
    """

    beta: np.ndarray
    alpha: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    sigma2: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    effects: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_2d(np.asarray(self.beta, float)))
        for name in ("alpha", "theta", "sigma2", "omega", "effects"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, np.asarray(value, dtype=float))
        longitudinal = [self.theta, self.sigma2, self.omega, self.effects]
        if any(v is None for v in longitudinal) and any(
            v is not None for v in longitudinal
        ):
            raise ValueError("theta, sigma2, omega and effects must be given together")
        if self.sigma2 is not None:
            if np.any(~(self.sigma2 > 0)):
                raise ValueError("sigma2 must be positive")
            for k, omega in enumerate(self.omega):
                symmetric = np.allclose(omega, omega.T)
                if not symmetric or np.linalg.eigvalsh(omega).min() <= 0:
                    raise ValueError(f"omega for biomarker {k + 1} is not SPD")

    @property
    def is_joint(self) -> bool:
        return self.theta is not None

    @property
    def latent(self) -> Optional[np.ndarray]:
        """(K, n, 3) latent characteristics theta_k + b_ki."""
        if not self.is_joint:
            return None
        return self.theta[:, np.newaxis, :] + self.effects

    def biomarker(self, k: int) -> BiomarkerParams:
        """Population parameters of 1-based biomarker k."""
        if not self.is_joint:
            raise ValueError("categorical-only parameters have no biomarker block")
        return BiomarkerParams(
            self.theta[k - 1], float(self.sigma2[k - 1]), self.omega[k - 1]
        )

    def categorical(self) -> CategoricalParams:
        return CategoricalParams(self.beta, self.alpha)


@dataclass(frozen=True)
class ParameterLayout:
    """Maps block names to slices of the unconstrained vector.

    Joint blocks are theta (K,3), log_sigma2 (K,), chol (K,6) in row-major
    lower-triangular order with log-diagonal, effects (K,n,3), beta (Q,P+1) and
    alpha (Q,K,3). The categorical-only layout holds beta alone.
    """

    mode: Mode
    n_patients: int
    n_covariates: int
    n_categories: int
    n_biomarkers: int = N_BIOMARKERS

    @classmethod
    def for_cohort(
        cls, cohort: Cohort, mode: Union[str, Mode] = Mode.JOINT
    ) -> "ParameterLayout":
        return cls(
            Mode.parse(mode),
            cohort.n_patients,
            cohort.n_covariates,
            cohort.n_categories,
        )

    @classmethod
    def for_parameters(cls, params: ModelParameters) -> "ParameterLayout":
        Q, width = params.beta.shape
        if params.is_joint:
            K, n, _ = params.effects.shape
            return cls(Mode.JOINT, n, width - 1, Q + 1, K)
        return cls(Mode.CATEGORICAL_ONLY, 0, width - 1, Q + 1)

    @property
    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        K, Q = self.n_biomarkers, self.n_categories - 1
        beta = (Q, self.n_covariates + 1)
        if self.mode is Mode.CATEGORICAL_ONLY:
            return {"beta": beta}
        return {
            "theta": (K, 3),
            "log_sigma2": (K,),
            "chol": (K, 6),
            "effects": (K, self.n_patients, 3),
            "beta": beta,
            "alpha": (Q, K, 3),
        }

    @property
    def slices(self) -> Dict[str, slice]:
        out, start = {}, 0
        for name, shape in self.shapes.items():
            stop = start + int(np.prod(shape))
            out[name] = slice(start, stop)
            start = stop
        return out

    @property
    def size(self) -> int:
        return sum(int(np.prod(shape)) for shape in self.shapes.values())

    def unpack(self, u: np.ndarray) -> Dict[str, np.ndarray]:
        """Reshaped views of each block (writes go through to ``u``)."""
        if u.shape != (self.size,):
            raise ValueError(f"expected a vector of length {self.size} (got {u.shape})")
        shapes = self.shapes
        return {name: u[sl].reshape(shapes[name]) for name, sl in self.slices.items()}


def _cholesky_from_raw(raw: np.ndarray) -> np.ndarray:
    """(K, 6) raw values -> (K, 3, 3) lower-triangular factors."""
    L = np.zeros(raw.shape[:-1] + (3, 3))
    L[..., TRIL[0], TRIL[1]] = raw
    for j, pos in enumerate(DIAG_POSITIONS):
        L[..., j, j] = np.exp(raw[..., pos])
    return L


def _raw_from_omega(omega: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(omega)
    raw = L[..., TRIL[0], TRIL[1]].copy()
    for j, pos in enumerate(DIAG_POSITIONS):
        raw[..., pos] = np.log(L[..., j, j])
    return raw


def _normal_logpdf(x: np.ndarray, sd: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * np.log(2.0 * np.pi * sd**2) - 0.5 * x**2 / sd**2))


def _half_cauchy_logpdf(x: np.ndarray, scale: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.log(2.0 / (np.pi * scale)) - np.log1p((x / scale) ** 2)))


def inverse_wishart_logpdf(
    omega: np.ndarray, df: float = 4.0, scale: float = 1.0
) -> float:
    """Inverse-Wishart(scale * I_p, df) log-density of one SPD matrix.

    Uses the convention E[Omega] = Psi / (df - p - 1).
    """
    L = np.linalg.cholesky(np.asarray(omega, dtype=float))
    return _inverse_wishart_chol(L, df, scale)


def _inverse_wishart_chol(L: np.ndarray, df: float, scale: float) -> float:
    p = L.shape[0]
    M = solve_triangular(L, np.eye(p), lower=True)
    return float(
        0.5 * df * p * np.log(scale)
        - 0.5 * df * p * np.log(2.0)
        - multigammaln(0.5 * df, p)
        - (df + p + 1) * np.sum(np.log(np.diag(L)))
        - 0.5 * scale * np.sum(M**2)
    )


def log_prior(params: ModelParameters, prior: PriorConfig = PriorConfig()) -> float:
    """Sum of marginal prior log-densities in constrained space."""
    total = _normal_logpdf(params.beta, prior.coef_sd)
    if params.alpha is not None:
        total += _normal_logpdf(params.alpha, prior.coef_sd)
    if params.is_joint:
        total += _normal_logpdf(params.theta, prior.coef_sd)
        total += _half_cauchy_logpdf(params.sigma2, prior.sigma2_scale)
        for omega in params.omega:
            total += inverse_wishart_logpdf(omega, prior.omega_df, prior.omega_scale)
    return total


def unconstrain(
    params: ModelParameters,
    parameterization: Parameterization = Parameterization.NONCENTERED,
) -> np.ndarray:
    """Map constrained parameters to the flat unconstrained vector.

    Raises:
        numpy.linalg.LinAlgError: If an Omega is not positive definite
    """
    layout = ParameterLayout.for_parameters(params)
    u = np.zeros(layout.size)
    blocks = layout.unpack(u)
    blocks["beta"][...] = params.beta
    if not params.is_joint:
        return u
    blocks["theta"][...] = params.theta
    blocks["log_sigma2"][...] = np.log(params.sigma2)
    blocks["chol"][...] = _raw_from_omega(params.omega)
    if params.alpha is not None:
        blocks["alpha"][...] = params.alpha
    if Parameterization(parameterization) is Parameterization.NONCENTERED:
        L = np.linalg.cholesky(params.omega)
        for k in range(layout.n_biomarkers):
            if layout.n_patients:
                blocks["effects"][k] = solve_triangular(
                    L[k], params.effects[k].T, lower=True
                ).T
    else:
        blocks["effects"][...] = params.effects
    return u


def constrain(
    u: np.ndarray,
    layout: ParameterLayout,
    parameterization: Parameterization = Parameterization.NONCENTERED,
) -> ModelParameters:
    """Inverse of :func:`unconstrain`."""
    blocks = layout.unpack(np.asarray(u, dtype=float))
    if layout.mode is Mode.CATEGORICAL_ONLY:
        return ModelParameters(beta=blocks["beta"].copy())
    L = _cholesky_from_raw(blocks["chol"])
    effects = _effects(blocks["effects"], L, parameterization)
    return ModelParameters(
        beta=blocks["beta"].copy(),
        alpha=blocks["alpha"].copy(),
        theta=blocks["theta"].copy(),
        sigma2=np.exp(blocks["log_sigma2"]),
        omega=L @ np.swapaxes(L, -1, -2),
        effects=effects,
    )


def log_jacobian(u: np.ndarray, layout: ParameterLayout) -> float:
    """log|det J| of the unconstrained -> constrained map for sigma2 and Omega.

    With the non-centered parameterization the random-effects Jacobian is folded
    into the standard-normal density of the raw effects.
    """
    if layout.mode is Mode.CATEGORICAL_ONLY:
        return 0.0
    blocks = layout.unpack(np.asarray(u, dtype=float))
    diag = blocks["chol"][:, list(DIAG_POSITIONS)]
    return float(
        np.sum(blocks["log_sigma2"])
        + layout.n_biomarkers * 3.0 * np.log(2.0)
        + np.sum(diag @ _CHOL_JACOBIAN_COEF)
    )


def transform(
    params: ModelParameters,
    parameterization: Parameterization = Parameterization.NONCENTERED,
) -> Tuple[np.ndarray, float]:
    """Unconstrained vector of ``params`` and the log-Jacobian at that point."""
    u = unconstrain(params, parameterization)
    return u, log_jacobian(u, ParameterLayout.for_parameters(params))


def _effects(raw: np.ndarray, L: np.ndarray, parameterization) -> np.ndarray:
    if Parameterization(parameterization) is Parameterization.NONCENTERED:
        return np.einsum("kil,kml->kim", raw, L)
    return raw.copy()


def constrained_names(
    mode: Union[str, Mode],
    covariate_names: Sequence[str],
    n_categories: int,
    n_biomarkers: int = N_BIOMARKERS,
) -> List[str]:
    """Names of the population-level constrained draws, in storage order."""
    mode = Mode.parse(mode)
    names = []
    if mode is Mode.JOINT:
        for k in range(1, n_biomarkers + 1):
            names.extend(f"theta.k{k}.{c}" for c in CHARACTERISTICS)
        names.extend(f"sigma2.k{k}" for k in range(1, n_biomarkers + 1))
        for k in range(1, n_biomarkers + 1):
            names.extend(f"omega.k{k}.{e}" for e in OMEGA_ENTRIES)
    for j in range(1, n_categories):
        names.append(f"beta.j{j}.intercept")
        names.extend(f"beta.j{j}.{c}" for c in covariate_names)
    if mode is Mode.JOINT:
        for j in range(1, n_categories):
            for k in range(1, n_biomarkers + 1):
                names.extend(f"alpha.j{j}.k{k}.{c}" for c in CHARACTERISTICS)
    return names


def draw_arrays(
    frame: pd.DataFrame,
    mode: Union[str, Mode],
    covariate_names: Sequence[str],
    n_categories: int,
    n_biomarkers: int = N_BIOMARKERS,
) -> Dict[str, np.ndarray]:
    """Stack named draw columns back into per-draw arrays.

    Returns:
        beta (S, Q, P+1) and, for the joint model, alpha (S, Q, K, 3),
        theta (S, K, 3), sigma2 (S, K) and omega (S, K, 3, 3)

    Raises:
        KeyError: If a required column is missing
    """
    mode = Mode.parse(mode)
    names = constrained_names(mode, covariate_names, n_categories, n_biomarkers)
    missing = [name for name in names if name not in frame.columns]
    if missing:
        raise KeyError(f"draws lack columns: {', '.join(missing[:5])}")
    S, Q, K, P = len(frame), n_categories - 1, n_biomarkers, len(covariate_names)

    def take(prefix_names: List[str], shape: Tuple[int, ...]) -> np.ndarray:
        return frame[prefix_names].to_numpy(dtype=float).reshape((S,) + shape)

    beta_names = [n for n in names if n.startswith("beta.")]
    out = {"beta": take(beta_names, (Q, P + 1))}
    if mode is Mode.JOINT:
        out["theta"] = take([n for n in names if n.startswith("theta.")], (K, 3))
        out["sigma2"] = take([n for n in names if n.startswith("sigma2.")], (K,))
        out["alpha"] = take([n for n in names if n.startswith("alpha.")], (Q, K, 3))
        entries = take([n for n in names if n.startswith("omega.")], (K, 6))
        omega = np.empty((S, K, 3, 3))
        for e, (r, c) in enumerate(_OMEGA_INDEX):
            omega[:, :, r, c] = entries[:, :, e]
            omega[:, :, c, r] = entries[:, :, e]
        out["omega"] = omega
    return out


class JointPosterior:
    """Unnormalized log posterior of the joint or categorical-only model.

    Instances are callable on an unconstrained vector and are safe to share
    between processes; evaluation never mutates state.

    Args:
        cohort: Analysis-ready cohort
        mode: joint (shared latent characteristics) or categorical_only
        parameterization: Whether random effects are sampled raw (non-centered)
            or directly
        prior: Prior hyperparameters
    """

    def __init__(
        self,
        cohort: Cohort,
        mode: Union[str, Mode] = Mode.JOINT,
        parameterization: Union[str, Parameterization] = Parameterization.NONCENTERED,
        prior: PriorConfig = PriorConfig(),
    ):
        self.cohort = cohort
        self.mode = Mode.parse(mode)
        self.parameterization = Parameterization(parameterization)
        self.prior = prior
        self.layout = ParameterLayout.for_cohort(cohort, self.mode)
        self._design = np.asarray(cohort.design)
        self._treatment_index = np.asarray(cohort.treatments) - 1
        self._onehot = np.zeros((cohort.n_patients, cohort.n_categories))
        self._onehot[np.arange(cohort.n_patients), self._treatment_index] = 1.0
        self._observations = []
        for k in range(self.layout.n_biomarkers):
            mask = cohort.obs_biomarker == k
            self._observations.append(
                (
                    cohort.obs_patient[mask],
                    cohort.obs_time[mask],
                    cohort.obs_value[mask],
                )
            )
        self._names = constrained_names(
            self.mode, cohort.covariate_names, cohort.n_categories
        )

    @property
    def n_parameters(self) -> int:
        return self.layout.size

    @property
    def names(self) -> List[str]:
        """Names of the population-level constrained quantities."""
        return list(self._names)

    def __call__(self, u: np.ndarray) -> float:
        return self.evaluate_with_gradient(u)[0]

    def evaluate_with_gradient(self, u: np.ndarray) -> Tuple[float, np.ndarray]:
        """Log posterior and its gradient at ``u``.

        Returns:
            (value, gradient); (-inf, zeros) where the density is undefined
        """
        u = np.asarray(u, dtype=float)
        if u.shape != (self.layout.size,):
            raise ValueError(
                f"expected a vector of length {self.layout.size} (got {u.shape})"
            )
        if not np.all(np.isfinite(u)):
            return -np.inf, np.zeros_like(u)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            result = self._evaluate(u, with_gradient=True)
        if result is None:
            return -np.inf, np.zeros_like(u)
        terms, grad = result
        value = sum(terms.values())
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return -np.inf, np.zeros_like(u)
        return float(value), grad

    def components(self, u: np.ndarray) -> Dict[str, float]:
        """The additive terms of the log posterior at ``u``.

        Keys: longitudinal.k<k>, categorical, random_effects, prior, jacobian.
        Longitudinal terms are -inf when a trajectory overflows.
        """
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            result = self._evaluate(u, with_gradient=False)
        if result is None:
            K = self.layout.n_biomarkers
            return {f"longitudinal.k{k + 1}": -np.inf for k in range(K)}
        return {name: float(value) for name, value in result[0].items()}

    def log_density_at(self, params: ModelParameters) -> float:
        """Log posterior at constrained parameters.

        Blocks the mode does not use are ignored.
        """
        if self.mode is Mode.CATEGORICAL_ONLY and params.is_joint:
            params = ModelParameters(beta=params.beta)
        return self(unconstrain(params, self.parameterization))

    def constrain(self, u: np.ndarray) -> ModelParameters:
        return constrain(u, self.layout, self.parameterization)

    def unconstrain(self, params: ModelParameters) -> np.ndarray:
        return unconstrain(params, self.parameterization)

    def constrained_draw(self, u: np.ndarray) -> np.ndarray:
        """Population-level constrained values of ``u`` in :attr:`names` order."""
        blocks = self.layout.unpack(np.asarray(u, dtype=float))
        parts = []
        if self.mode is Mode.JOINT:
            L = _cholesky_from_raw(blocks["chol"])
            omega = L @ np.swapaxes(L, -1, -2)
            parts.append(blocks["theta"].ravel())
            parts.append(np.exp(blocks["log_sigma2"]))
            entries = [omega[:, r, c] for r, c in _OMEGA_INDEX]
            parts.append(np.stack(entries, axis=1).ravel())
        parts.append(blocks["beta"].ravel())
        if self.mode is Mode.JOINT:
            parts.append(blocks["alpha"].ravel())
        return np.concatenate(parts)

    def latent_draw(self, u: np.ndarray) -> Optional[np.ndarray]:
        """(K, n, 3) latent characteristics at ``u``, or None for categorical-only."""
        if self.mode is Mode.CATEGORICAL_ONLY:
            return None
        blocks = self.layout.unpack(np.asarray(u, dtype=float))
        L = _cholesky_from_raw(blocks["chol"])
        effects = _effects(blocks["effects"], L, self.parameterization)
        return blocks["theta"][:, np.newaxis, :] + effects

    def initial_point(
        self, rng: np.random.Generator, radius: float = 1.0
    ) -> np.ndarray:
        return rng.uniform(-radius, radius, size=self.layout.size)

    def _evaluate(
        self, u: np.ndarray, with_gradient: bool
    ) -> Optional[Tuple[Dict[str, float], np.ndarray]]:
        layout = self.layout
        blocks = layout.unpack(u)
        grad = np.zeros_like(u)
        g = layout.unpack(grad)
        prior = self.prior
        coef_var = prior.coef_sd**2

        beta = blocks["beta"]
        terms = {"prior": _normal_logpdf(beta, prior.coef_sd), "jacobian": 0.0}
        g["beta"] -= beta / coef_var

        if layout.mode is Mode.CATEGORICAL_ONLY:
            eta = self._design @ beta.T
            resid = self._categorical_term(eta, terms)
            g["beta"] += resid.T @ self._design
            return terms, grad

        K, n = layout.n_biomarkers, layout.n_patients
        theta, s, raw = blocks["theta"], blocks["log_sigma2"], blocks["chol"]
        alpha, re = blocks["alpha"], blocks["effects"]
        sigma2 = np.exp(s)
        L = _cholesky_from_raw(raw)
        diag = np.diagonal(L, axis1=1, axis2=2)

        terms["prior"] += _normal_logpdf(theta, prior.coef_sd)
        terms["prior"] += _normal_logpdf(alpha, prior.coef_sd)
        g["theta"] -= theta / coef_var
        g["alpha"] -= alpha / coef_var

        # half-Cauchy on sigma2 plus d sigma2 / d s
        ratio2 = (sigma2 / prior.sigma2_scale) ** 2
        terms["prior"] += _half_cauchy_logpdf(sigma2, prior.sigma2_scale)
        terms["jacobian"] += float(np.sum(s))
        g["log_sigma2"] += 1.0 - 2.0 * ratio2 / (1.0 + ratio2)

        g_chol = np.zeros((K, 3, 3))
        effects = np.empty((K, n, 3))
        terms["random_effects"] = 0.0
        df, psi = prior.omega_df, prior.omega_scale
        inverse_factors = []
        for k in range(K):
            Lk = L[k]
            M = solve_triangular(Lk, np.eye(3), lower=True)
            terms["prior"] += _inverse_wishart_chol(Lk, df, psi)
            g_chol[k] += np.diag(-(df + 4.0) / diag[k]) + psi * (M.T @ M @ M.T)
            inverse_factors.append(M)
            if self.parameterization is Parameterization.NONCENTERED:
                effects[k] = re[k] @ Lk.T
                terms["random_effects"] += float(
                    -0.5 * np.sum(re[k] ** 2) - 1.5 * n * LOG_2PI
                )
                g["effects"][k] -= re[k]
            else:
                effects[k] = re[k]
                W = M @ re[k].T
                V = M.T @ W
                terms["random_effects"] += float(
                    -n * (1.5 * LOG_2PI + np.sum(np.log(diag[k]))) - 0.5 * np.sum(W**2)
                )
                g["effects"][k] -= V.T
                g_chol[k] += V @ W.T - np.diag(n / diag[k])
        terms["jacobian"] += K * 3.0 * np.log(2.0) + float(
            np.sum(raw[:, list(DIAG_POSITIONS)] @ _CHOL_JACOBIAN_COEF)
        )

        latent = theta[:, np.newaxis, :] + effects
        g_latent = np.zeros_like(latent)
        for k, (patient, t, y) in enumerate(self._observations):
            fitted = trajectory_and_gradient(latent[k, patient], t)
            if fitted is None:
                return None
            mu, dmu = fitted
            r = y - mu
            terms[f"longitudinal.k{k + 1}"] = float(
                np.sum(-0.5 * (LOG_2PI + s[k]) - 0.5 * r**2 / sigma2[k])
            )
            if with_gradient:
                g["log_sigma2"][k] += np.sum(-0.5 + 0.5 * r**2 / sigma2[k])
                np.add.at(g_latent[k], patient, (r / sigma2[k])[:, np.newaxis] * dmu)

        eta = self._design @ beta.T + np.einsum("kil,qkl->iq", latent, alpha)
        resid = self._categorical_term(eta, terms)
        if not with_gradient:
            return terms, grad
        g["beta"] += resid.T @ self._design
        g["alpha"] += np.einsum("iq,kil->qkl", resid, latent)
        g_latent += np.einsum("iq,qkl->kil", resid, alpha)

        g["theta"] += g_latent.sum(axis=1)
        for k in range(K):
            if self.parameterization is Parameterization.NONCENTERED:
                g["effects"][k] += g_latent[k] @ L[k]
                g_chol[k] += g_latent[k].T @ re[k]
            else:
                g["effects"][k] += g_latent[k]
        g_raw = g_chol[:, TRIL[0], TRIL[1]]
        for j, pos in enumerate(DIAG_POSITIONS):
            g_raw[:, pos] = g_raw[:, pos] * diag[:, j] + _CHOL_JACOBIAN_COEF[j]
        g["chol"] += g_raw
        return terms, grad

    def _categorical_term(self, eta: np.ndarray, terms: Dict[str, float]) -> np.ndarray:
        """Adds the categorical log-likelihood; returns onehot - softmax for j < J."""
        logp = log_probabilities(eta)
        n = self._design.shape[0]
        terms["categorical"] = float(np.sum(logp[np.arange(n), self._treatment_index]))
        Q = eta.shape[1]
        return self._onehot[:, :Q] - np.exp(logp[:, :Q])


def log_posterior(
    u: np.ndarray, cohort: Cohort, mode: Union[str, Mode] = Mode.JOINT, **kwargs
) -> float:
    """Log posterior of ``cohort`` at unconstrained ``u`` (-inf where undefined)."""
    return JointPosterior(cohort, mode, **kwargs)(u)


def grad_log_posterior(
    u: np.ndarray, cohort: Cohort, mode: Union[str, Mode] = Mode.JOINT, **kwargs
) -> np.ndarray:
    """Gradient of :func:`log_posterior` with respect to ``u``.

    Raises:
        GradientUndefinedError: If the log posterior is -inf at ``u``
    """
    value, grad = JointPosterior(cohort, mode, **kwargs).evaluate_with_gradient(u)
    if not np.isfinite(value):
        raise GradientUndefinedError("log posterior is -inf at the requested point")
    return grad

