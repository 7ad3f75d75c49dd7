"""Bi-exponential longitudinal submodel.

    y(t) = B [exp(G t) + exp(-D t) - 1] + eps,    eps ~ Normal(0, sigma2)

with B = exp(B*), G = exp(G*), D = exp(D*) and (B*, G*, D*) = theta + b.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from jointcat.model.data_model import Cohort

logger = logging.getLogger(__name__)

MAX_EXPONENT = 700.0
LOG_2PI = float(np.log(2.0 * np.pi))
CHARACTERISTICS = ("baseline", "growth", "decay")

ArrayLike = Union[float, np.ndarray]


class TrajectoryDivergenceError(FloatingPointError):
    """Raised when exp(G t) would overflow the trajectory."""


@dataclass(frozen=True)
class LatentCharacteristics:
    """Log-scale baseline, growth and decay of one patient's biomarker.

    Fields may also hold equally shaped arrays (one entry per patient or draw).
    """

    B_star: ArrayLike
    G_star: ArrayLike
    D_star: ArrayLike

    def __post_init__(self):
        for name in ("B_star", "G_star", "D_star"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "LatentCharacteristics":
        """Build from an array whose last axis holds (B*, G*, D*)."""
        values = np.asarray(values, dtype=float)
        return cls(values[..., 0], values[..., 1], values[..., 2])

    @property
    def baseline(self) -> ArrayLike:
        return np.exp(self.B_star)

    @property
    def growth(self) -> ArrayLike:
        return np.exp(self.G_star)

    @property
    def decay(self) -> ArrayLike:
        return np.exp(self.D_star)


@dataclass(frozen=True)
class BiomarkerParams:
    """Population parameters of one biomarker.

    Attributes:
        theta: (theta_1, theta_2, theta_3), log-scale population characteristics
        sigma2: Residual error variance
        omega: 3x3 random-effects covariance
    """

    theta: np.ndarray
    sigma2: float
    omega: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        if theta.shape != (3,):
            raise ValueError(f"theta must have 3 entries (got shape {theta.shape})")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive (got {self.sigma2})")
        if omega.shape != (3, 3) or not np.allclose(omega, omega.T):
            raise ValueError("omega must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(omega).min() <= 0:
            raise ValueError("omega must be positive definite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "omega", omega)


def mean_trajectory(chars: LatentCharacteristics, t: ArrayLike) -> ArrayLike:
    """Evaluate B [exp(G t) + exp(-D t) - 1].

    Raises:
        ValueError: If t is negative or non-finite
        TrajectoryDivergenceError: If G t exceeds the overflow guard
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise ValueError("t must be finite and nonnegative")
    growth_exponent = np.exp(chars.G_star) * t
    if np.any(growth_exponent > MAX_EXPONENT):
        raise TrajectoryDivergenceError(
            f"exp(G)*t = {np.max(growth_exponent):.4g} exceeds {MAX_EXPONENT}"
        )
    value = np.exp(chars.B_star) * (
        np.exp(growth_exponent) + np.exp(-np.exp(chars.D_star) * t) - 1.0
    )
    return float(value) if np.ndim(value) == 0 else value


def trajectory_and_gradient(
    latent: np.ndarray, t: np.ndarray
) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Vectorized mean and its derivatives with respect to (B*, G*, D*).

    Args:
        latent: (m, 3) latent characteristics aligned with ``t``
        t: (m,) observation times

    Returns:
        (mu, dmu) with dmu of shape (m, 3), or None when exp(G t) would overflow
    """
    B = np.exp(latent[:, 0])
    G = np.exp(latent[:, 1])
    D = np.exp(latent[:, 2])
    gt = G * t
    if gt.size and gt.max() > MAX_EXPONENT:
        return None
    eg = np.exp(gt)
    ed = np.exp(-D * t)
    mu = B * (eg + ed - 1.0)
    dmu = np.empty_like(latent)
    dmu[:, 0] = mu
    dmu[:, 1] = B * eg * gt
    dmu[:, 2] = -B * ed * D * t
    return mu, dmu


def longitudinal_loglik(
    cohort: Cohort, params: BiomarkerParams, effects: np.ndarray, biomarker: int = 1
) -> float:
    """Normal log-likelihood of one biomarker's observations.

    Args:
        cohort: Cohort holding the observations
        params: Population parameters of the biomarker
        effects: (n_patients, 3) random effects b_ki, in cohort patient order
        biomarker: 1-based biomarker index

    Raises:
        TrajectoryDivergenceError: If any fitted trajectory overflows
    """
    effects = np.asarray(effects, dtype=float)
    if effects.shape != (cohort.n_patients, 3):
        raise ValueError(
            f"effects must have shape ({cohort.n_patients}, 3) (got {effects.shape})"
        )
    mask = cohort.obs_biomarker == biomarker - 1
    if not mask.any():
        return 0.0
    latent = params.theta + effects[cohort.obs_patient[mask]]
    chars = LatentCharacteristics.from_array(latent)
    mu = mean_trajectory(chars, cohort.obs_time[mask])
    resid = cohort.obs_value[mask] - mu
    return float(
        np.sum(
            -0.5 * (LOG_2PI + np.log(params.sigma2)) - 0.5 * resid**2 / params.sigma2
        )
    )


def iwres(
    cohort: Cohort,
    fitted: np.ndarray,
    sigma_hat: Union[float, Mapping[int, float]],
) -> pd.DataFrame:
    """Individual weighted residuals (y - y_hat) / sigma_hat per observation.

    Args:
        cohort: Cohort whose observations ``fitted`` is aligned with
        fitted: Fitted means, one per cohort observation
        sigma_hat: Residual standard deviation, scalar or per 1-based biomarker

    Returns:
        DataFrame with columns patient_id, biomarker, time, iwres

    Raises:
        ValueError: If sigma_hat is not positive or fitted is misaligned
    """
    fitted = np.asarray(fitted, dtype=float)
    if fitted.shape != (cohort.n_observations,):
        raise ValueError(
            f"fitted must have one value per observation ({cohort.n_observations})"
        )
    if isinstance(sigma_hat, Mapping):
        sigma = np.array([sigma_hat[k + 1] for k in cohort.obs_biomarker], dtype=float)
    else:
        sigma = np.full(cohort.n_observations, float(sigma_hat))
    if np.any(~(sigma > 0)):
        raise ValueError("sigma_hat must be positive")
    return pd.DataFrame(
        {
            "patient_id": [o.patient_id for o in cohort.observations],
            "biomarker": cohort.obs_biomarker + 1,
            "time": cohort.obs_time,
            "iwres": (cohort.obs_value - fitted) / sigma,
        }
    )
