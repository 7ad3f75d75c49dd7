"""Multinomial-logit categorical submodel.

Each non-reference category j < J is contrasted with the reference J:

    log(phi_j / phi_J) = [1, X] . beta_j
                        + sum_k (alpha_1kj B*_k + alpha_2kj G*_k + alpha_3kj D*_k)

The latent sum is dropped when sharing is disabled (categorical-only model).
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from jointcat.model.data_model import Cohort

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CategoricalParams:
    """Coefficients of the categorical submodel.

    Attributes:
        beta: (J-1, P+1) coefficients; column 0 is the intercept
        alpha: (J-1, K, 3) association with (B*, G*, D*) per biomarker, or None
    """

    beta: np.ndarray
    alpha: Optional[np.ndarray] = None

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "beta", beta)
        if self.alpha is not None:
            alpha = np.asarray(self.alpha, dtype=float)
            if alpha.ndim != 3 or alpha.shape[::2] != (beta.shape[0], 3):
                raise ValueError(
                    f"alpha must have shape ({beta.shape[0]}, K, 3) (got {alpha.shape})"
                )
            object.__setattr__(self, "alpha", alpha)

    @property
    def n_categories(self) -> int:
        return self.beta.shape[0] + 1


def linear_predictors(
    x: np.ndarray,
    chars: Optional[np.ndarray],
    params: CategoricalParams,
    share: bool = True,
) -> np.ndarray:
    """Log-odds of each non-reference category against the reference.

    Args:
        x: (P,) covariates without intercept, or (n, P) for many patients
        chars: (K, 3) latent characteristics, or (n, K, 3); ignored unless sharing
        params: Categorical coefficients
        share: Whether latent characteristics enter the predictor

    Returns:
        (J-1,) predictors, or (n, J-1)

    Raises:
        ValueError: On dimension mismatch or missing characteristics when sharing
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] + 1 != params.beta.shape[1]:
        raise ValueError(
            f"x has {x.shape[1]} covariates but beta expects {params.beta.shape[1] - 1}"
        )
    eta = params.beta[:, 0] + x @ params.beta[:, 1:].T
    if share:
        if chars is None or params.alpha is None:
            raise ValueError("sharing requires latent characteristics and alpha")
        chars = np.asarray(chars, dtype=float)
        if single:
            chars = chars[np.newaxis]
        if chars.shape[1:] != params.alpha.shape[1:]:
            raise ValueError(
                f"chars shape {chars.shape[1:]} does not match "
                f"alpha {params.alpha.shape[1:]}"
            )
        eta = eta + np.einsum("ikl,qkl->iq", chars, params.alpha)
    return eta[0] if single else eta


def _full_logits(eta: np.ndarray) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return np.concatenate([eta, np.zeros(eta.shape[:-1] + (1,))], axis=-1)


def log_probabilities(eta: np.ndarray) -> np.ndarray:
    """Log category probabilities for predictors of shape (..., J-1)."""
    logits = _full_logits(eta)
    return logits - logsumexp(logits, axis=-1, keepdims=True)


def probabilities(eta: np.ndarray) -> np.ndarray:
    """Category probabilities on the simplex, max-shifted for stability."""
    logits = _full_logits(eta)
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def categorical_loglik(
    cohort: Cohort,
    params: CategoricalParams,
    chars: Optional[np.ndarray] = None,
    share: bool = True,
) -> float:
    """Sum over patients of log phi_{i, z_i}.

    Args:
        cohort: Cohort with covariates and treatments
        params: Categorical coefficients
        chars: (n, K, 3) latent characteristics in patient order
        share: Whether latent characteristics enter the predictor

    Returns:
        Log-likelihood, or -inf when a chosen category has zero probability
    """
    if cohort.n_patients == 0:
        return 0.0
    eta = linear_predictors(cohort.X, chars, params, share)
    logp = log_probabilities(np.atleast_2d(eta))
    total = float(np.sum(logp[np.arange(cohort.n_patients), cohort.treatments - 1]))
    return total if np.isfinite(total) else -np.inf


def pointwise_loglik(
    design: np.ndarray,
    treatments: np.ndarray,
    beta: np.ndarray,
    alpha: Optional[np.ndarray] = None,
    latent: Optional[np.ndarray] = None,
    share: bool = True,
) -> np.ndarray:
    """Per-draw, per-patient categorical log-likelihood.

    Args:
        design: (n, P+1) covariates with intercept column
        treatments: (n,) 1-based observed categories
        beta: (S, J-1, P+1) coefficient draws
        alpha: (S, J-1, K, 3) association draws
        latent: (S, K, n, 3) latent characteristic draws
        share: Whether latent characteristics enter the predictor

    Returns:
        (S, n) log phi_{i, z_i} per draw
    """
    eta = np.einsum("ip,sqp->siq", design, beta)
    if share:
        if alpha is None or latent is None:
            raise ValueError("sharing requires alpha and latent draws")
        eta = eta + np.einsum("skil,sqkl->siq", latent, alpha)
    logp = log_probabilities(eta)
    n = design.shape[0]
    return logp[:, np.arange(n), np.asarray(treatments) - 1]


def relative_risks(
    draws: Mapping[str, Sequence[float]], level: float = 0.95
) -> pd.DataFrame:
    """Relative risk summaries of exponentiated coefficients.

    Args:
        draws: Coefficient name -> posterior draws
        level: Central credible interval mass

    Returns:
        DataFrame indexed by coefficient with columns rr (posterior mean of exp),
        ci_low, ci_high, rr_of_mean (exp of posterior mean) and significant

    Raises:
        ValueError: If no draws are given or a coefficient has fewer than 2 draws
    """
    if not draws:
        raise ValueError("relative_risks needs at least one coefficient")
    tail = 100.0 * (1.0 - level) / 2.0
    rows = []
    for name, values in draws.items():
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            raise ValueError(f"coefficient '{name}' needs at least 2 draws")
        rr = np.exp(values)
        low, high = np.percentile(rr, [tail, 100.0 - tail])
        rows.append(
            {
                "coefficient": name,
                "rr": float(rr.mean()),
                "ci_low": float(low),
                "ci_high": float(high),
                "rr_of_mean": float(np.exp(values.mean())),
                "significant": bool(low > 1.0 or high < 1.0),
            }
        )
    return pd.DataFrame(rows).set_index("coefficient")


@dataclass(frozen=True)
class TreatmentPrediction:
    """Posterior summary of one patient's category probabilities (1-based class)."""

    mean: np.ndarray
    predicted_class: int
    ci_low: np.ndarray
    ci_high: np.ndarray


def predict_treatment(
    phi_draws: np.ndarray, level: float = 0.95
) -> TreatmentPrediction:
    """Predict the category with the highest posterior-mean probability.

    Ties go to the smallest category index.
    """
    phi_draws = np.atleast_2d(np.asarray(phi_draws, dtype=float))
    if phi_draws.shape[0] < 1:
        raise ValueError("predict_treatment needs at least one draw")
    mean = phi_draws.mean(axis=0)
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(phi_draws, [tail, 100.0 - tail], axis=0)
    return TreatmentPrediction(
        mean=mean,
        predicted_class=int(np.argmax(mean)) + 1,
        ci_low=low,
        ci_high=high,
    )
