"""Model comparison and in-sample classification metrics.

WAIC is computed from the per-patient categorical log-likelihood only, so joint and
categorical-only fits are compared on the same scale. Classification metrics are
class-weighted by observed class frequency; with these weights weighted recall is
identical to accuracy.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from jointcat.model.biexp import LatentCharacteristics, iwres, mean_trajectory
from jointcat.model.categorical import log_probabilities
from jointcat.model.data_model import Cohort

logger = logging.getLogger(__name__)

DRAW_CHUNK = 500


class ZeroPredictionWarning(UserWarning):
    """Emitted when a class that occurs is never predicted."""


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = predicted class and columns = observed class."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"counts must be square (got shape {counts.shape})")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts.astype(int))

    @property
    def n_categories(self) -> int:
        return self.counts.shape[0]

    @property
    def true_positives(self) -> np.ndarray:
        return np.diag(self.counts)

    @property
    def n_predicted(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def n_observed(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.n_observed / self.total

    def to_frame(self, labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
        labels = list(labels or range(1, self.n_categories + 1))
        return pd.DataFrame(
            self.counts,
            index=pd.Index(labels, name="predicted"),
            columns=pd.Index(labels, name="observed"),
        )


def confusion(
    predictions: Sequence[int], observations: Sequence[int], n_categories: int
) -> ConfusionMatrix:
    """Tally 1-based predicted and observed labels.

    Raises:
        ValueError: On empty or unequal-length inputs or a label outside 1..J
    """
    predictions = np.asarray(predictions, dtype=int)
    observations = np.asarray(observations, dtype=int)
    if predictions.size == 0:
        raise ValueError("confusion needs at least one label")
    if predictions.shape != observations.shape:
        raise ValueError(
            f"{predictions.size} predictions but {observations.size} observations"
        )
    for label, values in (("prediction", predictions), ("observation", observations)):
        bad = values[(values < 1) | (values > n_categories)]
        if bad.size:
            raise ValueError(f"{label} label {bad[0]} outside 1..{n_categories}")
    counts = np.zeros((n_categories, n_categories), dtype=int)
    np.add.at(counts, (predictions - 1, observations - 1), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def weighted_metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    """Class-weighted accuracy, precision, recall and F1.

    Each class c is weighted by w_c = n_c(observed) / N. A class that is never
    predicted contributes 0 to precision, with a :class:`ZeroPredictionWarning`
    when it occurs in the observations.

    Raises:
        ValueError: If the matrix is empty
    """
    N = cm.total
    if N == 0:
        raise ValueError("confusion matrix is empty")
    tp = cm.true_positives.astype(float)
    n_pred = cm.n_predicted.astype(float)
    n_obs = cm.n_observed.astype(float)
    w = cm.weights

    unpredicted = (n_pred == 0) & (n_obs > 0)
    if np.any(unpredicted):
        classes = ", ".join(str(c + 1) for c in np.flatnonzero(unpredicted))
        warnings.warn(
            f"class(es) {classes} never predicted; precision term set to 0",
            ZeroPredictionWarning,
            stacklevel=2,
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        precision_c = np.where(n_pred > 0, tp / n_pred, 0.0)
        recall_c = np.where(n_obs > 0, tp / n_obs, 0.0)
        f1_c = np.where(n_pred + n_obs > 0, 2.0 * tp / (n_pred + n_obs), 0.0)
    return ClassificationMetrics(
        accuracy=float(tp.sum() / N),
        precision=float(np.sum(w * precision_c)),
        recall=float(np.sum(w * recall_c)),
        f1=float(np.sum(w * f1_c)),
    )


def random_classifier_baseline(
    observations: Sequence[int],
    runs: int = 1000,
    seed: int = 2024,
    n_categories: Optional[int] = None,
) -> ClassificationMetrics:
    """Metrics of uniform random guessing, averaged over ``runs``.

    Args:
        observations: 1-based observed labels
        runs: Number of random prediction vectors
        seed: Seed of the generator owned by this call
        n_categories: J; defaults to the largest observed label
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    observations = np.asarray(observations, dtype=int)
    J = int(n_categories or observations.max())
    rng = np.random.default_rng(seed)
    totals = np.zeros(4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroPredictionWarning)
        for _ in range(runs):
            guesses = rng.integers(1, J + 1, size=observations.size)
            m = weighted_metrics(confusion(guesses, observations, J))
            totals += (m.accuracy, m.precision, m.recall, m.f1)
    mean = totals / runs
    logger.info(f"Random baseline over {runs} runs: accuracy {mean[0]:.4f}")
    return ClassificationMetrics(*(float(v) for v in mean))


@dataclass(frozen=True, eq=False)
class WaicResult:
    """WAIC = -2 (lppd - p_waic); lower is better.

    Attributes:
        pointwise_lppd: (n,) log pointwise predictive density
        pointwise_p_waic: (n,) posterior variance of the log-likelihood
    """

    lppd: float
    p_waic: float
    waic: float
    pointwise_lppd: np.ndarray
    pointwise_p_waic: np.ndarray

    @property
    def pointwise(self) -> np.ndarray:
        return -2.0 * (self.pointwise_lppd - self.pointwise_p_waic)

    def to_dict(self) -> Dict[str, float]:
        return {"waic": self.waic, "lppd": self.lppd, "p_waic": self.p_waic}


def waic(loglik: np.ndarray) -> WaicResult:
    """WAIC from a (draws, patients) pointwise log-likelihood matrix.

    Raises:
        ValueError: With fewer than 2 draws
    """
    loglik = np.atleast_2d(np.asarray(loglik, dtype=float))
    S = loglik.shape[0]
    if S < 2:
        raise ValueError(f"waic needs at least 2 draws (got {S})")
    pointwise_lppd = logsumexp(loglik, axis=0) - np.log(S)
    pointwise_p = np.var(loglik, axis=0, ddof=1)
    lppd = float(pointwise_lppd.sum())
    p_waic = float(pointwise_p.sum())
    if np.any(pointwise_p > 0.4):
        logger.warning(
            f"{int(np.sum(pointwise_p > 0.4))} patients have posterior log-likelihood "
            "variance above 0.4; WAIC may be unreliable"
        )
    return WaicResult(
        lppd=lppd,
        p_waic=p_waic,
        waic=-2.0 * (lppd - p_waic),
        pointwise_lppd=pointwise_lppd,
        pointwise_p_waic=pointwise_p,
    )


def class_probability_draws(
    design: np.ndarray,
    beta: np.ndarray,
    alpha: Optional[np.ndarray] = None,
    latent: Optional[np.ndarray] = None,
    share: bool = True,
) -> np.ndarray:
    """(S, n, J) category probabilities for every draw and patient."""
    eta = np.einsum("ip,sqp->siq", design, beta)
    if share:
        if alpha is None or latent is None:
            raise ValueError("sharing requires alpha and latent draws")
        eta = eta + np.einsum("skil,sqkl->siq", latent, alpha)
    return np.exp(log_probabilities(eta))


@dataclass(frozen=True, eq=False)
class ClassificationReport:
    """Predictions from posterior-mean probabilities and their metrics."""

    probabilities: np.ndarray
    predictions: np.ndarray
    confusion: ConfusionMatrix
    metrics: ClassificationMetrics

    def to_dict(self, labels: Optional[Sequence[str]] = None) -> Dict[str, Any]:
        return {
            **self.metrics.to_dict(),
            "confusion": self.confusion.counts.tolist(),
            "labels": list(labels) if labels else None,
        }


def classify(
    probabilities: np.ndarray, observations: Sequence[int]
) -> ClassificationReport:
    """Predict argmax of posterior-mean probabilities (ties to the lowest class)."""
    probabilities = np.asarray(probabilities, dtype=float)
    predictions = np.argmax(probabilities, axis=1) + 1
    cm = confusion(predictions, observations, probabilities.shape[1])
    return ClassificationReport(
        probabilities=probabilities,
        predictions=predictions,
        confusion=cm,
        metrics=weighted_metrics(cm),
    )


def fitted_means(cohort: Cohort, latent: np.ndarray) -> np.ndarray:
    """Posterior mean of the fitted trajectory at every cohort observation.

    Args:
        cohort: Cohort the latent draws belong to
        latent: (S, K, n, 3) latent characteristic draws
    """
    k, i, t = cohort.obs_biomarker, cohort.obs_patient, cohort.obs_time
    total = np.zeros(cohort.n_observations)
    S = latent.shape[0]
    for start in range(0, S, DRAW_CHUNK):
        chars = LatentCharacteristics.from_array(latent[start:start + DRAW_CHUNK, k, i])
        total += np.sum(mean_trajectory(chars, t[np.newaxis]), axis=0)
    return total / S


def longitudinal_residuals(
    cohort: Cohort, latent: np.ndarray, sigma2: np.ndarray
) -> pd.DataFrame:
    """IWRES against posterior-mean fits and posterior-mean sigma_k.

    Args:
        cohort: Cohort the draws belong to
        latent: (S, K, n, 3) latent characteristic draws
        sigma2: (S, K) residual variance draws
    """
    sigma_hat = {k + 1: float(s) for k, s in enumerate(np.sqrt(sigma2).mean(axis=0))}
    residuals = iwres(cohort, fitted_means(cohort, latent), sigma_hat)
    for k, group in residuals.groupby("biomarker"):
        logger.info(
            f"IWRES {cohort.biomarker_name(int(k))}: mean {group['iwres'].mean():.3f}, "
            f"sd {group['iwres'].std():.3f}"
        )
    return residuals
