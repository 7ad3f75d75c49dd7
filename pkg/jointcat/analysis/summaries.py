"""Posterior summary tables of a fit."""

import logging
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from jointcat.analysis.importance import VIReport, latent_variable_name
from jointcat.model.biexp import CHARACTERISTICS
from jointcat.model.categorical import relative_risks
from jointcat.model.posterior import OMEGA_ENTRIES

logger = logging.getLogger(__name__)


def _interval(values: np.ndarray, level: float) -> Tuple[float, float, float]:
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(values, [tail, 100.0 - tail])
    return float(np.mean(values)), float(low), float(high)


def biexp_summary(
    arrays: Mapping[str, np.ndarray],
    biomarker_names: Sequence[str],
    level: float = 0.95,
) -> pd.DataFrame:
    """Posterior mean and credible interval of the bi-exponential parameters.

    Rows per biomarker: exp(theta) for baseline, growth and decay (significant when
    the interval excludes 1), sigma2 and the six omega entries (covariances are
    significant when the interval excludes 0, variances never are).
    """
    rows = []
    theta, sigma2, omega = arrays["theta"], arrays["sigma2"], arrays["omega"]

    def add(biomarker, parameter, description, values, null=None):
        mean, low, high = _interval(values, level)
        significant = null is not None and (low > null or high < null)
        rows.append(
            {
                "biomarker": biomarker,
                "parameter": parameter,
                "description": description,
                "mean": mean,
                "ci_low": low,
                "ci_high": high,
                "significant": bool(significant),
            }
        )

    for k, biomarker in enumerate(biomarker_names):
        for c, characteristic in enumerate(CHARACTERISTICS):
            values = np.exp(theta[:, k, c])
            add(biomarker, f"exp(theta{c + 1})", characteristic, values, null=1.0)
        add(biomarker, "sigma2", "residual variance", sigma2[:, k])
        for entry in OMEGA_ENTRIES:
            r, c = int(entry[0]) - 1, int(entry[1]) - 1
            if r == c:
                add(biomarker, f"omega{entry}", "variance", omega[:, k, r, c])
            else:
                add(biomarker, f"omega{entry}", "covariance", omega[:, k, r, c], 0.0)
    return pd.DataFrame(rows)


def relative_risk_table(
    arrays: Mapping[str, np.ndarray],
    covariate_names: Sequence[str],
    category_labels: Sequence[str],
    covariate_groups: Optional[Mapping[str, Sequence[int]]] = None,
    biomarker_names: Sequence[str] = (),
    vi_report: Optional[VIReport] = None,
    level: float = 0.95,
) -> pd.DataFrame:
    """Relative risks of every non-reference category against the reference.

    Intercepts are left out. ``rr`` is the posterior mean of exp(coefficient) and
    ``rr_of_mean`` exp of the posterior mean. When a VI report is given each row
    carries the rank of the variable the coefficient belongs to.
    """
    beta, alpha = arrays["beta"], arrays.get("alpha")
    groups = covariate_groups or {name: (j,) for j, name in enumerate(covariate_names)}
    column_group = {
        covariate_names[j]: group for group, columns in groups.items() for j in columns
    }
    ranks = vi_report.ranks() if vi_report is not None else {}
    frames = []
    for q in range(beta.shape[1]):
        draws = {name: beta[:, q, j + 1] for j, name in enumerate(covariate_names)}
        variables = dict(column_group)
        if alpha is not None:
            for k, biomarker in enumerate(biomarker_names):
                for c, characteristic in enumerate(CHARACTERISTICS):
                    name = latent_variable_name(characteristic, biomarker)
                    draws[name] = alpha[:, q, k, c]
                    variables[name] = name
        if not draws:
            continue
        frame = relative_risks(draws, level).reset_index()
        frame.insert(0, "category", category_labels[q])
        frame.insert(2, "variable", frame["coefficient"].map(variables))
        if ranks:
            frame["vi_rank"] = frame["variable"].map(ranks).astype("Int64")
        frames.append(frame)
    if not frames:
        logger.warning("No coefficients besides intercepts; relative risk table empty")
        return pd.DataFrame()
    return pd.concat(frames, ignore_index=True)
