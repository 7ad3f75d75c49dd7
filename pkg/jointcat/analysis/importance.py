"""Permutation variable importance without refitting.

For each run and variable, patients' values of that variable are shuffled under one
permutation, the categorical log-likelihood is recomputed across all posterior
draws and the increase in WAIC over the unpermuted inputs is the importance score.
Factor dummies move together as one block; a latent characteristic is shuffled
across patients with every draw carrying its own values along.
"""

import logging
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from jointcat.analysis.evaluation import waic
from jointcat.model.biexp import CHARACTERISTICS
from jointcat.model.categorical import pointwise_loglik
from jointcat.model.data_model import N_BIOMARKERS, Cohort

logger = logging.getLogger(__name__)

COVARIATE = "covariate"
LATENT = "latent"

Metric = Callable[[np.ndarray], float]


def waic_metric(loglik: np.ndarray) -> float:
    return waic(loglik).waic


@dataclass(frozen=True)
class VIVariable:
    """One rankable input.

    Attributes:
        name: Covariate group name, or "<characteristic> <biomarker>" for latent
        kind: ``covariate`` or ``latent``
        columns: Covariate column indices (no intercept), or a single
            (biomarker, characteristic) latent slot
    """

    name: str
    kind: str
    columns: Tuple[int, ...]

    def __post_init__(self):
        if self.kind not in (COVARIATE, LATENT):
            raise ValueError(f"kind must be '{COVARIATE}' or '{LATENT}'")
        if self.kind == LATENT and len(self.columns) != 2:
            raise ValueError("latent variables index one (biomarker, characteristic)")


def latent_variable_name(characteristic: str, biomarker_name: str) -> str:
    return f"{characteristic} {biomarker_name}"


def build_registry(cohort: Cohort, share: bool = True) -> List[VIVariable]:
    """Every covariate group, then every latent slot when characteristics are shared."""
    variables = [
        VIVariable(name, COVARIATE, tuple(columns))
        for name, columns in cohort.covariate_groups.items()
    ]
    if share:
        for k in range(N_BIOMARKERS):
            biomarker = cohort.biomarker_name(k + 1)
            for c, characteristic in enumerate(CHARACTERISTICS):
                name = latent_variable_name(characteristic, biomarker)
                variables.append(VIVariable(name, LATENT, (k, c)))
    return variables


@dataclass(frozen=True, eq=False)
class VIInputs:
    """Everything the categorical likelihood needs, for all posterior draws.

    Attributes:
        design: (n, P+1) covariates with intercept column
        treatments: (n,) 1-based observed categories
        beta: (S, J-1, P+1) coefficient draws
        alpha: (S, J-1, K, 3) association draws, or None
        latent: (S, K, n, 3) latent characteristic draws, or None
        variables: The registry of permutable inputs
    """

    design: np.ndarray
    treatments: np.ndarray
    beta: np.ndarray
    variables: Tuple[VIVariable, ...]
    alpha: Optional[np.ndarray] = None
    latent: Optional[np.ndarray] = None

    @property
    def share(self) -> bool:
        return self.alpha is not None and self.latent is not None

    @property
    def n_patients(self) -> int:
        return self.design.shape[0]

    def variable(self, name: Union[str, VIVariable]) -> VIVariable:
        key = name.name if isinstance(name, VIVariable) else name
        for variable in self.variables:
            if variable.name == key:
                return variable
        raise KeyError(f"Unknown variable '{key}'")

    def loglik(self) -> np.ndarray:
        """(S, n) pointwise categorical log-likelihood."""
        return pointwise_loglik(
            self.design, self.treatments, self.beta, self.alpha, self.latent, self.share
        )

    @classmethod
    def from_draws(
        cls,
        cohort: Cohort,
        arrays: Mapping[str, np.ndarray],
        latent: Optional[np.ndarray] = None,
    ) -> "VIInputs":
        """Assemble inputs from :func:`jointcat.model.posterior.draw_arrays` output."""
        alpha = arrays.get("alpha")
        share = alpha is not None and latent is not None
        return cls(
            design=np.asarray(cohort.design),
            treatments=np.asarray(cohort.treatments),
            beta=arrays["beta"],
            alpha=alpha if share else None,
            latent=latent if share else None,
            variables=tuple(build_registry(cohort, share)),
        )


def permute_variable(
    inputs: VIInputs, variable: Union[str, VIVariable], rng: np.random.Generator
) -> VIInputs:
    """Apply one patient permutation to every slot of ``variable``.

    Raises:
        KeyError: If the variable is not registered
    """
    variable = inputs.variable(variable)
    perm = rng.permutation(inputs.n_patients)
    if variable.kind == COVARIATE:
        design = inputs.design.copy()
        cols = np.asarray(variable.columns) + 1
        design[:, cols] = inputs.design[perm][:, cols]
        return replace(inputs, design=design)
    if inputs.latent is None:
        raise KeyError(f"Variable '{variable.name}' needs latent draws")
    k, c = variable.columns
    latent = inputs.latent.copy()
    latent[:, k, :, c] = inputs.latent[:, k, perm, c]
    return replace(inputs, latent=latent)


def vi_score(
    inputs: VIInputs,
    variable: Union[str, VIVariable],
    rng: np.random.Generator,
    base: Optional[float] = None,
    metric: Metric = waic_metric,
) -> float:
    """Metric on permuted inputs minus the metric on the original inputs.

    Args:
        base: Precomputed metric of the unpermuted inputs
    """
    if base is None:
        base = metric(inputs.loglik())
    permuted = permute_variable(inputs, variable, rng)
    return float(metric(permuted.loglik()) - base)


def run_rng(seed: int, run: int, name: str) -> np.random.Generator:
    """Generator owned by one (run, variable) pair, independent of registry order."""
    return np.random.default_rng([seed, run, zlib.crc32(name.encode("utf-8"))])


@dataclass(frozen=True, eq=False)
class VIReport:
    """Importance scores over runs.

    Attributes:
        table: variable, kind, mean, min, max, rank; rank 1 = largest mean VI
        scores: (runs, variables) raw scores, columns ordered as ``variables``
        variables: Scored variable names in registry order
    """

    table: pd.DataFrame
    scores: np.ndarray
    seed: int = 2024
    variables: Tuple[str, ...] = ()

    @property
    def runs(self) -> int:
        return self.scores.shape[0]

    def rank_of(self, name: str) -> int:
        rows = self.table.loc[self.table["variable"] == name, "rank"]
        if rows.empty:
            raise KeyError(f"Unknown variable '{name}'")
        return int(rows.iloc[0])

    def ranks(self) -> Dict[str, int]:
        return dict(zip(self.table["variable"], self.table["rank"].astype(int)))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        columns = ["variable", "mean", "min", "max", "rank"]
        self.table[columns].to_csv(path, index=False)
        return path

    def runs_frame(self) -> pd.DataFrame:
        """Raw scores in long format: run, variable, score."""
        frame = pd.DataFrame(self.scores, columns=list(self.variables))
        frame.insert(0, "run", np.arange(1, self.runs + 1))
        return frame.melt(id_vars="run", var_name="variable", value_name="score")


def vi_ranking(
    inputs: VIInputs,
    runs: int = 50,
    seed: int = 2024,
    variables: Optional[Sequence[str]] = None,
    metric: Metric = waic_metric,
) -> VIReport:
    """Score every variable ``runs`` times and rank by mean score.

    Ties in the mean are broken by variable name.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    selected = (
        list(inputs.variables)
        if variables is None
        else [inputs.variable(name) for name in variables]
    )
    base = metric(inputs.loglik())
    logger.info(
        f"VI: {len(selected)} variables x {runs} runs, base metric {base:.3f}"
    )
    scores = np.zeros((runs, len(selected)))
    for run in range(runs):
        for j, variable in enumerate(selected):
            rng = run_rng(seed, run, variable.name)
            scores[run, j] = vi_score(inputs, variable, rng, base, metric)
        logger.debug(f"VI run {run + 1}/{runs} done")

    lows, highs = scores.min(axis=0), scores.max(axis=0)
    # averaging equal scores can round past the band
    means = np.clip(scores.mean(axis=0), lows, highs)
    table = pd.DataFrame(
        {
            "variable": [v.name for v in selected],
            "kind": [v.kind for v in selected],
            "mean": means,
            "min": lows,
            "max": highs,
        }
    )
    table = table.sort_values(["mean", "variable"], ascending=[False, True])
    table["rank"] = np.arange(1, len(table) + 1)
    return VIReport(
        table=table.reset_index(drop=True),
        scores=scores,
        seed=seed,
        variables=tuple(v.name for v in selected),
    )
