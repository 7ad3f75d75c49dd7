"""Synthetic cohorts drawn from the joint generative model.

Per patient: b_ki ~ MVN(0, Omega_k), observations at renewal-process (or fixed grid)
times with Normal(0, sigma2_k) noise around the bi-exponential mean, and a treatment
z_i ~ Categorical(phi_i) from the multinomial-logit submodel. Raw covariates are
generated first and treated exactly as real baseline files are, so simulated tables
round-trip through :func:`jointcat.model.data_model.load_cohort`.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd

from jointcat.model.biexp import MAX_EXPONENT, BiomarkerParams
from jointcat.model.categorical import probabilities
from jointcat.model.data_model import (
    DEFAULT_BIOMARKER_NAMES,
    N_BIOMARKERS,
    Cohort,
    CohortSchema,
    build_cohort,
    build_design,
)
from jointcat.model.posterior import Mode, ModelParameters, constrained_names

logger = logging.getLogger(__name__)

DEFAULT_CATEGORY_LABELS = ("Carfilzomib", "Pomalidomide", "Other")

# Posterior means of the bi-exponential fit to the M-spike / FLC application.
DEFAULT_THETA = np.log([[18.60, 0.24, 4.76], [21.20, 0.18, 3.74]])
DEFAULT_SIGMA2 = np.array([0.06, 0.14])
DEFAULT_OMEGA = np.array(
    [
        [[0.79, -0.22, 0.40], [-0.22, 0.70, 0.05], [0.40, 0.05, 0.87]],
        [[2.93, -1.37, 1.62], [-1.37, 1.60, -0.04], [1.62, -0.04, 2.35]],
    ]
)
# Association coefficients as log relative risks, [category][biomarker][B*, G*, D*].
DEFAULT_ALPHA = np.log(
    [
        [[1.13, 1.15, 0.69], [1.41, 1.67, 0.81]],
        [[1.14, 1.57, 0.72], [1.61, 1.66, 0.65]],
    ]
)


class SimulationError(ValueError):
    """Raised when a scenario is invalid or produces a diverging trajectory."""


@dataclass(frozen=True)
class ObservationSchedule:
    """When biomarkers are measured.

    ``renewal``: first measurement at t = 0, then exponential gaps with the given
    rate (per year) until ``horizon``. ``grid``: the fixed ``times`` for everyone.
    """

    kind: str = "renewal"
    rate: float = 2.0
    horizon: float = 2.0
    times: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("renewal", "grid"):
            raise SimulationError(
                f"schedule kind must be renewal or grid (got {self.kind})"
            )
        if self.kind == "renewal" and not (self.rate > 0 and self.horizon >= 0):
            raise SimulationError("renewal schedule needs rate > 0 and horizon >= 0")
        if self.kind == "grid":
            if not self.times or any(t < 0 for t in self.times):
                raise SimulationError("grid schedule needs nonnegative times")

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "grid":
            return np.array(sorted(set(self.times)), dtype=float)
        times = [0.0]
        while True:
            t = times[-1] + rng.exponential(1.0 / self.rate)
            if t > self.horizon:
                return np.array(times)
            times.append(t)


@dataclass(frozen=True)
class CovariateSpec:
    """Generator of one raw baseline covariate.

    ``lognormal`` columns are exp(mean + sd * N(0, 1)), nonnegative and right-skewed
    like laboratory values; ``missing_rate`` blanks a random share of them.
    ``factor`` columns draw ``levels`` with ``probabilities``; their dummy columns
    follow the sorted order of the non-reference levels.
    """

    name: str
    kind: str = "lognormal"
    mean: float = 2.0
    sd: float = 0.5
    missing_rate: float = 0.0
    levels: Tuple[str, ...] = ()
    probabilities: Tuple[float, ...] = ()
    reference: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("lognormal", "factor"):
            raise SimulationError(
                f"covariate '{self.name}' kind must be lognormal or factor"
            )
        if not 0.0 <= self.missing_rate < 1.0:
            raise SimulationError(
                f"covariate '{self.name}' missing_rate must be in [0, 1)"
            )
        if self.kind == "factor":
            if len(self.levels) < 2 or len(self.levels) != len(self.probabilities):
                raise SimulationError(
                    f"factor '{self.name}' needs >= 2 levels with one probability each"
                )
            if abs(sum(self.probabilities) - 1.0) > 1e-9:
                raise SimulationError(
                    f"factor '{self.name}' probabilities must sum to 1"
                )
            if self.missing_rate:
                raise SimulationError(
                    f"factor '{self.name}' cannot have missing values"
                )

    @property
    def reference_level(self) -> Optional[str]:
        if self.kind != "factor":
            return None
        return self.reference or self.levels[0]

    @property
    def n_columns(self) -> int:
        return len(self.levels) - 1 if self.kind == "factor" else 1

    def draw(self, n: int, rng: np.random.Generator) -> List[Any]:
        if self.kind == "factor":
            picks = rng.choice(len(self.levels), size=n, p=self.probabilities)
            return [self.levels[p] for p in picks]
        values = np.exp(self.mean + self.sd * rng.standard_normal(n))
        missing = rng.random(n) < self.missing_rate
        return [None if m else float(v) for v, m in zip(values, missing)]


def _default_covariates() -> Tuple[CovariateSpec, ...]:
    return (
        CovariateSpec("x1", mean=0.0, sd=0.5),
        CovariateSpec("x2", mean=2.0, sd=0.5, missing_rate=0.05),
        CovariateSpec(
            "ecog",
            kind="factor",
            levels=("0", "1", "2+"),
            probabilities=(0.4, 0.4, 0.2),
        ),
    )


def _default_beta(theta: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    slopes = np.log([[0.76, 1.0, 1.3, 1.6], [1.19, 1.0, 0.8, 0.7]])
    # Intercepts put the average patient at roughly (0.21, 0.21, 0.58).
    intercepts = -1.0 - np.einsum("qkl,kl->q", alpha, theta)
    return np.column_stack([intercepts, slopes])


@dataclass(frozen=True, eq=False)
class SimulationScenario:
    """Everything needed to draw one synthetic cohort.

    Attributes:
        n_patients: Cohort size
        theta: (K, 3) log-scale population characteristics
        sigma2: (K,) residual variances
        omega: (K, 3, 3) random-effects covariances
        beta: (J-1, P+1) categorical coefficients on the treated covariates
        alpha: (J-1, K, 3) association coefficients, or None for no sharing
        schedule: Observation times per biomarker
        covariates: Raw covariate generators; continuous columns come first in the
            treated design, then factor dummies
        seed: Root seed
    """

    n_patients: int = 300
    theta: np.ndarray = field(default_factory=lambda: DEFAULT_THETA.copy())
    sigma2: np.ndarray = field(default_factory=lambda: DEFAULT_SIGMA2.copy())
    omega: np.ndarray = field(default_factory=lambda: DEFAULT_OMEGA.copy())
    beta: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = field(default_factory=lambda: DEFAULT_ALPHA.copy())
    schedule: ObservationSchedule = field(default_factory=ObservationSchedule)
    covariates: Tuple[CovariateSpec, ...] = field(default_factory=_default_covariates)
    seed: int = 2024
    category_labels: Tuple[str, ...] = DEFAULT_CATEGORY_LABELS
    biomarker_names: Tuple[str, ...] = DEFAULT_BIOMARKER_NAMES

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        sigma2 = np.asarray(self.sigma2, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        alpha = None if self.alpha is None else np.asarray(self.alpha, dtype=float)
        if self.n_patients < 1:
            raise SimulationError("n_patients must be positive")
        K = N_BIOMARKERS
        if theta.shape != (K, 3) or sigma2.shape != (K,) or omega.shape != (K, 3, 3):
            raise SimulationError("theta, sigma2 and omega must cover both biomarkers")
        for k in range(K):
            try:
                BiomarkerParams(theta[k], float(sigma2[k]), omega[k])
            except ValueError as e:
                raise SimulationError(f"biomarker {k + 1}: {e}") from e
        J = len(self.category_labels)
        if J < 2:
            raise SimulationError("at least two categories are required")
        if self.beta is None:
            if alpha is None or J != 3 or self.n_covariate_columns != 4:
                raise SimulationError("beta must be given for a non-default design")
            beta = _default_beta(theta, alpha)
        else:
            beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if beta.shape != (J - 1, self.n_covariate_columns + 1):
            raise SimulationError(
                f"beta must have shape ({J - 1}, {self.n_covariate_columns + 1}) "
                f"(got {beta.shape})"
            )
        if alpha is not None and alpha.shape != (J - 1, K, 3):
            raise SimulationError(f"alpha must have shape ({J - 1}, {K}, 3)")
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise SimulationError("covariate names must be unique")
        for name, value in (
            ("theta", theta),
            ("sigma2", sigma2),
            ("omega", omega),
            ("beta", beta),
            ("alpha", alpha),
        ):
            object.__setattr__(self, name, value)

    @property
    def n_categories(self) -> int:
        return len(self.category_labels)

    @property
    def n_covariate_columns(self) -> int:
        return sum(c.n_columns for c in self.covariates)

    def schema(self) -> CohortSchema:
        """Schema under which the simulated tables are read back."""
        return CohortSchema(
            continuous=tuple(c.name for c in self.covariates if c.kind != "factor"),
            factors={
                c.name: c.reference_level for c in self.covariates if c.kind == "factor"
            },
            n_categories=self.n_categories,
            category_labels=tuple(self.category_labels),
            biomarker_names=tuple(self.biomarker_names),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_patients": self.n_patients,
            "seed": self.seed,
            "theta": self.theta.tolist(),
            "sigma2": self.sigma2.tolist(),
            "omega": self.omega.tolist(),
            "beta": self.beta.tolist(),
            "alpha": None if self.alpha is None else self.alpha.tolist(),
            "schedule": {
                "kind": self.schedule.kind,
                "rate": self.schedule.rate,
                "horizon": self.schedule.horizon,
                "times": list(self.schedule.times),
            },
            "covariates": [
                {
                    "name": c.name,
                    "kind": c.kind,
                    "mean": c.mean,
                    "sd": c.sd,
                    "missing_rate": c.missing_rate,
                    "levels": list(c.levels),
                    "probabilities": list(c.probabilities),
                    "reference": c.reference_level,
                }
                for c in self.covariates
            ],
            "category_labels": list(self.category_labels),
            "biomarker_names": list(self.biomarker_names),
        }

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SimulationScenario":
        """Build a scenario from parsed YAML/JSON; absent keys keep their defaults.

        Raises:
            SimulationError: If a value has the wrong shape or range
        """
        kwargs: Dict[str, Any] = {}
        for key in ("n_patients", "seed"):
            if key in data:
                kwargs[key] = int(data[key])
        for key in ("theta", "sigma2", "omega", "beta", "alpha"):
            if key in data:
                value = data[key]
                kwargs[key] = None if value is None else np.asarray(value, float)
        for key in ("category_labels", "biomarker_names"):
            if key in data:
                kwargs[key] = tuple(str(v) for v in data[key])
        try:
            if "schedule" in data:
                sched = dict(data["schedule"])
                sched["times"] = tuple(float(t) for t in sched.get("times", ()))
                kwargs["schedule"] = ObservationSchedule(**sched)
            if "covariates" in data:
                kwargs["covariates"] = tuple(
                    CovariateSpec(**_covariate_fields(raw))
                    for raw in data["covariates"]
                )
            return cls(**kwargs)
        except TypeError as e:
            raise SimulationError(f"invalid scenario: {e}") from e


def _covariate_fields(raw: Mapping[str, Any]) -> Dict[str, Any]:
    fields = dict(raw)
    fields["levels"] = tuple(str(v) for v in fields.get("levels", ()))
    fields["probabilities"] = tuple(float(p) for p in fields.get("probabilities", ()))
    return fields


def default_scenario(n_patients: int = 300, seed: int = 2024) -> SimulationScenario:
    """Scenario with the application's posterior means as true values."""
    return SimulationScenario(n_patients=n_patients, seed=seed)


@dataclass(frozen=True, eq=False)
class SimulationTruth:
    """True parameters, random effects and probabilities behind a simulated cohort."""

    params: ModelParameters
    phi: np.ndarray
    patient_ids: Tuple[str, ...]
    covariate_names: Tuple[str, ...]

    @property
    def latent(self) -> np.ndarray:
        """(K, n, 3) true latent characteristics."""
        return self.params.latent

    def population_values(
        self, mode: Union[str, Mode] = Mode.JOINT
    ) -> Dict[str, float]:
        """True values keyed like the population-level posterior draws."""
        mode = Mode.parse(mode)
        p = self.params
        Q = p.beta.shape[0]
        values = []
        if mode is Mode.JOINT:
            values.extend(p.theta.ravel())
            values.extend(p.sigma2)
            for omega in p.omega:
                values.extend(omega[np.triu_indices(3)])
        values.extend(p.beta.ravel())
        if mode is Mode.JOINT:
            alpha = p.alpha if p.alpha is not None else np.zeros((Q, N_BIOMARKERS, 3))
            values.extend(alpha.ravel())
        names = constrained_names(mode, self.covariate_names, Q + 1)
        return dict(zip(names, (float(v) for v in values)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "population": self.population_values(Mode.JOINT),
            "patients": [
                {
                    "patient_id": pid,
                    "phi": self.phi[i].tolist(),
                    "latent": self.latent[:, i, :].tolist(),
                }
                for i, pid in enumerate(self.patient_ids)
            ],
        }


def simulate_tables(
    scenario: SimulationScenario,
) -> Tuple[pd.DataFrame, pd.DataFrame, SimulationTruth]:
    """Draw the longitudinal and baseline tables of one synthetic cohort.

    Returns:
        (longitudinal, baseline, truth) with tables in the CSV input format

    Raises:
        SimulationError: If a trajectory overflows or a factor level is never drawn
    """
    n, K = scenario.n_patients, N_BIOMARKERS
    children = np.random.SeedSequence(scenario.seed).spawn(n + 1)
    covariate_rng = np.random.default_rng(children[0])
    width = len(str(n))
    ids = [f"P{i + 1:0{width}d}" for i in range(n)]

    baseline = pd.DataFrame({"patient_id": ids})
    for spec in scenario.covariates:
        baseline[spec.name] = spec.draw(n, covariate_rng)
    schema = scenario.schema()
    design = build_design(baseline, schema)
    if design.X.shape[1] != scenario.n_covariate_columns:
        raise SimulationError(
            "a factor level was never drawn; increase n_patients or the level's "
            "probability"
        )

    chol = np.linalg.cholesky(scenario.omega)
    effects = np.empty((K, n, 3))
    treatments = np.empty(n, dtype=int)
    phi = np.empty((n, scenario.n_categories))
    rows: List[Tuple[str, int, float, float]] = []
    for i, child in enumerate(children[1:]):
        rng = np.random.default_rng(child)
        for k in range(K):
            effects[k, i] = chol[k] @ rng.standard_normal(3)
            B, G, D = np.exp(scenario.theta[k] + effects[k, i])
            times = scenario.schedule.draw(rng)
            if G * times.max() > MAX_EXPONENT:
                raise SimulationError(
                    f"trajectory of patient {ids[i]} biomarker {k + 1} overflows "
                    f"(exp(G)*t = {G * times.max():.4g})"
                )
            mu = B * (np.exp(G * times) + np.exp(-D * times) - 1.0)
            values = mu + np.sqrt(scenario.sigma2[k]) * rng.standard_normal(times.size)
            rows.extend(
                (ids[i], k + 1, float(t), float(y)) for t, y in zip(times, values)
            )
        eta = scenario.beta[:, 0] + scenario.beta[:, 1:] @ design.X[i]
        if scenario.alpha is not None:
            latent = scenario.theta + effects[:, i]
            eta = eta + np.einsum("kl,qkl->q", latent, scenario.alpha)
        phi[i] = probabilities(eta)
        treatments[i] = int(rng.choice(scenario.n_categories, p=phi[i])) + 1

    baseline["treatment"] = treatments
    longitudinal = pd.DataFrame(
        rows, columns=["patient_id", "biomarker", "time", "value"]
    )
    params = ModelParameters(
        beta=scenario.beta,
        alpha=scenario.alpha,
        theta=scenario.theta,
        sigma2=scenario.sigma2,
        omega=scenario.omega,
        effects=effects,
    )
    truth = SimulationTruth(params, phi, tuple(ids), design.column_names)
    logger.info(
        f"Simulated {n} patients with {len(longitudinal)} observations "
        f"(seed {scenario.seed})"
    )
    return longitudinal, baseline, truth


def simulate(scenario: SimulationScenario) -> Tuple[Cohort, SimulationTruth]:
    """Simulate a cohort and return it with the full truth record."""
    longitudinal, baseline, truth = simulate_tables(scenario)
    return build_cohort(longitudinal, baseline, scenario.schema()), truth


def write_simulation(
    scenario: SimulationScenario, out_dir: Union[str, Path]
) -> Dict[str, Path]:
    """Write longitudinal.csv, baseline.csv, truth.json and scenario.json.

    Returns:
        Mapping of artifact name to written path
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    longitudinal, baseline, truth = simulate_tables(scenario)
    paths = {
        "longitudinal": out / "longitudinal.csv",
        "baseline": out / "baseline.csv",
        "truth": out / "truth.json",
        "scenario": out / "scenario.json",
    }
    longitudinal.to_csv(paths["longitudinal"], index=False)
    baseline.to_csv(paths["baseline"], index=False)
    paths["truth"].write_text(json.dumps(truth.to_dict(), indent=2))
    paths["scenario"].write_text(json.dumps(scenario.to_dict(), indent=2))
    return paths


@dataclass(frozen=True, eq=False)
class CoverageReport:
    """Credible-interval coverage of true values."""

    table: pd.DataFrame
    level: float

    @property
    def coverage(self) -> float:
        return float(self.table["covered"].mean()) if len(self.table) else float("nan")

    @property
    def missed(self) -> List[str]:
        return self.table.index[~self.table["covered"]].tolist()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "coverage": self.coverage,
            "n_parameters": len(self.table),
            "missed": self.missed,
        }


def recovery_check(
    truth: Union[SimulationTruth, Mapping[str, float]],
    draws: Any,
    level: float = 0.95,
    convergence: Any = None,
) -> CoverageReport:
    """Flag whether each true value lies inside its central credible interval.

    Args:
        truth: Simulation truth or a name -> true value mapping
        draws: PosteriorDraws, or a DataFrame with one column per parameter
        level: Credible interval mass
        convergence: ConvergenceReport for ``draws``; computed when omitted and
            ``draws`` carries chains

    Raises:
        NonConvergedError: If the draws fail the convergence check
    """
    from jointcat.inference.diagnostics import NonConvergedError, check_convergence
    from jointcat.inference.sampler import PosteriorDraws

    if isinstance(draws, PosteriorDraws):
        if convergence is None:
            convergence = check_convergence(draws)
        frame = draws.to_frame()
    else:
        frame = pd.DataFrame(draws)
    if convergence is not None and not convergence.passed:
        raise NonConvergedError(convergence)

    if isinstance(truth, SimulationTruth):
        has_theta = any(c.startswith("theta.") for c in frame.columns)
        mode = Mode.JOINT if has_theta else Mode.CATEGORICAL_ONLY
        truth = truth.population_values(mode)
    tail = 100.0 * (1.0 - level) / 2.0
    rows = []
    for name, value in truth.items():
        if name not in frame.columns:
            continue
        column = frame[name].to_numpy(dtype=float)
        low, high = np.percentile(column, [tail, 100.0 - tail])
        rows.append(
            {
                "parameter": name,
                "truth": value,
                "mean": float(column.mean()),
                "ci_low": float(low),
                "ci_high": float(high),
                "covered": bool(low <= value <= high),
            }
        )
    table = pd.DataFrame(
        rows, columns=["parameter", "truth", "mean", "ci_low", "ci_high", "covered"]
    ).set_index("parameter")
    report = CoverageReport(table, level)
    logger.info(f"Coverage {report.coverage:.3f} over {len(table)} parameters")
    return report

