"""Cohort ingestion and baseline covariate treatment.

Two CSV inputs are read: a long-format longitudinal file (one row per biomarker
measurement) and a baseline file (one row per patient with covariates and the
categorical treatment label). Continuous covariates are log(x + 0.1) transformed,
standardized and mean-imputed; factors are reference-coded into dummy blocks that
are registered as one covariate group each.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

LOG_OFFSET = 0.1
N_BIOMARKERS = 2
DEFAULT_CATEGORIES = 3
DEFAULT_BIOMARKER_NAMES = ("M-spike", "FLC")


class CohortValidationError(ValueError):
    """Raised when cohort input fails validation.

    Attributes:
        errors: One message per offending row or column
    """

    def __init__(self, message: str, errors: Optional[Sequence[str]] = None):
        self.errors = list(errors or [])
        lines = [message]
        lines.extend(f"  - {error}" for error in self.errors[:25])
        if len(self.errors) > 25:
            lines.append(f"  ... and {len(self.errors) - 25} more")
        super().__init__("\n".join(lines))


class SchemaError(CohortValidationError):
    """Raised when an input file lacks a required column."""


class UnseenLevelError(KeyError):
    """Raised when a factor label was not seen when the encoding was built."""


@dataclass(frozen=True)
class LongitudinalObservation:
    """One biomarker measurement; time in years since first-line start."""

    patient_id: str
    biomarker: int
    time: float
    value: float

    def __post_init__(self):
        if self.biomarker not in (1, 2):
            raise ValueError(f"biomarker must be 1 or 2 (got {self.biomarker})")
        if not math.isfinite(self.time) or self.time < 0:
            raise ValueError(f"time must be finite and >= 0 (got {self.time})")
        if not math.isfinite(self.value):
            raise ValueError(f"value must be finite (got {self.value})")


@dataclass(frozen=True, eq=False)
class PatientRecord:
    patient_id: str
    covariates: np.ndarray
    covariate_groups: Mapping[str, Tuple[int, ...]]
    treatment: int


@dataclass(frozen=True)
class CovariateLogEntry:
    """What was done to one baseline variable during preprocessing."""

    name: str
    kind: str
    columns: Tuple[str, ...]
    n: int
    n_missing: int
    transform: str = ""
    mean: Optional[float] = None
    sd: Optional[float] = None
    raw_median: Optional[float] = None
    raw_q1: Optional[float] = None
    raw_q3: Optional[float] = None
    reference: Optional[str] = None
    level_counts: Mapping[str, int] = field(default_factory=dict)

    @property
    def pct_missing(self) -> float:
        return 100.0 * self.n_missing / self.n if self.n else 0.0

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "name": self.name,
            "kind": self.kind,
            "columns": list(self.columns),
            "n": self.n,
            "n_missing": self.n_missing,
            "pct_missing": round(self.pct_missing, 6),
        }
        if self.kind == "continuous":
            data.update(
                transform=self.transform,
                mean=self.mean,
                sd=self.sd,
                raw_median=self.raw_median,
                raw_q1=self.raw_q1,
                raw_q3=self.raw_q3,
            )
        else:
            data.update(reference=self.reference, level_counts=dict(self.level_counts))
        return data


@dataclass(frozen=True)
class FactorEncoding:
    """Reference coding of one factor; one dummy column per non-reference level."""

    name: str
    reference: str
    levels: Tuple[str, ...]
    not_reported_token: str = "Not reported"
    policy: str = "level"

    def transform(self, labels: Sequence[Any]) -> np.ndarray:
        """Encode labels into dummy columns.

        Raises:
            UnseenLevelError: If a label is neither the reference nor a known level
        """
        index = {level: j for j, level in enumerate(self.levels)}
        columns = np.zeros((len(labels), len(self.levels)))
        for i, raw in enumerate(labels):
            label = _normalize_label(raw, self.not_reported_token)
            if label == self.reference:
                continue
            if label == self.not_reported_token and self.policy == "drop":
                continue
            if label not in index:
                raise UnseenLevelError(
                    f"Unseen level '{label}' for factor '{self.name}' "
                    f"(known: {', '.join((self.reference,) + self.levels)})"
                )
            columns[i, index[label]] = 1.0
        return columns


@dataclass(frozen=True)
class EncodedFactor:
    columns: np.ndarray
    column_names: Tuple[str, ...]
    group: Tuple[str, Tuple[int, ...]]
    encoding: FactorEncoding
    log_entry: CovariateLogEntry


@dataclass(frozen=True)
class CohortSchema:
    """Column mapping and covariate declarations for the two input files.

    When neither ``continuous`` nor ``factors`` is declared, every baseline column
    other than the id and treatment columns is used: numeric columns become
    continuous covariates, the rest factors referenced at their first sorted level.
    """

    id_column: str = "patient_id"
    biomarker_column: str = "biomarker"
    time_column: str = "time"
    value_column: str = "value"
    treatment_column: str = "treatment"
    continuous: Tuple[str, ...] = ()
    factors: Mapping[str, str] = field(default_factory=dict)
    missing_tokens: Tuple[str, ...] = ("", "NA", "N/A", "NaN", "nan")
    not_reported_token: str = "Not reported"
    not_reported_policy: str = "level"
    n_categories: int = DEFAULT_CATEGORIES
    category_labels: Tuple[str, ...] = ()
    biomarker_names: Tuple[str, ...] = DEFAULT_BIOMARKER_NAMES

    def __post_init__(self):
        if self.not_reported_policy not in ("level", "drop"):
            raise ValueError(
                f"not_reported_policy must be 'level' or 'drop' "
                f"(got '{self.not_reported_policy}')"
            )
        if self.n_categories < 2:
            raise ValueError("n_categories must be at least 2")
        if self.category_labels and len(self.category_labels) != self.n_categories:
            raise ValueError(
                f"category_labels has {len(self.category_labels)} entries, "
                f"expected {self.n_categories}"
            )

    @classmethod
    def from_mapping(cls, data: Optional[Mapping[str, Any]]) -> "CohortSchema":
        """Build a schema from a config section, ignoring unknown keys."""
        if not data:
            return cls()
        known = set(cls.__dataclass_fields__)
        kwargs = {k: v for k, v in data.items() if k in known}
        sequences = (
            "continuous",
            "missing_tokens",
            "category_labels",
            "biomarker_names",
        )
        for key in sequences:
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "factors" in kwargs:
            kwargs["factors"] = dict(kwargs["factors"])
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id_column": self.id_column,
            "biomarker_column": self.biomarker_column,
            "time_column": self.time_column,
            "value_column": self.value_column,
            "treatment_column": self.treatment_column,
            "continuous": list(self.continuous),
            "factors": dict(self.factors),
            "missing_tokens": list(self.missing_tokens),
            "not_reported_token": self.not_reported_token,
            "not_reported_policy": self.not_reported_policy,
            "n_categories": self.n_categories,
            "category_labels": list(self.category_labels),
            "biomarker_names": list(self.biomarker_names),
        }


@dataclass(frozen=True)
class Design:
    """Treated covariate matrix with its column bookkeeping."""

    X: np.ndarray
    column_names: Tuple[str, ...]
    groups: Mapping[str, Tuple[int, ...]]
    log: Tuple[CovariateLogEntry, ...]
    encodings: Mapping[str, FactorEncoding]


@dataclass(frozen=True, eq=False)
class Cohort:
    """Immutable analysis-ready cohort.

    Attributes:
        patients: Patient records in baseline-file order
        observations: Measurements sorted by patient, biomarker and time
        covariate_names: Column names of the treated covariate matrix
        covariate_groups: Original variable name -> its column indices
        preprocessing_log: Per-variable record of transform and imputation
        factor_encodings: Fitted encoding of each factor, for scoring new patients
    """

    patients: Tuple[PatientRecord, ...]
    observations: Tuple[LongitudinalObservation, ...]
    covariate_names: Tuple[str, ...]
    covariate_groups: Mapping[str, Tuple[int, ...]]
    preprocessing_log: Tuple[CovariateLogEntry, ...] = ()
    n_categories: int = DEFAULT_CATEGORIES
    biomarker_names: Tuple[str, ...] = DEFAULT_BIOMARKER_NAMES
    category_labels: Tuple[str, ...] = ()
    factor_encodings: Mapping[str, FactorEncoding] = field(default_factory=dict)

    def __post_init__(self):
        errors = []
        ids = [p.patient_id for p in self.patients]
        if len(set(ids)) != len(ids):
            errors.append("duplicate patient ids in baseline data")
        known = set(ids)
        observed = set()
        for obs in self.observations:
            if obs.patient_id not in known:
                errors.append(f"observation for unknown patient '{obs.patient_id}'")
            observed.add(obs.patient_id)
        for patient in self.patients:
            if patient.patient_id not in observed:
                errors.append(
                    f"patient '{patient.patient_id}' has no longitudinal observations"
                )
            if not 1 <= patient.treatment <= self.n_categories:
                errors.append(
                    f"patient '{patient.patient_id}' treatment {patient.treatment} "
                    f"outside 1..{self.n_categories}"
                )
            if len(patient.covariates) != len(self.covariate_names):
                errors.append(
                    f"patient '{patient.patient_id}' has {len(patient.covariates)} "
                    f"covariates, expected {len(self.covariate_names)}"
                )
        covered = sorted(i for cols in self.covariate_groups.values() for i in cols)
        if covered != list(range(len(self.covariate_names))):
            errors.append("covariate groups do not partition the covariate columns")
        if errors:
            raise CohortValidationError("Invalid cohort", errors)

    @classmethod
    def from_arrays(
        cls,
        patient_ids: Sequence[str],
        X: np.ndarray,
        treatments: Sequence[int],
        observations: Sequence[LongitudinalObservation],
        covariate_names: Optional[Sequence[str]] = None,
        covariate_groups: Optional[Mapping[str, Sequence[int]]] = None,
        **kwargs,
    ) -> "Cohort":
        """Assemble a cohort from an already-treated covariate matrix."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(patient_ids) == 0:
            X = X.reshape(0, X.shape[1] if X.ndim == 2 else 0)
        names = tuple(covariate_names or [f"x{j + 1}" for j in range(X.shape[1])])
        if covariate_groups is None:
            covariate_groups = {name: (j,) for j, name in enumerate(names)}
        groups = dict(
            {name: tuple(cols) for name, cols in covariate_groups.items()}
        )
        patients = tuple(
            PatientRecord(
                patient_id=str(pid),
                covariates=_frozen(X[i]),
                covariate_groups=groups,
                treatment=int(treatments[i]),
            )
            for i, pid in enumerate(patient_ids)
        )
        order = {str(pid): i for i, pid in enumerate(patient_ids)}
        ordered = tuple(
            sorted(
                observations,
                key=lambda o: (order.get(o.patient_id, -1), o.biomarker, o.time),
            )
        )
        return cls(
            patients=patients,
            observations=ordered,
            covariate_names=names,
            covariate_groups=groups,
            **kwargs,
        )

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @cached_property
    def patient_ids(self) -> Tuple[str, ...]:
        return tuple(p.patient_id for p in self.patients)

    @cached_property
    def patient_index(self) -> Mapping[str, int]:
        return dict({pid: i for i, pid in enumerate(self.patient_ids)})

    @cached_property
    def X(self) -> np.ndarray:
        if not self.patients:
            return _frozen(np.zeros((0, self.n_covariates)))
        return _frozen(np.vstack([p.covariates for p in self.patients]))

    @cached_property
    def design(self) -> np.ndarray:
        """Covariates with a leading intercept column."""
        return _frozen(np.hstack([np.ones((self.n_patients, 1)), self.X]))

    @cached_property
    def treatments(self) -> np.ndarray:
        return _frozen(np.array([p.treatment for p in self.patients], dtype=int))

    @cached_property
    def obs_patient(self) -> np.ndarray:
        index = self.patient_index
        return _frozen(
            np.array([index[o.patient_id] for o in self.observations], dtype=int)
        )

    @cached_property
    def obs_biomarker(self) -> np.ndarray:
        """Zero-based biomarker index per observation."""
        index = [o.biomarker - 1 for o in self.observations]
        return _frozen(np.array(index, dtype=int))

    @cached_property
    def obs_time(self) -> np.ndarray:
        return _frozen(np.array([o.time for o in self.observations], dtype=float))

    @cached_property
    def obs_value(self) -> np.ndarray:
        return _frozen(np.array([o.value for o in self.observations], dtype=float))

    def biomarker_name(self, biomarker: int) -> str:
        """Display name of a 1-based biomarker index."""
        if biomarker - 1 < len(self.biomarker_names):
            return self.biomarker_names[biomarker - 1]
        return f"biomarker {biomarker}"

    def category_label(self, category: int) -> str:
        """Display label of a 1-based category index."""
        if category - 1 < len(self.category_labels):
            return self.category_labels[category - 1]
        return str(category)

    def max_time(self, patient_id: str) -> float:
        times = [o.time for o in self.observations if o.patient_id == patient_id]
        return max(times) if times else 0.0

    def preprocessing_report(self) -> Dict[str, Any]:
        return {
            "covariate_names": list(self.covariate_names),
            "covariate_groups": {k: list(v) for k, v in self.covariate_groups.items()},
            "covariates": [entry.to_dict() for entry in self.preprocessing_log],
        }


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def _normalize_label(raw: Any, not_reported_token: str) -> str:
    if raw is None or (isinstance(raw, float) and math.isnan(raw)):
        return not_reported_token
    label = str(raw).strip()
    return label if label else not_reported_token


def preprocess_continuous(
    raw: Sequence[Optional[float]], name: str = "x"
) -> Tuple[np.ndarray, CovariateLogEntry]:
    """Apply log(x + 0.1), z-score on observed entries, then impute missing as 0.

    Args:
        raw: Values with None/NaN marking missing entries
        name: Variable name for the log entry and error messages

    Returns:
        Tuple of (treated values, log entry recording the mean/sd used)

    Raises:
        CohortValidationError: If fewer than two values are observed, a value is
            negative, or the log-transformed values have zero variance
    """
    values = np.array(
        [np.nan if v is None else float(v) for v in raw], dtype=float
    )
    observed = np.isfinite(values)
    n_observed = int(observed.sum())
    if n_observed < 2:
        raise CohortValidationError(
            f"Covariate '{name}' needs at least 2 observed values (got {n_observed})"
        )
    negative = np.flatnonzero(observed & (values < 0))
    if negative.size:
        raise CohortValidationError(
            f"Covariate '{name}' must be nonnegative",
            [f"row {i + 1}: {values[i]}" for i in negative],
        )

    logged = np.log(values[observed] + LOG_OFFSET)
    mean = float(np.mean(logged))
    sd = float(np.std(logged, ddof=1))
    if not sd > 0:
        raise CohortValidationError(
            f"Covariate '{name}' has zero variance after log transform"
        )

    treated = np.zeros_like(values)
    treated[observed] = (logged - mean) / sd
    q1, median, q3 = np.percentile(values[observed], [25, 50, 75])
    entry = CovariateLogEntry(
        name=name,
        kind="continuous",
        columns=(name,),
        n=len(values),
        n_missing=len(values) - n_observed,
        transform="log(x+0.1), z-score, missing -> 0",
        mean=mean,
        sd=sd,
        raw_median=float(median),
        raw_q1=float(q1),
        raw_q3=float(q3),
    )
    return treated, entry


def encode_factors(
    labels: Sequence[Any],
    reference: str,
    name: str = "factor",
    levels: Optional[Sequence[str]] = None,
    not_reported_token: str = "Not reported",
    policy: str = "level",
) -> EncodedFactor:
    """Reference-code a factor into one 0/1 column per non-reference level.

    Missing labels are read as ``not_reported_token``. With ``policy="level"`` that
    token is its own level; with ``policy="drop"`` it shares the reference's all-zero
    row. The returned group lists local column indices 0..L-1.

    Raises:
        CohortValidationError: If the reference is neither observed nor declared, or
            the factor has no non-reference level
    """
    normalized = [_normalize_label(raw, not_reported_token) for raw in labels]
    observed = sorted(set(normalized) - {not_reported_token})
    if not_reported_token in normalized:
        observed.append(not_reported_token)
    candidates = list(levels) if levels is not None else observed
    reference = str(reference)
    if reference not in observed and reference not in candidates:
        raise CohortValidationError(
            f"Reference level '{reference}' of factor '{name}' is neither observed "
            f"nor declared"
        )
    non_reference = [level for level in candidates if level != reference]
    if policy == "drop":
        non_reference = [lv for lv in non_reference if lv != not_reported_token]
    if not non_reference:
        raise CohortValidationError(
            f"Factor '{name}' is degenerate: every label equals the reference "
            f"'{reference}'"
        )

    encoding = FactorEncoding(
        name=name,
        reference=reference,
        levels=tuple(non_reference),
        not_reported_token=not_reported_token,
        policy=policy,
    )
    columns = encoding.transform(normalized)
    column_names = tuple(f"{name}[{level}]" for level in encoding.levels)
    counts = {level: normalized.count(level) for level in (reference, *non_reference)}
    log_entry = CovariateLogEntry(
        name=name,
        kind="factor",
        columns=column_names,
        n=len(normalized),
        n_missing=normalized.count(not_reported_token),
        reference=reference,
        level_counts=counts,
    )
    return EncodedFactor(
        columns=columns,
        column_names=column_names,
        group=(name, tuple(range(len(column_names)))),
        encoding=encoding,
        log_entry=log_entry,
    )


def build_design(baseline: pd.DataFrame, schema: CohortSchema) -> Design:
    """Treat every declared covariate of the baseline table.

    Raises:
        SchemaError: If a declared covariate column is missing
    """
    continuous, factors = _declared_covariates(baseline, schema)
    missing = [c for c in (*continuous, *factors) if c not in baseline.columns]
    if missing:
        raise SchemaError(
            "Baseline file is missing covariate columns",
            [f"missing column '{c}'" for c in missing],
        )

    blocks: List[np.ndarray] = []
    names: List[str] = []
    groups: Dict[str, Tuple[int, ...]] = {}
    log: List[CovariateLogEntry] = []
    encodings: Dict[str, FactorEncoding] = {}
    n = len(baseline)

    for column in continuous:
        raw = _numeric_column(baseline[column], schema.missing_tokens, column)
        treated, entry = preprocess_continuous(raw, name=column)
        groups[column] = (len(names),)
        names.append(column)
        blocks.append(treated.reshape(n, 1))
        log.append(entry)

    for column, reference in factors.items():
        labels = [
            None if _is_missing(v, schema.missing_tokens) else v
            for v in baseline[column].tolist()
        ]
        encoded = encode_factors(
            labels,
            reference,
            name=column,
            not_reported_token=schema.not_reported_token,
            policy=schema.not_reported_policy,
        )
        offset = len(names)
        groups[column] = tuple(offset + j for j in encoded.group[1])
        names.extend(encoded.column_names)
        blocks.append(encoded.columns)
        log.append(encoded.log_entry)
        encodings[column] = encoded.encoding

    X = np.hstack(blocks) if blocks else np.zeros((n, 0))
    logger.info(f"Built design with {X.shape[1]} columns from {len(groups)} variables")
    return Design(
        X=X,
        column_names=tuple(names),
        groups=dict(groups),
        log=tuple(log),
        encodings=dict(encodings),
    )


def build_cohort(
    longitudinal: pd.DataFrame,
    baseline: pd.DataFrame,
    schema: Optional[CohortSchema] = None,
) -> Cohort:
    """Validate the two tables and assemble a Cohort.

    Raises:
        SchemaError: If a required column is absent
        CohortValidationError: On unparseable, out-of-range or duplicate rows
    """
    schema = schema or CohortSchema()
    _require_columns(
        longitudinal,
        [
            schema.id_column,
            schema.biomarker_column,
            schema.time_column,
            schema.value_column,
        ],
        "Longitudinal",
    )
    _require_columns(baseline, [schema.id_column, schema.treatment_column], "Baseline")

    errors: List[str] = []
    ids = [str(v).strip() for v in baseline[schema.id_column].tolist()]
    seen: Dict[str, int] = {}
    for row, pid in enumerate(ids, start=1):
        if not pid:
            errors.append(f"baseline row {row}: empty patient id")
        elif pid in seen:
            errors.append(
                f"baseline row {row}: duplicate patient id '{pid}' "
                f"(first at row {seen[pid]})"
            )
        else:
            seen[pid] = row

    treatments = []
    for row, raw in enumerate(baseline[schema.treatment_column].tolist(), start=1):
        category = _parse_category(raw, schema)
        if category is None:
            errors.append(
                f"baseline row {row}: treatment '{raw}' "
                f"outside 1..{schema.n_categories}"
            )
        treatments.append(category)

    observations: List[LongitudinalObservation] = []
    keys: Dict[Tuple[str, int, float], int] = {}
    columns = zip(
        longitudinal[schema.id_column].tolist(),
        longitudinal[schema.biomarker_column].tolist(),
        longitudinal[schema.time_column].tolist(),
        longitudinal[schema.value_column].tolist(),
    )
    for row, (raw_id, raw_marker, raw_time, raw_value) in enumerate(columns, start=1):
        pid = str(raw_id).strip()
        marker = _parse_biomarker(raw_marker, schema)
        time = _parse_float(raw_time)
        value = _parse_float(raw_value)
        problems = []
        if pid not in seen:
            problems.append(f"unknown patient id '{pid}'")
        if marker is None:
            problems.append(f"biomarker '{raw_marker}' is not 1, 2 or a known name")
        if time is None:
            problems.append(f"time '{raw_time}' is not a number")
        elif not math.isfinite(time) or time < 0:
            problems.append(f"time must be finite and >= 0 (got {time})")
        if value is None or not math.isfinite(value):
            problems.append(f"value '{raw_value}' is not a finite number")
        if problems:
            errors.append(f"longitudinal row {row}: " + "; ".join(problems))
            continue
        key = (pid, marker, time)
        if key in keys:
            errors.append(
                f"longitudinal row {row}: duplicate (patient, biomarker, time) "
                f"{key} (first at row {keys[key]})"
            )
            continue
        keys[key] = row
        observations.append(LongitudinalObservation(pid, marker, time, value))

    if errors:
        raise CohortValidationError("Cohort validation failed", errors)

    design = build_design(baseline, schema)
    labels = schema.category_labels or tuple(
        str(j) for j in range(1, schema.n_categories + 1)
    )
    cohort = Cohort.from_arrays(
        patient_ids=ids,
        X=design.X,
        treatments=treatments,
        observations=observations,
        covariate_names=design.column_names,
        covariate_groups=design.groups,
        preprocessing_log=design.log,
        factor_encodings=design.encodings,
        n_categories=schema.n_categories,
        biomarker_names=tuple(schema.biomarker_names),
        category_labels=tuple(labels),
    )
    logger.info(
        f"Loaded cohort: {cohort.n_patients} patients, "
        f"{cohort.n_observations} observations, {cohort.n_covariates} covariate columns"
    )
    return cohort


def load_cohort(
    longitudinal_file: Union[str, Path],
    baseline_file: Union[str, Path],
    schema: Optional[CohortSchema] = None,
) -> Cohort:
    """Read the longitudinal and baseline CSV files into a validated Cohort.

    Raises:
        FileNotFoundError: If either file doesn't exist
        SchemaError: If a required column is absent
        CohortValidationError: On invalid rows
    """
    frames = []
    inputs = (("Longitudinal", longitudinal_file), ("Baseline", baseline_file))
    for label, path in inputs:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"{label} file not found: {path}")
        frames.append(
            pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
        )
    return build_cohort(frames[0], frames[1], schema)


def encode_new_patients(
    baseline: pd.DataFrame,
    cohort: Cohort,
    schema: Optional[CohortSchema] = None,
) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Treat a baseline table of new patients with a fitted cohort's preprocessing.

    Continuous covariates reuse the fitted log-scale mean and sd (missing -> 0);
    factors reuse the fitted encodings. The treatment column is not needed.

    Returns:
        Tuple of (patient ids, (n, P) covariates in the cohort's column order)

    Raises:
        SchemaError: If the id column or a fitted covariate column is absent
        CohortValidationError: On unparseable or negative continuous values
        UnseenLevelError: If a factor label was not seen when fitting
    """
    schema = schema or CohortSchema()
    _require_columns(
        baseline, [schema.id_column, *cohort.covariate_groups], "Baseline"
    )
    entries = {entry.name: entry for entry in cohort.preprocessing_log}
    X = np.zeros((len(baseline), cohort.n_covariates))
    for name, columns in cohort.covariate_groups.items():
        entry = entries[name]
        if entry.kind == "continuous":
            raw = _numeric_column(baseline[name], schema.missing_tokens, name)
            values = np.array([np.nan if v is None else v for v in raw], dtype=float)
            observed = np.isfinite(values)
            negative = np.flatnonzero(observed & (values < 0))
            if negative.size:
                raise CohortValidationError(
                    f"Covariate '{name}' must be nonnegative",
                    [f"row {i + 1}: {values[i]}" for i in negative],
                )
            logged = np.log(values[observed] + LOG_OFFSET)
            X[observed, columns[0]] = (logged - entry.mean) / entry.sd
        else:
            labels = [
                None if _is_missing(v, schema.missing_tokens) else v
                for v in baseline[name].tolist()
            ]
            X[:, list(columns)] = cohort.factor_encodings[name].transform(labels)
    ids = tuple(str(v).strip() for v in baseline[schema.id_column].tolist())
    return ids, X


def write_preprocessing_log(cohort: Cohort, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cohort.preprocessing_report(), indent=2, sort_keys=True))
    return path


def summarize_covariates(cohort: Cohort) -> pd.DataFrame:
    """One row per treated covariate column: missingness, raw quartiles and the
    mean and sd of the treated values (imputed zeros included)."""
    entries = {entry.name: entry for entry in cohort.preprocessing_log}
    rows = []
    for variable, columns in cohort.covariate_groups.items():
        entry = entries.get(variable)
        for col in columns:
            treated = cohort.X[:, col]
            row = {
                "variable": variable,
                "column": cohort.covariate_names[col],
                "kind": entry.kind if entry else "continuous",
                "n": entry.n if entry else cohort.n_patients,
                "n_missing": entry.n_missing if entry else 0,
                "pct_missing": entry.pct_missing if entry else 0.0,
                "raw_median": entry.raw_median if entry else None,
                "raw_q1": entry.raw_q1 if entry else None,
                "raw_q3": entry.raw_q3 if entry else None,
                "treated_mean": float(treated.mean()) if treated.size else None,
                "treated_sd": float(treated.std(ddof=1)) if treated.size > 1 else None,
            }
            rows.append(row)
    return pd.DataFrame(rows)


def _declared_covariates(
    baseline: pd.DataFrame, schema: CohortSchema
) -> Tuple[Tuple[str, ...], Dict[str, str]]:
    if schema.continuous or schema.factors:
        return tuple(schema.continuous), dict(schema.factors)
    continuous: List[str] = []
    factors: Dict[str, str] = {}
    for column in baseline.columns:
        if column in (schema.id_column, schema.treatment_column):
            continue
        present = [
            v
            for v in baseline[column].tolist()
            if not _is_missing(v, schema.missing_tokens)
        ]
        if present and all(_parse_float(v) is not None for v in present):
            continuous.append(column)
        else:
            labels = {str(v).strip() for v in present}
            levels = sorted(labels - {schema.not_reported_token})
            factors[column] = levels[0] if levels else schema.not_reported_token
    return tuple(continuous), factors


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], label: str) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(
            f"{label} file is missing required columns: {', '.join(missing)}",
            [f"missing column '{c}'" for c in missing],
        )


def _is_missing(value: Any, tokens: Sequence[str]) -> bool:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return True
    return str(value).strip() in tokens


def _numeric_column(
    series: pd.Series, tokens: Sequence[str], name: str
) -> List[Optional[float]]:
    values: List[Optional[float]] = []
    errors = []
    for row, raw in enumerate(series.tolist(), start=1):
        if _is_missing(raw, tokens):
            values.append(None)
            continue
        parsed = _parse_float(raw)
        if parsed is None or not math.isfinite(parsed):
            errors.append(f"baseline row {row}: '{raw}' is not a number")
        values.append(parsed)
    if errors:
        raise CohortValidationError(
            f"Covariate '{name}' has unparseable values", errors
        )
    return values


def _parse_float(raw: Any) -> Optional[float]:
    try:
        return float(str(raw).strip())
    except ValueError:
        return None


def _parse_int(raw: Any) -> Optional[int]:
    value = _parse_float(raw)
    if value is None or not value.is_integer():
        return None
    return int(value)


def _parse_category(raw: Any, schema: CohortSchema) -> Optional[int]:
    label = str(raw).strip()
    if label in schema.category_labels:
        return schema.category_labels.index(label) + 1
    category = _parse_int(label)
    if category is None or not 1 <= category <= schema.n_categories:
        return None
    return category


def _parse_biomarker(raw: Any, schema: CohortSchema) -> Optional[int]:
    label = str(raw).strip()
    if label in schema.biomarker_names:
        return schema.biomarker_names.index(label) + 1
    marker = _parse_int(label)
    return marker if marker in (1, 2) else None
