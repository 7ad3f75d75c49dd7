"""Shared fixtures: small hand-built cohorts."""

import numpy as np
import pandas as pd
import pytest

from jointcat.model.data_model import CohortSchema, build_cohort


def make_tables(n_patients: int = 6, seed: int = 0):
    """Longitudinal and baseline tables in the CSV input format."""
    rng = np.random.default_rng(seed)
    ids = [f"P{i + 1}" for i in range(n_patients)]
    rows = []
    for pid in ids:
        for biomarker in (1, 2):
            for t in (0.0, 0.25, 0.5, 1.0):
                value = 3.0 * (np.exp(0.3 * t) + np.exp(-2.0 * t) - 1.0)
                rows.append((pid, biomarker, t, value + 0.1 * rng.standard_normal()))
    longitudinal = pd.DataFrame(
        rows, columns=["patient_id", "biomarker", "time", "value"]
    )
    baseline = pd.DataFrame(
        {
            "patient_id": ids,
            "age": rng.uniform(50, 80, n_patients).round(1),
            "ecog": [["0", "1", "2+"][i % 3] for i in range(n_patients)],
            "treatment": [(i % 3) + 1 for i in range(n_patients)],
        }
    )
    return longitudinal, baseline


@pytest.fixture
def schema():
    return CohortSchema(
        continuous=("age",),
        factors={"ecog": "0"},
        category_labels=("A", "B", "C"),
    )


@pytest.fixture
def tables():
    return make_tables()


@pytest.fixture
def cohort(tables, schema):
    longitudinal, baseline = tables
    return build_cohort(longitudinal, baseline, schema)


@pytest.fixture
def toy_cohort(schema):
    """Three patients, enough for finite-difference gradient checks."""
    longitudinal, baseline = make_tables(n_patients=3, seed=1)
    return build_cohort(longitudinal, baseline, schema)


def make_draws(values, names=None, divergent=None):
    """PosteriorDraws over (chains, draws, parameters) values with zero stats."""
    from jointcat.inference.sampler import PosteriorDraws, SamplerConfig

    values = np.asarray(values, dtype=float)
    chains, draws, n = values.shape
    names = tuple(names or (f"x{j + 1}" for j in range(n)))
    shape = (chains, draws)
    return PosteriorDraws(
        names=names,
        values=values,
        divergent=np.zeros(shape, bool) if divergent is None else divergent,
        accept_stat=np.full(shape, 0.8),
        tree_depth=np.full(shape, 3),
        n_leapfrog=np.full(shape, 7),
        step_size=np.full(chains, 0.5),
        config=SamplerConfig(chains=chains, draws=draws),
    )
