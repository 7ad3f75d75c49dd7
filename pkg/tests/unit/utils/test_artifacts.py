"""Tests for fit artifact reading and writing."""

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from jointcat.core.context import FitPaths
from jointcat.model.posterior import constrained_names
from jointcat.utils.artifacts import (
    ArtifactError,
    FitArtifacts,
    copy_inputs,
    read_json,
    write_csv,
    write_json,
)


def write_categorical_fit(root, tables, schema, covariate_names, draws=4):
    """Lay out a categorical-only fit directory by hand."""
    paths = FitPaths(Path(root))
    longitudinal, baseline = tables
    write_csv(longitudinal, paths.longitudinal)
    write_csv(baseline, paths.baseline)
    write_json({"mode": "categorical_only", "schema": schema.to_dict()}, paths.manifest)
    names = constrained_names("categorical_only", covariate_names, 3)
    frame = pd.DataFrame(
        np.arange(draws * len(names), dtype=float).reshape(draws, len(names)),
        columns=names,
    )
    frame.insert(0, "iteration", range(1, draws + 1))
    frame.insert(0, "chain", 1)
    write_csv(frame, paths.draws)
    return paths


class TestJson:
    """Test cases for write_json and read_json."""

    def test_non_finite_values_become_null(self):
        """Should store NaN and infinities as null."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(
                {"rhat": float("nan"), "nested": [1.0, float("inf")]},
                Path(tmp) / "a" / "report.json",
            )

            data = json.loads(path.read_text())

        assert data == {"rhat": None, "nested": [1.0, None]}

    def test_numpy_values_are_converted(self):
        """Should serialize numpy scalars and arrays."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(
                {"n": np.int64(3), "x": np.array([0.5, 1.5])}, Path(tmp) / "b.json"
            )

            assert read_json(path) == {"n": 3, "x": [0.5, 1.5]}

    def test_missing_file_raises_artifact_error(self):
        """Should raise ArtifactError, a FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            read_json("/nonexistent/manifest.json")
        with pytest.raises(ArtifactError):
            read_json("/nonexistent/manifest.json")


class TestCopyInputs:
    """Test cases for copy_inputs."""

    def test_copies_both_files(self, tables):
        """Should place both inputs under the cohort directory."""
        with tempfile.TemporaryDirectory() as tmp:
            longitudinal = write_csv(tables[0], Path(tmp) / "in" / "long.csv")
            baseline = write_csv(tables[1], Path(tmp) / "in" / "base.csv")
            paths = FitPaths(Path(tmp) / "fit")

            copy_inputs(paths, longitudinal, baseline)

            assert paths.longitudinal.read_text() == longitudinal.read_text()
            assert paths.baseline.read_text() == baseline.read_text()


class TestFitArtifacts:
    """Test cases for FitArtifacts.load."""

    def test_loads_categorical_fit(self, tables, schema, cohort):
        """Should rebuild the cohort and the per-draw arrays."""
        with tempfile.TemporaryDirectory() as tmp:
            write_categorical_fit(tmp, tables, schema, cohort.covariate_names)

            fit = FitArtifacts.load(tmp)

        assert fit.mode.value == "categorical_only"
        assert not fit.share
        assert fit.n_draws == 4
        assert fit.latent is None
        assert fit.cohort.patient_ids == cohort.patient_ids
        assert fit.arrays["beta"].shape == (4, 2, cohort.n_covariates + 1)

    def test_missing_artifacts_are_listed(self):
        """Should name the missing files."""
        with tempfile.TemporaryDirectory() as tmp:
            with pytest.raises(ArtifactError) as exc_info:
                FitArtifacts.load(tmp)

        assert "draws.csv" in str(exc_info.value)

    def test_missing_draw_column(self, tables, schema, cohort):
        """Should reject draws that lack a model parameter."""
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_categorical_fit(tmp, tables, schema, cohort.covariate_names)
            frame = pd.read_csv(paths.draws)
            write_csv(frame.drop(columns=frame.columns[-1]), paths.draws)

            with pytest.raises(ArtifactError):
                FitArtifacts.load(tmp)

    def test_joint_fit_requires_latent_draws(self, tables, schema, cohort):
        """Should refuse a joint manifest without latent.npy."""
        with tempfile.TemporaryDirectory() as tmp:
            paths = write_categorical_fit(tmp, tables, schema, cohort.covariate_names)
            names = constrained_names("joint", cohort.covariate_names, 3)
            frame = pd.DataFrame(np.zeros((2, len(names))), columns=names)
            write_csv(frame, paths.draws)
            write_json({"mode": "joint", "schema": schema.to_dict()}, paths.manifest)

            with pytest.raises(ArtifactError) as exc_info:
                FitArtifacts.load(tmp)

        assert "latent" in str(exc_info.value)
