"""Tests for run context path handling."""

import os
import tempfile
from pathlib import Path

import pytest

from jointcat.core.context import FitPaths, RunContext


class TestRunContext:
    """Test cases for RunContext."""

    def test_resolves_relative_paths_against_cwd(self):
        """Should anchor relative paths at the invocation directory."""
        with tempfile.TemporaryDirectory() as tmp:
            context = RunContext(cwd=Path(tmp))

            assert context.resolve_path("fit") == Path(tmp).resolve() / "fit"

    def test_keeps_absolute_paths(self):
        """Should return absolute paths unchanged."""
        context = RunContext(cwd=Path("/somewhere"))

        assert context.resolve_path("/data/fit") == Path("/data/fit")

    def test_output_dir_created(self):
        """Should create a missing output directory."""
        with tempfile.TemporaryDirectory() as tmp:
            out = RunContext(cwd=Path(tmp)).output_dir("a/b")

            assert out.is_dir()

    def test_output_dir_rejects_file(self):
        """Should refuse an output path that is a regular file."""
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, "taken").write_text("x")

            with pytest.raises(NotADirectoryError):
                RunContext(cwd=Path(tmp)).output_dir("taken")


class TestFitPaths:
    """Test cases for FitPaths."""

    def test_layout(self):
        """Should keep draws and copied inputs under the fit root."""
        paths = RunContext(cwd=Path("/work")).fit_paths("fit")

        assert paths.draws == Path("/work/fit/draws.csv")
        assert paths.longitudinal == Path("/work/fit/cohort/longitudinal.csv")
        assert [p.name for p in paths.required()] == [
            "manifest.json",
            "draws.csv",
            "longitudinal.csv",
            "baseline.csv",
        ]

    def test_latent_draws_are_numpy_files(self):
        """Should store latent draws as .npy."""
        assert FitPaths(Path("fit")).latent.suffix == ".npy"
        assert os.path.basename(FitPaths(Path("fit")).diagnostics) == "diagnostics.json"
