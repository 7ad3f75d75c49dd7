"""Tests for the init command."""

import os
import tempfile

import pytest
from typer.testing import CliRunner

from jointcat.app import app

runner = CliRunner()


@pytest.fixture
def xdg_dirs(monkeypatch):
    with tempfile.TemporaryDirectory() as tmp:
        for var in ("XDG_CONFIG_HOME", "XDG_STATE_HOME", "XDG_CACHE_HOME"):
            path = os.path.join(tmp, var.lower())
            monkeypatch.setenv(var, path)
        yield tmp


class TestInitCommand:
    """Test cases for `jointcat init`."""

    def test_show_prints_default_without_writing(self, xdg_dirs):
        """Should print the default TOML and create nothing."""
        result = runner.invoke(app, ["init", "--show"])

        assert result.exit_code == 0
        assert "[sampler]" in result.output
        config_file = os.path.join(
            xdg_dirs, "xdg_config_home", "jointcat", "config.toml"
        )
        assert not os.path.exists(config_file)

    def test_creates_config_and_directories(self, xdg_dirs):
        """Should write config.toml and the state and cache directories."""
        result = runner.invoke(app, ["init"])

        assert result.exit_code == 0
        assert os.path.isfile(
            os.path.join(xdg_dirs, "xdg_config_home", "jointcat", "config.toml")
        )
        assert os.path.isdir(os.path.join(xdg_dirs, "xdg_state_home", "jointcat"))
        assert os.path.isdir(os.path.join(xdg_dirs, "xdg_cache_home", "jointcat"))

    def test_refuses_to_overwrite_without_force(self, xdg_dirs):
        """Should exit 1 when the config already exists."""
        runner.invoke(app, ["init"])

        result = runner.invoke(app, ["init"])

        assert result.exit_code == 1
        assert "--force" in result.output

    def test_force_overwrites(self, xdg_dirs):
        """Should rewrite an edited config with --force."""
        runner.invoke(app, ["init"])
        config_file = os.path.join(
            xdg_dirs, "xdg_config_home", "jointcat", "config.toml"
        )
        with open(config_file, "w") as f:
            f.write("[sampler]\nchains = 9\n")

        result = runner.invoke(app, ["init", "--force"])

        assert result.exit_code == 0
        with open(config_file) as f:
            assert "chains = 3" in f.read()

    def test_write_failure_exits_one(self, xdg_dirs, mocker):
        """Should report a failed write and exit 1."""
        from jointcat.core.config import Config

        mocker.patch.object(
            Config, "create_default", side_effect=PermissionError("denied")
        )

        result = runner.invoke(app, ["init"])

        assert result.exit_code == 1
        assert "Failed to create configuration" in result.output
