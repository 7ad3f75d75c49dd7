"""Tests for layered configuration."""

import json
import os
import tempfile

import pytest

from jointcat.core.config import (
    DEFAULTS,
    Config,
    ConfigError,
    load_json_config,
    resolve_run_config,
)
from jointcat.model.posterior import Mode, Parameterization


@pytest.fixture
def xdg_home(monkeypatch):
    """Point XDG_CONFIG_HOME at an empty temporary directory."""
    with tempfile.TemporaryDirectory() as tmp:
        monkeypatch.setenv("XDG_CONFIG_HOME", tmp)
        yield tmp


def write_toml(xdg_home, text):
    config_dir = os.path.join(xdg_home, "jointcat")
    os.makedirs(config_dir, exist_ok=True)
    with open(os.path.join(config_dir, "config.toml"), "w") as f:
        f.write(text)


def write_json(directory, data, name="run.json"):
    path = os.path.join(directory, name)
    with open(path, "w") as f:
        json.dump(data, f)
    return path


class TestConfig:
    """Test cases for the XDG configuration file."""

    def test_uses_xdg_config_home(self, xdg_home):
        """Should place config.toml under $XDG_CONFIG_HOME/jointcat."""
        config = Config()

        assert str(config.config_file) == os.path.join(
            xdg_home, "jointcat", "config.toml"
        )
        assert not config.exists()

    def test_falls_back_to_defaults(self, xdg_home):
        """Should return built-in defaults when no file exists."""
        config = Config()

        assert config.get("sampler.chains") == 3
        assert config.get("importance.runs") == 50
        assert config.get("sampler.missing", "fallback") == "fallback"

    def test_file_values_override_defaults(self, xdg_home):
        """Should prefer values from config.toml."""
        write_toml(xdg_home, "[sampler]\nchains = 5\n")
        config = Config()

        assert config.get("sampler.chains") == 5
        assert config.get("sampler.draws") == 4000
        assert config.as_dict()["sampler"]["chains"] == 5

    def test_create_default_writes_parseable_template(self, xdg_home):
        """Should write a template that loads back to the defaults."""
        path = Config().create_default()

        assert path.exists()
        reloaded = Config()
        assert reloaded.exists()
        assert reloaded.as_dict()["sampler"]["draws"] == DEFAULTS["sampler"]["draws"]
        assert reloaded.get("model.mode") == "joint"

    def test_create_default_refuses_to_overwrite(self, xdg_home):
        """Should raise FileExistsError unless forced."""
        config = Config()
        config.create_default()

        with pytest.raises(FileExistsError):
            config.create_default()
        config.create_default(force=True)

    def test_malformed_toml_raises_config_error(self, xdg_home):
        """Should report unparseable TOML as ConfigError."""
        write_toml(xdg_home, "[sampler\nchains = \n")

        with pytest.raises(ConfigError):
            Config()

    def test_unknown_section_raises_config_error(self, xdg_home):
        """Should reject sections jointcat does not know."""
        write_toml(xdg_home, "[plotting]\ndpi = 300\n")

        with pytest.raises(ConfigError) as exc_info:
            Config().as_dict()

        assert "plotting" in str(exc_info.value)


class TestResolveRunConfig:
    """Test cases for resolve_run_config precedence."""

    def test_later_layers_win(self, xdg_home):
        """Should apply defaults, then TOML, then JSON, then flags."""
        write_toml(xdg_home, "[sampler]\nchains = 5\ndraws = 50\nwarmup = 40\n")
        with tempfile.TemporaryDirectory() as tmp:
            json_path = write_json(tmp, {"sampler": {"draws": 60, "warmup": 30}})

            run = resolve_run_config(
                "fit", json_path=json_path, overrides={"sampler.warmup": 20}
            )

        sampler = run.sampler
        assert sampler.chains == 5
        assert sampler.draws == 60
        assert sampler.warmup == 20
        assert sampler.target_accept == 0.8

    def test_none_overrides_are_skipped(self, xdg_home):
        """Should leave values alone for flags that were not given."""
        run = resolve_run_config("fit", overrides={"sampler.seed": None})

        assert run.seed == DEFAULTS["sampler"]["seed"]

    def test_invalid_override_key(self, xdg_home):
        """Should reject override keys outside the known sections."""
        with pytest.raises(ConfigError):
            resolve_run_config("fit", overrides={"plotting.dpi": 1})

    def test_unknown_json_section(self, xdg_home):
        """Should reject unknown sections in a per-run JSON file."""
        with tempfile.TemporaryDirectory() as tmp:
            json_path = write_json(tmp, {"plots": {"dpi": 300}})

            with pytest.raises(ConfigError):
                resolve_run_config("fit", json_path=json_path)

    def test_typed_views(self, xdg_home):
        """Should expose mode, parameterization, prior and schema."""
        run = resolve_run_config(
            "fit",
            overrides={
                "model.mode": "categorical",
                "model.parameterization": "centered",
                "model.prior_sd": 5.0,
            },
            inputs={"longitudinal": "a.csv", "baseline": None},
            output="out",
        )

        assert run.mode is Mode.CATEGORICAL_ONLY
        assert run.parameterization is Parameterization.CENTERED
        assert run.prior.coef_sd == 5.0
        assert run.schema.biomarker_names == ("M-spike", "FLC")
        data = run.to_dict()
        assert data["inputs"] == {"longitudinal": "a.csv"}
        assert data["output"] == "out"
        assert data["model"]["mode"] == "categorical"


class TestLoadJsonConfig:
    """Test cases for load_json_config."""

    def test_missing_file(self):
        """Should raise FileNotFoundError for a missing file."""
        with pytest.raises(FileNotFoundError):
            load_json_config("/nonexistent/run.json")

    def test_rejects_non_object(self):
        """Should require a JSON object at the top level."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, [1, 2, 3])

            with pytest.raises(ConfigError):
                load_json_config(path)

    def test_rejects_invalid_json(self):
        """Should report a decode error as ConfigError."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.json")
            with open(path, "w") as f:
                f.write("{not json")

            with pytest.raises(ConfigError) as exc_info:
                load_json_config(path)

        assert "Invalid JSON" in str(exc_info.value)
