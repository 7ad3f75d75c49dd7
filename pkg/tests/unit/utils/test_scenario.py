"""Tests for scenario YAML loading."""

import os
import tempfile

import pytest
import yaml

from jointcat.model.simulator import default_scenario
from jointcat.utils.scenario import (
    REQUIRED_FIELDS,
    ScenarioError,
    load_scenario,
    parse_scenario_yaml,
)


def write_yaml(directory, data, name="scenario.yaml"):
    path = os.path.join(directory, name)
    with open(path, "w") as f:
        if isinstance(data, str):
            f.write(data)
        else:
            yaml.dump(data, f)
    return path


class TestParseScenarioYaml:
    """Test cases for parse_scenario_yaml."""

    def test_parses_complete_scenario(self):
        """Should return the mapping when every required field is present."""
        data = default_scenario(n_patients=25, seed=4).to_dict()
        with tempfile.TemporaryDirectory() as tmp:
            parsed = parse_scenario_yaml(write_yaml(tmp, data))

        assert parsed["n_patients"] == 25
        assert set(REQUIRED_FIELDS) <= set(parsed)

    def test_missing_file(self):
        """Should raise FileNotFoundError for a missing file."""
        with pytest.raises(FileNotFoundError) as exc_info:
            parse_scenario_yaml("/nonexistent/scenario.yaml")

        assert "Scenario file does not exist" in str(exc_info.value)

    def test_malformed_yaml(self):
        """Should wrap YAML syntax errors."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_yaml(tmp, "n_patients: [1, 2\nseed: 3\n")

            with pytest.raises(ScenarioError) as exc_info:
                parse_scenario_yaml(path)

        assert "Failed to parse YAML" in str(exc_info.value)

    def test_empty_file(self):
        """Should reject an empty scenario."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_yaml(tmp, "")

            with pytest.raises(ScenarioError) as exc_info:
                parse_scenario_yaml(path)

        assert "empty" in str(exc_info.value)

    def test_non_mapping(self):
        """Should reject a YAML list."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_yaml(tmp, "- 1\n- 2\n")

            with pytest.raises(ScenarioError):
                parse_scenario_yaml(path)

    def test_lists_missing_fields(self):
        """Should name each missing required field."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_yaml(tmp, {"n_patients": 10, "seed": 1})

            with pytest.raises(ScenarioError) as exc_info:
                parse_scenario_yaml(path)

        message = str(exc_info.value)
        assert "Missing required fields" in message
        assert "theta, sigma2, omega, schedule" in message


class TestLoadScenario:
    """Test cases for load_scenario."""

    def test_round_trips_default_scenario(self):
        """Should rebuild the scenario that was dumped."""
        original = default_scenario(n_patients=25, seed=4)
        with tempfile.TemporaryDirectory() as tmp:
            scenario = load_scenario(write_yaml(tmp, original.to_dict()))

        assert scenario.to_dict() == original.to_dict()

    def test_optional_keys_keep_defaults(self):
        """Should fill beta, covariates and labels from the defaults."""
        data = default_scenario().to_dict()
        minimal = {key: data[key] for key in REQUIRED_FIELDS}
        minimal["n_patients"] = 12
        with tempfile.TemporaryDirectory() as tmp:
            scenario = load_scenario(write_yaml(tmp, minimal))

        assert scenario.n_patients == 12
        assert scenario.to_dict()["covariates"] == data["covariates"]

    def test_invalid_value_becomes_scenario_error(self):
        """Should report a misshapen matrix as a ScenarioError."""
        data = default_scenario().to_dict()
        data["omega"] = [[[1.0, 0.0], [0.0, 1.0]]]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_yaml(tmp, data)

            with pytest.raises(ScenarioError) as exc_info:
                load_scenario(path)

        assert "Invalid scenario" in str(exc_info.value)
