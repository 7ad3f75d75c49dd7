"""Utility functions for loading simulation scenario YAML files."""

import os
from typing import Any, Dict

import yaml

from jointcat.model.simulator import SimulationScenario

REQUIRED_FIELDS = ("n_patients", "seed", "theta", "sigma2", "omega", "schedule")


class ScenarioError(ValueError):
    """Raised when a scenario file is malformed or incomplete."""


def parse_scenario_yaml(scenario_file_path: str) -> Dict[str, Any]:
    """
    Parse a scenario YAML file and check its required fields.

    Args:
        scenario_file_path: Path to scenario YAML file

    Returns:
        The parsed mapping

    Raises:
        FileNotFoundError: If scenario file doesn't exist
        ScenarioError: If YAML is malformed, empty or lacks required fields

    Examples:
        >>> parse_scenario_yaml("/path/to/scenario.yaml")["n_patients"]
        300
    """
    if not os.path.exists(scenario_file_path):
        raise FileNotFoundError(f"Scenario file does not exist: {scenario_file_path}")

    try:
        with open(scenario_file_path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ScenarioError(
            f"Failed to parse YAML file {scenario_file_path}: {e}"
        ) from e

    if data is None:
        raise ScenarioError(f"Scenario file is empty: {scenario_file_path}")
    if not isinstance(data, dict):
        raise ScenarioError(f"Scenario file must be a mapping: {scenario_file_path}")

    missing_fields = [field for field in REQUIRED_FIELDS if field not in data]
    if missing_fields:
        raise ScenarioError(
            f"Missing required fields in scenario YAML: {', '.join(missing_fields)}"
        )

    return data


def load_scenario(scenario_file_path: str) -> SimulationScenario:
    """
    Load a scenario YAML file into a validated scenario.

    Keys other than the required ones (beta, alpha, covariates, category_labels,
    biomarker_names) keep their defaults when absent.

    Raises:
        FileNotFoundError: If scenario file doesn't exist
        ScenarioError: If the file is malformed or a value is invalid
    """
    data = parse_scenario_yaml(scenario_file_path)
    try:
        return SimulationScenario.from_mapping(data)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"Invalid scenario {scenario_file_path}: {e}") from e
