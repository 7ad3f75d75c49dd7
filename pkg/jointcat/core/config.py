"""XDG-compliant configuration management for jointcat.

Values are resolved per run from four layers, later layers winning: built-in
defaults, the user's TOML file, an optional per-run JSON file and command-line
flags.
"""

import copy
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from jointcat.inference.sampler import SamplerConfig
from jointcat.model.data_model import CohortSchema
from jointcat.model.posterior import Mode, Parameterization, PriorConfig

# Use tomllib for Python 3.11+, tomli for earlier versions
if sys.version_info >= (3, 11):
    import tomllib
else:
    try:
        import tomli as tomllib
    except ImportError:
        tomllib = None

logger = logging.getLogger(__name__)

SECTIONS = ("sampler", "model", "data", "evaluation", "importance", "simulation")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "sampler": SamplerConfig().to_dict(),
    "model": {
        "mode": "joint",
        "parameterization": "noncentered",
        "prior_sd": 10.0,
        "sigma2_cauchy_scale": 5.0,
        "omega_df": 4.0,
        "omega_scale": 1.0,
    },
    "data": {
        "id_column": "patient_id",
        "biomarker_column": "biomarker",
        "time_column": "time",
        "value_column": "value",
        "treatment_column": "treatment",
        "not_reported_token": "Not reported",
        "not_reported_policy": "level",
        "biomarker_names": ["M-spike", "FLC"],
        "category_labels": ["Carfilzomib", "Pomalidomide", "Other"],
    },
    "evaluation": {"baseline_runs": 1000, "rhat_threshold": 1.05, "ess_threshold": 100},
    "importance": {"runs": 50},
    "simulation": {"n_patients": 300, "seed": 2024},
}


class ConfigError(ValueError):
    """Raised when a configuration file cannot be read or has unknown sections."""


class Config:
    """Manages jointcat configuration following XDG Base Directory spec.

    Attributes:
        config_dir: Path to ~/.config/jointcat/
        config_file: Path to ~/.config/jointcat/config.toml
    """

    def __init__(self):
        """Initialize config paths using XDG Base Directory specification."""
        xdg_config = os.getenv("XDG_CONFIG_HOME", os.path.expanduser("~/.config"))
        self.config_dir = Path(xdg_config) / "jointcat"
        self.config_file = self.config_dir / "config.toml"

        self._config = self._load() if self.config_file.exists() else {}

    def exists(self) -> bool:
        """Check if config file exists."""
        return self.config_file.exists()

    def _load(self) -> dict:
        """Load configuration from TOML file."""
        if tomllib is None:
            raise RuntimeError(
                "TOML parser not available.\n"
                "Install tomli for Python < 3.11: uv pip install tomli"
            )

        try:
            with open(self.config_file, "rb") as f:
                return tomllib.load(f)
        except Exception as e:
            raise ConfigError(f"Failed to load config: {e}") from e

    def get(self, key: str, default=None):
        """Get configuration value by key (supports dot notation).

        Args:
            key: Configuration key (e.g., 'sampler.chains')
            default: Default value if key not found

        Returns:
            Configuration value, else the built-in default, else ``default``
        """
        for source in (self._config, DEFAULTS):
            value = source
            for k in key.split("."):
                if isinstance(value, dict) and k in value:
                    value = value[k]
                else:
                    value = None
                    break
            if value is not None:
                return value
        return default

    def as_dict(self) -> Dict[str, Dict[str, Any]]:
        """Built-in defaults overlaid with the TOML file."""
        merged = copy.deepcopy(DEFAULTS)
        _overlay(merged, self._config, source=str(self.config_file))
        return merged

    @staticmethod
    def get_default_config() -> str:
        """Return default configuration TOML template."""
        return """# jointcat Configuration
# Location: ~/.config/jointcat/config.toml
# Follows XDG Base Directory Specification
# Per-run JSON files (--config) and command-line flags override these values.

[sampler]
chains = 3
warmup = 1000
draws = 4000
target_accept = 0.8
max_tree_depth = 10
seed = 2024
# 0 runs one worker process per chain
jobs = 0
divergence_threshold = 1000.0
init_radius = 1.0
init_attempts = 100

[model]
# "joint" or "categorical_only"
mode = "joint"
# "noncentered" or "centered" random effects
parameterization = "noncentered"
prior_sd = 10.0
sigma2_cauchy_scale = 5.0
# Inverse-Wishart degrees of freedom and identity scale multiplier;
# density proportional to |Omega|^(-(df + 4) / 2) exp(-tr(scale * Omega^-1) / 2)
omega_df = 4.0
omega_scale = 1.0

[data]
id_column = "patient_id"
biomarker_column = "biomarker"
time_column = "time"
value_column = "value"
treatment_column = "treatment"
# Declare covariates explicitly, otherwise numeric columns are continuous
# continuous = ["age", "ldh"]
not_reported_token = "Not reported"
# "level" keeps it as its own factor level, "drop" folds it into the reference
not_reported_policy = "level"
biomarker_names = ["M-spike", "FLC"]
# Reference category last
category_labels = ["Carfilzomib", "Pomalidomide", "Other"]

# [data.factors]
# ecog = "0"

[evaluation]
baseline_runs = 1000
rhat_threshold = 1.05
ess_threshold = 100

[importance]
runs = 50

[simulation]
n_patients = 300
seed = 2024
"""

    def create_default(self, force: bool = False) -> Path:
        """Create default configuration file.

        Returns:
            Path to created config file

        Raises:
            FileExistsError: If config already exists and ``force`` is not set
        """
        if self.config_file.exists() and not force:
            raise FileExistsError(
                f"Configuration already exists: {self.config_file}\n"
                "Remove it first or use --force to overwrite"
            )

        self.config_dir.mkdir(parents=True, exist_ok=True)
        self.config_file.write_text(self.get_default_config())

        return self.config_file

    def create_directories(self) -> Dict[str, Path]:
        """Create the XDG config, state and cache directories for jointcat."""
        self.config_dir.mkdir(parents=True, exist_ok=True)

        xdg_state = os.getenv("XDG_STATE_HOME", os.path.expanduser("~/.local/state"))
        state_dir = Path(xdg_state) / "jointcat"
        state_dir.mkdir(parents=True, exist_ok=True)

        xdg_cache = os.getenv("XDG_CACHE_HOME", os.path.expanduser("~/.cache"))
        cache_dir = Path(xdg_cache) / "jointcat"
        cache_dir.mkdir(parents=True, exist_ok=True)

        return {
            "config": self.config_dir,
            "state": state_dir,
            "cache": cache_dir,
        }


def _overlay(base: Dict[str, Dict[str, Any]], layer: Mapping[str, Any], source: str):
    for section, values in layer.items():
        if section not in SECTIONS:
            raise ConfigError(f"Unknown section '{section}' in {source}")
        if not isinstance(values, Mapping):
            raise ConfigError(f"Section '{section}' in {source} must be a table")
        base[section].update(values)


def load_json_config(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a per-run JSON configuration file.

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: If it is not a JSON object
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return data


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one command invocation.

    Attributes:
        command: Sub-command name
        sections: Resolved values of every configuration section
        inputs: Named input paths
        output: Output directory
    """

    command: str
    sections: Mapping[str, Mapping[str, Any]]
    inputs: Mapping[str, str] = field(default_factory=dict)
    output: Optional[str] = None

    def section(self, name: str) -> Mapping[str, Any]:
        return self.sections.get(name, {})

    @property
    def seed(self) -> int:
        return int(self.sections["sampler"]["seed"])

    @property
    def sampler(self) -> SamplerConfig:
        return SamplerConfig.from_mapping(self.section("sampler"))

    @property
    def mode(self) -> Mode:
        return Mode.parse(self.section("model").get("mode", "joint"))

    @property
    def parameterization(self) -> Parameterization:
        return Parameterization(
            self.section("model").get("parameterization", "noncentered")
        )

    @property
    def prior(self) -> PriorConfig:
        model = self.section("model")
        return PriorConfig(
            coef_sd=float(model.get("prior_sd", 10.0)),
            sigma2_scale=float(model.get("sigma2_cauchy_scale", 5.0)),
            omega_df=float(model.get("omega_df", 4.0)),
            omega_scale=float(model.get("omega_scale", 1.0)),
        )

    @property
    def schema(self) -> CohortSchema:
        return CohortSchema.from_mapping(self.section("data"))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "inputs": dict(self.inputs),
            "output": self.output,
            **{name: dict(values) for name, values in self.sections.items()},
        }


def resolve_run_config(
    command: str,
    config: Optional[Config] = None,
    json_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    inputs: Optional[Mapping[str, Any]] = None,
    output: Optional[Union[str, Path]] = None,
) -> RunConfig:
    """Merge defaults, TOML, per-run JSON and flag overrides, in that order.

    Args:
        command: Sub-command name
        config: User configuration; loaded from the XDG location when omitted
        json_path: Per-run JSON file
        overrides: Dotted keys such as ``sampler.chains``; None values are skipped
        inputs: Named input paths recorded in the manifest
        output: Output directory
    """
    config = config or Config()
    sections = config.as_dict()
    if json_path is not None:
        _overlay(sections, load_json_config(json_path), source=str(json_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"Invalid override key '{key}'")
        sections[section][name] = value
    logger.debug(f"Resolved {command} configuration: {sections}")
    return RunConfig(
        command=command,
        sections=sections,
        inputs={k: str(v) for k, v in (inputs or {}).items() if v is not None},
        output=None if output is None else str(output),
    )
