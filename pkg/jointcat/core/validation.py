"""Validation utilities for input files and fit directories."""

from pathlib import Path

from jointcat.core.context import FitPaths


class Validator:
    """Static validation methods for pre-execution checks."""

    @staticmethod
    def validate_csv_file(path: str, label: str = "Input file") -> bool:
        """Validate a CSV input exists, has .csv extension and is not empty.

        Raises:
            FileNotFoundError: If file doesn't exist
            ValueError: If file doesn't have .csv extension or is empty
        """
        file_path = Path(path)

        if not file_path.is_file():
            raise FileNotFoundError(f"{label} not found: {path}")

        if file_path.suffix.lower() != ".csv":
            raise ValueError(f"{label} must be a .csv file: {path}")

        if file_path.stat().st_size == 0:
            raise ValueError(f"{label} is empty: {path}")

        return True

    @staticmethod
    def validate_config_file(path: str) -> bool:
        """Validate a per-run config file exists and has .json extension.

        Raises:
            FileNotFoundError: If file doesn't exist
            ValueError: If file doesn't have .json extension
        """
        file_path = Path(path)

        if not file_path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")

        if file_path.suffix.lower() != ".json":
            raise ValueError(f"Config file must be a .json file: {path}")

        return True

    @staticmethod
    def validate_scenario_file(path: str) -> bool:
        """Validate scenario file exists and has .yaml or .yml extension.

        Raises:
            FileNotFoundError: If file doesn't exist
            ValueError: If file doesn't have .yaml or .yml extension
        """
        file_path = Path(path)

        if not file_path.exists():
            raise FileNotFoundError(f"Scenario file not found: {path}")

        if file_path.suffix not in [".yaml", ".yml"]:
            raise ValueError(f"Scenario file must be a .yaml or .yml file: {path}")

        return True

    @staticmethod
    def validate_fit_dir(path: str) -> bool:
        """Verify a directory holds the artifacts written by ``jointcat fit``.

        Raises:
            FileNotFoundError: If the directory or a required artifact is missing
        """
        root = Path(path)

        if not root.is_dir():
            raise FileNotFoundError(f"Fit directory not found: {path}")

        paths = FitPaths(root)
        missing = [p.name for p in paths.required() if not p.is_file()]
        if missing:
            raise FileNotFoundError(
                f"Not a fit directory: {path}\n"
                f"Missing: {', '.join(missing)}\n"
                "Run: jointcat fit <longitudinal.csv> <baseline.csv> --out <dir>"
            )

        return True
