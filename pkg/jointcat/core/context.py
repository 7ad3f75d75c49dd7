"""Run context detection and output path layout."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple


@dataclass(frozen=True)
class FitPaths:
    """Where ``jointcat fit`` writes each artifact inside its output directory."""

    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    @property
    def draws(self) -> Path:
        return self.root / "draws.csv"

    @property
    def latent(self) -> Path:
        return self.root / "latent.npy"

    @property
    def diagnostics(self) -> Path:
        return self.root / "diagnostics.json"

    @property
    def biexp_summary(self) -> Path:
        return self.root / "biexp_summary.csv"

    @property
    def relative_risks(self) -> Path:
        return self.root / "relative_risks.csv"

    @property
    def preprocessing(self) -> Path:
        return self.root / "preprocessing.json"

    @property
    def covariate_summary(self) -> Path:
        return self.root / "covariate_summary.csv"

    @property
    def cohort_dir(self) -> Path:
        return self.root / "cohort"

    @property
    def longitudinal(self) -> Path:
        return self.cohort_dir / "longitudinal.csv"

    @property
    def baseline(self) -> Path:
        return self.cohort_dir / "baseline.csv"

    def required(self) -> Tuple[Path, ...]:
        """Artifacts every later command reads."""
        return (self.manifest, self.draws, self.longitudinal, self.baseline)


class RunContext:
    """Resolves user paths against the invocation directory.

    Attributes:
        cwd: Current working directory (invocation location)
    """

    def __init__(self, cwd: Optional[Path] = None):
        """Initialize context from cwd.

        Args:
            cwd: Working directory user paths are relative to (default: Path.cwd())
        """
        self.cwd = cwd or Path.cwd()

    def resolve_path(self, path: str) -> Path:
        """Convert user-provided path to absolute path relative to invocation directory.

        Args:
            path: User-provided path (absolute or relative)

        Returns:
            Absolute resolved path
        """
        resolved = Path(path).expanduser()

        if resolved.is_absolute():
            return resolved

        # Relative to invocation directory
        return (self.cwd / resolved).resolve()

    def output_dir(self, path: str, create: bool = True) -> Path:
        """Resolve an output directory, creating it unless ``create`` is False.

        Raises:
            NotADirectoryError: If the path exists and is a file
        """
        resolved = self.resolve_path(path)
        if resolved.exists() and not resolved.is_dir():
            raise NotADirectoryError(f"Output path is a file: {resolved}")
        if create:
            resolved.mkdir(parents=True, exist_ok=True)
        return resolved

    def fit_paths(self, path: str) -> FitPaths:
        return FitPaths(self.resolve_path(path))
