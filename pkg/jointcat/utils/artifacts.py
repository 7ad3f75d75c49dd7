"""Reading and writing fit artifacts."""

import json
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np
import pandas as pd

from jointcat.core.context import FitPaths
from jointcat.model.data_model import (
    N_BIOMARKERS,
    Cohort,
    CohortSchema,
    load_cohort,
)
from jointcat.model.posterior import Mode, draw_arrays

logger = logging.getLogger(__name__)


class ArtifactError(FileNotFoundError):
    """Raised when a fit directory is missing or inconsistent."""


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(data: Mapping[str, Any], path: Union[str, Path]) -> Path:
    """Write ``data`` as indented JSON; NaN and infinities become null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_finite(data), indent=2, default=_to_builtin)
    path.write_text(text + "\n")
    return path


def _finite(value: Any) -> Any:
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, Mapping):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"Artifact not found: {path}")
    return json.loads(path.read_text())


def write_csv(frame: pd.DataFrame, path: Union[str, Path], index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index)
    return path


def copy_inputs(
    paths: FitPaths, longitudinal: Union[str, Path], baseline: Union[str, Path]
) -> None:
    """Keep the fitted cohort's input files beside the draws."""
    paths.cohort_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(longitudinal, paths.longitudinal)
    shutil.copyfile(baseline, paths.baseline)


@dataclass(frozen=True, eq=False)
class FitArtifacts:
    """A finished fit loaded back from its output directory.

    Attributes:
        paths: Artifact locations
        manifest: The fit manifest (resolved configuration and metadata)
        cohort: The cohort the fit used, rebuilt from the copied inputs
        draws: One row per draw with chain, iteration and parameter columns
        arrays: Per-draw parameter arrays, see
            :func:`jointcat.model.posterior.draw_arrays`
        latent: (S, K, n, 3) latent characteristic draws for joint fits
    """

    paths: FitPaths
    manifest: Dict[str, Any]
    cohort: Cohort
    draws: pd.DataFrame
    arrays: Dict[str, np.ndarray]
    latent: Optional[np.ndarray] = None

    @property
    def mode(self) -> Mode:
        return Mode.parse(self.manifest["mode"])

    @property
    def share(self) -> bool:
        return self.mode is Mode.JOINT and self.latent is not None

    @property
    def n_draws(self) -> int:
        return len(self.draws)

    @classmethod
    def load(cls, root: Union[str, Path]) -> "FitArtifacts":
        """Load a fit directory written by ``jointcat fit``.

        Raises:
            ArtifactError: If a required artifact is missing or shapes disagree
        """
        paths = FitPaths(Path(root))
        missing = [p.name for p in paths.required() if not p.is_file()]
        if missing:
            raise ArtifactError(
                f"Not a fit directory: {paths.root} (missing {', '.join(missing)})"
            )
        manifest = read_json(paths.manifest)
        schema = CohortSchema.from_mapping(manifest.get("schema"))
        cohort = load_cohort(paths.longitudinal, paths.baseline, schema)
        frame = pd.read_csv(paths.draws, float_precision="round_trip")
        mode = Mode.parse(manifest["mode"])
        try:
            arrays = draw_arrays(
                frame, mode, cohort.covariate_names, cohort.n_categories
            )
        except KeyError as e:
            raise ArtifactError(f"{paths.draws}: {e}") from e

        latent = None
        if mode is Mode.JOINT:
            if not paths.latent.is_file():
                raise ArtifactError(f"Joint fit lacks latent draws: {paths.latent}")
            latent = np.load(paths.latent)
            latent = latent.reshape((-1,) + latent.shape[2:])
            expected = (len(frame), N_BIOMARKERS, cohort.n_patients, 3)
            if latent.shape != expected:
                raise ArtifactError(
                    f"latent draws have shape {latent.shape}, expected {expected}"
                )
        logger.info(f"Loaded {mode.value} fit with {len(frame)} draws from {root}")
        return cls(
            paths=paths,
            manifest=manifest,
            cohort=cohort,
            draws=frame,
            arrays=arrays,
            latent=latent,
        )
