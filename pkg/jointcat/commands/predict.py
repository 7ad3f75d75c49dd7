"""Predict command implementation."""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.table import Table

from jointcat.analysis.evaluation import class_probability_draws
from jointcat.core.context import RunContext
from jointcat.core.validation import Validator
from jointcat.model.biexp import (
    LatentCharacteristics,
    TrajectoryDivergenceError,
    mean_trajectory,
)
from jointcat.model.categorical import TreatmentPrediction, predict_treatment
from jointcat.model.data_model import (
    N_BIOMARKERS,
    CohortSchema,
    encode_new_patients,
)
from jointcat.utils.artifacts import FitArtifacts, write_csv

logger = logging.getLogger(__name__)

console = Console()


def thin(n_draws: int, max_draws: int) -> np.ndarray:
    """Evenly spaced draw indices, at most ``max_draws`` of them."""
    if max_draws < 1:
        raise ValueError("max_draws must be positive")
    if n_draws <= max_draws:
        return np.arange(n_draws)
    return np.unique(np.linspace(0, n_draws - 1, max_draws).round().astype(int))


def trajectory_bands(
    fit: FitArtifacts,
    patient_id: str,
    grid_points: int = 200,
    draws: Optional[np.ndarray] = None,
    level: float = 0.95,
) -> pd.DataFrame:
    """Posterior mean and credible band of each biomarker's fitted trajectory.

    The grid spans [0, last observed time] of the patient. A biomarker whose
    trajectory overflows for some draw gets NaN mean and band.
    """
    i = fit.cohort.patient_index[patient_id]
    grid = np.linspace(0.0, fit.cohort.max_time(patient_id), grid_points)
    latent = fit.latent if draws is None else fit.latent[draws]
    tail = 100.0 * (1.0 - level) / 2.0
    frames = []
    for k in range(N_BIOMARKERS):
        chars = LatentCharacteristics.from_array(latent[:, k, i][:, np.newaxis, :])
        try:
            curves = mean_trajectory(chars, grid[np.newaxis, :])
        except TrajectoryDivergenceError as e:
            logger.warning(f"{patient_id} biomarker {k + 1}: {e}")
            curves = np.full((len(latent), grid_points), np.nan)
        low, high = np.percentile(curves, [tail, 100.0 - tail], axis=0)
        frames.append(
            pd.DataFrame(
                {
                    "patient_id": patient_id,
                    "biomarker": fit.cohort.biomarker_name(k + 1),
                    "time": grid,
                    "mean": curves.mean(axis=0),
                    "ci_low": low,
                    "ci_high": high,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def treatment_probabilities(
    fit: FitArtifacts, patient_id: str, level: float = 0.95
) -> TreatmentPrediction:
    i = fit.cohort.patient_index[patient_id]
    design = np.asarray(fit.cohort.design)[i:i + 1]
    latent = fit.latent[:, :, i:i + 1] if fit.share else None
    alpha = fit.arrays.get("alpha") if fit.share else None
    phi = class_probability_draws(design, fit.arrays["beta"], alpha, latent, fit.share)
    return predict_treatment(phi[:, 0, :], level)


def new_patient_probabilities(
    fit: FitArtifacts, X: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """(S, n, J) category probabilities of patients outside the fit.

    Under a joint fit each new patient's latent characteristics are drawn from
    theta + N(0, Omega) of the same posterior draw.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    design = np.hstack([np.ones((len(X), 1)), X])
    beta = fit.arrays["beta"]
    if not fit.share:
        return class_probability_draws(design, beta, share=False)
    theta, omega = fit.arrays["theta"], fit.arrays["omega"]
    z = rng.standard_normal((len(theta), N_BIOMARKERS, len(X), 3))
    effects = np.einsum("skab,skib->skia", np.linalg.cholesky(omega), z)
    latent = theta[:, :, np.newaxis, :] + effects
    return class_probability_draws(design, beta, fit.arrays["alpha"], latent)


def command(
    fit_dir: str = typer.Argument(..., help="Directory written by `jointcat fit`"),
    patient: Optional[List[str]] = typer.Option(
        None, "--patient", "-p", help="Patient id (repeatable; default: all)"
    ),
    baseline: Optional[str] = typer.Option(
        None,
        "--baseline",
        "-b",
        help="Baseline CSV of new patients to score instead of the fitted ones",
    ),
    out: Optional[str] = typer.Option(
        None, "--out", "-o", help="Output directory (default: <fit_dir>/predictions)"
    ),
    grid_points: int = typer.Option(
        200, "--grid-points", help="Time grid size per patient"
    ),
    max_draws: int = typer.Option(
        1000, "--max-draws", help="Thin trajectory draws to at most this many"
    ),
    level: float = typer.Option(0.95, "--level", help="Credible interval mass"),
    seed: int = typer.Option(
        0, "--seed", help="Seed for new patients' latent characteristic draws"
    ),
):
    """Per-patient fitted trajectories and treatment probabilities.

    Writes trajectories.csv (joint fits only), observations.csv and
    probabilities.csv. With --baseline only probabilities.csv is written, for
    the patients of that file.
    """
    try:
        context = RunContext()
        Validator.validate_fit_dir(str(context.resolve_path(fit_dir)))
        if grid_points < 2:
            raise ValueError("--grid-points must be at least 2")
        if not 0.0 < level < 1.0:
            raise ValueError("--level must lie strictly between 0 and 1")
        fit_root = context.resolve_path(fit_dir)
        out_dir = context.output_dir(out or str(fit_root / "predictions"))

        with console.status("Loading fit artifacts..."):
            fit = FitArtifacts.load(fit_root)
        cohort = fit.cohort
        labels = [cohort.category_label(j + 1) for j in range(cohort.n_categories)]

        if baseline:
            predictions = _predict_new_patients(
                fit, context.resolve_path(baseline), level, seed
            )
            rows = _probability_rows(predictions, labels)
            write_csv(rows, out_dir / "probabilities.csv")
            _finish(predictions, labels, out_dir)
            return

        patients = list(patient) if patient else list(cohort.patient_ids)
        unknown = [p for p in patients if p not in cohort.patient_index]
        if unknown:
            raise KeyError(f"Unknown patient id(s): {', '.join(unknown)}")

        predictions = {p: treatment_probabilities(fit, p, level) for p in patients}
        rows = _probability_rows(predictions, labels)
        write_csv(rows, out_dir / "probabilities.csv")

        selected = set(patients)
        observed = pd.DataFrame(
            [
                {
                    "patient_id": o.patient_id,
                    "biomarker": cohort.biomarker_name(o.biomarker),
                    "time": o.time,
                    "value": o.value,
                }
                for o in cohort.observations
                if o.patient_id in selected
            ],
            columns=["patient_id", "biomarker", "time", "value"],
        )
        write_csv(observed, out_dir / "observations.csv")

        if fit.share:
            draws = thin(fit.n_draws, max_draws)
            with console.status(f"Trajectories for {len(patients)} patient(s)..."):
                bands = pd.concat(
                    [
                        trajectory_bands(fit, pid, grid_points, draws, level)
                        for pid in patients
                    ],
                    ignore_index=True,
                )
            write_csv(bands, out_dir / "trajectories.csv")
            overflowed = bands.loc[bands["mean"].isna(), ["patient_id", "biomarker"]]
            if len(overflowed):
                n_bands = len(overflowed.drop_duplicates())
                console.print(
                    f"[yellow]Warning:[/yellow] {n_bands} trajectory band(s) "
                    f"overflowed and were written as NaN"
                )
        else:
            console.print(
                "[dim]Categorical-only fit: no latent trajectories to predict[/dim]"
            )

        _finish(predictions, labels, out_dir)

    except Exception as e:
        console.print(f"[red]ERROR:[/red] {e}")
        raise typer.Exit(code=1) from e


def _predict_new_patients(
    fit: FitArtifacts, path: Path, level: float, seed: int
) -> Dict[str, TreatmentPrediction]:
    if not path.is_file():
        raise FileNotFoundError(f"Baseline file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    schema = CohortSchema.from_mapping(fit.manifest.get("schema"))
    ids, X = encode_new_patients(frame, fit.cohort, schema)
    phi = new_patient_probabilities(fit, X, np.random.default_rng(seed))
    return {pid: predict_treatment(phi[:, i, :], level) for i, pid in enumerate(ids)}


def _probability_rows(
    predictions: Dict[str, TreatmentPrediction], labels: List[str]
) -> pd.DataFrame:
    rows = []
    for pid, prediction in predictions.items():
        for j, label in enumerate(labels):
            rows.append(
                {
                    "patient_id": pid,
                    "category": j + 1,
                    "label": label,
                    "mean": float(prediction.mean[j]),
                    "ci_low": float(prediction.ci_low[j]),
                    "ci_high": float(prediction.ci_high[j]),
                    "predicted": prediction.predicted_class == j + 1,
                }
            )
    return pd.DataFrame(rows)


def _finish(predictions, labels: List[str], out_dir: Path) -> None:
    if len(predictions) <= 20:
        _print_predictions(predictions, labels)
    console.print(
        f"[green]✓ Predictions for {len(predictions)} patient(s) written to "
        f"{out_dir}[/green]"
    )


def _print_predictions(predictions, labels: List[str]) -> None:
    table = Table(title="Treatment probabilities (posterior mean)")
    table.add_column("Patient")
    for label in labels:
        table.add_column(label, justify="right")
    table.add_column("Predicted")
    for pid, prediction in predictions.items():
        table.add_row(
            pid,
            *(f"{p:.3f}" for p in prediction.mean),
            labels[prediction.predicted_class - 1],
        )
    console.print(table)
