"""Evaluate command implementation."""

from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import typer
from rich.console import Console
from rich.table import Table

from jointcat.analysis.evaluation import (
    ClassificationReport,
    WaicResult,
    class_probability_draws,
    classify,
    longitudinal_residuals,
    random_classifier_baseline,
    waic,
)
from jointcat.core.config import resolve_run_config
from jointcat.core.context import RunContext
from jointcat.core.validation import Validator
from jointcat.model.categorical import pointwise_loglik
from jointcat.utils.artifacts import FitArtifacts, write_csv, write_json

console = Console()


def _score(fit: FitArtifacts) -> Tuple[ClassificationReport, WaicResult]:
    arrays = fit.arrays
    design = np.asarray(fit.cohort.design)
    treatments = np.asarray(fit.cohort.treatments)
    alpha = arrays.get("alpha") if fit.share else None
    probabilities = class_probability_draws(
        design, arrays["beta"], alpha, fit.latent, fit.share
    )
    loglik = pointwise_loglik(
        design, treatments, arrays["beta"], alpha, fit.latent, fit.share
    )
    return classify(probabilities.mean(axis=0), treatments), waic(loglik)


def _labels(fit: FitArtifacts) -> List[str]:
    return [fit.cohort.category_label(j + 1) for j in range(fit.cohort.n_categories)]


def _model_row(
    fit: FitArtifacts, report: ClassificationReport, result: WaicResult
) -> Dict[str, Any]:
    return {
        "model": fit.mode.value,
        "fit_dir": str(fit.paths.root),
        **report.to_dict(_labels(fit)),
        **result.to_dict(),
    }


def _predictions(fit: FitArtifacts, report: ClassificationReport) -> pd.DataFrame:
    labels = _labels(fit)
    frame = pd.DataFrame(
        {
            "patient_id": list(fit.cohort.patient_ids),
            "observed": [labels[t - 1] for t in fit.cohort.treatments],
            "predicted": [labels[p - 1] for p in report.predictions],
        }
    )
    for j, label in enumerate(labels):
        frame[f"p_{label}"] = report.probabilities[:, j]
    return frame


def _pointwise_waic(fit: FitArtifacts, result: WaicResult) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "patient_id": list(fit.cohort.patient_ids),
            "lppd": result.pointwise_lppd,
            "p_waic": result.pointwise_p_waic,
            "waic": result.pointwise,
        }
    )


def command(
    fit_dir: str = typer.Argument(..., help="Directory written by `jointcat fit`"),
    out: Optional[str] = typer.Option(
        None, "--out", "-o", help="Output directory (default: <fit_dir>/evaluation)"
    ),
    compare: Optional[str] = typer.Option(
        None, "--compare", help="Second fit directory on the same cohort"
    ),
    baseline_runs: Optional[int] = typer.Option(
        None, "--baseline-runs", help="Random-classifier runs"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    config_file: Optional[str] = typer.Option(
        None, "--config", "-c", help="Per-run JSON configuration"
    ),
):
    """Score a fit: class-weighted metrics, WAIC, random baseline and IWRES.

    Writes metrics.json, predictions.csv, waic_pointwise.csv and, for joint fits,
    iwres.csv.
    """
    try:
        context = RunContext()
        Validator.validate_fit_dir(str(context.resolve_path(fit_dir)))
        if compare:
            Validator.validate_fit_dir(str(context.resolve_path(compare)))
        if config_file:
            Validator.validate_config_file(config_file)

        fit_root = context.resolve_path(fit_dir)
        out_dir = context.output_dir(out) if out else fit_root / "evaluation"
        run = resolve_run_config(
            "evaluate",
            json_path=config_file,
            overrides={
                "evaluation.baseline_runs": baseline_runs,
                "sampler.seed": seed,
            },
            inputs={"fit_dir": fit_root, "compare": compare},
            output=out_dir,
        )
        runs = int(run.section("evaluation")["baseline_runs"])

        with console.status("Loading fit artifacts..."):
            fits = [FitArtifacts.load(fit_root)]
            if compare:
                fits.append(FitArtifacts.load(context.resolve_path(compare)))
        if len(fits) == 2 and fits[0].cohort.patient_ids != fits[1].cohort.patient_ids:
            raise ValueError(
                "--compare fit was run on a different cohort (patient ids differ)"
            )

        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for i, fit in enumerate(fits):
            console.print(
                f"[dim]Scoring {fit.mode.value} fit ({fit.n_draws} draws): "
                f"{fit.paths.root}[/dim]"
            )
            report, result = _score(fit)
            rows.append(_model_row(fit, report, result))
            suffix = "" if i == 0 else "_compare"
            write_csv(_predictions(fit, report), out_dir / f"predictions{suffix}.csv")
            write_csv(
                _pointwise_waic(fit, result), out_dir / f"waic_pointwise{suffix}.csv"
            )
            if fit.share:
                residuals = longitudinal_residuals(
                    fit.cohort, fit.latent, fit.arrays["sigma2"]
                )
                write_csv(residuals, out_dir / f"iwres{suffix}.csv")

        cohort = fits[0].cohort
        with console.status(f"Random baseline ({runs} runs)..."):
            baseline = random_classifier_baseline(
                cohort.treatments,
                runs=runs,
                seed=run.seed,
                n_categories=cohort.n_categories,
            )

        metrics = {
            "models": rows,
            "random_baseline": {**baseline.to_dict(), "runs": runs, "seed": run.seed},
            "n_patients": cohort.n_patients,
            "config": run.to_dict(),
        }
        path = write_json(metrics, out_dir / "metrics.json")

        _print_metrics(rows, baseline.to_dict())
        console.print(f"[green]✓ Evaluation written to {path.parent}[/green]")

    except Exception as e:
        console.print(f"[red]ERROR:[/red] {e}")
        raise typer.Exit(code=1) from e


def _print_metrics(rows: List[Dict[str, Any]], baseline: Dict[str, float]) -> None:
    table = Table(title="Class-weighted metrics")
    table.add_column("Model")
    for column in ("Accuracy", "Precision", "Recall", "F1", "WAIC"):
        table.add_column(column, justify="right")

    def pct(value: float) -> str:
        return f"{100.0 * value:.2f}%"

    for row in rows:
        table.add_row(
            row["model"],
            pct(row["accuracy"]),
            pct(row["precision"]),
            pct(row["recall"]),
            pct(row["f1"]),
            f"{row['waic']:.1f}",
        )
    table.add_row(
        "random",
        pct(baseline["accuracy"]),
        pct(baseline["precision"]),
        pct(baseline["recall"]),
        pct(baseline["f1"]),
        "-",
    )
    console.print(table)
