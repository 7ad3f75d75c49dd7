"""Fit command implementation."""

from typing import Optional

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from jointcat import __version__
from jointcat.analysis.summaries import biexp_summary, relative_risk_table
from jointcat.core.config import resolve_run_config
from jointcat.core.context import RunContext
from jointcat.core.validation import Validator
from jointcat.inference.diagnostics import ConvergenceReport, check_convergence
from jointcat.inference.sampler import sample
from jointcat.model.data_model import (
    N_BIOMARKERS,
    load_cohort,
    summarize_covariates,
    write_preprocessing_log,
)
from jointcat.model.posterior import JointPosterior, Mode, draw_arrays
from jointcat.utils.artifacts import copy_inputs, write_csv, write_json
from jointcat.utils.path_resolver import PathResolutionError, resolve_input_pair

console = Console()

EXIT_NOT_CONVERGED = 2


def command(
    longitudinal: str = typer.Argument(
        ..., help="Longitudinal CSV (or directory containing it)"
    ),
    baseline: str = typer.Argument(
        ..., help="Baseline CSV (or directory containing it)"
    ),
    out: str = typer.Option(
        "fit", "--out", "-o", help="Output directory for artifacts"
    ),
    mode: Optional[str] = typer.Option(
        None, "--mode", "-m", help="joint or categorical (categorical_only)"
    ),
    chains: Optional[int] = typer.Option(None, "--chains", help="Number of chains"),
    warmup: Optional[int] = typer.Option(
        None, "--warmup", help="Warm-up iterations per chain"
    ),
    draws: Optional[int] = typer.Option(
        None, "--draws", help="Post-warm-up draws per chain"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    jobs: Optional[int] = typer.Option(
        None, "--jobs", "-j", help="Worker processes (0 = one per chain)"
    ),
    config_file: Optional[str] = typer.Option(
        None, "--config", "-c", help="Per-run JSON configuration"
    ),
):
    """Fit the joint (or categorical-only) model with NUTS.

    Writes draws, diagnostics, the bi-exponential parameter summary and the
    relative risk table. Exits with code 2 when R-hat or ESS checks fail.
    """
    try:
        try:
            long_path, base_path = resolve_input_pair(longitudinal, baseline)
        except PathResolutionError as e:
            console.print(f"[red]ERROR:[/red] {e}")
            raise typer.Exit(code=1) from e

        context = RunContext()
        Validator.validate_csv_file(str(long_path), "Longitudinal file")
        Validator.validate_csv_file(str(base_path), "Baseline file")
        if config_file:
            Validator.validate_config_file(config_file)

        run = resolve_run_config(
            "fit",
            json_path=config_file,
            overrides={
                "model.mode": Mode.parse(mode).value if mode else None,
                "sampler.chains": chains,
                "sampler.warmup": warmup,
                "sampler.draws": draws,
                "sampler.seed": seed,
                "sampler.jobs": jobs,
            },
            inputs={"longitudinal": long_path, "baseline": base_path},
            output=out,
        )
        sampler_config = run.sampler
        schema = run.schema

        cohort = load_cohort(long_path, base_path, schema)
        console.print(
            f"[dim]Cohort: {cohort.n_patients} patients, "
            f"{cohort.n_observations} observations, "
            f"{cohort.n_covariates} covariate columns[/dim]"
        )
        console.print(
            f"[dim]Model: {run.mode.value} ({run.parameterization.value})[/dim]"
        )

        posterior = JointPosterior(cohort, run.mode, run.parameterization, run.prior)
        with console.status(
            f"Sampling {sampler_config.chains} chains x "
            f"{sampler_config.warmup}+{sampler_config.draws} iterations..."
        ):
            result = sample(posterior, sampler_config)

        evaluation = run.section("evaluation")
        report = check_convergence(
            result,
            rhat_threshold=float(evaluation["rhat_threshold"]),
            ess_threshold=float(evaluation["ess_threshold"]),
        )

        paths = context.fit_paths(out)
        context.output_dir(out)
        copy_inputs(paths, long_path, base_path)

        frame = result.to_frame()
        write_csv(frame, paths.draws)
        if result.latent is not None:
            np.save(paths.latent, result.latent)
        write_json(report.to_dict(), paths.diagnostics)
        write_preprocessing_log(cohort, paths.preprocessing)
        write_csv(summarize_covariates(cohort), paths.covariate_summary)

        arrays = draw_arrays(
            frame, run.mode, cohort.covariate_names, cohort.n_categories
        )
        labels = [cohort.category_label(j + 1) for j in range(cohort.n_categories)]
        biomarkers = [cohort.biomarker_name(k + 1) for k in range(N_BIOMARKERS)]
        if run.mode is Mode.JOINT:
            write_csv(biexp_summary(arrays, biomarkers), paths.biexp_summary)
        write_csv(
            relative_risk_table(
                arrays,
                cohort.covariate_names,
                labels,
                cohort.covariate_groups,
                biomarkers,
            ),
            paths.relative_risks,
        )

        write_json(
            {
                "version": __version__,
                "mode": run.mode.value,
                "schema": schema.to_dict(),
                "config": run.to_dict(),
                "n_patients": cohort.n_patients,
                "n_observations": cohort.n_observations,
                "n_chains": result.n_chains,
                "n_draws": result.n_draws,
                "parameters": list(result.names),
                "covariate_names": list(cohort.covariate_names),
                "category_labels": labels,
                "biomarker_names": biomarkers,
                "converged": report.passed,
                "relative_risk": {
                    "rr": "posterior mean of exp(coefficient)",
                    "rr_of_mean": "exp(posterior mean of coefficient)",
                },
            },
            paths.manifest,
        )

        print_convergence(report)
        console.print(f"[dim]Artifacts: {paths.root}[/dim]")

        if not report.passed:
            console.print(
                f"[red]ERROR:[/red] Convergence checks failed for "
                f"{len(report.failed)} parameter(s); see {paths.diagnostics}"
            )
            raise typer.Exit(code=EXIT_NOT_CONVERGED)

        console.print(
            f"[green]✓ Fit converged ({result.n_chains} chains x "
            f"{result.n_draws} draws)[/green]"
        )

    except typer.Exit:
        raise
    except Exception as e:
        console.print(f"[red]ERROR:[/red] {e}")
        raise typer.Exit(code=1) from e


def print_convergence(report: ConvergenceReport, limit: int = 10) -> None:
    """Worst parameters by R-hat plus sampler statistics."""
    table = Table(title="Convergence")
    table.add_column("Parameter")
    table.add_column("R-hat", justify="right")
    table.add_column("ESS bulk", justify="right")
    table.add_column("ESS tail", justify="right")
    table.add_column("OK", justify="center")

    ordered = report.table.sort_values("rhat", ascending=False, na_position="first")
    for name, row in ordered.head(limit).iterrows():
        table.add_row(
            name,
            f"{row['rhat']:.3f}",
            f"{row['ess_bulk']:.0f}",
            f"{row['ess_tail']:.0f}",
            "[green]✓[/green]" if row["passed"] else "[red]✗[/red]",
        )
    console.print(table)

    divergences = sum(chain["divergences"] for chain in report.sampler_stats)
    style = "red" if report.sampler_failed else ("yellow" if divergences else "dim")
    console.print(
        f"[{style}]Divergent transitions: {divergences} "
        f"({report.divergence_rate:.1%})[/{style}]"
    )
