"""Variable importance command implementation."""

from typing import List, Optional

import typer
from rich.console import Console
from rich.table import Table

from jointcat.analysis.importance import VIInputs, VIReport, vi_ranking
from jointcat.analysis.summaries import relative_risk_table
from jointcat.core.config import resolve_run_config
from jointcat.core.context import RunContext
from jointcat.core.validation import Validator
from jointcat.model.data_model import N_BIOMARKERS
from jointcat.utils.artifacts import FitArtifacts, write_csv

console = Console()


def command(
    fit_dir: str = typer.Argument(..., help="Directory written by `jointcat fit`"),
    runs: Optional[int] = typer.Option(
        None, "--runs", "-r", help="Permutation runs per variable"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    variable: Optional[List[str]] = typer.Option(
        None, "--variable", help="Only score these variables (repeatable)"
    ),
    out: Optional[str] = typer.Option(
        None, "--out", "-o", help="Output directory (default: the fit directory)"
    ),
    config_file: Optional[str] = typer.Option(
        None, "--config", "-c", help="Per-run JSON configuration"
    ),
):
    """Rank covariates and latent characteristics by permutation importance.

    Importance is the increase in categorical WAIC when one variable is shuffled
    across patients, averaged over runs. Writes vi.csv and vi_runs.csv and adds
    the VI rank to the fit's relative_risks.csv.
    """
    try:
        context = RunContext()
        Validator.validate_fit_dir(str(context.resolve_path(fit_dir)))
        if config_file:
            Validator.validate_config_file(config_file)
        fit_root = context.resolve_path(fit_dir)
        out_dir = context.output_dir(out) if out else fit_root

        run = resolve_run_config(
            "vi",
            json_path=config_file,
            overrides={"importance.runs": runs, "sampler.seed": seed},
            inputs={"fit_dir": fit_root},
            output=out_dir,
        )
        n_runs = int(run.section("importance")["runs"])

        with console.status("Loading fit artifacts..."):
            fit = FitArtifacts.load(fit_root)
        inputs = VIInputs.from_draws(fit.cohort, fit.arrays, fit.latent)
        console.print(
            f"[dim]{fit.mode.value} fit: {len(inputs.variables)} variables, "
            f"{fit.n_draws} draws[/dim]"
        )

        with console.status(f"Permuting ({n_runs} runs)..."):
            report = vi_ranking(
                inputs, runs=n_runs, seed=run.seed, variables=variable or None
            )

        report.to_csv(out_dir / "vi.csv")
        write_csv(report.runs_frame(), out_dir / "vi_runs.csv")

        cohort = fit.cohort
        table = relative_risk_table(
            fit.arrays,
            cohort.covariate_names,
            [cohort.category_label(j + 1) for j in range(cohort.n_categories)],
            cohort.covariate_groups,
            [cohort.biomarker_name(k + 1) for k in range(N_BIOMARKERS)]
            if fit.share
            else (),
            vi_report=report,
        )
        write_csv(table, out_dir / fit.paths.relative_risks.name)

        _print_ranking(report)
        console.print(f"[green]✓ Variable importance written to {out_dir}[/green]")

    except Exception as e:
        console.print(f"[red]ERROR:[/red] {e}")
        raise typer.Exit(code=1) from e


def _print_ranking(report: VIReport) -> None:
    table = Table(title=f"Variable importance ({report.runs} runs)")
    table.add_column("Rank", justify="right")
    table.add_column("Variable")
    table.add_column("Mean", justify="right")
    table.add_column("Min", justify="right")
    table.add_column("Max", justify="right")
    for _, row in report.table.iterrows():
        table.add_row(
            str(int(row["rank"])),
            row["variable"],
            f"{row['mean']:.3f}",
            f"{row['min']:.3f}",
            f"{row['max']:.3f}",
        )
    console.print(table)
