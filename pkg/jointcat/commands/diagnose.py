"""Diagnose command implementation."""

from dataclasses import replace
from typing import Optional

import pandas as pd
import typer
from rich.console import Console

from jointcat.commands.fit import EXIT_NOT_CONVERGED, print_convergence
from jointcat.core.config import resolve_run_config
from jointcat.core.context import RunContext
from jointcat.core.validation import Validator
from jointcat.inference.diagnostics import check_convergence
from jointcat.inference.sampler import PosteriorDraws
from jointcat.utils.artifacts import read_json, write_json

console = Console()


def command(
    fit_dir: str = typer.Argument(..., help="Directory written by `jointcat fit`"),
    rhat_threshold: Optional[float] = typer.Option(
        None, "--rhat-threshold", help="R-hat must be below this"
    ),
    ess_threshold: Optional[float] = typer.Option(
        None, "--ess-threshold", help="Bulk ESS must exceed this"
    ),
    out: Optional[str] = typer.Option(
        None, "--out", "-o", help="Write the recomputed report to this JSON file"
    ),
    config_file: Optional[str] = typer.Option(
        None, "--config", "-c", help="Per-run JSON configuration"
    ),
):
    """Recompute R-hat and ESS from the stored draws of a fit.

    Sampler statistics (divergences, step sizes, tree depths) come from the fit's
    diagnostics.json. Exits with code 2 when a check fails.
    """
    try:
        context = RunContext()
        Validator.validate_fit_dir(str(context.resolve_path(fit_dir)))
        paths = context.fit_paths(fit_dir)
        run = resolve_run_config(
            "diagnose",
            json_path=config_file,
            overrides={
                "evaluation.rhat_threshold": rhat_threshold,
                "evaluation.ess_threshold": ess_threshold,
            },
            inputs={"fit_dir": paths.root},
            output=out,
        )
        evaluation = run.section("evaluation")

        frame = pd.read_csv(paths.draws, float_precision="round_trip")
        draws = PosteriorDraws.from_frame(frame)
        console.print(
            f"[dim]{draws.n_chains} chains x {draws.n_draws} draws, "
            f"{len(draws.names)} parameters[/dim]"
        )
        report = check_convergence(
            draws,
            rhat_threshold=float(evaluation["rhat_threshold"]),
            ess_threshold=float(evaluation["ess_threshold"]),
        )

        if paths.diagnostics.is_file():
            stored = read_json(paths.diagnostics)
            report = replace(
                report,
                sampler_stats=stored.get("chains", []),
                divergence_rate=float(stored.get("divergence_rate") or 0.0),
                sampler_failed=bool(stored.get("sampler_failed", False)),
            )
        else:
            console.print(
                "[yellow]Warning:[/yellow] diagnostics.json missing; "
                "sampler statistics unavailable"
            )

        print_convergence(report)
        if out:
            target = write_json(report.to_dict(), context.resolve_path(out))
            console.print(f"[dim]Report: {target}[/dim]")

        if not report.passed:
            console.print(
                f"[red]ERROR:[/red] Convergence checks failed for "
                f"{len(report.failed)} parameter(s)"
            )
            raise typer.Exit(code=EXIT_NOT_CONVERGED)
        console.print("[green]✓ All convergence checks passed[/green]")

    except typer.Exit:
        raise
    except Exception as e:
        console.print(f"[red]ERROR:[/red] {e}")
        raise typer.Exit(code=1) from e
