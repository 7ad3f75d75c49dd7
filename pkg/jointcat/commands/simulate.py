"""Simulate command implementation."""

from dataclasses import replace
from typing import Optional

import typer
from rich.console import Console

from jointcat.core.config import resolve_run_config
from jointcat.core.context import RunContext
from jointcat.core.validation import Validator
from jointcat.model.simulator import SimulationScenario, write_simulation
from jointcat.utils.scenario import load_scenario

console = Console()


def command(
    out: str = typer.Option(
        "simulated", "--out", "-o", help="Directory for the simulated cohort"
    ),
    scenario_file: Optional[str] = typer.Option(
        None, "--scenario", "-s", help="Scenario YAML file (default: built-in scenario)"
    ),
    n_patients: Optional[int] = typer.Option(
        None, "--n-patients", "-n", help="Number of patients"
    ),
    seed: Optional[int] = typer.Option(None, "--seed", help="Random seed"),
    config_file: Optional[str] = typer.Option(
        None, "--config", "-c", help="Per-run JSON configuration"
    ),
):
    """Simulate a cohort from the joint generative model.

    Writes longitudinal.csv and baseline.csv in the format `jointcat fit` reads,
    plus truth.json with the true parameters and scenario.json.
    """
    try:
        context = RunContext()
        if config_file:
            Validator.validate_config_file(config_file)
        run = resolve_run_config(
            "simulate",
            json_path=config_file,
            overrides={"simulation.n_patients": n_patients, "simulation.seed": seed},
            output=out,
        )
        settings = run.section("simulation")

        if scenario_file:
            Validator.validate_scenario_file(scenario_file)
            scenario = load_scenario(str(context.resolve_path(scenario_file)))
            changes = {}
            if n_patients is not None:
                changes["n_patients"] = n_patients
            if seed is not None:
                changes["seed"] = seed
            scenario = replace(scenario, **changes) if changes else scenario
            console.print(f"[dim]Scenario: {scenario_file}[/dim]")
        else:
            scenario = SimulationScenario(
                n_patients=int(settings["n_patients"]), seed=int(settings["seed"])
            )

        out_dir = context.output_dir(out)
        with console.status(f"Simulating {scenario.n_patients} patients..."):
            paths = write_simulation(scenario, out_dir)

        console.print(
            f"[green]✓ Simulated {scenario.n_patients} patients "
            f"(seed {scenario.seed})[/green]"
        )
        for name, path in paths.items():
            console.print(f"  [dim]{name}:[/dim] {path}")

    except Exception as e:
        console.print(f"[red]ERROR:[/red] {e}")
        raise typer.Exit(code=1) from e
