"""Init command implementation."""

from typing import Any, Mapping

import typer
from rich.console import Console
from rich.syntax import Syntax
from rich.table import Table

from jointcat.core.config import Config, ConfigError

console = Console()


def command(
    force: bool = typer.Option(
        False, "--force", "-f", help="Overwrite existing configuration"
    ),
    show_config: bool = typer.Option(
        False, "--show", help="Show default configuration without creating"
    ),
):
    """Initialize jointcat configuration (XDG-compliant).

    Creates ~/.config/jointcat/config.toml with the default sampler, model,
    data and evaluation settings, plus the XDG state and cache directories.
    """
    config = Config()

    if show_config:
        syntax = Syntax(
            Config.get_default_config(), "toml", theme="monokai", line_numbers=True
        )
        console.print(syntax)
        console.print(f"[dim]Would be created at: {config.config_file}[/dim]")
        return

    if config.exists() and not force:
        console.print(
            f"[yellow]Configuration already exists:[/yellow] {config.config_file}"
        )
        _report_existing(config)
        console.print("[dim]Use --force to overwrite or --show to view defaults[/dim]")
        raise typer.Exit(code=1)

    try:
        if force and config.exists():
            console.print("[yellow]Overwriting existing config[/yellow]")
        config_path = config.create_default(force=force)
        dirs = config.create_directories()

        console.print(f"[green]✓ Configuration created: {config_path}[/green]")
        for name in ("state", "cache"):
            console.print(f"  [dim]{name}:[/dim] {dirs[name]}")
        console.print(_sections_table(Config().as_dict()))

    except Exception as e:
        console.print(f"[red]ERROR:[/red] Failed to create configuration: {e}")
        raise typer.Exit(code=1) from e


def _report_existing(config: Config) -> None:
    try:
        sections = config.as_dict()
    except ConfigError as e:
        console.print(f"[red]ERROR:[/red] {e}")
        return
    console.print(_sections_table(sections))


def _sections_table(sections: Mapping[str, Mapping[str, Any]]) -> Table:
    """Sampler, model and evaluation settings a fit will start from."""
    table = Table(title="Run defaults")
    table.add_column("Setting")
    table.add_column("Value", justify="right")
    for section in ("sampler", "model", "evaluation"):
        for key, value in sections[section].items():
            table.add_row(f"{section}.{key}", str(value))
    return table
