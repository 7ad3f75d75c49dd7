"""Main Typer application instance."""

import logging

import typer
from rich.console import Console
from rich.logging import RichHandler

from jointcat.commands import diagnose, evaluate, fit, init, predict, simulate, vi

app = typer.Typer(
    name="jointcat",
    help="Bayesian joint model of biomarker trajectories and treatment choice",
    add_completion=False,
    context_settings={"help_option_names": ["-h", "--help"]},
)


@app.callback()
def main_callback(
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="Show debug logging on stderr"
    ),
):
    """Configure logging for every sub-command."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=verbose)],
        force=True,
    )


# Register commands
app.command(name="init")(init.command)
app.command(name="simulate")(simulate.command)
app.command(name="fit")(fit.command)
app.command(name="diagnose")(diagnose.command)
app.command(name="evaluate")(evaluate.command)
app.command(name="vi")(vi.command)
app.command(name="predict")(predict.command)


def main():
    """Entry point for pip-installed command."""
    app()


if __name__ == "__main__":
    main()
