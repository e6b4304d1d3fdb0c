"""Command-line interface (typer application in ``ossod.cli.main``)."""
