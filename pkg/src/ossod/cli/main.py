"""
``ossod`` command line: score, eval, simulate, sweep, generate and fit.

CSV goes to standard output or to files; logs and error messages go to
standard error.
"""

from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Iterator, List, Optional

import typer
from rich.console import Console

from ..config.run_spec import RunSpec, load_run_spec
from ..config.settings import get_settings
from ..exceptions import OssodError
from ..log_config import configure_logging
from ..models.score_models import ScoreKind
from ..models.training_models import PipelineMode
from . import commands

app = typer.Typer(
    name="ossod",
    help="Open-set self-training simulator with offline and online OOD filtering.",
    no_args_is_help=True,
    add_completion=False,
)
err_console = Console(stderr=True)

ConfigOption = Annotated[
    Optional[Path],
    typer.Option("--config", "-c", help="Flat key=value configuration file."),
]
SetOption = Annotated[
    Optional[List[str]],
    typer.Option("--set", help="Override one config key (key=value); may be repeated."),
]
OutOption = Annotated[Path, typer.Option("--out", "-o", help="Output directory.")]


@contextmanager
def _reported() -> Iterator[None]:
    """Turn expected failures into a one-line message and their exit status."""
    try:
        yield
    except OssodError as exc:
        err_console.print(f"[bold red]error:[/] {exc}", highlight=False)
        raise typer.Exit(exc.exit_code) from exc
    except ArithmeticError as exc:
        err_console.print(f"[bold red]numerical error:[/] {exc}", highlight=False)
        raise typer.Exit(4) from exc
    except ValueError as exc:
        err_console.print(f"[bold red]error:[/] {exc}", highlight=False)
        raise typer.Exit(2) from exc


def _spec(config: Optional[Path], overrides: Optional[List[str]], seed: Optional[int]) -> RunSpec:
    return load_run_spec(config, overrides or (), seed)


@app.callback()
def main(
    log_level: Annotated[
        Optional[str], typer.Option("--log-level", help="Overrides OSSOD_LOG_LEVEL.")
    ] = None,
) -> None:
    settings = get_settings()
    configure_logging(log_level or settings.log_level, json_output=settings.log_json)


@app.command()
def score(
    embeddings: Annotated[Path, typer.Argument(help="CSV or OSSD embedding file.")],
    kind: Annotated[ScoreKind, typer.Option("--kind", "-k", help="Score kind.")] = ScoreKind.MSP,
    model: Annotated[
        Optional[Path], typer.Option("--model", "-m", help="Model bundle directory.")
    ] = None,
    temperature: Annotated[float, typer.Option(help="Energy temperature.")] = 1.0,
) -> None:
    """Print one ID-ness score per input row as index,score CSV."""
    with _reported():
        typer.echo(commands.run_score(embeddings, kind, model, temperature), nl=False)


@app.command("eval")
def evaluate(
    id_scores: Annotated[Path, typer.Argument(help="Scores of ID inputs.")],
    ood_scores: Annotated[Path, typer.Argument(help="Scores of OOD inputs.")],
) -> None:
    """Print auroc,fpr50,fpr75,fpr95 for two score files."""
    with _reported():
        typer.echo(commands.run_eval(id_scores, ood_scores), nl=False)


@app.command()
def simulate(
    out: OutOption,
    mode: Annotated[PipelineMode, typer.Option(help="Pipeline mode.")] = PipelineMode.BASELINE,
    seed: Annotated[Optional[int], typer.Option(help="Run seed.")] = None,
    config: ConfigOption = None,
    overrides: SetOption = None,
) -> None:
    """Run one pipeline and write telemetry, summary and OOD report CSVs."""
    with _reported():
        spec = _spec(config, overrides, seed)
        commands.run_simulate(spec, mode, out)


@app.command()
def sweep(
    out: OutOption,
    modes: Annotated[
        List[PipelineMode], typer.Option("--mode", help="Pipeline mode; may be repeated.")
    ],
    seeds: Annotated[List[int], typer.Option("--seed", help="Run seed; may be repeated.")],
    workers: Annotated[
        Optional[int], typer.Option(help="Parallel runs (default OSSOD_SWEEP_WORKERS).")
    ] = None,
    config: ConfigOption = None,
    overrides: SetOption = None,
) -> None:
    """Run every (mode, seed) pair and write per-run CSVs plus aggregate.csv."""
    with _reported():
        spec = _spec(config, overrides, None)
        commands.run_sweep(spec, modes, seeds, out, workers or get_settings().sweep_workers)


@app.command()
def generate(
    out: OutOption,
    seed: Annotated[Optional[int], typer.Option(help="Scenario seed.")] = None,
    binary: Annotated[bool, typer.Option("--binary", help="Write OSSD binary files.")] = False,
    config: ConfigOption = None,
    overrides: SetOption = None,
) -> None:
    """Write a scenario's partitions as embedding files."""
    with _reported():
        spec = _spec(config, overrides, seed)
        commands.run_generate(spec, out, "binary" if binary else "csv")


@app.command()
def fit(
    out: OutOption,
    seed: Annotated[Optional[int], typer.Option(help="Scenario seed.")] = None,
    config: ConfigOption = None,
    overrides: SetOption = None,
) -> None:
    """Train the offline K + 1 detector and save it as a model bundle."""
    with _reported():
        spec = _spec(config, overrides, seed)
        commands.run_fit(spec, out)


if __name__ == "__main__":
    app()
