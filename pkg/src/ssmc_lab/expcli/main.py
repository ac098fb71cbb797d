"""Command-line entry point for ssmc-lab experiments."""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import click
from rich.console import Console
from rich.table import Table

from ssmc_lab.config import settings
from ssmc_lab.errors import BudgetExceededError, ConfigError, SsmcError
from ssmc_lab.expcli.analyses import AnalysisResult
from ssmc_lab.expcli.runner import execute
from ssmc_lab.expcli.schema import load_config

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_NUMERIC = 4


@dataclass
class CliOptions:
    config_path: Optional[Path]
    seed: Optional[int]
    threads: Optional[int]
    out_dir: Optional[Path]


def _fail(exc: SsmcError, code: int) -> None:
    message = str(exc)
    if isinstance(exc, ConfigError) and exc.line is not None:
        message = f"{message} (line {exc.line}, column {exc.column})"
    logger.error(message)
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _render(result: AnalysisResult, manifest_path: Path) -> None:
    table = Table(title=f"ssmc-lab {result.analysis}")
    table.add_column("quantity", style="cyan")
    table.add_column("value")
    for key, value in result.summary:
        table.add_row(key, value)
    console = Console()
    console.print(table)
    console.print(f"manifest: {manifest_path}")


def _dispatch(options: CliOptions, kind: Optional[str]) -> None:
    try:
        if options.config_path is None:
            raise ConfigError("no config given (use --config)")
        config = load_config(options.config_path)
        result, manifest_path = execute(
            config, kind, seed=options.seed, threads=options.threads, out_dir=options.out_dir
        )
    except ConfigError as exc:
        _fail(exc, EXIT_CONFIG)
    except BudgetExceededError as exc:
        _fail(exc, EXIT_BUDGET)
    except SsmcError as exc:
        _fail(exc, EXIT_NUMERIC)
    else:
        _render(result, manifest_path)


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path, dir_okay=False), help="Experiment YAML")
@click.option("--seed", type=int, default=None, help="Override the master seed")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker processes")
@click.option("--out-dir", type=click.Path(path_type=Path, file_okay=False), default=None, help="Artifact directory")
@click.option("--log-level", default=None, help="Logging level (default from SSMC_LOG_LEVEL)")
@click.pass_context
def main(ctx, config_path, seed, threads, out_dir, log_level):
    """Experiments on self-switching Markov chains."""
    logging.basicConfig(
        level=getattr(logging, (log_level or settings.log_level).upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    ctx.obj = CliOptions(config_path, seed, threads, out_dir)


@main.command()
@click.pass_obj
def run(options: CliOptions):
    """Run the analysis named in the config."""
    _dispatch(options, None)


@main.command()
@click.pass_obj
def simulate(options: CliOptions):
    """Simulate renewal records or step trajectories per replica."""
    _dispatch(options, "simulate")


@main.command()
@click.pass_obj
def occupation(options: CliOptions):
    """Empirical occupation measures against the fixed-N limit."""
    _dispatch(options, "occupation")


@main.command()
@click.pass_obj
def dominance(options: CliOptions):
    """Dominance verdict along the N ladder."""
    _dispatch(options, "dominance")


@main.command()
@click.pass_obj
def metastability(options: CliOptions):
    """Exp(1) and cut-off verdicts for the scaled switching time."""
    _dispatch(options, "metastability")


@main.command()
@click.pass_obj
def validate(options: CliOptions):
    """Check the chain described by the config."""
    _dispatch(options, "validate")


@main.command()
@click.pass_obj
def sweep(options: CliOptions):
    """Closed-form m_N(theta) against the linear-solve oracle on a grid."""
    _dispatch(options, "sweep")


if __name__ == "__main__":
    main()
