import functools
import logging
import sys

import click

from app.cli import commands
from common.errors import EXIT_AUDIT, EXIT_INVALID, BeamLabError
from common.settings import SWEEP_WORKERS, configure_logging

logger = logging.getLogger(__name__)


def handle_errors(func):
    """Map library errors to the CLI exit-code contract"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except BeamLabError as e:
            logger.error(f"{func.__name__} failed: {e}", exc_info=True)
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
        except (OSError, ValueError) as e:
            logger.error(f"{func.__name__} failed: {e}", exc_info=True)
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_INVALID)

    return wrapper


def finish(result: commands.CommandResult):
    if result.headline:
        click.echo(result.headline)
    if not result.passed:
        sys.exit(EXIT_AUDIT)


out_option = click.option(
    "--out", "out_dir", default=".", show_default=True, type=click.Path(file_okay=False), help="Output directory"
)
set_option = click.option(
    "--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE", help="Override a problem-file value"
)


@click.group()
@click.option("--log-level", default=None, help="Overrides BEAMLAB_LOG_LEVEL")
def cli(log_level):
    """Damped beam decay laboratory"""
    configure_logging(log_level)


@cli.command()
@click.argument("problem_file")
@out_option
@set_option
@handle_errors
def simulate(problem_file, out_dir, overrides):
    """Integrate a problem and write trajectory.csv"""
    finish(commands.cmd_simulate(problem_file, out_dir, overrides))


@cli.command()
@click.argument("problem_file")
@out_option
@set_option
@handle_errors
def certify(problem_file, out_dir, overrides):
    """Compute the decay certificate and print its rate"""
    finish(commands.cmd_certify(problem_file, out_dir, overrides))


@cli.command()
@click.argument("trajectory_csv")
@click.argument("certificate_report")
@click.option("--out", "out_dir", default=None, type=click.Path(file_okay=False), help="Defaults to the CSV directory")
@click.option("--tol", default=0.05, show_default=True, type=click.FloatRange(min=0.0), help="Relative slack")
@handle_errors
def verify(trajectory_csv, certificate_report, out_dir, tol):
    """Audit a trajectory against a certificate"""
    finish(commands.cmd_verify(trajectory_csv, certificate_report, out_dir, tol))


@cli.command()
@click.argument("problem_file")
@out_option
@set_option
@click.option("--simulate", "with_simulation", is_flag=True, help="Also check convergence of the dynamics")
@click.option("--tol", default=0.05, show_default=True, type=click.FloatRange(min=0.0), help="Audit slack")
@handle_errors
def stationary(problem_file, out_dir, overrides, with_simulation, tol):
    """Solve the stationary problem and write u_hat.txt"""
    finish(commands.cmd_stationary(problem_file, out_dir, overrides, with_simulation, tol))


@cli.command()
@click.argument("problem_file")
@out_option
@set_option
@click.option("--dt-halvings", default=1, show_default=True, type=click.IntRange(min=0))
@handle_errors
def oracle(problem_file, out_dir, overrides, dt_halvings):
    """Compare simulations of a linear problem with the modal solution"""
    finish(commands.cmd_oracle(problem_file, out_dir, overrides, dt_halvings))


@cli.command()
@click.argument("template")
@click.option("--range", "ranges", multiple=True, metavar="SECTION.KEY=V1,V2,...", help="Swept values")
@out_option
@set_option
@click.option("--workers", default=None, type=click.IntRange(min=1), help="Defaults to BEAMLAB_SWEEP_WORKERS")
@handle_errors
def sweep(template, ranges, out_dir, overrides, workers):
    """Certified and fitted rates over a parameter grid"""
    finish(commands.cmd_sweep(template, ranges, out_dir, overrides, workers or SWEEP_WORKERS))


if __name__ == "__main__":
    cli()
