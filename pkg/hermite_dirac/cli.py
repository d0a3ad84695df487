"""Command line: one subcommand per run mode plus plot-data conversion."""
import logging

import click

from hermite_dirac.app import create_runner
from hermite_dirac.utils.errors import register_error_handlers
from hermite_dirac.utils.output import emit_plot_data, read_table_json

logger = logging.getLogger(__name__)


def common_options(f):
    """--config, --tier, --out and --threads shared by every run subcommand."""
    f = click.option("--threads", type=int, default=None, help="Parallel sweep jobs.")(f)
    f = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                     help="Directory for result files.")(f)
    f = click.option("--tier", type=click.Choice(["desk", "paper", "testing"]), default=None,
                     help="Grid and step-count defaults.")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="TOML run file.")(f)
    return f


def _overrides(mode, out_dir, threads, **sections):
    overrides = {"run": {"mode": mode}}
    output = {}
    if out_dir is not None:
        output["dir"] = out_dir
    if threads is not None:
        output["threads"] = threads
    if output:
        overrides["output"] = output
    for section, values in sections.items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            overrides[section] = values
    return overrides


def _execute(config_path, tier, overrides):
    table = create_runner(tier, config_path, overrides).execute()
    click.echo(f"{table.mode}: {len(table.rows)} row(s) written")


@click.group()
def cli():
    """Two-center Dirac solver in a cubic Hermite spline basis."""


@cli.command()
@common_options
@click.option("--z", "z_values", type=int, multiple=True, help="Nuclear charge; repeat for a table.")
def stationary(config_path, tier, out_dir, threads, z_values):
    """Lowest bound state of a single nucleus."""
    overrides = _overrides("stationary", out_dir, threads, stationary={"z_values": list(z_values) or None})
    _execute(config_path, tier, overrides)


def _collision_command(mode, help_text):
    @common_options
    @click.option("--b", "b_fm", type=float, default=None, help="Impact parameter in fm.")
    @click.option("--model", type=click.Choice(["point", "sphere"]), default=None, help="Nuclear charge model.")
    def command(config_path, tier, out_dir, threads, b_fm, model):
        overrides = _overrides(mode, out_dir, threads, system={"b_fm": b_fm, "model": model})
        _execute(config_path, tier, overrides)
    command.__doc__ = help_text
    return cli.command(name=mode)(command)


_collision_command("collide1d", "Monopole-approximation collision with the 1D radial basis.")
_collision_command("collide2d", "Head-on collision in the axially symmetric 2D basis.")
_collision_command("collide3d", "Collision at finite impact parameter in the 3D Cartesian basis.")


@cli.command()
@common_options
@click.option("--method", type=click.Choice(["monopole", "axial", "cartesian"]), default=None)
@click.option("--b", "b_fm", type=float, multiple=True, help="Impact parameter in fm; repeat for each point.")
@click.option("--model", "models", type=click.Choice(["point", "sphere"]), multiple=True)
def sweep(config_path, tier, out_dir, threads, method, b_fm, models):
    """Impact-parameter sweep, one row per (model, b)."""
    overrides = _overrides("sweep", out_dir, threads,
                           sweep={"method": method, "b_fm": list(b_fm) or None, "models": list(models) or None})
    _execute(config_path, tier, overrides)


@cli.command()
@click.argument("table_json", type=click.Path(exists=True, dir_okay=False))
@click.argument("output", type=click.Path(dir_okay=False))
def plot(table_json, output):
    """Write (b_fm, P_ct) plot data from a result table JSON file."""
    emit_plot_data(read_table_json(table_json), output)
    click.echo(f"Plot data written to {output}")


register_error_handlers(cli)
