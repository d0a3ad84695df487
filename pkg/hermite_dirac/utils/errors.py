import functools
import json
import logging
import sys

import click

logger = logging.getLogger(__name__)


class HermiteDiracError(Exception):
    """Base class for every failure the library reports.

    Each subclass carries the exit status the command line returns and a
    short title used in the error report.
    """
    status = 1
    title = "Error"


class ConfigError(HermiteDiracError):
    """Run configuration failed validation.

    Args:
        errors (list[str]): messages of the form "<section>.<field>: problem"
    """
    status = 2
    title = "Config error"

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class GridError(HermiteDiracError):
    status = 2
    title = "Grid error"


class SolverError(HermiteDiracError):
    status = 3
    title = "Solver failure"


class ConvergenceError(SolverError):
    title = "Solver did not converge"


class BreakdownError(SolverError):
    title = "Krylov breakdown"


class NormDriftError(SolverError):
    title = "Norm drift"


class EigensolverError(SolverError):
    title = "Eigensolver failure"


class SpuriousStateError(SolverError):
    title = "Spurious states in spectrum"


class SingularPotentialError(SolverError):
    title = "Singular potential"


class CheckpointError(HermiteDiracError):
    status = 4
    title = "Checkpoint error"


def error_report(error):
    """Build the JSON-shaped report for an error."""
    report = {
        "error": error.title,
        "message": str(error),
    }
    if isinstance(error, ConfigError):
        report["fields"] = error.errors
    return report


def register_error_handlers(group):
    """Register error handlers for every command of a click group.

    A library error raised inside a command is logged, printed as a JSON
    report on stderr, and turned into the exit status of its class.
    """

    def handle(callback):
        @functools.wraps(callback)
        def wrapped(*args, **kwargs):
            try:
                return callback(*args, **kwargs)
            except HermiteDiracError as e:
                logger.error(f"{e.title}: {e}")
                click.echo(json.dumps(error_report(e)), err=True)
                sys.exit(e.status)
        return wrapped

    for command in group.commands.values():
        command.callback = handle(command.callback)
    return group
