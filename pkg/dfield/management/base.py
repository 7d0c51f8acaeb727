"""
Shared plumbing for the dfield management commands
"""

import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from dfield import problemfile
from dfield.constants import ExitCodes, MissingDeclarationError, ProblemFileError, SnapshotError
from dfield.field import load as load_snapshot
from dfield.problem import check_admissible


# Globals

log = logging.getLogger(__name__)


# Classes

class ProblemCommand(BaseCommand):
    """
    Base class for commands that operate on a problem file.
    """

    def add_arguments(self, parser):
        """
        Specify arguments shared by all problem commands.
        """
        parser.add_argument('problem_file', help='Path to the problem file (JSON).')
        parser.add_argument(
            '--threads',
            type=int,
            default=None,
            help='Number of worker threads (default: DFLD_THREADS). Results do not depend on it.',
        )
        parser.add_argument('--margin', type=float, default=None, help='Contraction margin, overrides solver.margin.')
        parser.add_argument(
            '--grid-scale',
            type=int,
            default=1,
            dest='grid_scale',
            help='Refine every grid axis by this factor (nested: (count - 1) * scale + 1 nodes).',
        )
        parser.add_argument('--h-cap', type=float, default=None, dest='h_cap', help='Upper bound on every time step.')

    def load_problem_file(self, options):
        """
        Return the parsed problem file; parse errors are usage errors.
        """
        try:
            return problemfile.load(options['problem_file'])
        except ProblemFileError as error:
            raise CommandError(str(error), returncode=ExitCodes.USAGE)

    def build_config(self, problem_file, options):
        """
        Return the build configuration with command line overrides.
        """
        if options['grid_scale'] < 1:
            raise CommandError('--grid-scale must be at least 1.', returncode=ExitCodes.USAGE)
        try:
            return problem_file.build_config(
                margin=options['margin'],
                grid_scale=options['grid_scale'],
                h_cap=options['h_cap'],
                threads=options['threads'] or settings.DFLD_THREADS,
            )
        except ValueError as error:
            raise CommandError(str(error), returncode=ExitCodes.USAGE)

    def require_admissible(self, problem):
        """
        Return the admissibility report, refusing inadmissible problems with exit code 2.
        """
        try:
            report = check_admissible(problem)
        except MissingDeclarationError as error:
            raise CommandError(str(error), returncode=ExitCodes.INADMISSIBLE)
        if not report.passed:
            for line in report.lines():
                self.stdout.write(line)
            raise CommandError(
                'Problem is not admissible: {reasons}'.format(reasons='; '.join(report.reasons)),
                returncode=ExitCodes.INADMISSIBLE,
            )
        return report

    def load_field(self, path, problem, config=None):
        """
        Load the field snapshot at `path` and make sure it belongs to `problem`.

        With `config`, partial steps between slices use its quadrature order and Picard settings.
        """
        try:
            fld = load_snapshot(path, problem=problem)
        except (OSError, SnapshotError) as error:
            raise CommandError('Cannot load field {path}: {error}'.format(path=path, error=error),
                               returncode=ExitCodes.USAGE)
        if fld.grid.n != problem.n or fld.terminal.m != problem.m or fld.terminal.t != problem.T:
            raise CommandError(
                'Field {path} does not match problem {name} (dimensions or horizon differ).'.format(
                    path=path, name=problem.name
                ),
                returncode=ExitCodes.USAGE,
            )
        if config is not None:
            fld.metadata.update(quad_order=config.quad_order, picard=config.picard)
        return fld
