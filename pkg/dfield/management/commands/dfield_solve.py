"""
Management command that builds the decoupling field of a problem and writes its snapshot and build log.
"""

import logging

from django.core.management.base import CommandError

from dfield.backward import build
from dfield.constants import DecouplingFieldError, ExitCodes
from dfield.field import save
from dfield.management.base import ProblemCommand
from dfield.models import BuildRun


# Globals

log = logging.getLogger(__name__)


# Classes

class Command(ProblemCommand):
    """
    Management command that builds the field backward from T, with the inner cutoff when the problem
    is declared locally Lipschitz.

    The snapshot is written even when the build stops at a blowup; the exit code is then 3.
    """
    help = 'Build the decoupling field of a problem file and write a snapshot plus build log.'

    def add_arguments(self, parser):
        """
        Specify arguments that can be passed to this management command.
        """
        super(Command, self).add_arguments(parser)
        parser.add_argument('--out', required=True, help='Path of the field snapshot to write.')
        parser.add_argument(
            '--record',
            action='store_true',
            help='Also store the run, its trace and snapshot in the database.',
        )

    def handle(self, *args, **options):
        """
        Build, save and summarize.
        """
        problem_file = self.load_problem_file(options)
        problem = problem_file.problem
        self.require_admissible(problem)
        config = self.build_config(problem_file, options)

        out = options['out']
        handler = logging.FileHandler('{out}.log'.format(out=out), mode='a')
        handler.setFormatter(logging.Formatter('%(message)s'))
        buildlog = logging.getLogger('dfield.buildlog')
        buildlog.addHandler(handler)
        try:
            result = build(problem, config)
        except DecouplingFieldError as error:
            raise CommandError(str(error), returncode=ExitCodes.USAGE)
        finally:
            buildlog.removeHandler(handler)
            handler.close()

        save(result.field, out)
        if options['record']:
            BuildRun.record(problem, result)

        fld = result.field
        self.stdout.write('Slices: {count} on [{start:.10g}, {end:.10g}]'.format(
            count=len(fld.slices), start=fld.earliest.t, end=fld.terminal.t
        ))
        if fld.metadata.get('cutoff_radius') is not None:
            self.stdout.write('Cutoff radius: {H:.6g} ({attempts} passivity checks, {escalations} escalations)'.format(
                H=fld.metadata['cutoff_radius'],
                attempts=len(result.passivity),
                escalations=sum(1 for check in result.passivity if not check.passed),
            ))
        self.stdout.write('Snapshot: {out}'.format(out=out))
        if not result.completed:
            self.stdout.write('Blowup: {summary} ({detail})'.format(
                summary=result.blowup.summary(), detail=result.blowup.detail
            ))
            raise CommandError(result.blowup.summary(), returncode=ExitCodes.BLOWUP)
