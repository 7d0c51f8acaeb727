"""
Management command that checks a problem against the hypotheses of local existence.
"""

from django.core.management.base import CommandError

from dfield.constants import ExitCodes, MissingDeclarationError
from dfield.management.base import ProblemCommand
from dfield.problem import check_admissible


# Classes

class Command(ProblemCommand):
    """
    Management command that prints the admissibility report of a problem file.

    Exits with 0 on PASS, 2 on FAIL and 1 if the file cannot be parsed.
    """
    help = 'Print the admissibility report of a problem file.'

    def add_arguments(self, parser):
        """
        Specify arguments that can be passed to this management command.
        """
        super(Command, self).add_arguments(parser)
        parser.add_argument(
            '--sample',
            action='store_true',
            help='Cross-check declared Lipschitz constants against sampled lower bounds (verify.check_box).',
        )

    def handle(self, *args, **options):
        """
        Check the problem and print one line per hypothesis.
        """
        problem_file = self.load_problem_file(options)
        problem = problem_file.problem
        sample_box = problem_file.sample_box() if options['sample'] else None
        if options['sample'] and sample_box is None:
            raise CommandError('--sample needs verify.check_box in the problem file.', returncode=ExitCodes.USAGE)
        try:
            report = check_admissible(
                problem, sample_box=sample_box, n_samples=problem_file.verify.check_samples,
            )
        except MissingDeclarationError as error:
            raise CommandError(str(error), returncode=ExitCodes.INADMISSIBLE)

        self.stdout.write('Problem {name} ({hash})'.format(name=problem.name, hash=problem.problem_hash))
        for line in report.lines():
            self.stdout.write(line)
        if not report.passed:
            raise CommandError('; '.join(report.reasons), returncode=ExitCodes.INADMISSIBLE)
