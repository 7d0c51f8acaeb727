"""
Management command that estimates the left end of the maximal interval of a problem.
"""

from django.core.management.base import CommandError

from dfield.backward import build
from dfield.constants import DecouplingFieldError, ExitCodes
from dfield.management.base import ProblemCommand


# Classes

class Command(ProblemCommand):
    """
    Management command that builds backward until t_stop or a blowup and prints t_min and the trigger.

    Exits with 3 if a blowup was detected.
    """
    help = 'Estimate t_min of the maximal interval of a problem file.'

    def handle(self, *args, **options):
        """
        Build and report where the field stops.
        """
        problem_file = self.load_problem_file(options)
        problem = problem_file.problem
        self.require_admissible(problem)
        config = self.build_config(problem_file, options)
        try:
            result = build(problem, config)
        except DecouplingFieldError as error:
            raise CommandError(str(error), returncode=ExitCodes.USAGE)

        if result.completed:
            self.stdout.write('t_min = t_stop = {t_stop:.6g} (no blowup)'.format(t_stop=config.t_stop))
            return
        blowup = result.blowup
        self.stdout.write('t_min ≈ {t:.2f} trigger={trigger}'.format(t=blowup.t_min_estimate, trigger=blowup.trigger))
        self.stdout.write('t_min_estimate = {t:.10g} ({detail})'.format(t=blowup.t_min_estimate, detail=blowup.detail))
        raise CommandError(blowup.summary(), returncode=ExitCodes.BLOWUP)
