"""
Management command that reports the contraction step size of a problem.
"""

from django.core.management.base import CommandError

from dfield.constants import ExitCodes, NoAdmissibleStep
from dfield.contraction import ContractionData, LipschitzTriple, gamma, gamma_limit
from dfield.management.base import ProblemCommand


# Classes

class Command(ProblemCommand):
    """
    Management command that prints gamma(0), the admissible step h_max and the constant K
    for the declared Lipschitz constants of a problem file.
    """
    help = 'Print gamma(0), the admissible step size and K for a problem file.'

    def handle(self, *args, **options):
        """
        Compute contraction data for the first step.
        """
        problem_file = self.load_problem_file(options)
        config = self.build_config(problem_file, options)
        declared = problem_file.problem.lipschitz
        triple = LipschitzTriple(declared.L, declared.L_sigma_z, declared.L_xi_x)

        self.stdout.write('L = {L:g}, L_sigma_z = {L_sigma_z:g}, L_xi_x = {L_xi_x:g}, margin = {margin:g}'.format(
            L=triple.L, L_sigma_z=triple.L_sigma_z, L_xi_x=triple.L_xi_x, margin=config.margin
        ))
        self.stdout.write('gamma(0) = {limit:.10g}'.format(limit=gamma_limit(triple)))
        try:
            data = ContractionData.from_triple(triple, config.margin)
        except NoAdmissibleStep as error:
            raise CommandError(str(error), returncode=ExitCodes.INADMISSIBLE)
        self.stdout.write('h_max = {h_max:.10g}'.format(h_max=data.h_max))
        if data.h_max < float('inf'):
            self.stdout.write('gamma(h_max) = {value:.10g}'.format(value=gamma(data.h_max, triple)))
        self.stdout.write('K = {K:.10g}'.format(K=data.K))
