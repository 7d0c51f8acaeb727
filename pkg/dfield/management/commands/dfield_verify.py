"""
Management command that runs the invariant suite on a built field.
"""

from django.conf import settings
from django.core.management.base import CommandError

from dfield.backward import BuildResult, continuity_modulus, growth_envelope, refine_agreement, regularity_profile
from dfield.constants import ExitCodes
from dfield.field import SLICE_SNAP
from dfield.management.base import ProblemCommand
from dfield.simulate import backward_residual, simulate_paths, variational_check, z_bound_check


# Classes

class Command(ProblemCommand):
    """
    Management command that checks a field snapshot against its problem:
    backward residual, Z bound, variational derivatives, refinement agreement,
    Lipschitz growth envelope and weak regularity.

    Exits with 0 iff every check passes.
    """
    help = 'Run the verification suite on a field snapshot and print a PASS/FAIL summary.'

    def add_arguments(self, parser):
        """
        Specify arguments that can be passed to this management command.
        """
        super(Command, self).add_arguments(parser)
        parser.add_argument('--field', required=True, help='Path of the field snapshot.')

    def report(self, name, passed, detail):
        """
        Print one result line and return `passed`.
        """
        status = 'SKIP' if passed is None else ('PASS' if passed else 'FAIL')
        self.stdout.write('[{status}] {name}: {detail}'.format(status=status, name=name, detail=detail))
        return passed

    # pylint: disable=too-many-locals
    def handle(self, *args, **options):
        """
        Run all checks.
        """
        problem_file = self.load_problem_file(options)
        problem = problem_file.problem
        self.require_admissible(problem)
        config = self.build_config(problem_file, options)
        fld = self.load_field(options['field'], problem, config)
        sim, verify = problem_file.sim, problem_file.verify
        t0 = sim.t0 if sim.t0 is not None else fld.earliest.t
        threads = options['threads']
        outcomes = []

        bundle = simulate_paths(fld, problem, sim.x0, t0, sim.paths, sim.steps, sim.seed, threads=threads)
        residual = backward_residual(bundle, problem)
        outcomes.append(self.report(
            'backward residual',
            residual.mean_abs <= settings.DFLD_RESIDUAL_TOL,
            'mean|R| = {mean:.3g}, max|R| = {max:.3g}, decoupling residual = {decoupling:g}'.format(
                mean=residual.mean_abs, max=residual.max_abs, decoupling=residual.decoupling_residual
            ),
        ))

        if problem.lipschitz.sup_sigma is None:
            outcomes.append(self.report('Z bound', None, 'sup_sigma not declared'))
        else:
            z_report = z_bound_check(bundle, fld, problem)
            outcomes.append(self.report(
                'Z bound', z_report.passed, 'max|Z| = {max_z:.6g} <= {bound:.6g}'.format(
                    max_z=z_report.max_z, bound=z_report.bound
                ),
            ))

        variational = variational_check(
            fld, problem, sim.x0, verify.direction, verify.eps, t0, sim.paths, sim.steps, sim.seed, threads=threads,
        )
        outcomes.append(self.report(
            'variational',
            variational.passed,
            '|D_Y(t0)| = {initial:.6g} <= {bound:.6g}, sup|D_X| = {dx:.6g}, sup|D_Y| = {dy:.6g}'.format(
                initial=variational.initial_D_Y, bound=variational.bound,
                dx=variational.sup_D_X, dy=variational.sup_D_Y,
            ),
        ))

        # A complete snapshot on the configured grid serves as level 0.
        base = BuildResult(field=fld, trace=[]) if fld.earliest.t <= config.t_stop + SLICE_SNAP else None
        agreement = refine_agreement(problem, config, levels=verify.refine_levels, base=base)
        outcomes.append(self.report(
            'refinement agreement',
            agreement.passed and agreement.converging(),
            'differences {differences}, ratios {ratios}, tolerance {tolerance:.3g}{failures}'.format(
                differences=['{:.3g}'.format(value) for value in agreement.differences],
                ratios=['{:.3g}'.format(value) for value in agreement.ratios],
                tolerance=agreement.tolerance,
                failures=''.join('; ' + failure for failure in agreement.failures),
            ),
        ))

        C, envelope_passed = growth_envelope(fld)
        outcomes.append(self.report(
            'Lipschitz growth envelope', envelope_passed, 'lip <= 1.5 ({terminal:.6g} + {C:.6g} (T - t)^(1/4))'.format(
                terminal=fld.terminal.lip_estimate, C=C
            ),
        ))

        profile = regularity_profile(fld, problem)
        outcomes.append(self.report(
            'weak regularity',
            all(regular for _, _, regular in profile),
            '{count} slices, max lip {lip:.6g}'.format(count=len(profile), lip=max(lip for _, lip, _ in profile)),
        ))

        self.stdout.write('Time continuity modulus: {modulus:.6g}'.format(modulus=continuity_modulus(fld)))

        failed = [outcome for outcome in outcomes if outcome is False]
        if failed:
            raise CommandError('{count} check(s) failed.'.format(count=len(failed)), returncode=ExitCodes.CHECK_FAILED)
        self.stdout.write('All checks passed.')
