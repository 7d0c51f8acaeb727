"""
Management command that simulates paths along a built field and exports them as CSV.
"""

from dfield.management.base import ProblemCommand
from dfield.simulate import export_csv, simulate_paths


# Classes

class Command(ProblemCommand):
    """
    Management command that simulates (W, X, Y, Z) paths with the `sim` settings of a problem file.
    """
    help = 'Simulate forward paths along a field snapshot and write them to a CSV file.'

    def add_arguments(self, parser):
        """
        Specify arguments that can be passed to this management command.
        """
        super(Command, self).add_arguments(parser)
        parser.add_argument('--field', required=True, help='Path of the field snapshot.')
        parser.add_argument('--csv', required=True, help='Path of the CSV file to write.')

    def handle(self, *args, **options):
        """
        Simulate and export.
        """
        problem_file = self.load_problem_file(options)
        problem = problem_file.problem
        fld = self.load_field(options['field'], problem, self.build_config(problem_file, options))
        sim = problem_file.sim
        t0 = sim.t0 if sim.t0 is not None else fld.earliest.t
        bundle = simulate_paths(
            fld, problem, sim.x0, t0, sim.paths, sim.steps, sim.seed, threads=options['threads'],
        )
        export_csv(bundle, options['csv'], problem.problem_hash)
        self.stdout.write('Simulated {paths} paths with {steps} steps from t0 = {t0:.10g}; wrote {csv}'.format(
            paths=bundle.n_paths, steps=bundle.n_steps, t0=t0, csv=options['csv']
        ))
        if bundle.escaped:
            self.stdout.write('PathEscape: {count} paths left the grid box'.format(count=bundle.escaped))
