"""
Tests for the problem file parser
"""

import copy
import json

import ddt
from django.test import TestCase

from dfield import problemfile
from dfield.constants import Modes, ProblemFileError
from dfield.tests.mixins import ProblemFilesMixin, TemporaryDirectoryMixin


# Globals

MINIMAL_DOCUMENT = {
    'dims': {'n': 1, 'm': 1, 'd': 1},
    'T': 1.0,
    'coefficients': {'mu': ['y1'], 'sigma': [['0']], 'f': ['0'], 'xi': ['x1']},
    'lipschitz': {'L': 1.0, 'L_sigma_z': 0.0, 'L_xi_x': 1.0},
    'grid': {'axes': [[-1.0, 1.0, 21]]},
}


# Functions

def document(**changes):
    """
    Return a copy of the minimal document with top-level `changes`; a value of None removes the key.
    """
    result = copy.deepcopy(MINIMAL_DOCUMENT)
    for key, value in changes.items():
        if value is None:
            result.pop(key, None)
        else:
            result[key] = value
    return result


# Classes

@ddt.ddt
class ShippedProblemFilesTests(ProblemFilesMixin, TestCase):
    """
    Tests that the shipped problem files parse.
    """

    @ddt.data(
        'constant', 'cubic_clamped', 'cubic_cutoff', 'ex41', 'ex41_perturbed',
        'ex42', 'ex42_T2', 'heat', 'linear_driver', 'sigma_one',
    )
    def test_load(self, name):
        """
        Test that the file loads and its name matches the file name.
        """
        self.assertEqual(self.load_problem_file(name).problem.name, name)

    def test_ex42(self):
        """
        Test the values read from ex42.
        """
        parsed = self.load_problem_file('ex42')
        self.assertEqual(parsed.problem.T, 1.0)
        self.assertEqual(parsed.problem.mode, Modes.GLOBAL_LIPSCHITZ)
        self.assertEqual(parsed.grid.axes, ((-5.0, 5.0, 201),))
        self.assertEqual(parsed.solver, {'t_stop': 0.1})
        self.assertEqual(parsed.sim, problemfile.SimSettings(paths=16, steps=None, seed=42, x0=(1.0,), t0=0.5))
        self.assertEqual(parsed.verify.eps, 1e-3)
        self.assertEqual(parsed.verify.refine_levels, 2)
        self.assertIsNone(parsed.sample_box())

    def test_build_config(self):
        """
        Test that command line overrides win over file values.
        """
        parsed = self.load_problem_file('ex42')
        config = parsed.build_config()
        self.assertEqual(config.t_stop, 0.1)
        self.assertEqual(config.grid, parsed.grid)

        config = parsed.build_config(margin=0.3, grid_scale=2, h_cap=0.05, threads=2)
        self.assertEqual(config.margin, 0.3)
        self.assertEqual(config.h_cap, 0.05)
        self.assertEqual(config.threads, 2)
        self.assertEqual(config.grid.axes, ((-5.0, 5.0, 401),))
        self.assertEqual(parsed.solver, {'t_stop': 0.1})


@ddt.ddt
class ParseDocumentTests(TemporaryDirectoryMixin, TestCase):
    """
    Tests for `loads` and `load`.
    """

    def test_defaults(self):
        """
        Test the defaults of optional sections.
        """
        parsed = problemfile.loads(json.dumps(MINIMAL_DOCUMENT))
        self.assertEqual(parsed.problem.name, 'problem')
        self.assertEqual(parsed.problem.mode, Modes.GLOBAL_LIPSCHITZ)
        self.assertIsNone(parsed.problem.lipschitz.sup_sigma)
        self.assertEqual(parsed.solver, {})
        self.assertEqual(parsed.sim.paths, 1000)
        self.assertEqual(parsed.sim.seed, 0)
        self.assertIsNone(parsed.sim.steps)
        self.assertEqual(parsed.sim.x0, (0.0,))
        self.assertEqual(parsed.verify.direction, (1.0,))
        self.assertEqual(parsed.verify.refine_levels, 3)

    def test_duplicate_key(self):
        """
        Test that repeated keys are refused.
        """
        text = json.dumps(MINIMAL_DOCUMENT)[:-1] + ', "T": 2.0}'
        with self.assertRaisesRegex(ProblemFileError, 'Duplicate key: T'):
            problemfile.loads(text)

    def test_invalid_json(self):
        """
        Test that malformed JSON is reported as a problem file error.
        """
        with self.assertRaisesRegex(ProblemFileError, 'Invalid JSON'):
            problemfile.loads('{"T": ')

    def test_unknown_key(self):
        """
        Test that unknown keys are refused with the list of allowed keys.
        """
        with self.assertRaises(ProblemFileError) as context:
            problemfile.loads(json.dumps(document(horizon=1.0)))
        self.assertIn('horizon', str(context.exception))
        self.assertIn('Allowed keys are:', str(context.exception))

    @ddt.data('dims', 'T', 'coefficients', 'lipschitz', 'grid')
    def test_missing_key(self, key):
        """
        Test that required keys must be present.
        """
        with self.assertRaisesRegex(ProblemFileError, 'Missing key'):
            problemfile.loads(json.dumps(document(**{key: None})))

    @ddt.data(
        {'T': True},
        {'T': '1.0'},
        {'dims': {'n': 1.5, 'm': 1, 'd': 1}},
        {'lipschitz': {'L': 1.0, 'L_sigma_z': 0.0}},
        {'lipschitz': {'L': 1.0, 'L_sigma_z': 0.0, 'L_xi_x': 1.0, 'local_L': [[1.0]]}},
        {'coefficients': {'mu': ['y1', 'y1'], 'sigma': [['0']], 'f': ['0'], 'xi': ['x1']}},
        {'coefficients': {'mu': ['y1'], 'sigma': [['0'], ['0']], 'f': ['0'], 'xi': ['x1']}},
        {'coefficients': {'mu': ['y1'], 'sigma': [['0']], 'f': ['0'], 'xi': [1]}},
        {'coefficients': {'mu': ['y1'], 'sigma': [['0']], 'f': ['0'], 'xi': ['y1']}},
        {'grid': {'axes': [[-1.0, 1.0, 21], [-1.0, 1.0, 21]]}},
        {'grid': {'axes': [[-1.0, 1.0]]}},
        {'grid': {'axes': [[1.0, -1.0, 21]]}},
        {'mode': 'Local'},
        {'solver': {'max_iter': 2.5}},
        {'sim': {'x0': [1.0, 2.0]}},
        {'verify': {'direction': 1.0}},
        {'verify': {'check_box': {'w': [0, 1]}}},
    )
    def test_invalid(self, changes):
        """
        Test that invalid values are refused as problem file errors.
        """
        with self.assertRaises(ProblemFileError):
            problemfile.loads(json.dumps(document(**changes)))

    def test_bad_expression(self):
        """
        Test that expression syntax errors name the offending coefficient.
        """
        changes = {'coefficients': {'mu': ['y1 +'], 'sigma': [['0']], 'f': ['0'], 'xi': ['x1']}}
        with self.assertRaisesRegex(ProblemFileError, r'coefficients\.mu\[0\]'):
            problemfile.loads(json.dumps(document(**changes)))

    def test_sample_box(self):
        """
        Test that the sampled cross-check box covers the grid box, [0, T] and the configured y and z intervals.
        """
        parsed = problemfile.loads(json.dumps(document(verify={'check_box': {'y': [-2, 2]}})))
        self.assertEqual(parsed.sample_box(), {
            't': (0.0, 1.0),
            'x1': (-1.0, 1.0),
            'y1': (-2.0, 2.0),
            'z11': (-1.0, 1.0),
        })

    def test_load(self):
        """
        Test reading from disk, and that missing files are reported.
        """
        path = self.tmp_path('problem.json')
        with open(path, 'w', encoding='utf-8') as problem_file:
            json.dump(document(name='on_disk'), problem_file)
        self.assertEqual(problemfile.load(path).problem.name, 'on_disk')
        with self.assertRaisesRegex(ProblemFileError, 'Cannot read'):
            problemfile.load(self.tmp_path('missing.json'))
