"""
Tests for problem definitions and the admissibility check
"""

import math

import ddt
from django.test import TestCase
import numpy as np

from dfield.constants import MissingDeclarationError, Modes, ProblemDefinitionError
from dfield.problem import check_admissible
from dfield.tests.factories import LipschitzDeclFactory, ProblemSpecFactory, expressions, matrix


# Classes

@ddt.ddt
class LipschitzDeclTests(TestCase):
    """
    Tests for `LipschitzDecl`.
    """

    @ddt.data(
        {'L': -1.0},
        {'L': 1.0, 'L_sigma_z': 2.0},
        {'L_xi_x': float('nan')},
        {'sup_sigma': -0.5},
        {'local_L': ((2.0, 3.0), (1.0, 4.0))},
        {'local_L': ((1.0, 3.0), (2.0, 2.0))},
    )
    def test_invalid(self, kwargs):
        """
        Test that negative constants, L_sigma_z > L and unsorted local tables are refused.
        """
        with self.assertRaises(ProblemDefinitionError):
            LipschitzDeclFactory(**kwargs)

    @ddt.data(
        (0.5, 3.0),
        (1.0, 3.0),
        (1.5, 12.0),
        (4.0, 48.0),
    )
    @ddt.unpack
    def test_local_lipschitz(self, radius, expected):
        """
        Test that the smallest tabulated radius covering `radius` is used.
        """
        declared = LipschitzDeclFactory(L=48.0, local_L=((1.0, 3.0), (2.0, 12.0), (4.0, 48.0)))
        self.assertEqual(declared.local_lipschitz(radius), expected)

    def test_local_lipschitz_beyond_table(self):
        """
        Test that radii beyond the table cannot be served.
        """
        declared = LipschitzDeclFactory(L=48.0, local_L=((1.0, 3.0),))
        with self.assertRaises(MissingDeclarationError):
            declared.local_lipschitz(2.0)


@ddt.ddt
class ProblemSpecTests(TestCase):
    """
    Tests for `ProblemSpec`.
    """

    @ddt.data(
        {'n': 0},
        {'T': 0.0},
        {'mode': 'Unknown'},
        {'mu': expressions('y1', 'y1')},
        {'sigma': matrix(['0', '0'])},
        {'f': expressions('y2')},
        {'xi': expressions('y1')},
        {'mu': expressions('z12')},
    )
    def test_invalid(self, kwargs):
        """
        Test that inconsistent dimensions, foreign variables in xi and out-of-range indices are refused.
        """
        with self.assertRaises(ProblemDefinitionError):
            ProblemSpecFactory(**kwargs)

    def test_evaluate_shapes(self):
        """
        Test the shapes of evaluated coefficients.
        """
        problem = ProblemSpecFactory(
            n=2, m=1, d=2,
            mu=expressions('y1', 'x1'),
            sigma=matrix(['1', 'z11'], ['0', 'z12']),
            f=expressions('x2'),
            xi=expressions('x1 + x2'),
        )
        x = np.ones((5, 2))
        y = np.full((5, 1), 2.0)
        z = np.arange(10.0).reshape(5, 1, 2)
        self.assertEqual(problem.evaluate_mu(0.0, x, y, z).shape, (5, 2))
        sigma = problem.evaluate_sigma(0.0, x, y, z)
        self.assertEqual(sigma.shape, (5, 2, 2))
        np.testing.assert_allclose(sigma[:, 0, 1], z[:, 0, 0])
        np.testing.assert_allclose(sigma[:, 1, 1], z[:, 0, 1])
        self.assertEqual(problem.evaluate_f(0.0, x, y, z).shape, (5, 1))
        np.testing.assert_allclose(problem.evaluate_xi(x), np.full((5, 1), 2.0))

    def test_sigma_is_zero(self):
        """
        Test that only literal zero diffusions count as zero.
        """
        self.assertTrue(ProblemSpecFactory().sigma_is_zero)
        self.assertFalse(ProblemSpecFactory(sigma=matrix(['0*x1'])).sigma_is_zero)
        self.assertFalse(ProblemSpecFactory(sigma=matrix(['1'])).sigma_is_zero)

    def test_problem_hash(self):
        """
        Test that the hash ignores the name but changes with the definition.
        """
        first = ProblemSpecFactory(name='first')
        second = ProblemSpecFactory(name='second')
        self.assertEqual(first.problem_hash, second.problem_hash)
        self.assertEqual(len(first.problem_hash), 64)
        self.assertNotEqual(first.problem_hash, ProblemSpecFactory(T=2.0).problem_hash)


@ddt.ddt
class CheckAdmissibleTests(TestCase):
    """
    Tests for `check_admissible`.
    """

    def test_product_equal_to_one(self):
        """
        Test that sigma = 1 + z, xi = x with L_sigma_z = L_xi_x = 1 is refused.
        """
        problem = ProblemSpecFactory(
            mu=expressions('0'),
            sigma=matrix(['1+z11']),
            lipschitz=LipschitzDeclFactory(L=1.0, L_sigma_z=1.0, L_xi_x=1.0),
        )
        report = check_admissible(problem)
        self.assertFalse(report.passed)
        self.assertEqual(len(report.reasons), 1)
        self.assertIn('L_{sigma,z}*L_{xi,x} = 1', report.reasons[0])
        self.assertEqual(report.lines()[-1], 'RESULT: FAIL')

    @ddt.data(
        (0.0, 1.0),
        (0.0, 1e6),
        (0.5, 1.0),
        (1.0, 0.999),
    )
    @ddt.unpack
    def test_pass(self, L_sigma_z, L_xi_x):
        """
        Test that L_sigma_z * L_xi_x < 1 passes, with 1/0 = inf.
        """
        problem = ProblemSpecFactory(lipschitz=LipschitzDeclFactory(L=1.0, L_sigma_z=L_sigma_z, L_xi_x=L_xi_x))
        report = check_admissible(problem)
        self.assertTrue(report.passed)
        self.assertEqual(report.reasons, [])
        self.assertEqual(report.lines()[-1], 'RESULT: PASS')

    def test_xi_not_finite(self):
        """
        Test that a terminal condition that is not finite at the origin fails.
        """
        problem = ProblemSpecFactory(xi=expressions('log(x1)'))
        report = check_admissible(problem)
        self.assertFalse(report.passed)

    def test_local_mode_needs_bounds(self):
        """
        Test that the locally Lipschitz mode requires sup_xi and sup_sigma.
        """
        problem = ProblemSpecFactory(
            mode=Modes.MARKOVIAN_LOCAL_LIPSCHITZ,
            lipschitz=LipschitzDeclFactory(sup_sigma=None),
        )
        with self.assertRaises(MissingDeclarationError):
            check_admissible(problem)

    def test_local_mode(self):
        """
        Test the additional hypotheses of the locally Lipschitz mode.
        """
        problem = ProblemSpecFactory(
            mode=Modes.MARKOVIAN_LOCAL_LIPSCHITZ,
            lipschitz=LipschitzDeclFactory(sup_sigma=1.0, sup_xi=math.inf),
        )
        report = check_admissible(problem)
        self.assertFalse(report.passed)
        self.assertEqual(len(report.reasons), 2)

        problem = ProblemSpecFactory(
            mode=Modes.MARKOVIAN_LOCAL_LIPSCHITZ,
            lipschitz=LipschitzDeclFactory(L=3.0, sup_sigma=1.0, sup_xi=1.0, local_L=((1.0, 3.0),)),
        )
        self.assertTrue(check_admissible(problem).passed)

    def test_division_note(self):
        """
        Test that divisions are noted without failing the check.
        """
        problem = ProblemSpecFactory(f=expressions('1/(1+x1^2)'))
        report = check_admissible(problem)
        self.assertTrue(report.passed)
        self.assertEqual(len(report.notes), 1)
        self.assertIn('f1', report.notes[0])

    def test_sampled_notes(self):
        """
        Test that declared constants below sampled lower bounds are noted without failing the check.
        """
        problem = ProblemSpecFactory(
            mu=expressions('3*x1'),
            lipschitz=LipschitzDeclFactory(L=1.0),
        )
        box = {'t': (0.0, 1.0), 'x1': (-1.0, 1.0), 'y1': (-1.0, 1.0), 'z11': (-1.0, 1.0)}
        report = check_admissible(problem, sample_box=box, n_samples=200)
        self.assertTrue(report.passed)
        self.assertEqual(len(report.notes), 1)
        self.assertIn('mu1: sampled x-Lipschitz lower bound 3', report.notes[0])

        consistent = ProblemSpecFactory(lipschitz=LipschitzDeclFactory(L=1.0))
        self.assertEqual(check_admissible(consistent, sample_box=box, n_samples=200).notes, ())
