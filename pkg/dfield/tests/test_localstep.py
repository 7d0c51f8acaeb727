"""
Tests for the local backward step
"""

import ddt
from django.test import TestCase, override_settings
import numpy as np

from dfield.constants import PicardDivergence, QuadratureSizeError
from dfield.field import FieldSlice, SpatialGrid, terminal_slice
from dfield.localstep import PicardConfig, backward_step, gauss_hermite, project_onto_ball
from dfield.tests.factories import LipschitzDeclFactory, ProblemSpecFactory, SpatialGridFactory, expressions, matrix
from dfield.tests.mixins import closed_form


# Classes

@ddt.ddt
class GaussHermiteTests(TestCase):
    """
    Tests for `gauss_hermite`.
    """

    @ddt.data(1, 3, 5, 8)
    def test_moments(self, q):
        """
        Test that the rule integrates polynomials of degree up to 2q - 1 against N(0, 1) exactly.
        """
        rule = gauss_hermite(1, q)
        nodes = rule.nodes[:, 0]
        self.assertEqual(rule.size, q)
        self.assertAlmostEqual(float(np.sum(rule.weights)), 1.0, places=14)
        moments = {0: 1.0, 1: 0.0, 2: 1.0, 3: 0.0, 4: 3.0, 5: 0.0, 6: 15.0, 7: 0.0}
        for degree, expected in moments.items():
            if degree <= 2 * q - 1:
                self.assertAlmostEqual(float(np.sum(rule.weights * nodes ** degree)), expected, places=10)

    def test_symmetric(self):
        """
        Test that nodes and weights are symmetric about 0.
        """
        rule = gauss_hermite(1, 5)
        np.testing.assert_array_equal(np.sort(rule.nodes[:, 0]), -np.sort(rule.nodes[:, 0])[::-1])
        self.assertAlmostEqual(float(np.sum(rule.weights * rule.nodes[:, 0])), 0.0, places=15)

    def test_tensor(self):
        """
        Test the tensor rule in two dimensions.
        """
        rule = gauss_hermite(2, 3)
        self.assertEqual(rule.nodes.shape, (9, 2))
        first, second = rule.nodes[:, 0], rule.nodes[:, 1]
        self.assertAlmostEqual(float(np.sum(rule.weights * first ** 2 * second ** 2)), 1.0, places=12)
        self.assertAlmostEqual(float(np.sum(rule.weights * first * second)), 0.0, places=12)

    @ddt.data((0, 3), (9, 2), (1, 0))
    @ddt.unpack
    def test_invalid(self, d, q):
        """
        Test that dimensions outside [1, 8] and empty rules are refused.
        """
        with self.assertRaises(QuadratureSizeError):
            gauss_hermite(d, q)

    @override_settings(DFLD_QUADRATURE_NODE_CAP=100)
    def test_node_cap(self):
        """
        Test that rules above the node cap are refused.
        """
        self.assertEqual(gauss_hermite(2, 10).size, 100)
        with self.assertRaises(QuadratureSizeError):
            gauss_hermite(3, 5)


class ProjectOntoBallTests(TestCase):
    """
    Tests for `project_onto_ball`.
    """

    def test_project(self):
        """
        Test that only points outside the ball move, radially onto the sphere.
        """
        y = np.array([[3.0], [0.3]])
        z = np.array([[[4.0]], [[0.4]]])
        y_projected, z_projected = project_onto_ball(y, z, 1.0)
        np.testing.assert_allclose(y_projected, [[0.6], [0.3]])
        np.testing.assert_allclose(z_projected, [[[0.8]], [[0.4]]])


@ddt.ddt
class PicardConfigTests(TestCase):
    """
    Tests for `PicardConfig`.
    """

    @ddt.data({'tol': 0.0}, {'max_iter': 0}, {'damping': 0.0}, {'damping': 1.5})
    def test_invalid(self, kwargs):
        """
        Test that invalid settings are refused.
        """
        with self.assertRaises(ValueError):
            PicardConfig(**kwargs)

    @override_settings(DFLD_DEFAULT_PICARD_TOL=1e-9, DFLD_DEFAULT_PICARD_MAX_ITER=50)
    def test_from_settings(self):
        """
        Test that settings provide defaults and explicit values win.
        """
        config = PicardConfig.from_settings(max_iter=10, damping=None)
        self.assertEqual(config, PicardConfig(tol=1e-9, max_iter=10, damping=1.0))


@ddt.ddt
class BackwardStepTests(TestCase):
    """
    Tests for `backward_step`.
    """

    def setUp(self):  # pylint: disable=missing-docstring
        self.grid = SpatialGridFactory()
        self.rule = gauss_hermite(1, 5)
        self.config = PicardConfig()

    def test_closed_form(self):
        """
        Test that one step of mu = y, sigma = 0 reproduces x / (1 - (T - t)) exactly.
        """
        problem = ProblemSpecFactory()
        next_slice = FieldSlice(0.75, self.grid, closed_form(0.75, self.grid.nodes))
        slice_ = backward_step(next_slice, 0.7, 0.05, problem, self.rule, self.config)
        self.assertEqual(slice_.t, 0.7)
        np.testing.assert_allclose(slice_.u_values, closed_form(0.7, self.grid.nodes), rtol=1e-10, atol=1e-12)
        self.assertLessEqual(slice_.max_abs_z, 1e-8)
        self.assertGreater(slice_.iterations, 1)
        self.assertEqual(len(slice_.deltas), slice_.iterations)
        self.assertLessEqual(slice_.deltas[-1], self.config.tol)

    def test_linear_terminal(self):
        """
        Test that sigma = 1 and xi = x give Y = x and Z = 1.
        """
        problem = ProblemSpecFactory(
            mu=expressions('0'),
            sigma=matrix(['1']),
            lipschitz=LipschitzDeclFactory(L=0.0, sup_sigma=1.0),
        )
        slice_ = backward_step(terminal_slice(problem, self.grid), 0.9, 0.1, problem, self.rule, self.config)
        np.testing.assert_allclose(slice_.u_values[:, 0], self.grid.nodes[:, 0], atol=1e-12)
        np.testing.assert_allclose(slice_.z_values, 1.0, atol=1e-12)

    def test_z_feedback(self):
        """
        Test that sigma = 1 + z/2 with xi = x converges to Z = 2.
        """
        problem = ProblemSpecFactory(
            mu=expressions('0'),
            sigma=matrix(['1+0.5*z11']),
            lipschitz=LipschitzDeclFactory(L=0.5, L_sigma_z=0.5),
        )
        slice_ = backward_step(terminal_slice(problem, self.grid), 0.95, 0.05, problem, self.rule, self.config)
        np.testing.assert_allclose(slice_.z_values, 2.0, atol=1e-10)
        np.testing.assert_allclose(slice_.u_values[:, 0], self.grid.nodes[:, 0], atol=1e-10)

    @ddt.data(1, 3)
    def test_thread_independent(self, threads):
        """
        Test that results do not depend on the number of worker threads or the chunk size.
        """
        problem = ProblemSpecFactory(
            mu=expressions('0.1*y1'),
            sigma=matrix(['1']),
            f=expressions('-0.5*y1 + 0.1*z11'),
            xi=expressions('tanh(x1)'),
            lipschitz=LipschitzDeclFactory(L=1.0, sup_sigma=1.0),
        )
        next_slice = terminal_slice(problem, self.grid)
        reference = backward_step(next_slice, 0.95, 0.05, problem, self.rule, self.config, threads=1)
        with override_settings(DFLD_CHUNK_SIZE=16):
            slice_ = backward_step(next_slice, 0.95, 0.05, problem, self.rule, self.config, threads=threads)
        np.testing.assert_array_equal(slice_.u_values, reference.u_values)
        np.testing.assert_array_equal(slice_.z_values, reference.z_values)

    def test_cutoff(self):
        """
        Test that coefficients only see (Y, Z) projected onto the cutoff ball.
        """
        grid = SpatialGrid(((-1.0, 1.0, 5),))
        problem = ProblemSpecFactory(mu=expressions('0'), f=expressions('-y1'), xi=expressions('3'))
        next_slice = terminal_slice(problem, grid)
        plain = backward_step(next_slice, 0.9, 0.1, problem, self.rule, self.config)
        cut = backward_step(next_slice, 0.9, 0.1, problem, self.rule, self.config, cutoff=1.0)
        np.testing.assert_allclose(plain.u_values, 3.0 / 0.9, rtol=1e-10)
        np.testing.assert_allclose(cut.u_values, 3.1, rtol=1e-10)

    def test_divergence(self):
        """
        Test that running out of iterations raises `PicardDivergence`.
        """
        problem = ProblemSpecFactory()
        next_slice = FieldSlice(0.75, self.grid, closed_form(0.75, self.grid.nodes))
        with self.assertRaises(PicardDivergence):
            backward_step(next_slice, 0.7, 0.05, problem, self.rule, PicardConfig(max_iter=1))

    def test_domain_error(self):
        """
        Test that coefficients leaving their domain abort the step with `PicardDivergence`.
        """
        problem = ProblemSpecFactory(mu=expressions('0'), f=expressions('log(y1)'))
        with self.assertRaises(PicardDivergence):
            backward_step(terminal_slice(problem, self.grid), 0.9, 0.1, problem, self.rule, self.config)

    def test_invalid_step(self):
        """
        Test that steps must be positive.
        """
        problem = ProblemSpecFactory()
        with self.assertRaises(ValueError):
            backward_step(terminal_slice(problem, self.grid), 1.0, 0.0, problem, self.rule, self.config)
