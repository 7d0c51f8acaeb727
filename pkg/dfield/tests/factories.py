"""
Factories for decoupling field tests
"""

import factory

from dfield import models
from dfield.constants import Modes
from dfield.expr import parse
from dfield.field import SpatialGrid
from dfield.problem import LipschitzDecl, ProblemSpec


# Functions

def expressions(*texts):
    """
    Parse every text in `texts` and return the expressions as a tuple.
    """
    return tuple(parse(text) for text in texts)


def matrix(*rows):
    """
    Parse a matrix of expressions given as rows of texts.
    """
    return tuple(expressions(*row) for row in rows)


# Classes

class LipschitzDeclFactory(factory.Factory):
    """Factory for Lipschitz declarations."""
    class Meta:
        model = LipschitzDecl

    L = 1.0
    L_sigma_z = 0.0
    L_xi_x = 1.0
    sup_sigma = 0.0


class ProblemSpecFactory(factory.Factory):
    """
    Factory for problems.

    Defaults describe mu = y, sigma = 0, f = 0, xi = x on [0, 1], whose decoupling field is x / (1 - (T - t)).
    """
    class Meta:
        model = ProblemSpec

    n = 1
    m = 1
    d = 1
    T = 1.0
    mu = factory.LazyFunction(lambda: expressions('y1'))
    sigma = factory.LazyFunction(lambda: matrix(['0']))
    f = factory.LazyFunction(lambda: expressions('0'))
    xi = factory.LazyFunction(lambda: expressions('x1'))
    lipschitz = factory.SubFactory(LipschitzDeclFactory)
    mode = Modes.GLOBAL_LIPSCHITZ
    name = factory.Sequence(u'problem{0}'.format)


class SpatialGridFactory(factory.Factory):
    """Factory for spatial grids."""
    class Meta:
        model = SpatialGrid

    axes = ((-5.0, 5.0, 201),)


class BuildRunFactory(factory.django.DjangoModelFactory):
    """Factory for recorded build runs."""
    class Meta:
        model = models.BuildRun

    problem_name = factory.Sequence(u'problem{0}'.format)
    problem_hash = factory.Sequence(lambda n: '{0:064x}'.format(n))
    completed = True


class BuildTraceEntryFactory(factory.django.DjangoModelFactory):
    """Factory for trace entries of recorded build runs."""
    class Meta:
        model = models.BuildTraceEntry

    run = factory.SubFactory(BuildRunFactory)
    t = factory.Sequence(lambda n: 1.0 - 0.01 * n)
    h = 0.01
    iterations = 3
    lip_estimate = 1.0
    max_u = 5.0
    max_z = 0.0
