"""
Mixins used by classes spread across different test modules
"""

import os
import shutil
import tempfile

from django.conf import settings

from dfield import problemfile


# Functions

def closed_form(t, x, T=1.0):
    """
    Return the decoupling field x / (1 - (T - t)) of mu = y, sigma = 0, f = 0, xi = x.
    """
    return x / (1.0 - (T - t))


# Classes

class ProblemFilesMixin(object):
    """
    Mixin for test classes that use the problem files shipped in `problems/`.
    """
    problems_dir = os.path.join(settings.BASE_DIR, 'problems')

    def problem_path(self, name):
        """
        Return the path of the shipped problem file `name` (without extension).
        """
        return os.path.join(self.problems_dir, '{name}.json'.format(name=name))

    def load_problem_file(self, name):
        """
        Parse the shipped problem file `name`.
        """
        return problemfile.load(self.problem_path(name))


class TemporaryDirectoryMixin(object):
    """
    Mixin for test classes that write files.
    """
    def setUp(self):  # pylint: disable=missing-docstring
        super(TemporaryDirectoryMixin, self).setUp()
        self.tmpdir = tempfile.mkdtemp(prefix='dfield-tests-')
        self.addCleanup(shutil.rmtree, self.tmpdir, ignore_errors=True)

    def tmp_path(self, filename):
        """
        Return the path of `filename` inside the temporary directory.
        """
        return os.path.join(self.tmpdir, filename)
