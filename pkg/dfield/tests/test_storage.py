"""
Tests for functionality related to storing files.
"""

from django.test import TestCase

from dfield import storage
from dfield.tests import factories


# Classes

class StorageTests(TestCase):
    """
    Tests for functionality related to storing files.
    """

    def test_snapshot_path(self):
        """
        Test that `snapshot_path` returns appropriate upload path for field snapshots.
        """
        run = factories.BuildRunFactory(id=23, problem_hash='ab' * 32)
        filename = '2026-01-01T165900_ex42.dfld'

        path = storage.snapshot_path(run, filename)

        self.assertEqual(path, 'snapshots/{hash}/23/2026-01-01T165900_ex42.dfld'.format(hash='ab' * 32))
