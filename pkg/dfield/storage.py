"""
Storage settings for recorded field snapshots
"""

from django.conf import settings
from django.core.files.storage import default_storage
from storages.backends.s3boto3 import S3Boto3Storage


if settings.USE_REMOTE_STORAGE:
    dfield_storage = S3Boto3Storage()
else:
    dfield_storage = default_storage


def snapshot_path(instance, filename):
    """
    Return storage path for the snapshot of the build run represented by `instance`,
    taking into account desired `filename`.
    """
    return 'snapshots/{problem_hash}/{run_id}/{filename}'.format(
        problem_hash=instance.problem_hash,
        run_id=instance.id,
        filename=filename
    )
