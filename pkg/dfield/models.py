"""
Models for recorded build runs
"""

import logging

from django.core.files.base import ContentFile
from django.db import models, transaction
from ordered_model.models import OrderedModel

from dfield.constants import BlowupTriggers
from dfield.field import from_bytes, to_bytes
from dfield.storage import dfield_storage, snapshot_path


# Globals

log = logging.getLogger(__name__)


# Classes

class BuildRun(models.Model):
    """
    A recorded backward build of one problem, with its field snapshot.
    """
    TRIGGER_CHOICES = tuple((trigger, trigger) for trigger in BlowupTriggers.get_all())

    created_at = models.DateTimeField(auto_now_add=True, editable=False)
    problem_name = models.CharField(max_length=120)
    problem_hash = models.CharField(max_length=64, db_index=True)
    completed = models.BooleanField(default=False)
    t_min_estimate = models.FloatField(
        blank=True,
        null=True,
        help_text='Earliest accepted slice time if the build stopped because of a blowup.',
    )
    trigger = models.CharField(max_length=32, blank=True, choices=TRIGGER_CHOICES)
    snapshot = models.FileField(storage=dfield_storage, upload_to=snapshot_path, blank=True, max_length=255)

    def __str__(self):
        return 'BuildRun {id}: {problem} ({status})'.format(
            id=self.id,
            problem=self.problem_name,
            status='completed' if self.completed else 'blowup at t={t:.6g}'.format(t=self.t_min_estimate),
        )

    @property
    def filename(self):
        """
        Return file name for `snapshot` belonging to this run.

        File name includes date and time at which this run was recorded.

        Example: 2026-01-01T165900_ex42.dfld
        """
        return '{created_at}_{problem}.dfld'.format(
            created_at=self.created_at.strftime('%Y-%m-%dT%H%M%S'),
            problem=self.problem_name,
        )

    def save_snapshot(self, fld):
        """
        Serialize `fld`, associate it with this run, and store it.
        """
        self.snapshot.save(self.filename, ContentFile(to_bytes(fld)))

    def load_field(self, problem=None):
        """
        Return the stored field.
        """
        self.snapshot.open('rb')
        try:
            return from_bytes(self.snapshot.read(), problem=problem)
        finally:
            self.snapshot.close()

    @classmethod
    def record(cls, problem, result):
        """
        Store `result` (a `BuildResult` for `problem`) with its trace and snapshot.
        """
        with transaction.atomic():
            run = cls.objects.create(
                problem_name=problem.name,
                problem_hash=problem.problem_hash,
                completed=result.completed,
                t_min_estimate=None if result.completed else result.blowup.t_min_estimate,
                trigger='' if result.completed else result.blowup.trigger,
            )
            for entry in result.trace:
                BuildTraceEntry.objects.create(
                    run=run,
                    t=entry.t,
                    h=entry.h,
                    iterations=entry.iterations,
                    lip_estimate=entry.lip_estimate,
                    max_u=entry.max_u,
                    max_z=entry.max_z,
                    cutoff_radius=entry.H,
                    explosion=entry.explosion,
                )
            run.save_snapshot(result.field)
        log.info('Recorded %s', run)
        return run


class BuildTraceEntry(OrderedModel):
    """
    One accepted slice of a recorded build run.
    """
    run = models.ForeignKey(
        'BuildRun',
        related_name='trace',
        on_delete=models.CASCADE,
    )
    t = models.FloatField()
    h = models.FloatField()
    iterations = models.PositiveIntegerField(default=0)
    lip_estimate = models.FloatField()
    max_u = models.FloatField()
    max_z = models.FloatField()
    cutoff_radius = models.FloatField(blank=True, null=True)
    explosion = models.FloatField(blank=True, null=True)

    order_with_respect_to = 'run'

    class Meta(OrderedModel.Meta):
        pass

    def __str__(self):
        return '{run} > t={t:.12g}'.format(run=self.run, t=self.t)
