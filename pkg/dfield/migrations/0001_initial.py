# -*- coding: utf-8 -*-
from django.db import migrations, models
import django.db.models.deletion

import dfield.storage


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='BuildRun',
            fields=[
                ('id', models.AutoField(verbose_name='ID', serialize=False, auto_created=True, primary_key=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('problem_name', models.CharField(max_length=120)),
                ('problem_hash', models.CharField(db_index=True, max_length=64)),
                ('completed', models.BooleanField(default=False)),
                ('t_min_estimate', models.FloatField(blank=True, help_text='Earliest accepted slice time if the build stopped because of a blowup.', null=True)),
                ('trigger', models.CharField(blank=True, choices=[('LipschitzExplosion', 'LipschitzExplosion'), ('ValueExplosion', 'ValueExplosion'), ('PicardDivergence', 'PicardDivergence')], max_length=32)),
                ('snapshot', models.FileField(blank=True, max_length=255, storage=dfield.storage.dfield_storage, upload_to=dfield.storage.snapshot_path)),
            ],
        ),
        migrations.CreateModel(
            name='BuildTraceEntry',
            fields=[
                ('id', models.AutoField(verbose_name='ID', serialize=False, auto_created=True, primary_key=True)),
                ('order', models.PositiveIntegerField(db_index=True, editable=False, verbose_name='order')),
                ('t', models.FloatField()),
                ('h', models.FloatField()),
                ('iterations', models.PositiveIntegerField(default=0)),
                ('lip_estimate', models.FloatField()),
                ('max_u', models.FloatField()),
                ('max_z', models.FloatField()),
                ('cutoff_radius', models.FloatField(blank=True, null=True)),
                ('explosion', models.FloatField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='trace', to='dfield.BuildRun')),
            ],
            options={
                'ordering': ('order',),
                'abstract': False,
            },
        ),
    ]
