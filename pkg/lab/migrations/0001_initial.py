# Generated by Django 5.0.14 on 2026-10-17 09:12

import django.db.models.deletion
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="Experiment",
            fields=[
                (
                    "id",
                    models.UUIDField(
                        default=uuid.uuid4,
                        editable=False,
                        primary_key=True,
                        serialize=False,
                    ),
                ),
                (
                    "kind",
                    models.CharField(
                        choices=[
                            ("simulate", "Simulation"),
                            ("sweep", "Parameter Sweep"),
                        ],
                        max_length=20,
                    ),
                ),
                ("label", models.CharField(blank=True, max_length=200)),
                ("config", models.JSONField(default=dict)),
                ("master_seed", models.BigIntegerField()),
                ("runs", models.IntegerField(default=1)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "db_table": "lab_experiments",
                "ordering": ["-created_at"],
                "indexes": [
                    models.Index(
                        fields=["kind", "-created_at"],
                        name="lab_experim_kind_4b7f2e_idx",
                    )
                ],
            },
        ),
        migrations.CreateModel(
            name="RunRecord",
            fields=[
                (
                    "id",
                    models.UUIDField(
                        default=uuid.uuid4,
                        editable=False,
                        primary_key=True,
                        serialize=False,
                    ),
                ),
                ("run_index", models.IntegerField()),
                ("seed", models.CharField(max_length=100)),
                ("srps", models.BooleanField(default=True)),
                ("metrics", models.JSONField(default=dict)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                (
                    "experiment",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="run_records",
                        to="lab.experiment",
                    ),
                ),
            ],
            options={
                "db_table": "lab_run_records",
                "ordering": ["experiment", "srps", "run_index"],
                "indexes": [
                    models.Index(
                        fields=["experiment", "run_index"],
                        name="lab_run_rec_experim_9c1d3a_idx",
                    )
                ],
            },
        ),
    ]
