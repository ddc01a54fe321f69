from django.db import models
import uuid


class Experiment(models.Model):
    """One recorded invocation of the lab commands"""
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    kind = models.CharField(
        max_length=20,
        choices=[
            ('simulate', 'Simulation'),
            ('sweep', 'Parameter Sweep'),
        ]
    )
    label = models.CharField(max_length=200, blank=True)

    # Scenario
    config = models.JSONField(default=dict)
    master_seed = models.BigIntegerField()
    runs = models.IntegerField(default=1)

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        db_table = 'lab_experiments'
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['kind', '-created_at'], name='lab_experim_kind_4b7f2e_idx'),
        ]

    def __str__(self):
        return f"{self.get_kind_display()} {self.label or self.id} (seed {self.master_seed})"


class RunRecord(models.Model):
    """Summary metrics of a single seeded run"""
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    experiment = models.ForeignKey(Experiment, on_delete=models.CASCADE, related_name='run_records')
    run_index = models.IntegerField()
    # spawn key of the run's seed under the experiment's master seed
    seed = models.CharField(max_length=100)
    srps = models.BooleanField(default=True)
    metrics = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        db_table = 'lab_run_records'
        ordering = ['experiment', 'srps', 'run_index']
        indexes = [
            models.Index(fields=['experiment', 'run_index'], name='lab_run_rec_experim_9c1d3a_idx'),
        ]

    def __str__(self):
        return f"run {self.run_index:03d} ({'srps' if self.srps else 'baseline'})"

    @property
    def malicious_drops(self):
        return self.metrics.get('malicious_drops', 0)
