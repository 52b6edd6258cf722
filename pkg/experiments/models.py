from django.db import models
import uuid


class SimulationRun(models.Model):
    """Persisted summary of one preset or config-file run"""

    SOURCE_CHOICES = [
        ('preset', 'Preset'),
        ('config', 'Config file'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    scenario = models.CharField(max_length=100)
    source = models.CharField(max_length=10, choices=SOURCE_CHOICES, default='preset')
    seed = models.IntegerField(default=0)
    omega_inj = models.FloatField(null=True, blank=True, help_text="Injection pulsation (rad/s)")

    # Position error, degrees electrical, post warm-up samples only
    max_error_deg = models.FloatField(null=True, blank=True)
    mean_error_deg = models.FloatField(null=True, blank=True)
    max_error_deg_no_saturation = models.FloatField(null=True, blank=True)
    mean_error_deg_no_saturation = models.FloatField(null=True, blank=True)

    averaging = models.JSONField(null=True, blank=True)
    observability = models.JSONField(null=True, blank=True)

    runtime = models.FloatField(help_text="Wall-clock time (seconds)")
    csv_path = models.CharField(max_length=500, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['scenario', 'created_at'], name='run_scenario_created_idx'),
        ]

    def __str__(self):
        return f"{self.scenario} - {self.created_at.strftime('%Y-%m-%d %H:%M')}"

    @property
    def has_estimates(self):
        return self.max_error_deg is not None
