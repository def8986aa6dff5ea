from django.db import models
from django.utils import timezone


class SimulationRun(models.Model):
    """
    One acquisition run (strategy x seed) and its metrics.
    """
    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('processing', 'Processing'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    strategy = models.CharField(max_length=64, db_index=True)
    preset = models.CharField(max_length=32, default='rock')
    scene_seed = models.IntegerField(default=0)
    seed = models.IntegerField(default=0)

    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending', db_index=True)
    output_dir = models.CharField(max_length=512)
    forest_path = models.CharField(max_length=512, blank=True, default='')
    metrics = models.JSONField(null=True, blank=True)
    error_message = models.TextField(blank=True, null=True)

    created_at = models.DateTimeField(auto_now_add=True, db_index=True)
    updated_at = models.DateTimeField(auto_now=True)
    processed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        db_table = 'simulation_runs'
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['strategy', 'seed'], name='simulation_strategy_seed_idx'),
        ]

    def __str__(self) -> str:
        return f"{self.strategy} - {self.preset} - seed {self.seed} - {self.status}"

    def mark_processing(self) -> None:
        """Mark run as currently being processed."""
        self.status = 'processing'
        self.save(update_fields=['status', 'updated_at'])

    def mark_completed(self, metrics: dict) -> None:
        """Mark run as completed and store its metrics."""
        self.status = 'completed'
        self.metrics = metrics
        self.processed_at = timezone.now()
        self.save(update_fields=['status', 'metrics', 'processed_at', 'updated_at'])

    def mark_failed(self, error: str) -> None:
        """Mark run as failed with error message."""
        self.status = 'failed'
        self.error_message = error
        self.processed_at = timezone.now()
        self.save(update_fields=['status', 'error_message', 'processed_at', 'updated_at'])
