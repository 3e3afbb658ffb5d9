import uuid

from django.db import models


class BenchmarkRun(models.Model):
    """
    A recorded benchmark run: the validated config and the full report
    """
    STATUS_CHOICES = (
        ('pending', 'Pending'),
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('partial', 'Completed with failed points'),
        ('failed', 'Failed'),
    )

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    name = models.CharField(max_length=200)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending')
    master_seed = models.PositiveBigIntegerField(default=0)

    config = models.JSONField()
    report = models.JSONField(default=dict, blank=True)
    failed_points = models.PositiveIntegerField(default=0)
    error_message = models.TextField(blank=True)

    created_at = models.DateTimeField(auto_now_add=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['name', 'created_at'], name='benchmarks__name_5c1e0a_idx'),
            models.Index(fields=['status'], name='benchmarks__status_9b2f41_idx'),
        ]

    def __str__(self):
        return f"{self.name} (seed {self.master_seed}, {self.status})"
