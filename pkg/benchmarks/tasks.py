"""
Background benchmark tasks for IDD Monitor
"""
import logging

from celery import shared_task

from idd_monitor.exceptions import IDDError
from .models import BenchmarkRun
from .serializers import BenchmarkConfigSerializer, validated
from .services import apply_overrides, cmd_benchmark, record_run

logger = logging.getLogger(__name__)


@shared_task(bind=True)
def run_benchmark_task(self, payload: dict, seed: int = None, out_dir: str = None):
    """Celery task running one benchmark config; returns the BenchmarkRun id"""
    try:
        config = apply_overrides(validated(BenchmarkConfigSerializer, payload, 'benchmark config'), seed=seed)
        report = cmd_benchmark(config, out_dir)
    except IDDError as exc:
        logger.error(f"Benchmark task {self.request.id} failed: {exc}")
        run = BenchmarkRun.objects.create(
            name=payload.get('name', 'benchmark') if isinstance(payload, dict) else 'benchmark',
            status='failed',
            master_seed=seed or 0,
            config=payload if isinstance(payload, dict) else {},
            error_message=str(exc),
        )
        return str(run.id)
    run = record_run(report)
    logger.info(f"Benchmark task {self.request.id} recorded run {run.id} ({run.status})")
    return str(run.id)
