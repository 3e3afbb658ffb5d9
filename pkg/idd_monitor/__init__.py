# IDD Monitor - intrinsic distribution-valued change-point monitoring

from .celery import app as celery_app

__all__ = ('celery_app',)
