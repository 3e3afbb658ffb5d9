"""
Development settings for IDD Monitor
"""

from .base import *

DEBUG = True

# Celery (use synchronous execution in development)
CELERY_TASK_ALWAYS_EAGER = True
CELERY_TASK_EAGER_PROPAGATES = True

LOGGING['loggers']['benchmarks']['level'] = 'DEBUG'
