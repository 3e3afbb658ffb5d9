"""
Celery configuration for IDD Monitor
Runs long Monte-Carlo benchmarks outside the calling process
"""
import os

from celery import Celery

# Set default Django settings module for 'celery' program
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'idd_monitor.settings.development')

app = Celery('idd_monitor')

app.config_from_object('django.conf:settings', namespace='CELERY')

# Load task modules from all registered Django app configs
app.autodiscover_tasks()
