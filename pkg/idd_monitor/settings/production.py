"""
Production settings for IDD Monitor
Long-running benchmark workers report errors to Sentry
"""

from .base import *
import sentry_sdk
from sentry_sdk.integrations.celery import CeleryIntegration
from sentry_sdk.integrations.django import DjangoIntegration

DEBUG = False

DATABASES['default']['NAME'] = config('IDD_DATABASE_PATH', default=str(BASE_DIR / 'db.sqlite3'))
DATABASES['default']['CONN_MAX_AGE'] = 60

IDD_WORKERS = config('IDD_WORKERS', default=4, cast=int)

LOGGING['handlers']['file'] = {
    'level': 'INFO',
    'class': 'logging.FileHandler',
    'filename': config('IDD_LOG_FILE', default='/var/log/idd_monitor/idd.log'),
    'formatter': 'verbose',
}
for _name in LOCAL_APPS:
    LOGGING['loggers'][_name]['handlers'] = ['console', 'file']

# Sentry error tracking
sentry_sdk.init(
    dsn=config('SENTRY_DSN', default=''),
    integrations=[DjangoIntegration(), CeleryIntegration()],
    traces_sample_rate=0.1,
    send_default_pii=False,
    environment='production',
)
