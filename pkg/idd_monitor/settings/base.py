"""
Django base settings for IDD Monitor project.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

SECRET_KEY = config('SECRET_KEY', default='idd-monitor-local-key-change-in-production')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=lambda v: [s.strip() for s in v.split(',')])

# Application definition
DJANGO_APPS = [
    'django.contrib.contenttypes',
]

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'transport',
    'barycenter',
    'mfpca',
    'detection',
    'synthgen',
    'baselines',
    'benchmarks',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

MIDDLEWARE = []

# Database
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

# REST Framework is used for config and model-file validation only
REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
    'UNAUTHENTICATED_USER': None,
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Celery configuration
CELERY_BROKER_URL = config('CELERY_BROKER_URL', default='redis://localhost:6379/0')
CELERY_RESULT_BACKEND = config('CELERY_RESULT_BACKEND', default='redis://localhost:6379/0')
CELERY_ACCEPT_CONTENT = ['json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'

# Optimal transport
IDD_OT_SOLVER = config('IDD_OT_SOLVER', default='sinkhorn')
IDD_SINKHORN_EPS_FACTOR = config('IDD_SINKHORN_EPS_FACTOR', default=5e-3, cast=float)
IDD_MARGINAL_TOL = config('IDD_MARGINAL_TOL', default=1e-7, cast=float)
IDD_SINKHORN_MAX_ITER = config('IDD_SINKHORN_MAX_ITER', default=10000, cast=int)

# Barycenter
IDD_BARYCENTER_ATOMS = config('IDD_BARYCENTER_ATOMS', default=128, cast=int)
IDD_BARYCENTER_TOL = config('IDD_BARYCENTER_TOL', default=1e-5, cast=float)
IDD_BARYCENTER_MAX_ITER = config('IDD_BARYCENTER_MAX_ITER', default=50, cast=int)

# Functional PCA
IDD_VARIANCE_FRACTION = config('IDD_VARIANCE_FRACTION', default=0.9, cast=float)
IDD_EIGEN_FLOOR = config('IDD_EIGEN_FLOOR', default=1e-10, cast=float)

# Detector calibration
IDD_ALPHA_T2 = config('IDD_ALPHA_T2', default=0.01, cast=float)
IDD_ALPHA_SPE = config('IDD_ALPHA_SPE', default=0.01, cast=float)
IDD_MODEL_FORMAT_VERSION = 1

# Benchmarks
IDD_WORKERS = config('IDD_WORKERS', default=1, cast=int)
IDD_ARL_MATCH_TOL = config('IDD_ARL_MATCH_TOL', default=0.05, cast=float)
IDD_BISECTION_STEPS = config('IDD_BISECTION_STEPS', default=40, cast=int)
IDD_REPORT_SCHEMA_VERSION = 1
IDD_STREAM_CHUNK_ROWS = config('IDD_STREAM_CHUNK_ROWS', default=50000, cast=int)

IDD_RUN_ACCEPTANCE = config('IDD_RUN_ACCEPTANCE', default=False, cast=bool)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': 'INFO',
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
        **{
            app: {'handlers': ['console'], 'level': 'INFO', 'propagate': False}
            for app in LOCAL_APPS
        },
    },
}
