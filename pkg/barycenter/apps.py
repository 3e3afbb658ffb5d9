from django.apps import AppConfig


class BarycenterConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'barycenter'
    verbose_name = 'Wasserstein Barycenter'
