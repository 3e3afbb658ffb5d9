from django.apps import AppConfig


class MfpcaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'mfpca'
    verbose_name = 'Tangent Functional PCA'
