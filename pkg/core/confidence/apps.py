from django.apps import AppConfig


class ConfidenceConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core.confidence'
    label = 'core_confidence'
    verbose_name = 'Confidence'
