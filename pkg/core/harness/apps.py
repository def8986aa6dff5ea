from django.apps import AppConfig


class HarnessAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core.harness'
    label = 'core_harness'
    verbose_name = 'Simulation harness'
