from django.apps import AppConfig


class PlannerAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core.planner'
    label = 'core_planner'
    verbose_name = 'View planner'
