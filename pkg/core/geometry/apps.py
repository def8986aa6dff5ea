from django.apps import AppConfig


class GeometryConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core.geometry'
    label = 'core_geometry'
    verbose_name = 'Geometry'
