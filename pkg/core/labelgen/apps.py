from django.apps import AppConfig


class LabelgenConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'core.labelgen'
    label = 'core_labelgen'
    verbose_name = 'Label generation'
