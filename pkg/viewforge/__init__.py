"""viewforge: confidence-driven view planning for multi-view stereo."""
# Load the Celery app with Django so run_simulation binds to it.
from .celery import app as celery_app

__all__ = ('celery_app',)
