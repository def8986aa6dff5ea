import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'viewforge.settings')

app = Celery('viewforge')

# CELERY_* settings; eager in-memory execution unless REDIS_URL points at a broker
app.config_from_object('django.conf:settings', namespace='CELERY')

# Picks up core.harness.tasks
app.autodiscover_tasks()
