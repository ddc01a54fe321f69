"""Celery application used to fan simulation runs out to workers."""
import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'srps_lab.settings')

app = Celery('srps_lab')
app.config_from_object('django.conf:settings', namespace='CELERY')
app.autodiscover_tasks()
