from django.apps import AppConfig


class SimnetConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'simnet'
    verbose_name = 'Discrete-event network simulator'
