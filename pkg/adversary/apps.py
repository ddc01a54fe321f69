from django.apps import AppConfig


class AdversaryConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'adversary'
    verbose_name = 'Scripted Byzantine behaviours'
