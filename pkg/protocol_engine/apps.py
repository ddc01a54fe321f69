from django.apps import AppConfig


class ProtocolEngineConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'protocol_engine'
    verbose_name = 'SRPS node state machine'
