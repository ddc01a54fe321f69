from django.apps import AppConfig


class CryptoCoreConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'crypto_core'
    verbose_name = 'Hash chains and MAC primitives'
