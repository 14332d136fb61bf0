from django.apps import AppConfig


class NtlChangeConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ntlchange'
    verbose_name = "Nighttime lights change detection"

    def ready(self):
        from .checks import register_ntlchange_settings_checks
        register_ntlchange_settings_checks()
