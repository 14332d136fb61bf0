"""
Django settings of the ntlchange demo project.

The project only installs ``ntlchange`` so that its ``ntl_*`` management
commands can be run with ``python manage.py``. No database is used.
"""

from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = 'django-insecure-ntlchange-demo-only'

DEBUG = True

INSTALLED_APPS = [
    'ntlchange',
    'demo',
]

DATABASES = {}

# Internationalization
# https://docs.djangoproject.com/en/3.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'ntlchange': {
            'handlers': ['console'],
            'level': 'INFO',
        },
    },
}

NTL_CHANGE_CONFIG = {
    "windows": {
        "input": 60,
        "output": 30,
    },
    "epochs": {"FCNN": 70, "CNN": 90, "LSTM": 25},
    "ensemble_weights": {"LSTM": 0.5, "FCNN": 0.3, "CNN": 0.2},
    "threshold": {
        "percent": 25,
        "mode": "batch",
        "scope": "test",
    },
    "persistence": {
        "min_days": 7,
        "gap_tolerance_days": 3,
    },
    "smoothing_window_days": 30,
    "recovery_band": 0.1,
}
