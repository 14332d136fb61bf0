from django.conf import settings

from ntlchange import defaults
from ntlchange.utils import get_formatted_weights

"""
NTL_CHANGE_CONFIG = {
    "windows": {
        "input": 60,
        "output": 30,
    },
    "epochs": {"FCNN": 70, "CNN": 90, "LSTM": 25},
    "batch_size": 64,
    "split_fraction": 0.8,
    "ensemble_weights": {"LSTM": 0.5, "FCNN": 0.3, "CNN": 0.2},
    "threshold": {
        "percent": 25,
        "mode": "batch",
        "scope": "test",
        "streaming_window_days": 365,
    },
    "persistence": {
        "min_days": 7,
        "gap_tolerance_days": 3,
    },
    "smoothing_window_days": 30,
    "recovery_band": 0.1,
    "regularization": {
        "max_norm": 3.0,
        "activity_l2": 1e-6,
    },
}
"""


_APP_CONFIG = getattr(settings, "NTL_CHANGE_CONFIG", None) or {}

_APP_CONFIG_WINDOWS = _APP_CONFIG.get("windows", None) or {}
INPUT_WINDOW = int(_APP_CONFIG_WINDOWS.get("input", defaults.DEFAULT_INPUT_WINDOW))
OUTPUT_WINDOW = int(
    _APP_CONFIG_WINDOWS.get("output", defaults.DEFAULT_OUTPUT_WINDOW))

EPOCHS = dict(defaults.DEFAULT_EPOCHS)
EPOCHS.update({
    str(arch).upper(): int(n)
    for arch, n in (_APP_CONFIG.get("epochs", None) or {}).items()})

BATCH_SIZE = int(_APP_CONFIG.get("batch_size", defaults.DEFAULT_BATCH_SIZE))
SPLIT_FRACTION = float(
    _APP_CONFIG.get("split_fraction", defaults.DEFAULT_SPLIT_FRACTION))

ENSEMBLE_WEIGHTS = get_formatted_weights(_APP_CONFIG.get("ensemble_weights"))

_APP_CONFIG_THRESHOLD = _APP_CONFIG.get("threshold", None) or {}
THRESHOLD_PERCENT = float(_APP_CONFIG_THRESHOLD.get(
    "percent", defaults.DEFAULT_THRESHOLD_PERCENT))
THRESHOLD_MODE = _APP_CONFIG_THRESHOLD.get(
    "mode", defaults.DEFAULT_THRESHOLD_MODE)
THRESHOLD_SCOPE = _APP_CONFIG_THRESHOLD.get(
    "scope", defaults.DEFAULT_THRESHOLD_SCOPE)
STREAMING_WINDOW_DAYS = int(_APP_CONFIG_THRESHOLD.get(
    "streaming_window_days", defaults.DEFAULT_STREAMING_WINDOW_DAYS))

_APP_CONFIG_PERSISTENCE = _APP_CONFIG.get("persistence", None) or {}
MIN_PERSISTENCE_DAYS = int(_APP_CONFIG_PERSISTENCE.get(
    "min_days", defaults.DEFAULT_MIN_PERSISTENCE_DAYS))
GAP_TOLERANCE_DAYS = int(_APP_CONFIG_PERSISTENCE.get(
    "gap_tolerance_days", defaults.DEFAULT_GAP_TOLERANCE_DAYS))

SMOOTHING_WINDOW_DAYS = int(_APP_CONFIG.get(
    "smoothing_window_days", defaults.DEFAULT_SMOOTHING_WINDOW_DAYS))

RECOVERY_BAND = float(_APP_CONFIG.get(
    "recovery_band", defaults.DEFAULT_RECOVERY_BAND))

_APP_CONFIG_REGULARIZATION = _APP_CONFIG.get("regularization", None) or {}
MAX_NORM = _APP_CONFIG_REGULARIZATION.get("max_norm", defaults.DEFAULT_MAX_NORM)
ACTIVITY_L2 = float(_APP_CONFIG_REGULARIZATION.get(
    "activity_l2", defaults.DEFAULT_ACTIVITY_L2))
