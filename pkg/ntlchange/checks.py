import datetime

from django.conf import settings
from django.core import checks

from ntlchange import defaults
from ntlchange.utils import (GENERIC_ERROR_PATTERN, INSTANCE_ERROR_PATTERN,
                             RANGE_ERROR_PATTERN, InvalidWeights,
                             NtlChangeCriticalCheckMessage,
                             get_formatted_weights)

NTL_CHANGE_CONFIG = "NTL_CHANGE_CONFIG"

WINDOWS = "windows"
WINDOW_INPUT = "input"
WINDOW_OUTPUT = "output"
EPOCHS = "epochs"
BATCH_SIZE = "batch_size"
SPLIT_FRACTION = "split_fraction"
ENSEMBLE_WEIGHTS = "ensemble_weights"
THRESHOLD = "threshold"
THRESHOLD_PERCENT = "percent"
THRESHOLD_MODE = "mode"
THRESHOLD_SCOPE = "scope"
STREAMING_WINDOW_DAYS = "streaming_window_days"
PERSISTENCE = "persistence"
MIN_DAYS = "min_days"
GAP_TOLERANCE_DAYS = "gap_tolerance_days"
SMOOTHING_WINDOW_DAYS = "smoothing_window_days"
RECOVERY_BAND = "recovery_band"
REGULARIZATION = "regularization"
MAX_NORM = "max_norm"
ACTIVITY_L2 = "activity_l2"

SETTINGS_KEYS = (
    WINDOWS, EPOCHS, BATCH_SIZE, SPLIT_FRACTION, ENSEMBLE_WEIGHTS, THRESHOLD,
    PERSISTENCE, SMOOTHING_WINDOW_DAYS, RECOVERY_BAND, REGULARIZATION)

# Keys only meaningful in a run config file
CONFIG_VERSION = "config_version"
ZONE_ID = "zone_id"
SERIES = "series"
TRAINING_END = "training_end"
SEED = "seed"
OUT = "out"
PIXELS = "pixels"
ZONE_CSV = "zone_csv"
ZONE_SPEC = "zone_spec"
GROUND_TRUTH = "ground_truth"
SCENARIO = "scenario"
JOBS = "jobs"

RUN_CONFIG_KEYS = SETTINGS_KEYS + (
    CONFIG_VERSION, ZONE_ID, SERIES, TRAINING_END, SEED, OUT, PIXELS, ZONE_CSV,
    ZONE_SPEC, GROUND_TRUTH, SCENARIO, JOBS)


def register_ntlchange_settings_checks():
    checks.register(check_settings, "ntlchange_checks")


def _is_positive_int(value):
    try:
        return int(value) == float(value) and int(value) >= 1
    except (TypeError, ValueError):
        return False


def _is_number(value):
    if isinstance(value, bool):
        return False
    try:
        float(value)
    except (TypeError, ValueError):
        return False
    return True


def _check_dict(value, location, msg_id):
    if not isinstance(value, dict):
        return [NtlChangeCriticalCheckMessage(
            msg=INSTANCE_ERROR_PATTERN % {"location": location, "types": "dict"},
            id=msg_id)]
    return []


def _positive_int_error(value, location, msg_id):
    return NtlChangeCriticalCheckMessage(
        msg=RANGE_ERROR_PATTERN % {
            "location": location, "condition": "a positive integer",
            "value": value},
        id=msg_id)


def check_config_dict(conf, root=NTL_CHANGE_CONFIG):  # noqa: C901
    """Validate the keys shared by the ``NTL_CHANGE_CONFIG`` setting and by
    run config files.

    :param conf: the dict to check.
    :param root: name used to locate problems in messages.
    :return: a list of check messages, empty when the dict is valid.
    """
    errors = []

    windows = conf.get(WINDOWS, None)
    if windows is not None:
        location = f"'{WINDOWS}' in '{root}'"
        window_errors = _check_dict(windows, location, "ntlchange-windows.E001")
        errors.extend(window_errors)
        if not window_errors:
            w_i = windows.get(WINDOW_INPUT, defaults.DEFAULT_INPUT_WINDOW)
            w_o = windows.get(WINDOW_OUTPUT, defaults.DEFAULT_OUTPUT_WINDOW)
            valid = True
            for key, value in ((WINDOW_INPUT, w_i), (WINDOW_OUTPUT, w_o)):
                if not _is_positive_int(value):
                    valid = False
                    errors.append(_positive_int_error(
                        value, f"'{key}' in {location}",
                        "ntlchange-windows.E002"))
            if valid and int(w_o) >= int(w_i):
                errors.append(NtlChangeCriticalCheckMessage(
                    msg=f"'{WINDOW_OUTPUT}' in {location} must be smaller than "
                        f"'{WINDOW_INPUT}', while got {w_o} >= {w_i}.",
                    id="ntlchange-windows.E003"))

    epochs = conf.get(EPOCHS, None)
    if epochs is not None:
        location = f"'{EPOCHS}' in '{root}'"
        epoch_errors = _check_dict(epochs, location, "ntlchange-epochs.E001")
        errors.extend(epoch_errors)
        if not epoch_errors:
            for arch, value in epochs.items():
                if str(arch).upper() not in defaults.ARCHITECTURES:
                    errors.append(NtlChangeCriticalCheckMessage(
                        msg=f"Unknown architecture '{arch}' in {location}, "
                            f"available choices are "
                            f"{', '.join(defaults.ARCHITECTURES)}.",
                        id="ntlchange-epochs.E002"))
                elif not _is_positive_int(value):
                    errors.append(_positive_int_error(
                        value, f"'{arch}' in {location}",
                        "ntlchange-epochs.E003"))

    batch_size = conf.get(BATCH_SIZE, None)
    if batch_size is not None and not _is_positive_int(batch_size):
        errors.append(_positive_int_error(
            batch_size, f"'{BATCH_SIZE}' in '{root}'",
            "ntlchange-batch_size.E001"))

    split_fraction = conf.get(SPLIT_FRACTION, None)
    if split_fraction is not None:
        if not _is_number(split_fraction) or not 0 < float(split_fraction) < 1:
            errors.append(NtlChangeCriticalCheckMessage(
                msg=RANGE_ERROR_PATTERN % {
                    "location": f"'{SPLIT_FRACTION}' in '{root}'",
                    "condition": "a number strictly between 0 and 1",
                    "value": split_fraction},
                id="ntlchange-split_fraction.E001"))

    weights = conf.get(ENSEMBLE_WEIGHTS, None)
    if weights is not None:
        try:
            get_formatted_weights(weights, name=ENSEMBLE_WEIGHTS)
        except InvalidWeights as e:
            errors.append(NtlChangeCriticalCheckMessage(
                msg=GENERIC_ERROR_PATTERN % {
                    "location": f"'{ENSEMBLE_WEIGHTS}' in '{root}'",
                    "error_type": type(e).__name__,
                    "error_str": str(e)},
                id="ntlchange-ensemble_weights.E001"))

    threshold = conf.get(THRESHOLD, None)
    if threshold is not None:
        location = f"'{THRESHOLD}' in '{root}'"
        threshold_errors = _check_dict(
            threshold, location, "ntlchange-threshold.E001")
        errors.extend(threshold_errors)
        if not threshold_errors:
            percent = threshold.get(THRESHOLD_PERCENT, None)
            if percent is not None and (
                    not _is_number(percent) or not 0 < float(percent) < 100):
                errors.append(NtlChangeCriticalCheckMessage(
                    msg=RANGE_ERROR_PATTERN % {
                        "location": f"'{THRESHOLD_PERCENT}' in {location}",
                        "condition": "a number strictly between 0 and 100",
                        "value": percent},
                    id="ntlchange-threshold.E002"))
            mode = threshold.get(THRESHOLD_MODE, None)
            if mode is not None and mode not in defaults.THRESHOLD_MODES:
                errors.append(NtlChangeCriticalCheckMessage(
                    msg=f"'{THRESHOLD_MODE}' in {location} must be one of "
                        f"{', '.join(defaults.THRESHOLD_MODES)}, "
                        f"while got '{mode}'.",
                    id="ntlchange-threshold.E003"))
            scope = threshold.get(THRESHOLD_SCOPE, None)
            if scope is not None and scope not in defaults.THRESHOLD_SCOPES:
                errors.append(NtlChangeCriticalCheckMessage(
                    msg=f"'{THRESHOLD_SCOPE}' in {location} must be one of "
                        f"{', '.join(defaults.THRESHOLD_SCOPES)}, "
                        f"while got '{scope}'.",
                    id="ntlchange-threshold.E004"))
            window = threshold.get(STREAMING_WINDOW_DAYS, None)
            if window is not None and not _is_positive_int(window):
                errors.append(_positive_int_error(
                    window, f"'{STREAMING_WINDOW_DAYS}' in {location}",
                    "ntlchange-threshold.E005"))

    persistence = conf.get(PERSISTENCE, None)
    if persistence is not None:
        location = f"'{PERSISTENCE}' in '{root}'"
        persistence_errors = _check_dict(
            persistence, location, "ntlchange-persistence.E001")
        errors.extend(persistence_errors)
        if not persistence_errors:
            min_days = persistence.get(MIN_DAYS, None)
            if min_days is not None and not _is_positive_int(min_days):
                errors.append(_positive_int_error(
                    min_days, f"'{MIN_DAYS}' in {location}",
                    "ntlchange-persistence.E002"))
            gap = persistence.get(GAP_TOLERANCE_DAYS, None)
            if gap is not None and not (
                    _is_number(gap) and int(gap) == float(gap) and int(gap) >= 0):
                errors.append(NtlChangeCriticalCheckMessage(
                    msg=RANGE_ERROR_PATTERN % {
                        "location": f"'{GAP_TOLERANCE_DAYS}' in {location}",
                        "condition": "a non-negative integer",
                        "value": gap},
                    id="ntlchange-persistence.E003"))

    smoothing = conf.get(SMOOTHING_WINDOW_DAYS, None)
    if smoothing is not None and not _is_positive_int(smoothing):
        errors.append(_positive_int_error(
            smoothing, f"'{SMOOTHING_WINDOW_DAYS}' in '{root}'",
            "ntlchange-smoothing_window_days.E001"))

    band = conf.get(RECOVERY_BAND, None)
    if band is not None and (not _is_number(band) or not 0 < float(band) < 1):
        errors.append(NtlChangeCriticalCheckMessage(
            msg=RANGE_ERROR_PATTERN % {
                "location": f"'{RECOVERY_BAND}' in '{root}'",
                "condition": "a number strictly between 0 and 1",
                "value": band},
            id="ntlchange-recovery_band.E001"))

    regularization = conf.get(REGULARIZATION, None)
    if regularization is not None:
        location = f"'{REGULARIZATION}' in '{root}'"
        regularization_errors = _check_dict(
            regularization, location, "ntlchange-regularization.E001")
        errors.extend(regularization_errors)
        if not regularization_errors:
            max_norm = regularization.get(MAX_NORM, None)
            if max_norm is not None and (
                    not _is_number(max_norm) or float(max_norm) <= 0):
                errors.append(NtlChangeCriticalCheckMessage(
                    msg=RANGE_ERROR_PATTERN % {
                        "location": f"'{MAX_NORM}' in {location}",
                        "condition": "a positive number or None",
                        "value": max_norm},
                    id="ntlchange-regularization.E002"))
            activity = regularization.get(ACTIVITY_L2, None)
            if activity is not None and (
                    not _is_number(activity) or float(activity) < 0):
                errors.append(NtlChangeCriticalCheckMessage(
                    msg=RANGE_ERROR_PATTERN % {
                        "location": f"'{ACTIVITY_L2}' in {location}",
                        "condition": "a non-negative number",
                        "value": activity},
                    id="ntlchange-regularization.E003"))

    return errors


def check_settings(app_configs, **kwargs):
    conf = getattr(settings, NTL_CHANGE_CONFIG, None)
    if conf is None:
        return []

    if not isinstance(conf, dict):
        return [NtlChangeCriticalCheckMessage(
            msg=(INSTANCE_ERROR_PATTERN
                 % {"location": NTL_CHANGE_CONFIG, "types": "dict"}),
            id="ntlchange.E001"
        )]

    errors = check_config_dict(conf)

    for key in conf:
        if key not in SETTINGS_KEYS:
            errors.append(checks.Warning(
                msg=f"Unknown key '{key}' in '{NTL_CHANGE_CONFIG}' will be "
                    f"ignored, available keys are {', '.join(SETTINGS_KEYS)}.",
                id="ntlchange.W001"))

    return errors


def check_run_config(data, location="run config"):
    """Validate a run config dict loaded from JSON.

    :return: a list of check messages. Messages for which
       ``is_serious()`` is true make the config unusable.
    """
    if not isinstance(data, dict):
        return [NtlChangeCriticalCheckMessage(
            msg=INSTANCE_ERROR_PATTERN % {"location": location, "types": "dict"},
            id="ntlchange-run.E001")]

    errors = []

    version = data.get(CONFIG_VERSION, None)
    if version is not None and version != defaults.RUN_CONFIG_VERSION:
        errors.append(NtlChangeCriticalCheckMessage(
            msg=f"'{CONFIG_VERSION}' in {location} is '{version}', only "
                f"version {defaults.RUN_CONFIG_VERSION} is supported.",
            id="ntlchange-run.E002"))

    training_end = data.get(TRAINING_END, None)
    if training_end is not None:
        try:
            datetime.date.fromisoformat(str(training_end))
        except ValueError as e:
            errors.append(NtlChangeCriticalCheckMessage(
                msg=GENERIC_ERROR_PATTERN % {
                    "location": f"'{TRAINING_END}' in {location}",
                    "error_type": type(e).__name__,
                    "error_str": str(e)},
                id="ntlchange-run.E003"))

    seed = data.get(SEED, None)
    if seed is not None and not (
            isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        errors.append(NtlChangeCriticalCheckMessage(
            msg=RANGE_ERROR_PATTERN % {
                "location": f"'{SEED}' in {location}",
                "condition": "a non-negative integer",
                "value": seed},
            id="ntlchange-run.E004"))

    jobs = data.get(JOBS, None)
    if jobs is not None and not _is_positive_int(jobs):
        errors.append(_positive_int_error(
            jobs, f"'{JOBS}' in {location}", "ntlchange-run.E005"))

    for key in (ZONE_ID, SERIES, OUT, PIXELS, ZONE_CSV, ZONE_SPEC,
                GROUND_TRUTH, SCENARIO):
        value = data.get(key, None)
        if value is not None and not isinstance(value, str):
            errors.append(NtlChangeCriticalCheckMessage(
                msg=INSTANCE_ERROR_PATTERN % {
                    "location": f"'{key}' in {location}", "types": "str"},
                id="ntlchange-run.E006"))

    errors.extend(check_config_dict(data, root=location))

    for key in data:
        if key not in RUN_CONFIG_KEYS:
            errors.append(checks.Warning(
                msg=f"Unknown key '{key}' in {location} will be ignored.",
                id="ntlchange-run.W001"))

    return errors
