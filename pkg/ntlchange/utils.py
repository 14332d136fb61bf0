import json
import logging
import math
import os
import tempfile

import numpy as np
from django.core.checks import Critical
from django.core.exceptions import ImproperlyConfigured
from django.core.serializers.json import DjangoJSONEncoder

from ntlchange import defaults

logger = logging.getLogger('ntlchange')


class NtlChangeCriticalCheckMessage(Critical):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.obj = self.obj or ImproperlyConfigured.__name__


INSTANCE_ERROR_PATTERN = "%(location)s must be an instance of %(types)s."
GENERIC_ERROR_PATTERN = "Error in %(location)s: %(error_type)s: %(error_str)s"
RANGE_ERROR_PATTERN = "%(location)s must be %(condition)s, while got '%(value)s'."


class NtlChangeError(Exception):
    pass


class DomainError(NtlChangeError, ValueError):
    pass


class InputError(NtlChangeError, ValueError):
    pass


class CSVParseError(InputError):
    def __init__(self, message, line_number=None, code="parse_error"):
        self.line_number = line_number
        self.code = code
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ShapeError(NtlChangeError, ValueError):
    pass


class StateError(NtlChangeError, RuntimeError):
    pass


class NumericalError(NtlChangeError, ArithmeticError):
    pass


class AlignmentError(NtlChangeError, ValueError):
    pass


class InsufficientDataError(NtlChangeError, ValueError):
    def __init__(self, message, required=None, available=None):
        self.required = required
        self.available = available
        if required is not None:
            message = f"{message} (required {required}, available {available})"
        super().__init__(message)


class InvalidWeights(ValueError):
    pass


def get_formatted_weights(weights, name="ensemble_weights"):
    """Return ``weights`` as a dict keyed by architecture id, renormalized to
    sum to one.

    :param weights: a dict mapping architecture ids (case-insensitive) to
       non-negative numbers. ``None`` or empty means the default weights.
    :raises InvalidWeights: for unknown architectures, negative or
       non-numeric weights, or weights summing to zero.
    """
    if not weights:
        weights = defaults.DEFAULT_ENSEMBLE_WEIGHTS

    if not isinstance(weights, dict):
        raise InvalidWeights(
            INSTANCE_ERROR_PATTERN % {"location": f"'{name}'", "types": "dict"})

    formatted = {}
    for arch, value in weights.items():
        key = str(arch).upper()
        if key not in defaults.ARCHITECTURES:
            raise InvalidWeights(
                f"Unknown architecture '{arch}' in '{name}', available "
                f"choices are {', '.join(defaults.ARCHITECTURES)}.")
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise InvalidWeights(
                f"Weight of '{arch}' in '{name}' is not a number: '{value}'.")
        if not math.isfinite(value) or value < 0:
            raise InvalidWeights(
                f"Weight of '{arch}' in '{name}' must be a non-negative "
                f"finite number, while got '{value}'.")
        formatted[key] = value

    total = sum(formatted.values())
    if total <= 0:
        raise InvalidWeights(f"Weights in '{name}' must not sum to zero.")

    return {arch: value / total for arch, value in formatted.items()}


def sign(value):
    if value > 0:
        return 1
    if value < 0:
        return -1
    return 0


def to_jsonable(value):
    """Recursively convert numpy scalars/arrays and non-finite floats so that
    the result can be dumped as strict JSON. NaN and infinities become
    ``None``."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dump_json(data):
    return json.dumps(
        to_jsonable(data), cls=DjangoJSONEncoder, indent=2, sort_keys=True,
        allow_nan=False) + "\n"


class OutputBundle:
    """Collect the files written by one command and move them into place only
    when the block exits without an exception, so that a failing command
    leaves no partial output behind.

    Usage::

        with OutputBundle(out_dir) as bundle:
            bundle.write_text("report.json", dump_json(report))
    """

    def __init__(self, directory):
        self.directory = os.fspath(directory)
        self._staged = []

    def __enter__(self):
        return self

    def write_text(self, name, text):
        target = os.path.join(self.directory, name)
        target_dir = os.path.dirname(target)
        os.makedirs(target_dir, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(
            dir=target_dir, prefix=f".{os.path.basename(target)}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        self._staged.append((tmp_path, target))
        return target

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for tmp_path, _ in self._staged:
                try:
                    os.remove(tmp_path)
                except OSError:
                    pass
            self._staged = []
            return False

        for tmp_path, target in self._staged:
            os.replace(tmp_path, target)
        self._staged = []
        return False
