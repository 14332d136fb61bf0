"""Run configuration of the ``ntl_*`` commands.

A run config is a JSON file using the same keys as ``NTL_CHANGE_CONFIG``
plus run-specific ones (``config_version``, ``zone_id``, ``series``,
``training_end``, ``seed``, ``out``, ...). Values missing from the file fall
back to the Django setting, then to :mod:`ntlchange.defaults`. Command-line
flags override the file one-to-one.
"""

import copy
import datetime
import json
import os
from dataclasses import asdict, dataclass, field

from django.core.exceptions import ImproperlyConfigured

from ntlchange import checks as ntl_checks
from ntlchange import conf, defaults
from ntlchange.models import TrainConfig
from ntlchange.utils import get_formatted_weights

# command-line destination -> key path in the run config dict
OVERRIDE_PATHS = {
    "zone_id": (ntl_checks.ZONE_ID,),
    "series": (ntl_checks.SERIES,),
    "pixels": (ntl_checks.PIXELS,),
    "zone_csv": (ntl_checks.ZONE_CSV,),
    "zone_spec": (ntl_checks.ZONE_SPEC,),
    "ground_truth": (ntl_checks.GROUND_TRUTH,),
    "scenario": (ntl_checks.SCENARIO,),
    "training_end": (ntl_checks.TRAINING_END,),
    "seed": (ntl_checks.SEED,),
    "out": (ntl_checks.OUT,),
    "jobs": (ntl_checks.JOBS,),
    "input_window": (ntl_checks.WINDOWS, ntl_checks.WINDOW_INPUT),
    "output_window": (ntl_checks.WINDOWS, ntl_checks.WINDOW_OUTPUT),
    "epochs": (ntl_checks.EPOCHS,),
    "batch_size": (ntl_checks.BATCH_SIZE,),
    "split_fraction": (ntl_checks.SPLIT_FRACTION,),
    "weights": (ntl_checks.ENSEMBLE_WEIGHTS,),
    "percent": (ntl_checks.THRESHOLD, ntl_checks.THRESHOLD_PERCENT),
    "mode": (ntl_checks.THRESHOLD, ntl_checks.THRESHOLD_MODE),
    "scope": (ntl_checks.THRESHOLD, ntl_checks.THRESHOLD_SCOPE),
    "streaming_window_days": (
        ntl_checks.THRESHOLD, ntl_checks.STREAMING_WINDOW_DAYS),
    "min_persistence": (ntl_checks.PERSISTENCE, ntl_checks.MIN_DAYS),
    "gap_tolerance": (ntl_checks.PERSISTENCE, ntl_checks.GAP_TOLERANCE_DAYS),
    "smoothing_window_days": (ntl_checks.SMOOTHING_WINDOW_DAYS,),
    "recovery_band": (ntl_checks.RECOVERY_BAND,),
    "max_norm": (ntl_checks.REGULARIZATION, ntl_checks.MAX_NORM),
    "activity_l2": (ntl_checks.REGULARIZATION, ntl_checks.ACTIVITY_L2),
}


def parse_mapping(text):
    """``"LSTM=0.5,FCNN=0.3"`` -> ``{"LSTM": 0.5, "FCNN": 0.3}``."""
    result = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ImproperlyConfigured(
                f"expected KEY=VALUE pairs separated by commas, while got "
                f"'{text}'")
        try:
            result[key.strip().upper()] = float(value)
        except ValueError:
            raise ImproperlyConfigured(
                f"'{value}' of '{key.strip()}' is not a number")
    return result


def apply_overrides(data, overrides):
    """Return a copy of ``data`` with every non-``None`` override written to
    its key path."""
    data = copy.deepcopy(data)
    for name, value in overrides.items():
        if value is None or name not in OVERRIDE_PATHS:
            continue
        *parents, leaf = OVERRIDE_PATHS[name]
        node = data
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return data


INPUT_PATH_KEYS = (
    ntl_checks.SERIES, ntl_checks.PIXELS, ntl_checks.ZONE_CSV,
    ntl_checks.ZONE_SPEC, ntl_checks.GROUND_TRUTH, ntl_checks.SCENARIO)


def resolve_paths(data, base_dir):
    """Input paths in a config file are relative to the file's directory."""
    data = dict(data)
    for key in INPUT_PATH_KEYS:
        value = data.get(key)
        if isinstance(value, str) and value and not os.path.isabs(value):
            data[key] = os.path.join(base_dir, value)
    return data


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ImproperlyConfigured(f"cannot read run config '{path}': {e}")
    except json.JSONDecodeError as e:
        raise ImproperlyConfigured(f"invalid run config '{path}': {e}")


def validate(data, location="run config"):
    """Raise :class:`ImproperlyConfigured` listing every serious problem."""
    messages = [m for m in ntl_checks.check_run_config(data, location)
                if m.is_serious()]
    if messages:
        raise ImproperlyConfigured(
            "\n".join(f"{m.id}: {m.msg}" for m in messages))


@dataclass
class RunConfig:
    zone_id: str = None
    series: str = None
    pixels: str = None
    zone_csv: str = None
    zone_spec: str = None
    ground_truth: str = None
    scenario: str = None
    training_end: datetime.date = None
    seed: int = 0
    out: str = "."
    jobs: int = 1

    input_window: int = defaults.DEFAULT_INPUT_WINDOW
    output_window: int = defaults.DEFAULT_OUTPUT_WINDOW
    epochs: dict = field(default_factory=lambda: dict(defaults.DEFAULT_EPOCHS))
    batch_size: int = defaults.DEFAULT_BATCH_SIZE
    split_fraction: float = defaults.DEFAULT_SPLIT_FRACTION
    weights: dict = field(
        default_factory=lambda: dict(defaults.DEFAULT_ENSEMBLE_WEIGHTS))
    percent: float = defaults.DEFAULT_THRESHOLD_PERCENT
    mode: str = defaults.DEFAULT_THRESHOLD_MODE
    scope: str = defaults.DEFAULT_THRESHOLD_SCOPE
    streaming_window_days: int = defaults.DEFAULT_STREAMING_WINDOW_DAYS
    min_persistence: int = defaults.DEFAULT_MIN_PERSISTENCE_DAYS
    gap_tolerance: int = defaults.DEFAULT_GAP_TOLERANCE_DAYS
    smoothing_window_days: int = defaults.DEFAULT_SMOOTHING_WINDOW_DAYS
    recovery_band: float = defaults.DEFAULT_RECOVERY_BAND
    max_norm: float = defaults.DEFAULT_MAX_NORM
    activity_l2: float = defaults.DEFAULT_ACTIVITY_L2

    @classmethod
    def from_dict(cls, data, location="run config"):
        validate(data, location)

        def get(*path, default=None):
            node = data
            for key in path:
                if not isinstance(node, dict) or key not in node:
                    return default
                node = node[key]
            return node

        epochs = dict(conf.EPOCHS)
        epochs.update({
            str(k).upper(): int(v)
            for k, v in (get(ntl_checks.EPOCHS) or {}).items()})
        weights = get(ntl_checks.ENSEMBLE_WEIGHTS)
        training_end = get(ntl_checks.TRAINING_END)

        return cls(
            zone_id=get(ntl_checks.ZONE_ID),
            series=get(ntl_checks.SERIES),
            pixels=get(ntl_checks.PIXELS),
            zone_csv=get(ntl_checks.ZONE_CSV),
            zone_spec=get(ntl_checks.ZONE_SPEC),
            ground_truth=get(ntl_checks.GROUND_TRUTH),
            scenario=get(ntl_checks.SCENARIO),
            training_end=(
                None if training_end is None
                else datetime.date.fromisoformat(str(training_end))),
            seed=int(get(ntl_checks.SEED, default=0)),
            out=get(ntl_checks.OUT, default="."),
            jobs=int(get(ntl_checks.JOBS, default=1)),
            input_window=int(get(
                ntl_checks.WINDOWS, ntl_checks.WINDOW_INPUT,
                default=conf.INPUT_WINDOW)),
            output_window=int(get(
                ntl_checks.WINDOWS, ntl_checks.WINDOW_OUTPUT,
                default=conf.OUTPUT_WINDOW)),
            epochs=epochs,
            batch_size=int(get(ntl_checks.BATCH_SIZE, default=conf.BATCH_SIZE)),
            split_fraction=float(get(
                ntl_checks.SPLIT_FRACTION, default=conf.SPLIT_FRACTION)),
            weights=(dict(conf.ENSEMBLE_WEIGHTS) if weights is None
                     else get_formatted_weights(weights)),
            percent=float(get(
                ntl_checks.THRESHOLD, ntl_checks.THRESHOLD_PERCENT,
                default=conf.THRESHOLD_PERCENT)),
            mode=get(ntl_checks.THRESHOLD, ntl_checks.THRESHOLD_MODE,
                     default=conf.THRESHOLD_MODE),
            scope=get(ntl_checks.THRESHOLD, ntl_checks.THRESHOLD_SCOPE,
                      default=conf.THRESHOLD_SCOPE),
            streaming_window_days=int(get(
                ntl_checks.THRESHOLD, ntl_checks.STREAMING_WINDOW_DAYS,
                default=conf.STREAMING_WINDOW_DAYS)),
            min_persistence=int(get(
                ntl_checks.PERSISTENCE, ntl_checks.MIN_DAYS,
                default=conf.MIN_PERSISTENCE_DAYS)),
            gap_tolerance=int(get(
                ntl_checks.PERSISTENCE, ntl_checks.GAP_TOLERANCE_DAYS,
                default=conf.GAP_TOLERANCE_DAYS)),
            smoothing_window_days=int(get(
                ntl_checks.SMOOTHING_WINDOW_DAYS,
                default=conf.SMOOTHING_WINDOW_DAYS)),
            recovery_band=float(get(
                ntl_checks.RECOVERY_BAND, default=conf.RECOVERY_BAND)),
            max_norm=get(ntl_checks.REGULARIZATION, ntl_checks.MAX_NORM,
                         default=conf.MAX_NORM),
            activity_l2=float(get(
                ntl_checks.REGULARIZATION, ntl_checks.ACTIVITY_L2,
                default=conf.ACTIVITY_L2)),
        )

    @classmethod
    def load(cls, path=None, **overrides):
        """Read ``path`` (if any) and apply the command-line ``overrides``."""
        data = {} if path is None else read_config_file(path)
        if not isinstance(data, dict):
            validate(data, location=f"'{path}'")
        if path is not None:
            data = resolve_paths(data, os.path.dirname(os.fspath(path)))
        data = apply_overrides(data, overrides)
        return cls.from_dict(
            data, location="run config" if path is None else f"'{path}'")

    def train_config(self):
        return TrainConfig(
            input_window=self.input_window,
            output_window=self.output_window,
            split_fraction=self.split_fraction,
            batch_size=self.batch_size,
            epochs=dict(self.epochs),
            seed=self.seed,
            max_norm=self.max_norm,
            activity_l2=self.activity_l2)

    def detect_kwargs(self):
        return dict(
            percent=self.percent,
            mode=self.mode,
            scope=self.scope,
            min_persistence=self.min_persistence,
            gap_tolerance=self.gap_tolerance,
            band=self.recovery_band,
            window_days=self.streaming_window_days)

    def training_end_index(self, series):
        """Index of the training end date in ``series``. It must leave room
        for at least one window pair before it and one monitored day after
        it."""
        if self.training_end is None:
            raise ImproperlyConfigured(
                "a training end date is required (--training-end)")
        index = series.index_of(self.training_end)
        if index >= len(series) - 1:
            raise ImproperlyConfigured(
                f"training end {self.training_end} does not precede the "
                f"monitored span, the series ends on {series.end_date}")
        if index < self.input_window + self.output_window - 1:
            raise ImproperlyConfigured(
                f"training end {self.training_end} leaves fewer than "
                f"{self.input_window + self.output_window} baseline days")
        return index

    def to_dict(self):
        """The run config in its file form, version included."""
        data = asdict(self)
        return {
            ntl_checks.CONFIG_VERSION: defaults.RUN_CONFIG_VERSION,
            **{k: data[k] for k in (
                "zone_id", "series", "pixels", "zone_csv", "zone_spec",
                "ground_truth", "scenario", "seed", "out", "jobs")},
            ntl_checks.TRAINING_END: (
                None if self.training_end is None
                else self.training_end.isoformat()),
            ntl_checks.WINDOWS: {
                ntl_checks.WINDOW_INPUT: self.input_window,
                ntl_checks.WINDOW_OUTPUT: self.output_window},
            ntl_checks.EPOCHS: dict(self.epochs),
            ntl_checks.BATCH_SIZE: self.batch_size,
            ntl_checks.SPLIT_FRACTION: self.split_fraction,
            ntl_checks.ENSEMBLE_WEIGHTS: dict(self.weights),
            ntl_checks.THRESHOLD: {
                ntl_checks.THRESHOLD_PERCENT: self.percent,
                ntl_checks.THRESHOLD_MODE: self.mode,
                ntl_checks.THRESHOLD_SCOPE: self.scope,
                ntl_checks.STREAMING_WINDOW_DAYS: self.streaming_window_days},
            ntl_checks.PERSISTENCE: {
                ntl_checks.MIN_DAYS: self.min_persistence,
                ntl_checks.GAP_TOLERANCE_DAYS: self.gap_tolerance},
            ntl_checks.SMOOTHING_WINDOW_DAYS: self.smoothing_window_days,
            ntl_checks.RECOVERY_BAND: self.recovery_band,
            ntl_checks.REGULARIZATION: {
                ntl_checks.MAX_NORM: self.max_norm,
                ntl_checks.ACTIVITY_L2: self.activity_l2},
        }

