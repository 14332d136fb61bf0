"""Labeled synthetic zone series for the three change archetypes: an abrupt
drop with exponential recovery (disaster), an abrupt drop without recovery
(conflict) and a gradual ramp (urbanization).

A scenario is seasonal baseline + holiday bumps + Gaussian noise, with the
change added on top from ``change_start``.
"""

import datetime
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from django.core.exceptions import ImproperlyConfigured
from django.db import models as db_models
from django.utils.translation import gettext_lazy as _

from ntlchange import conf
from ntlchange.evaluation import GroundTruthEvent, ground_truth_csv_text
from ntlchange.forms import ChangeType, TimeUnit
from ntlchange.ingest import NtlSeries, zone_csv_text
from ntlchange.utils import DomainError

logger = logging.getLogger(__name__)

DEFAULT_START_DATE = datetime.date(2015, 1, 1)
DEFAULT_BASELINE = 30.0
DEFAULT_SEASONAL_PERIOD = 365.0
DEFAULT_NOISE_FRACTION = 0.03

# Exponential recovery reaches zero deficit at recovery_days; this many time
# constants fit in that span.
RECOVERY_TIME_CONSTANTS = 3.0

MAX_GAP_FRACTION = 0.5

NO_CHANGE_TRAINING_FRACTION = 0.7


class ChangeKind(db_models.TextChoices):
    NONE = "none", _("No change")
    ABRUPT_DROP = "abrupt_drop", _("Abrupt drop")
    GRADUAL_RAMP = "gradual_ramp", _("Gradual ramp")


@dataclass(frozen=True)
class HolidaySpike:
    """A yearly Gaussian bump centered on ``day_of_year``. It is part of the
    baseline behavior, so an oracle forecast includes it."""
    day_of_year: int
    amplitude: float
    width: float = 3.0


@dataclass(frozen=True)
class Transient:
    """A single-day outlier that is not part of the baseline."""
    date: datetime.date
    amplitude: float


def _as_date(value, name):
    if value is None or isinstance(value, datetime.date):
        return value
    try:
        return datetime.date.fromisoformat(str(value))
    except ValueError:
        raise ImproperlyConfigured(
            f"scenario '{name}' must be an ISO date, while got '{value}'")


@dataclass(frozen=True)
class ScenarioSpec:
    zone_id: str = "synthetic"
    start_date: datetime.date = DEFAULT_START_DATE
    length: int = 1826
    baseline: float = DEFAULT_BASELINE
    seasonal_amplitude: float = 0.1 * DEFAULT_BASELINE
    seasonal_period: float = DEFAULT_SEASONAL_PERIOD

    # None means DEFAULT_NOISE_FRACTION of the baseline
    noise_sigma: float = None
    holidays: tuple = ()
    transients: tuple = ()

    change: str = ChangeKind.NONE
    change_start: datetime.date = None

    # abrupt_drop
    depth: float = None
    recovery_days: int = None

    # gradual_ramp, radiance per day
    slope: float = None
    ramp_days: int = None

    # inferred from the change when None
    change_type: str = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "start_date",
                           _as_date(self.start_date, "start_date"))
        object.__setattr__(self, "change_start",
                           _as_date(self.change_start, "change_start"))
        object.__setattr__(self, "holidays", tuple(
            h if isinstance(h, HolidaySpike) else HolidaySpike(**h)
            for h in self.holidays))
        object.__setattr__(self, "transients", tuple(
            t if isinstance(t, Transient)
            else Transient(_as_date(t["date"], "transients"), t["amplitude"])
            for t in self.transients))
        self.validate()

    def validate(self):
        if self.change not in ChangeKind.values:
            raise ImproperlyConfigured(
                f"unknown scenario change '{self.change}', expected one of "
                f"{', '.join(ChangeKind.values)}")
        if self.length <= 0:
            raise ImproperlyConfigured("scenario length must be positive")
        if self.baseline <= 0:
            raise ImproperlyConfigured("scenario baseline must be positive")
        if self.seasonal_amplitude < 0:
            raise ImproperlyConfigured(
                "seasonal amplitude must be non-negative")
        if self.seasonal_period <= 0:
            raise ImproperlyConfigured("seasonal period must be positive")
        if self.noise_sigma is not None and self.noise_sigma < 0:
            raise ImproperlyConfigured("noise sigma must be non-negative")
        for holiday in self.holidays:
            if not 1 <= holiday.day_of_year <= 366 or holiday.width <= 0:
                raise ImproperlyConfigured(
                    f"invalid holiday spike {holiday}")

        if self.change == ChangeKind.NONE:
            if self.change_type is not None:
                raise ImproperlyConfigured(
                    "a scenario without change cannot carry a change type")
            return

        if self.change_start is None:
            raise ImproperlyConfigured(
                f"a '{self.change}' scenario needs a change start date")
        if self.change == ChangeKind.ABRUPT_DROP:
            if self.depth is None or self.depth <= 0:
                raise ImproperlyConfigured(
                    f"abrupt drop depth must be positive, while got "
                    f"{self.depth}")
            if self.recovery_days is not None and self.recovery_days <= 0:
                raise ImproperlyConfigured(
                    "recovery days must be positive when given")
        else:
            if self.slope is None or self.slope <= 0:
                raise ImproperlyConfigured(
                    f"ramp slope must be positive, while got {self.slope}")
            if self.ramp_days is None or self.ramp_days <= 0:
                raise ImproperlyConfigured("ramp days must be positive")

        if (self.change_type is not None
                and self.change_type not in ChangeType.values):
            raise ImproperlyConfigured(
                f"unknown change type '{self.change_type}'")

        w_i, w_o = conf.INPUT_WINDOW, conf.OUTPUT_WINDOW
        onset = self.change_index
        if onset < w_i + w_o:
            raise ImproperlyConfigured(
                f"change starts on day {onset}, before {w_i + w_o} baseline "
                f"days are available")
        if self.length < w_i + w_o + self.change_span:
            raise ImproperlyConfigured(
                f"a length of {self.length} days cannot hold the windows and "
                f"a change span of {self.change_span} days")
        if onset + self.change_span > self.length:
            raise ImproperlyConfigured(
                f"the change span ({onset}..{onset + self.change_span - 1}) "
                f"runs past the series end (day {self.length - 1})")

    @property
    def sigma(self):
        if self.noise_sigma is None:
            return DEFAULT_NOISE_FRACTION * self.baseline
        return self.noise_sigma

    @property
    def change_index(self):
        if self.change_start is None:
            return None
        return (self.change_start - self.start_date).days

    @property
    def change_span(self):
        """Days from the onset until the change settles."""
        if self.change == ChangeKind.ABRUPT_DROP:
            return self.recovery_days or 1
        if self.change == ChangeKind.GRADUAL_RAMP:
            return self.ramp_days
        return 0

    @property
    def training_end(self):
        """Last day of the training span: the day before the change, or the
        end of the first NO_CHANGE_TRAINING_FRACTION of a series without
        change."""
        if self.change_start is None:
            return self.start_date + datetime.timedelta(
                days=int(NO_CHANGE_TRAINING_FRACTION * self.length) - 1)
        return self.change_start - datetime.timedelta(days=1)

    @property
    def inferred_change_type(self):
        if self.change == ChangeKind.NONE:
            return None
        if self.change_type is not None:
            return self.change_type
        if self.change == ChangeKind.GRADUAL_RAMP:
            return ChangeType.URBANIZATION.value
        if self.recovery_days:
            return ChangeType.DISASTER.value
        return ChangeType.CONFLICT.value

    @property
    def dates(self):
        return pd.date_range(self.start_date, periods=self.length, freq="D")

    def to_dict(self):
        data = asdict(self)
        data["start_date"] = self.start_date.isoformat()
        data["change_start"] = (
            None if self.change_start is None
            else self.change_start.isoformat())
        data["change"] = str(self.change)
        data["transients"] = [
            {"date": t.date.isoformat(), "amplitude": t.amplitude}
            for t in self.transients]
        return data

    @classmethod
    def from_dict(cls, data):
        """Build a scenario from its JSON form. ``{"preset": "disaster",
        ...}`` starts from a preset and overrides the other keys."""
        if not isinstance(data, dict):
            raise ImproperlyConfigured("a scenario must be a JSON object")
        data = dict(data)
        preset = data.pop("preset", None)
        if preset is not None and preset not in PRESETS:
            raise ImproperlyConfigured(
                f"unknown scenario preset '{preset}', expected one of "
                f"{', '.join(PRESETS)}")

        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ImproperlyConfigured(
                f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        try:
            if preset is not None:
                return PRESETS[preset](**data)
            return cls(**data)
        except (TypeError, KeyError) as e:
            raise ImproperlyConfigured(f"invalid scenario: {e}")


def load_scenario(path):
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ImproperlyConfigured(f"invalid scenario file '{path}': {e}")
    return ScenarioSpec.from_dict(data)


def _holiday_bumps(spec, dates):
    bumps = np.zeros(spec.length)
    day_of_year = dates.dayofyear.to_numpy()
    for holiday in spec.holidays:
        distance = np.abs(day_of_year - holiday.day_of_year)
        # wrap around the turn of the year
        distance = np.minimum(distance, DEFAULT_SEASONAL_PERIOD - distance)
        bumps += holiday.amplitude * np.exp(-0.5 * (distance / holiday.width)**2)
    return bumps


def baseline_curve(spec):
    """The noise-free behavior without the change, i.e. what a perfect
    forecaster of the baseline would predict."""
    dates = spec.dates
    t = (dates - pd.Timestamp(dates[0].year, 1, 1)).days.to_numpy()
    seasonal = spec.seasonal_amplitude * np.sin(
        2 * np.pi * t / spec.seasonal_period)
    return spec.baseline + seasonal + _holiday_bumps(spec, dates)


def change_component(spec):
    """The injected change as an additive offset per day."""
    offset = np.zeros(spec.length)
    if spec.change == ChangeKind.NONE:
        return offset

    onset = spec.change_index
    t = np.arange(spec.length - onset, dtype=float)
    if spec.change == ChangeKind.ABRUPT_DROP:
        if not spec.recovery_days:
            offset[onset:] = -spec.depth
            return offset
        span = spec.recovery_days
        tau = span / RECOVERY_TIME_CONSTANTS
        floor = np.exp(-span / tau)
        deficit = spec.depth * (np.exp(-t / tau) - floor) / (1 - floor)
        offset[onset:] = -np.where(t < span, deficit, 0.0)
        return offset

    offset[onset:] = spec.slope * np.minimum(t + 1, spec.ramp_days)
    return offset


def ground_truth(spec):
    """The event covering the injected change, ``None`` without change.

    The event ends on the last recovery day of a drop or the last day of a
    ramp; only a drop that never recovers stays open.
    """
    change_type = spec.inferred_change_type
    if change_type is None:
        return None
    end = None
    if spec.change == ChangeKind.ABRUPT_DROP and spec.recovery_days:
        end = spec.change_start + datetime.timedelta(
            days=spec.recovery_days - 1)
    elif spec.change == ChangeKind.GRADUAL_RAMP:
        end = spec.change_start + datetime.timedelta(days=spec.ramp_days - 1)
    unit = (TimeUnit.YEARLY if change_type == ChangeType.URBANIZATION
            else TimeUnit.DAILY)
    return GroundTruthEvent(
        zone_id=spec.zone_id, start=spec.change_start, end=end,
        change_type=change_type, time_unit=unit.value)


def generate(spec):
    """Draw the scenario series; same spec and seed give the same series.

    :return: ``(NtlSeries, GroundTruthEvent or None)``
    """
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.sigma, spec.length) if spec.sigma > 0 else 0.0
    values = baseline_curve(spec) + change_component(spec) + noise

    for transient in spec.transients:
        index = (transient.date - spec.start_date).days
        if 0 <= index < spec.length:
            values[index] += transient.amplitude

    clipped = int(np.sum(values < 0))
    if clipped:
        logger.debug("Clipped %d negative synthetic value(s) to 0", clipped)
    values = np.clip(values, 0.0, None)

    series = NtlSeries(spec.zone_id, spec.start_date, values)
    event = ground_truth(spec)
    logger.info(
        "Generated %d days for '%s' (%s, seed %d)",
        spec.length, spec.zone_id, spec.change, spec.seed)
    return series, event


def inject_gaps(series, gap_fraction, seed=0):
    """Mask ``round(gap_fraction * len(series))`` randomly chosen days."""
    if not 0 <= gap_fraction < MAX_GAP_FRACTION:
        raise DomainError(
            f"gap fraction must be in [0, {MAX_GAP_FRACTION}), while got "
            f"{gap_fraction}")
    n_gaps = int(round(gap_fraction * len(series)))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(series), size=n_gaps, replace=False)
    mask = series.gap_mask.copy()
    mask[chosen] = True
    return NtlSeries(series.zone_id, series.start_date, series.values, mask)


def scenario_files(spec):
    """``(zone CSV text, ground-truth CSV text)`` of a scenario."""
    series, event = generate(spec)
    events = [] if event is None else [event]
    return zone_csv_text(series), ground_truth_csv_text(events)


def write_truth_csv(events, path):
    if isinstance(events, GroundTruthEvent):
        events = [events]
    events = [e for e in events if e is not None]
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(ground_truth_csv_text(events))
    return path


# {{{ presets

def _after(start, years):
    return start + datetime.timedelta(days=int(round(years * 365.25)))


def disaster_scenario(**overrides):
    """Five years, a 50% drop after three and a half years, recovered
    within 180 days."""
    start = _as_date(overrides.get("start_date", DEFAULT_START_DATE),
                     "start_date")
    baseline = overrides.get("baseline", DEFAULT_BASELINE)
    params = dict(
        zone_id="synthetic-disaster", start_date=start, length=1826,
        baseline=baseline, seasonal_amplitude=0.1 * baseline,
        change=ChangeKind.ABRUPT_DROP.value, change_start=_after(start, 3.5),
        depth=0.5 * baseline, recovery_days=180)
    params.update(overrides)
    return ScenarioSpec(**params)


def conflict_scenario(**overrides):
    """Five years, a 40% drop after three and a half years that never
    recovers."""
    start = _as_date(overrides.get("start_date", DEFAULT_START_DATE),
                     "start_date")
    baseline = overrides.get("baseline", DEFAULT_BASELINE)
    params = dict(
        zone_id="synthetic-conflict", start_date=start, length=1826,
        baseline=baseline, seasonal_amplitude=0.1 * baseline,
        change=ChangeKind.ABRUPT_DROP.value, change_start=_after(start, 3.5),
        depth=0.4 * baseline, recovery_days=None)
    params.update(overrides)
    return ScenarioSpec(**params)


def urbanization_scenario(**overrides):
    """Five years, three of baseline then a two-year ramp of 0.02% of the
    baseline per day."""
    start = _as_date(overrides.get("start_date", DEFAULT_START_DATE),
                     "start_date")
    baseline = overrides.get("baseline", DEFAULT_BASELINE)
    params = dict(
        zone_id="synthetic-urbanization", start_date=start, length=1826,
        baseline=baseline, seasonal_amplitude=0.1 * baseline,
        change=ChangeKind.GRADUAL_RAMP.value,
        change_start=_after(start, 3),
        slope=0.0002 * baseline, ramp_days=730)
    params.update(overrides)
    return ScenarioSpec(**params)


def no_change_scenario(**overrides):
    """Five years of baseline with a few single-day outliers."""
    start = _as_date(overrides.get("start_date", DEFAULT_START_DATE),
                     "start_date")
    baseline = overrides.get("baseline", DEFAULT_BASELINE)
    params = dict(
        zone_id="synthetic-no-change", start_date=start, length=1826,
        baseline=baseline, seasonal_amplitude=0.1 * baseline,
        transients=tuple(
            Transient(start + datetime.timedelta(days=day), 0.3 * baseline)
            for day in (400, 800, 1200, 1600)))
    params.update(overrides)
    return ScenarioSpec(**params)


PRESETS = {
    "disaster": disaster_scenario,
    "conflict": conflict_scenario,
    "urbanization": urbanization_scenario,
    "none": no_change_scenario,
}

# }}}
