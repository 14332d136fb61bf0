"""Build the daily, area-weighted urban radiance series from pixel records."""

import datetime
import json
import logging
import math
from dataclasses import dataclass, field
from io import StringIO
from itertools import groupby
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from ntlchange import conf
from ntlchange.forms import (PixelRecordForm, QualityFlag, ZoneRecordForm,
                             format_form_errors)
from ntlchange.utils import CSVParseError, DomainError, InputError

logger = logging.getLogger(__name__)

# {{{ WGS84 ellipsoid

WGS84_SEMI_MAJOR_KM = 6378.137
WGS84_FLATTENING = 1 / 298.257223563
WGS84_SEMI_MINOR_KM = WGS84_SEMI_MAJOR_KM * (1 - WGS84_FLATTENING)
WGS84_ECCENTRICITY = math.sqrt(WGS84_FLATTENING * (2 - WGS84_FLATTENING))

# }}}

PIXEL_CSV_HEADER = (
    "date", "pixel_id", "radiance", "latitude", "pixel_height_deg",
    "pixel_width_deg", "quality")
ZONE_CSV_HEADER = ("date", "radiance", "gap")

# Form error codes meaning the row could not be read at all, as opposed to
# a well-formed row violating a domain invariant.
PARSE_ERROR_CODES = frozenset(
    ["invalid", "required", "invalid_choice", "max_length"])


@dataclass(frozen=True)
class PixelRecord:
    date: datetime.date
    pixel_id: str
    radiance: float
    latitude: float
    pixel_height_deg: float
    pixel_width_deg: float
    quality_flag: str = QualityFlag.GOOD

    def __post_init__(self):
        if self.quality_flag not in QualityFlag.values:
            raise InputError(
                f"unknown quality flag '{self.quality_flag}' for pixel "
                f"'{self.pixel_id}'")
        if self.quality_flag != QualityFlag.MISSING and not (
                self.radiance is not None and self.radiance >= 0):
            raise InputError(
                f"pixel '{self.pixel_id}' on {self.date}: radiance must be "
                f"non-negative, while got {self.radiance}")
        if abs(self.latitude) > 90:
            raise InputError(f"latitude {self.latitude} is out of range")
        if self.pixel_height_deg <= 0 or self.pixel_width_deg <= 0:
            raise InputError(
                f"pixel '{self.pixel_id}' must have a positive angular extent")

    @property
    def is_valid(self):
        return self.quality_flag != QualityFlag.MISSING


@dataclass(frozen=True)
class UrbanZone:
    """A fixed set of pixels and their ground areas (km²). The pixel set is
    kept constant over the whole series."""
    zone_id: str
    pixel_ids: frozenset
    pixel_areas: dict = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "pixel_ids", frozenset(self.pixel_ids))
        if set(self.pixel_areas) != self.pixel_ids:
            raise InputError(
                f"zone '{self.zone_id}': pixel ids and pixel areas must cover "
                f"the same pixels")
        for pixel_id, area in self.pixel_areas.items():
            if not (math.isfinite(area) and area > 0):
                raise InputError(
                    f"zone '{self.zone_id}': area of pixel '{pixel_id}' must "
                    f"be positive, while got {area}")

    def __contains__(self, pixel_id):
        return pixel_id in self.pixel_ids

    @classmethod
    def from_dict(cls, data, records=None):
        """Build a zone from a zone spec dict::

            {"zone_id": "beira", "pixel_ids": ["p1", "p2"],
             "pixel_areas": {"p1": 0.21, "p2": 0.21}}

        ``pixel_areas`` may be omitted when ``records`` are given, the areas
        are then computed from the pixel geometry of the records.
        """
        try:
            zone_id = str(data["zone_id"])
            pixel_ids = [str(p) for p in data["pixel_ids"]]
        except (KeyError, TypeError) as e:
            raise InputError(f"invalid zone spec: {type(e).__name__}: {e}")

        areas = data.get("pixel_areas")
        if areas is None:
            if records is None:
                raise InputError(
                    f"zone '{zone_id}': 'pixel_areas' is required when no "
                    f"pixel records are available")
            computed = zone_from_records(
                zone_id, [r for r in records if r.pixel_id in set(pixel_ids)])
            missing = set(pixel_ids) - computed.pixel_ids
            if missing:
                raise InputError(
                    f"zone '{zone_id}': no records for pixels "
                    f"{', '.join(sorted(missing))}")
            return computed
        return cls(zone_id=zone_id, pixel_ids=frozenset(pixel_ids),
                   pixel_areas={str(k): float(v) for k, v in areas.items()})


class NtlSeries:
    """Daily radiance means of one zone, contiguous from ``start_date``.

    Days without any valid pixel are kept and flagged in ``gap_mask``; their
    entry in ``values`` is NaN.
    """

    def __init__(self, zone_id, start_date, values, gap_mask=None):
        values = np.array(values, dtype=float)
        if values.ndim != 1:
            raise InputError("series values must be one-dimensional")
        if gap_mask is None:
            gap_mask = np.isnan(values)
        gap_mask = np.array(gap_mask, dtype=bool)
        if gap_mask.shape != values.shape:
            raise InputError(
                f"gap mask length {gap_mask.size} differs from series length "
                f"{values.size}")

        observed = values[~gap_mask]
        if not np.all(np.isfinite(observed)):
            raise InputError("unmasked radiance values must be finite")
        if np.any(observed < 0):
            raise InputError("unmasked radiance values must be non-negative")

        values[gap_mask] = np.nan
        values.flags.writeable = False
        gap_mask.flags.writeable = False

        self.zone_id = str(zone_id)
        self.start_date = pd.Timestamp(start_date).date()
        self.values = values
        self.gap_mask = gap_mask

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return (f"<NtlSeries {self.zone_id} {self.start_date} "
                f"+{len(self)}d, {int(self.gap_mask.sum())} gaps>")

    @property
    def dates(self):
        return pd.date_range(self.start_date, periods=len(self), freq="D")

    @property
    def end_date(self):
        return self.start_date + datetime.timedelta(days=len(self) - 1)

    @property
    def observed_count(self):
        return int((~self.gap_mask).sum())

    def date_at(self, index):
        return self.start_date + datetime.timedelta(days=int(index))

    def index_of(self, date):
        """Position of ``date`` in the series, which may lie outside
        ``[0, len)``."""
        return (pd.Timestamp(date).date() - self.start_date).days

    def slice(self, start=None, stop=None):
        start = 0 if start is None else max(0, start)
        stop = len(self) if stop is None else min(len(self), stop)
        return NtlSeries(
            self.zone_id, self.date_at(start), self.values[start:stop],
            self.gap_mask[start:stop])

    def slice_until(self, date):
        """The days up to and including ``date``."""
        return self.slice(0, self.index_of(date) + 1)

    def to_frame(self):
        return pd.DataFrame(
            {"radiance": self.values, "gap": self.gap_mask.astype(int)},
            index=self.dates.rename("date"))


def _authalic_q(phi):
    e = WGS84_ECCENTRICITY
    s = np.sin(phi)
    return s / (1 - e**2 * s**2) + np.log((1 + e * s) / (1 - e * s)) / (2 * e)


def pixel_area_wgs84(latitude, height_deg, width_deg):
    """Surface area in km² of the latitude/longitude cell centered at
    ``latitude`` on the WGS84 ellipsoid.

    The area of a band between two parallels is ``b² Δλ (q(φ2) - q(φ1)) / 2``
    with ``q`` the authalic function of the ellipsoid.
    """
    values = (latitude, height_deg, width_deg)
    if not all(math.isfinite(v) for v in values):
        raise DomainError(f"cell geometry must be finite, while got {values}")
    if height_deg < 0 or width_deg < 0:
        raise DomainError(
            f"cell extent must be non-negative, while got height "
            f"{height_deg} and width {width_deg}")
    if abs(latitude) + height_deg / 2 > 90:
        raise DomainError(
            f"cell centered at latitude {latitude} with height {height_deg} "
            f"extends beyond the pole")

    phi_south = np.radians(latitude - height_deg / 2)
    phi_north = np.radians(latitude + height_deg / 2)
    band = _authalic_q(phi_north) - _authalic_q(phi_south)
    return float(
        WGS84_SEMI_MINOR_KM**2 * np.radians(width_deg) * band / 2)


def aggregate_zone(records, zone):
    """Area-weighted mean radiance of one day's records, or ``None`` when no
    pixel has valid data that day."""
    dates = set()
    for record in records:
        if record.pixel_id not in zone:
            raise InputError(
                f"pixel '{record.pixel_id}' does not belong to zone "
                f"'{zone.zone_id}'")
        dates.add(record.date)
    if len(dates) > 1:
        raise InputError(
            f"records span {len(dates)} days, aggregation needs one day")

    valid = [r for r in records if r.is_valid]
    if not valid:
        return None

    areas = np.array([zone.pixel_areas[r.pixel_id] for r in valid])
    radiances = np.array([r.radiance for r in valid], dtype=float)

    # Normalized weights keep a single pixel's radiance exact
    weights = areas / areas.sum()
    return float(np.dot(weights, radiances))


def zone_from_records(zone_id, records):
    """Build an :class:`UrbanZone` over every pixel seen in ``records``, with
    areas computed from the first record of each pixel."""
    areas = {}
    for record in records:
        if record.pixel_id not in areas:
            areas[record.pixel_id] = pixel_area_wgs84(
                record.latitude, record.pixel_height_deg,
                record.pixel_width_deg)
    if not areas:
        raise InputError(f"zone '{zone_id}' has no pixel records")
    return UrbanZone(
        zone_id=zone_id, pixel_ids=frozenset(areas), pixel_areas=areas)


def build_zone_series(records, zone):
    """Aggregate pixel records into a daily :class:`NtlSeries` spanning the
    first to the last recorded day. Days without records are gaps. Records
    of pixels outside the zone are dropped."""
    kept = [r for r in records if r.pixel_id in zone]
    dropped = len(records) - len(kept)
    if dropped:
        logger.warning(
            "Dropped %d record(s) of pixels outside zone '%s'",
            dropped, zone.zone_id)
    if not kept:
        raise InputError(f"no records for zone '{zone.zone_id}'")

    kept.sort(key=lambda r: r.date)
    start = kept[0].date
    n_days = (kept[-1].date - start).days + 1
    values = np.full(n_days, np.nan)
    for day, day_records in groupby(kept, key=lambda r: r.date):
        mean = aggregate_zone(list(day_records), zone)
        if mean is not None:
            values[(day - start).days] = mean

    series = NtlSeries(zone.zone_id, start, values)
    logger.info(
        "Built series for zone '%s': %d days, %d gaps",
        zone.zone_id, len(series), int(series.gap_mask.sum()))
    return series


def rolling_smooth(series, window=None):
    """Trailing rolling mean over ``window`` calendar days. Masked days are
    left out of every window mean, and a day whose whole window is masked
    stays masked. The head of the series uses partial windows."""
    if window is None:
        window = conf.SMOOTHING_WINDOW_DAYS
    if int(window) != window or window < 1:
        raise DomainError(
            f"smoothing window must be a positive integer, while got {window}")

    smoothed = (
        pd.Series(series.values)
        .rolling(window=int(window), min_periods=1)
        .mean()
        .to_numpy())
    return NtlSeries(series.zone_id, series.start_date, smoothed)


def _read_rows(path):
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, skipinitialspace=True,
            encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise CSVParseError("file is empty", line_number=1)
    except pd.errors.ParserError as e:
        raise CSVParseError(str(e))
    except UnicodeDecodeError as e:
        raise _encoding_error(path, e)
    return frame.fillna("")


def _encoding_error(path, error):
    return CSVParseError(
        f"'{path}' is not UTF-8 encoded ({error.reason} at byte "
        f"{error.start})", code="encoding")


def _clean_row(form_class, row, line_number):
    form = form_class(data=row)
    if form.is_valid():
        return form.cleaned_data

    codes = {
        error.code
        for errors in form.errors.as_data().values() for error in errors}
    message = f"line {line_number}: {format_form_errors(form)}"
    if codes <= PARSE_ERROR_CODES:
        raise CSVParseError(format_form_errors(form), line_number=line_number)
    raise ValidationError(message, code="invalid_row")


def _check_header(frame, expected, path):
    columns = tuple(c.strip() for c in frame.columns)
    if columns != expected:
        raise CSVParseError(
            f"unexpected header in '{path}': {','.join(columns)}, expected "
            f"{','.join(expected)}", line_number=1)


def load_pixel_csv(path):
    frame = _read_rows(path)
    _check_header(frame, PIXEL_CSV_HEADER, path)
    frame.columns = PIXEL_CSV_HEADER

    records = []
    # Line 1 is the header
    for line_number, row in enumerate(frame.to_dict("records"), start=2):
        data = _clean_row(PixelRecordForm, row, line_number)
        records.append(PixelRecord(
            date=data["date"],
            pixel_id=data["pixel_id"],
            radiance=data["radiance"],
            latitude=data["latitude"],
            pixel_height_deg=data["pixel_height_deg"],
            pixel_width_deg=data["pixel_width_deg"],
            quality_flag=data["quality"]))
    logger.info("Loaded %d pixel record(s) from '%s'", len(records), path)
    return records


def load_zone_csv(path, zone_id=None):
    frame = _read_rows(path)
    _check_header(frame, ZONE_CSV_HEADER, path)
    frame.columns = ZONE_CSV_HEADER
    if frame.empty:
        raise CSVParseError("no data rows", line_number=2)

    rows = {}
    for line_number, row in enumerate(frame.to_dict("records"), start=2):
        data = _clean_row(ZoneRecordForm, row, line_number)
        if data["date"] in rows:
            raise ValidationError(
                f"line {line_number}: duplicate date {data['date']}",
                code="duplicate_date")
        rows[data["date"]] = None if data["gap"] else data["radiance"]

    start, end = min(rows), max(rows)
    index = pd.date_range(start, end, freq="D")
    values = np.array(
        [rows.get(day.date()) for day in index], dtype=float)
    missing_days = len(index) - len(rows)
    if missing_days:
        logger.warning(
            "'%s' skips %d calendar day(s), they are masked as gaps",
            path, missing_days)

    if zone_id is None:
        zone_id = Path(path).stem
    return NtlSeries(zone_id, start, values)


def load_csv(path, zone_id=None):
    """Load either CSV schema, telling them apart by the header.

    :return: an :class:`NtlSeries` for a zone CSV, or a list of
       :class:`PixelRecord` for a pixel CSV.
    :raises CSVParseError: for unreadable rows, with the line number.
    :raises django.core.exceptions.ValidationError: for rows violating a
       domain invariant.
    """
    try:
        with open(path, encoding="utf-8") as f:
            header = tuple(c.strip() for c in f.readline().strip().split(","))
    except UnicodeDecodeError as e:
        raise _encoding_error(path, e)
    if header == ZONE_CSV_HEADER:
        return load_zone_csv(path, zone_id=zone_id)
    if header == PIXEL_CSV_HEADER:
        return load_pixel_csv(path)
    raise CSVParseError(
        f"unrecognized header in '{path}': {','.join(header)}", line_number=1)


def load_zone_spec(path, records=None):
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InputError(f"invalid zone spec '{path}': {e}")
    return UrbanZone.from_dict(data, records=records)


def zone_csv_text(series):
    frame = pd.DataFrame({
        "date": [d.strftime("%Y-%m-%d") for d in series.dates],
        "radiance": [
            "" if gap else repr(float(v))
            for v, gap in zip(series.values, series.gap_mask)],
        "gap": series.gap_mask.astype(int),
    })
    buf = StringIO()
    frame.to_csv(buf, index=False)
    return buf.getvalue()


def write_zone_csv(series, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(zone_csv_text(series))
    return path
