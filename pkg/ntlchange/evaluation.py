"""Detection quality against ground-truth events: recall, precision, F-beta
and detection delay, in daily or yearly units."""

import datetime
import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from ntlchange import conf, defaults
from ntlchange.detect import ENSEMBLE
from ntlchange.forms import ChangeType, GroundTruthForm, TimeUnit
from ntlchange.ingest import _check_header, _clean_row, _read_rows
from ntlchange.utils import DomainError, InputError

logger = logging.getLogger(__name__)

GROUND_TRUTH_CSV_HEADER = ("zone_id", "start", "end", "change_type", "unit")


@dataclass(frozen=True)
class GroundTruthEvent:
    zone_id: str
    start: datetime.date
    end: datetime.date = None
    change_type: str = ChangeType.DISASTER
    time_unit: str = TimeUnit.DAILY

    def __post_init__(self):
        if self.end is not None and self.end < self.start:
            raise DomainError(
                f"event of '{self.zone_id}' ends ({self.end}) before it "
                f"starts ({self.start})")
        if self.change_type not in ChangeType.values:
            raise DomainError(f"unknown change type '{self.change_type}'")
        if self.time_unit not in TimeUnit.values:
            raise DomainError(f"unknown time unit '{self.time_unit}'")
        if (self.time_unit == TimeUnit.YEARLY
                and self.change_type != ChangeType.URBANIZATION):
            raise DomainError(
                "yearly units are only used for urbanization events")

    @property
    def is_open(self):
        return self.end is None

    def mask(self, start_date, length):
        """Boolean mask of the event days over a daily series; an open event
        runs to the series end."""
        first = (self.start - start_date).days
        last = length - 1 if self.end is None else (self.end - start_date).days
        mask = np.zeros(length, dtype=bool)
        mask[max(first, 0):max(min(last + 1, length), 0)] = True
        return mask


def load_ground_truth_csv(path):
    frame = _read_rows(path)
    _check_header(frame, GROUND_TRUTH_CSV_HEADER, path)
    frame.columns = GROUND_TRUTH_CSV_HEADER
    events = []
    for line_number, row in enumerate(frame.to_dict("records"), start=2):
        data = _clean_row(GroundTruthForm, row, line_number)
        events.append(GroundTruthEvent(
            zone_id=data["zone_id"],
            start=data["start"],
            end=data["end"],
            change_type=data["change_type"],
            time_unit=data["unit"]))
    return events


def ground_truth_csv_text(events):
    frame = pd.DataFrame(
        [{
            "zone_id": e.zone_id,
            "start": e.start.isoformat(),
            "end": "" if e.end is None else e.end.isoformat(),
            "change_type": str(e.change_type),
            "unit": str(e.time_unit),
        } for e in events],
        columns=GROUND_TRUTH_CSV_HEADER)
    return frame.to_csv(index=False)


def _confusion(flags, truth):
    flags = np.asarray(flags, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if flags.shape != truth.shape:
        raise DomainError("flags and truth differ in length")
    return flags, truth


def recall(flags, truth):
    """``TP / (TP + FN)`` over the truth steps."""
    flags, truth = _confusion(flags, truth)
    n_truth = int(truth.sum())
    if n_truth == 0:
        raise DomainError("recall is undefined for an empty truth window")
    return int((flags & truth).sum()) / n_truth


def no_change_mask(observed, baseline_median, band=None):
    """Steps whose observation stays within ``band`` of the baseline
    median, the operational definition of "no change"."""
    band = conf.RECOVERY_BAND if band is None else band
    observed = np.asarray(observed, dtype=float)
    with np.errstate(invalid="ignore"):
        return np.abs(observed - baseline_median) <= band * abs(baseline_median)


def precision(flags, truth, observed, baseline_median, band=None,
              excluded=None):
    """``TP / (TP + FP)``, or ``None`` when nothing is counted.

    Only flags outside every truth window whose observation stays within
    ``band`` of the baseline median are false positives. Other flags
    outside the truth, and flags on ``excluded`` steps (the windows of the
    zone's other events), are neither credited nor penalized.
    """
    flags, truth = _confusion(flags, truth)
    tp = int((flags & truth).sum())
    fp = int(_false_positives(
        flags, truth, observed, baseline_median, band, excluded).sum())
    if tp + fp == 0:
        return None
    return tp / (tp + fp)


def _false_positives(flags, truth, observed, baseline_median, band, excluded):
    candidates = flags & ~truth & no_change_mask(observed, baseline_median, band)
    if excluded is not None:
        candidates &= ~np.asarray(excluded, dtype=bool)
    return candidates


def f_beta(p, r, beta=None):
    """``(1 + β²) P R / (β² P + R)``, 0 when both are 0 and ``None`` when
    precision is undefined."""
    beta = defaults.DEFAULT_F_BETA if beta is None else beta
    if p is None or r is None:
        return None
    for name, value in (("precision", p), ("recall", r)):
        if not 0 <= value <= 1:
            raise DomainError(f"{name} must be in [0, 1], while got {value}")
    if p == 0 and r == 0:
        return 0.0
    b2 = beta**2
    return (1 + b2) * p * r / (b2 * p + r)


def delay(persistent, truth_start, buffer=0):
    """Steps from ``truth_start`` to the first persistent detection at or
    after ``truth_start - buffer``; negative when the detection leads the
    recorded onset, ``None`` without detection."""
    steps = np.flatnonzero(np.asarray(persistent, dtype=bool))
    steps = steps[steps >= truth_start - buffer]
    if steps.size == 0:
        return None
    return int(steps[0] - truth_start)


def to_yearly(segments, start_date, length):
    """Yearly flags: a calendar year is flagged when any segment overlaps
    it. Returns a boolean :class:`pandas.Series` indexed by year."""
    dates = pd.date_range(start_date, periods=length, freq="D")
    years = pd.Index(sorted(set(dates.year)), name="year")
    flagged = pd.Series(False, index=years)
    for seg in segments:
        first = dates[max(seg.start, 0)].year
        last = dates[min(seg.end, length - 1)].year
        flagged.loc[first:last] = True
    return flagged


def _yearly_means(observed, start_date):
    series = pd.Series(
        np.asarray(observed, dtype=float),
        index=pd.date_range(start_date, periods=len(observed), freq="D"))
    return series.groupby(series.index.year).mean()


@dataclass
class EvalReport:
    zone_id: str
    unit: str
    recall: float
    precision: float
    f_beta: float
    delay: int
    tp: int
    fp: int
    fn: int
    uncredited: int
    truth_steps: int
    beta: float = defaults.DEFAULT_F_BETA
    detector: str = ENSEMBLE

    def to_dict(self):
        return asdict(self)


def _report(zone_id, unit, flags, truth, observed, median, band, beta,
            delay_steps, excluded, detector):
    fp_mask = _false_positives(flags, truth, observed, median, band, excluded)
    tp = int((flags & truth).sum())
    fn = int((~flags & truth).sum())
    fp = int(fp_mask.sum())
    uncredited = int((flags & ~truth & ~fp_mask).sum())
    r = recall(flags, truth)
    p = precision(flags, truth, observed, median, band, excluded=excluded)
    return EvalReport(
        zone_id=zone_id, unit=unit, recall=r, precision=p,
        f_beta=f_beta(p, r, beta), delay=delay_steps, tp=tp, fp=fp, fn=fn,
        uncredited=uncredited, truth_steps=int(truth.sum()), beta=beta,
        detector=str(detector))


def _year_span(event, years):
    last_year = years[-1] if event.end is None else event.end.year
    return (years >= event.start.year) & (years <= last_year)


def evaluate(report, event, beta=None, band=None, buffer_years=None,
             detector=ENSEMBLE, other_events=()):
    """Score one detector of a :class:`~ntlchange.detect.ChangeReport`
    against one event.

    Only flags inside persistent segments count as detections. Yearly
    events are scored on calendar years, with a tolerance of
    ``buffer_years`` around the recorded start. Flags inside the window of
    one of ``other_events`` are not false positives.

    :param detector: ``"ensemble"`` or the architecture id of a member.
    """
    beta = defaults.DEFAULT_F_BETA if beta is None else beta
    band = conf.RECOVERY_BAND if band is None else band
    buffer_years = (
        defaults.DEFAULT_YEARLY_BUFFER if buffer_years is None else buffer_years)
    if event.zone_id != report.zone_id:
        logger.warning(
            "Evaluating zone '%s' against an event of zone '%s'",
            report.zone_id, event.zone_id)
    others = [e for e in other_events if e != event]

    n = len(report)
    observed = report.residuals.observed
    median = report.baseline_median
    detection = report.detection(detector)
    persistent = detection.persistent_flags

    if event.time_unit == TimeUnit.DAILY:
        truth = event.mask(report.start_date, n)
        if not truth.any():
            raise InputError(
                f"event {event.start}..{event.end or 'open'} lies outside "
                f"the monitored series")
        elsewhere = np.zeros(n, dtype=bool)
        for other in others:
            elsewhere |= other.mask(report.start_date, n)
        truth_start = (event.start - report.start_date).days
        return _report(
            report.zone_id, TimeUnit.DAILY.value, persistent, truth, observed,
            median, band, beta, delay(persistent, truth_start),
            elsewhere & ~truth, detector)

    yearly = to_yearly(detection.segments, report.start_date, n)
    years = yearly.index
    truth = np.asarray(_year_span(event, years))
    if not truth.any():
        raise InputError(
            f"event {event.start}..{event.end or 'open'} lies outside the "
            f"monitored series")
    flags = yearly.to_numpy()

    # years within the buffer of the event are not false positives
    last_year = years[-1] if event.end is None else event.end.year
    excluded = np.asarray(
        (years >= event.start.year - buffer_years)
        & (years <= last_year + buffer_years))
    for other in others:
        excluded |= np.asarray(_year_span(other, years))
    means = _yearly_means(observed, report.start_date).reindex(years)

    truth_start = int(np.flatnonzero(years == event.start.year)[0]) if (
        event.start.year in years) else int(event.start.year - years[0])
    return _report(
        report.zone_id, TimeUnit.YEARLY.value, flags, truth,
        means.to_numpy(), median, band, beta,
        delay(flags, truth_start, buffer=buffer_years),
        excluded & ~truth, detector)


def evaluate_all(report, events, beta=None, band=None, buffer_years=None):
    """Score every detector of ``report`` against each event of its zone.

    :return: a list of ``(event, {detector: EvalReport})`` pairs, the
       ensemble first.
    """
    events = [e for e in events if e.zone_id == report.zone_id]
    return [
        (event, {
            detector: evaluate(
                report, event, beta=beta, band=band,
                buffer_years=buffer_years, detector=detector,
                other_events=events)
            for detector in report.detectors})
        for event in events]


# {{{ published F-beta arithmetic

# (recall %, precision %, F-beta %) triples, per city and detector
PUBLISHED_F_BETA = {
    ("Beira", "Ensemble"): (100.0, 13.18, 43.15),
    ("Beira", "FCNN"): (97.14, 13.14, 42.63),
    ("Beira", "CNN"): (100.0, 12.43, 41.51),
    ("Beira", "LSTM"): (87.54, 11.53, 37.76),
    ("San Juan", "Ensemble"): (100.0, 84.50, 96.46),
    ("San Juan", "FCNN"): (100.0, 87.03, 97.10),
    ("San Juan", "CNN"): (100.0, 90.83, 98.02),
    ("Ponce", "FCNN"): (99.57, 98.74, 99.40),
    ("Ponce", "CNN"): (99.16, 99.16, 99.16),
    ("Ponce", "LSTM"): (97.89, 90.63, 96.34),
    ("Caguas", "Ensemble"): (100.0, 70.53, 92.29),
    ("Caguas", "CNN"): (100.0, 77.45, 94.50),
    ("Caguas", "LSTM"): (99.57, 68.60, 91.32),
    ("Adwa", "Ensemble"): (100.0, 90.65, 97.98),
    ("Adwa", "FCNN"): (87.16, 92.00, 88.08),
    ("Adwa", "CNN"): (100.0, 91.70, 98.22),
    ("Adwa", "LSTM"): (100.0, 87.48, 97.22),
    ("Ad Dala", "Ensemble"): (33.27, 100.0, 38.39),
    ("Ad Dala", "FCNN"): (33.27, 100.0, 38.39),
    ("Ad Dala", "CNN"): (33.27, 100.0, 38.39),
    ("Ad Dala", "LSTM"): (32.02, 99.31, 37.04),
    ("Sana'a", "Ensemble"): (33.27, 100.0, 38.39),
    ("Sana'a", "FCNN"): (33.27, 100.0, 38.39),
    ("Sana'a", "CNN"): (33.27, 100.0, 38.39),
    ("Kathmandu", "Ensemble"): (100.0, 100.0, 100.0),
    ("Kathmandu", "FCNN"): (100.0, 100.0, 100.0),
    ("Kathmandu", "CNN"): (100.0, 100.0, 100.0),
    ("Arua", "Ensemble"): (100.0, 100.0, 100.0),
    ("Arua", "FCNN"): (100.0, 100.0, 100.0),
    ("Arua", "CNN"): (100.0, 100.0, 100.0),
    ("Arua", "LSTM"): (100.0, 100.0, 100.0),
    ("Jinja", "Ensemble"): (100.0, 100.0, 100.0),
    ("Jinja", "FCNN"): (100.0, 100.0, 100.0),
    ("Jinja", "CNN"): (100.0, 100.0, 100.0),
    ("Jinja", "LSTM"): (100.0, 100.0, 100.0),
}

# Cells whose printed F-beta does not follow from their own recall and
# precision
PUBLISHED_F_BETA_SKIPPED = {
    ("San Juan", "LSTM"): "printed 92.98, recall and precision give 92.85",
    ("Ponce", "Ensemble"): "printed 99.74, recall and precision give 99.41",
    ("Caguas", "FCNN"): "printed 89.83, recall and precision give 90.11",
    ("Sana'a", "LSTM"): "printed 100, recall and precision give 38.39",
    ("Kathmandu", "LSTM"): "printed as a placeholder instead of a number",
}

# }}}
