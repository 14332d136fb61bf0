"""Residual thresholding, change segments, per-event metrics and phase
labels."""

import datetime
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from django.db import models as db_models
from django.utils.translation import gettext_lazy as _

from ntlchange import conf, defaults
from ntlchange.utils import (AlignmentError, DomainError, InputError,
                             InsufficientDataError, sign)

logger = logging.getLogger(__name__)


class Phase(db_models.TextChoices):
    BASELINE = "baseline", _("Pre-change baseline")
    CHANGE = "change", _("Change")
    CONTINUING_RECOVERY = "continuing_recovery", _("Continuing recovery")
    FULL_RECOVERY = "full_recovery", _("Full recovery")


@dataclass
class ResidualSeries:
    """``values`` is ``observed - predicted``, NaN where either is missing."""
    start_date: datetime.date
    observed: np.ndarray
    predicted: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    @property
    def squared(self):
        return self.values**2

    @property
    def defined(self):
        return ~np.isnan(self.values)

    def date_at(self, index):
        return self.start_date + datetime.timedelta(days=int(index))


def _residuals(observed_values, predicted_values, start_date):
    observed_values = np.asarray(observed_values, dtype=float)
    predicted_values = np.asarray(predicted_values, dtype=float)
    return ResidualSeries(
        start_date=start_date,
        observed=observed_values,
        predicted=predicted_values,
        values=observed_values - predicted_values)


def residuals(observed, ensemble):
    """``r_t = x_t - x̂_t`` of an :class:`~ntlchange.ingest.NtlSeries`
    against an ensemble (or single member) forecast."""
    if (len(observed) != len(ensemble.prediction)
            or observed.start_date != ensemble.start_date):
        raise AlignmentError(
            f"series '{observed.zone_id}' ({observed.start_date}, "
            f"{len(observed)} days) and forecast ({ensemble.start_date}, "
            f"{len(ensemble.prediction)} days) are not aligned")
    return _residuals(observed.values, ensemble.prediction, observed.start_date)


@dataclass
class ThresholdResult:
    tau: float
    flags: np.ndarray


def _check_percent(percent):
    if not 0 < percent < 100:
        raise DomainError(
            f"threshold percent must be strictly between 0 and 100, while "
            f"got {percent}")


def threshold(residual_series, percent=None, scope=None):
    """Flag the steps whose squared residual exceeds the
    ``(100 - percent)``-th percentile ``tau``.

    :param residual_series: a :class:`ResidualSeries` or an array of
       residuals (NaN = undefined).
    :param scope: optional boolean mask restricting the monitored steps.
    :return: a :class:`ThresholdResult`.

    ``tau`` is linearly interpolated between order statistics. When steps
    are tied at ``tau`` and fewer than ``percent`` of the steps exceed it,
    the most recent tied steps are flagged up to that quota. An all-equal
    distribution flags nothing.
    """
    percent = conf.THRESHOLD_PERCENT if percent is None else percent
    _check_percent(percent)

    values = getattr(residual_series, "values", residual_series)
    squared = np.asarray(values, dtype=float)**2
    monitored = ~np.isnan(squared)
    if scope is not None:
        monitored &= np.asarray(scope, dtype=bool)
    n = int(monitored.sum())
    if n == 0:
        raise InsufficientDataError(
            "no defined residual to threshold", required=1, available=0)

    sample = squared[monitored]
    tau = float(np.percentile(sample, 100 - percent))
    flags = monitored & (squared > tau)

    quota = int(np.floor(percent / 100 * n))
    missing = quota - int(flags.sum())
    if missing > 0 and tau > sample.min():
        tied = np.flatnonzero(monitored & (squared == tau))
        flags[tied[::-1][:missing]] = True
    return ThresholdResult(tau=tau, flags=flags)


class StreamingThreshold:
    """Sequential thresholding over a trailing window of residuals.

    Feed residuals one step at a time with :meth:`update`; each call returns
    whether the step is flagged against ``tau`` computed over the window
    that ends at this step. Not thread-safe, keep one instance per zone.
    """

    def __init__(self, percent=None, window_days=None):
        self.percent = conf.THRESHOLD_PERCENT if percent is None else percent
        _check_percent(self.percent)
        self.window_days = int(
            conf.STREAMING_WINDOW_DAYS if window_days is None else window_days)
        if self.window_days < 1:
            raise DomainError(
                f"streaming window must be positive, while got "
                f"{self.window_days}")
        self._window = deque(maxlen=self.window_days)
        self.tau = None

    def update(self, residual):
        squared = float(residual)**2
        self._window.append(squared)
        sample = np.array(self._window)
        sample = sample[~np.isnan(sample)]
        if np.isnan(squared) or sample.size == 0:
            return False
        self.tau = float(np.percentile(sample, 100 - self.percent))
        return squared > self.tau


def streaming_threshold(residual_series, percent=None, window_days=None,
                        scope=None):
    """Run a :class:`StreamingThreshold` over a whole residual series.

    :return: ``(flags, taus)``, ``taus`` being NaN before the first defined
       residual.
    """
    values = np.asarray(
        getattr(residual_series, "values", residual_series), dtype=float)
    if scope is not None:
        values = np.where(np.asarray(scope, dtype=bool), values, np.nan)
    if np.isnan(values).all():
        raise InsufficientDataError(
            "no defined residual to threshold", required=1, available=0)

    state = StreamingThreshold(percent=percent, window_days=window_days)
    flags = np.zeros(len(values), dtype=bool)
    taus = np.full(len(values), np.nan)
    for t, value in enumerate(values):
        flags[t] = state.update(value)
        if state.tau is not None:
            taus[t] = state.tau
    return flags, taus


@dataclass
class ChangeSegment:
    start: int
    inflection: int
    end: int
    start_rate: float
    end_rate: float
    mean_severity: float
    direction: int

    # the segment reaches the last monitored step and may still continue
    open_ended: bool = False
    flagged_days: int = 0

    @property
    def length(self):
        return self.end - self.start + 1

    def flagged_steps(self, flags):
        steps = np.arange(self.start, self.end + 1)
        return steps[np.asarray(flags)[steps]]


def segment(flags, residual_series, min_persistence=None, gap_tolerance=None):
    """Group flagged steps into change segments.

    Flagged steps separated by at most ``gap_tolerance`` unflagged days form
    one run; runs spanning fewer than ``min_persistence`` days are dropped
    as transients.
    """
    min_persistence = (
        conf.MIN_PERSISTENCE_DAYS if min_persistence is None else min_persistence)
    gap_tolerance = (
        conf.GAP_TOLERANCE_DAYS if gap_tolerance is None else gap_tolerance)
    if min_persistence < 1:
        raise DomainError(
            f"min_persistence must be at least 1, while got {min_persistence}")
    if gap_tolerance < 0:
        raise DomainError(
            f"gap_tolerance must be non-negative, while got {gap_tolerance}")

    flags = np.asarray(flags, dtype=bool)
    if len(flags) != len(residual_series):
        raise AlignmentError("flags and residuals differ in length")

    steps = np.flatnonzero(flags)
    if steps.size == 0:
        return []

    r = residual_series.values
    x = residual_series.observed
    defined = np.flatnonzero(~np.isnan(r))
    last_monitored = defined[-1] if defined.size else len(r) - 1

    breaks = np.flatnonzero(np.diff(steps) > gap_tolerance + 1)
    segments = []
    for run in np.split(steps, breaks + 1):
        s, e = int(run[0]), int(run[-1])
        if e - s + 1 < min_persistence:
            continue

        span = np.abs(r[s:e + 1])
        i = s + int(np.nanargmax(span))
        flagged_r = r[run]
        segments.append(ChangeSegment(
            start=s,
            inflection=i,
            end=e,
            start_rate=float((x[i] - x[s]) / (i - s + 1)),
            end_rate=float((x[e] - x[i]) / (e - i + 1)),
            mean_severity=float(np.mean(np.abs(flagged_r))),
            direction=sign(float(np.mean(flagged_r))),
            open_ended=e >= last_monitored,
            flagged_days=int(run.size)))
    return segments


def persistent_flags(flags, segments):
    """``flags`` restricted to the steps inside ``segments``."""
    flags = np.asarray(flags, dtype=bool)
    kept = np.zeros_like(flags)
    for seg in segments:
        kept[seg.start:seg.end + 1] = flags[seg.start:seg.end + 1]
    return kept


def phase_labels(residual_series, segments, baseline_median, band=None):
    """Label every step with a :class:`Phase`.

    Steps before the first segment are baseline. From a segment start up to
    its inflection the phase is change; afterwards it is continuing recovery
    until the observation first comes back within ``band`` of the baseline
    median, and full recovery from then on until the next segment.
    """
    band = conf.RECOVERY_BAND if band is None else band
    x = residual_series.observed
    n = len(x)
    labels = np.full(n, Phase.BASELINE.value, dtype=object)
    tolerance = band * abs(baseline_median)

    ordered = sorted(segments, key=lambda seg: seg.start)
    for k, seg in enumerate(ordered):
        stop = ordered[k + 1].start if k + 1 < len(ordered) else n
        labels[seg.start:seg.inflection + 1] = Phase.CHANGE.value
        recovered = False
        for t in range(seg.inflection + 1, stop):
            if not recovered and not np.isnan(x[t]):
                recovered = abs(x[t] - baseline_median) <= tolerance
            labels[t] = (Phase.FULL_RECOVERY.value if recovered
                         else Phase.CONTINUING_RECOVERY.value)
    return labels


def member_flags(member_residuals, percent=None, scope=None, mode=None,
                 window_days=None):
    """Flags and thresholds of each member on its own residuals.

    :param member_residuals: dict mapping architecture ids to residual
       arrays or :class:`ResidualSeries`.
    :return: ``(flags, taus)`` dicts keyed like ``member_residuals``.
    """
    mode = conf.THRESHOLD_MODE if mode is None else mode
    flags, taus = {}, {}
    for arch, series in member_residuals.items():
        if mode == defaults.THRESHOLD_MODE_STREAMING:
            flags[arch], taus[arch] = streaming_threshold(
                series, percent=percent, window_days=window_days, scope=scope)
        else:
            result = threshold(series, percent=percent, scope=scope)
            flags[arch], taus[arch] = result.flags, result.tau
    return flags, taus


def confidence(member_residuals, taus, step):
    """Number of members whose squared residual at ``step`` exceeds their
    own threshold."""
    count = 0
    for arch, series in member_residuals.items():
        values = getattr(series, "values", series)
        tau = taus[arch]
        if np.ndim(tau):
            tau = tau[step]
        value = values[step]
        if not np.isnan(value) and value**2 > tau:
            count += 1
    return count


def confidences(member_residuals, taus, length, scope=None):
    """:func:`confidence` at every step. Tie-quota flags do not count, and
    steps outside ``scope`` get 0."""
    counts = np.zeros(length, dtype=int)
    for arch, series in member_residuals.items():
        squared = np.asarray(getattr(series, "values", series), dtype=float)**2
        tau = np.asarray(taus[arch], dtype=float)
        with np.errstate(invalid="ignore"):
            counts += (squared > tau).astype(int)
    if scope is not None:
        counts[~np.asarray(scope, dtype=bool)] = 0
    return counts


ENSEMBLE = "ensemble"


def _architecture_order(arch):
    try:
        return defaults.ARCHITECTURES.index(arch), arch
    except ValueError:
        return len(defaults.ARCHITECTURES), arch


@dataclass
class Detection:
    """Flags, threshold and change segments of one detector."""
    flags: np.ndarray
    tau: object
    segments: list

    @property
    def persistent_flags(self):
        return persistent_flags(self.flags, self.segments)


@dataclass
class ChangePoint:
    index: int
    date: datetime.date
    severity: float
    direction: int
    confidence: int


def change_points(residual_series, flags, confidences=None):
    points = []
    for t in np.flatnonzero(flags):
        r = float(residual_series.values[t])
        points.append(ChangePoint(
            index=int(t),
            date=residual_series.date_at(t),
            severity=abs(r),
            direction=sign(r),
            confidence=int(confidences[t]) if confidences is not None else 0))
    return points


def baseline_median(series, training_end_index):
    """Median observed radiance over the training span."""
    observed = series.values[:training_end_index + 1]
    if np.isnan(observed).all():
        raise InsufficientDataError(
            "no observation in the training span", required=1, available=0)
    return float(np.nanmedian(observed))


@dataclass
class ChangeReport:
    zone_id: str
    start_date: datetime.date
    training_end_index: int
    baseline_median: float
    residuals: ResidualSeries
    flags: np.ndarray
    phases: np.ndarray
    confidence: np.ndarray
    segments: list
    tau: object
    settings: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)

    # architecture id -> Detection on that member's own residuals
    members: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.flags)

    @property
    def change_points(self):
        return change_points(self.residuals, self.flags, self.confidence)

    @property
    def persistent_flags(self):
        return persistent_flags(self.flags, self.segments)

    @property
    def training_end(self):
        return self.residuals.date_at(self.training_end_index)

    @property
    def detectors(self):
        """The ensemble first, then the members."""
        return [ENSEMBLE, *self.members]

    def detection(self, detector=ENSEMBLE):
        if detector == ENSEMBLE:
            return Detection(self.flags, self.tau, self.segments)
        try:
            return self.members[detector]
        except KeyError:
            raise InputError(
                f"the report of '{self.zone_id}' has no detector "
                f"'{detector}', available are {', '.join(self.detectors)}")

    def _segment_dict(self, seg):
        r = self.residuals
        return {
            "start": r.date_at(seg.start).isoformat(),
            "inflection": r.date_at(seg.inflection).isoformat(),
            "end": r.date_at(seg.end).isoformat(),
            "open_ended": seg.open_ended,
            "start_rate": seg.start_rate,
            "end_rate": seg.end_rate,
            "mean_severity": seg.mean_severity,
            "direction": seg.direction,
            "flagged_days": seg.flagged_days,
        }

    def to_dict(self):
        r = self.residuals
        streaming = np.ndim(self.tau) > 0
        steps = []
        for t in range(len(self)):
            step = {
                "date": r.date_at(t).isoformat(),
                "observed": r.observed[t],
                "ensemble": r.predicted[t],
                "r": r.values[t],
                "flagged": bool(self.flags[t]),
                "phase": self.phases[t],
                "confidence": int(self.confidence[t]),
            }
            if streaming:
                step["tau"] = self.tau[t]
            if self.members:
                step["member_flagged"] = {
                    arch: bool(m.flags[t]) for arch, m in self.members.items()}
            steps.append(step)

        return {
            "format": defaults.REPORT_FORMAT,
            "zone_id": self.zone_id,
            "start_date": self.start_date.isoformat(),
            "training_end": self.training_end.isoformat(),
            "baseline_median": self.baseline_median,
            "settings": self.settings,
            "weights": self.weights,
            "tau": None if streaming else self.tau,
            "summary": {
                "steps": len(self),
                "flagged_steps": int(self.flags.sum()),
                "persistent_flagged_steps": int(self.persistent_flags.sum()),
                "segments": len(self.segments),
            },
            "steps": steps,
            "segments": [self._segment_dict(seg) for seg in self.segments],
            "members": {
                arch: {
                    "tau": None if np.ndim(m.tau) else m.tau,
                    "flagged_steps": int(m.flags.sum()),
                    "persistent_flagged_steps": int(m.persistent_flags.sum()),
                    "segments": [self._segment_dict(seg) for seg in m.segments],
                }
                for arch, m in self.members.items()},
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != defaults.REPORT_FORMAT:
            raise InputError(
                f"unsupported report format '{data.get('format')}', expected "
                f"'{defaults.REPORT_FORMAT}'")

        steps = data["steps"]
        start_date = datetime.date.fromisoformat(data["start_date"])

        def column(name):
            return np.array(
                [np.nan if s[name] is None else s[name] for s in steps],
                dtype=float)

        def index_of(iso):
            return (datetime.date.fromisoformat(iso) - start_date).days

        def segments_of(items):
            return [
                ChangeSegment(
                    start=index_of(s["start"]),
                    inflection=index_of(s["inflection"]),
                    end=index_of(s["end"]),
                    start_rate=s["start_rate"],
                    end_rate=s["end_rate"],
                    mean_severity=s["mean_severity"],
                    direction=s["direction"],
                    open_ended=s["open_ended"],
                    flagged_days=s["flagged_days"])
                for s in items]

        observed = column("observed")
        predicted = column("ensemble")
        res = ResidualSeries(
            start_date=start_date, observed=observed, predicted=predicted,
            values=column("r"))
        if steps and "tau" in steps[0]:
            tau = column("tau")
        else:
            tau = data.get("tau")

        members = {
            arch: Detection(
                flags=np.array(
                    [s["member_flagged"][arch] for s in steps], dtype=bool),
                tau=member["tau"],
                segments=segments_of(member["segments"]))
            for arch, member in sorted(
                data.get("members", {}).items(),
                key=lambda item: _architecture_order(item[0]))}
        return cls(
            zone_id=data["zone_id"],
            start_date=start_date,
            training_end_index=index_of(data["training_end"]),
            baseline_median=data["baseline_median"],
            residuals=res,
            flags=np.array([s["flagged"] for s in steps], dtype=bool),
            phases=np.array([s["phase"] for s in steps], dtype=object),
            confidence=np.array([s["confidence"] for s in steps], dtype=int),
            segments=segments_of(data["segments"]),
            tau=tau,
            settings=data.get("settings", {}),
            weights=data.get("weights", {}),
            members=members)


def detect_changes(series, forecast, training_end_index, percent=None,
                   mode=None, scope=None, min_persistence=None,
                   gap_tolerance=None, band=None, window_days=None):
    """Run residuals, thresholding, segmentation, confidence and phase
    labelling for one zone.

    :param series: the observed :class:`~ntlchange.ingest.NtlSeries`.
    :param forecast: an :class:`~ntlchange.forecast.EnsembleForecast`
       aligned with ``series``.
    :param training_end_index: index of the last training day; the baseline
       median is taken up to it and the ``"test"`` scope starts after it.
    """
    percent = conf.THRESHOLD_PERCENT if percent is None else percent
    mode = conf.THRESHOLD_MODE if mode is None else mode
    scope = conf.THRESHOLD_SCOPE if scope is None else scope
    min_persistence = (
        conf.MIN_PERSISTENCE_DAYS if min_persistence is None else min_persistence)
    gap_tolerance = (
        conf.GAP_TOLERANCE_DAYS if gap_tolerance is None else gap_tolerance)
    band = conf.RECOVERY_BAND if band is None else band
    window_days = (
        conf.STREAMING_WINDOW_DAYS if window_days is None else window_days)
    if mode not in defaults.THRESHOLD_MODES:
        raise DomainError(f"unknown threshold mode '{mode}'")
    if scope not in defaults.THRESHOLD_SCOPES:
        raise DomainError(f"unknown threshold scope '{scope}'")

    res = residuals(series, forecast)
    scope_mask = None
    if scope == defaults.THRESHOLD_SCOPE_TEST:
        scope_mask = np.arange(len(series)) > training_end_index

    if mode == defaults.THRESHOLD_MODE_STREAMING:
        flags, tau = streaming_threshold(
            res, percent=percent, window_days=window_days, scope=scope_mask)
    else:
        result = threshold(res, percent=percent, scope=scope_mask)
        flags, tau = result.flags, result.tau

    members = {
        m.architecture: _residuals(series.values, m.prediction, series.start_date)
        for m in forecast.members}
    m_flags, m_taus = member_flags(
        members, percent=percent, scope=scope_mask, mode=mode,
        window_days=window_days)
    counts = confidences(members, m_taus, len(series), scope=scope_mask)

    segments = segment(
        flags, res, min_persistence=min_persistence, gap_tolerance=gap_tolerance)
    detections = {
        arch: Detection(
            flags=m_flags[arch], tau=m_taus[arch],
            segments=segment(
                m_flags[arch], member, min_persistence=min_persistence,
                gap_tolerance=gap_tolerance))
        for arch, member in members.items()}
    median = baseline_median(series, training_end_index)
    phases = phase_labels(res, segments, median, band=band)

    logger.info(
        "Zone '%s': %s tau %s, %d flagged step(s), %d segment(s)",
        series.zone_id, mode,
        f"{tau:.6g}" if np.ndim(tau) == 0 else "per step",
        int(flags.sum()), len(segments))

    return ChangeReport(
        zone_id=series.zone_id,
        start_date=series.start_date,
        training_end_index=int(training_end_index),
        baseline_median=median,
        residuals=res,
        flags=flags,
        phases=phases,
        confidence=counts,
        segments=segments,
        tau=tau,
        settings={
            "percent": percent,
            "mode": mode,
            "scope": scope,
            "min_persistence_days": min_persistence,
            "gap_tolerance_days": gap_tolerance,
            "recovery_band": band,
            "streaming_window_days": window_days,
        },
        weights=dict(forecast.weights),
        members=detections)
