"""Open-loop sliding forecasts, median aggregation of overlapping windows and
the weighted ensemble."""

import logging
import warnings
from dataclasses import dataclass, field
from io import StringIO

import numpy as np
import pandas as pd

from ntlchange import conf, defaults
from ntlchange.models import ArchitectureId
from ntlchange.utils import (AlignmentError, InsufficientDataError,
                             InvalidWeights, get_formatted_weights)

logger = logging.getLogger(__name__)

DEFAULT_WEIGHTS = dict(defaults.DEFAULT_ENSEMBLE_WEIGHTS)

FORECAST_CSV_HEADER = (
    "date", "observed", "fcnn", "cnn", "lstm", "ensemble", "coverage")


@dataclass
class ModelForecast:
    """Per-day predictions of one member, aligned with the series it was
    computed on. Days no window covers hold NaN and a coverage of 0."""
    architecture: str
    start_date: object
    prediction: np.ndarray
    coverage: np.ndarray

    def __len__(self):
        return len(self.prediction)

    @property
    def covered(self):
        return self.coverage > 0


@dataclass
class EnsembleForecast:
    weights: dict
    start_date: object
    prediction: np.ndarray
    members: list = field(default_factory=list)

    def __len__(self):
        return len(self.prediction)

    def member(self, architecture):
        architecture = str(architecture).upper()
        for forecast in self.members:
            if forecast.architecture == architecture:
                return forecast
        raise KeyError(architecture)

    @property
    def coverage(self):
        return np.min([m.coverage for m in self.members], axis=0)


def aggregate_overlaps(window_predictions, starts, length, w_i):
    """Median over every window covering each day.

    :param window_predictions: ``(n, w_o)`` forecasts, row ``k`` made from the
       ``w_i`` days beginning at ``starts[k]``.
    :param length: number of days of the aligned series.
    :return: ``(prediction, coverage)``, arrays of ``length``.
    """
    window_predictions = np.atleast_2d(np.asarray(window_predictions, float))
    w_o = window_predictions.shape[1]
    stacked = np.full((length, w_o), np.nan)
    for row, start in zip(window_predictions, starts):
        first = start + w_i
        # column j holds the forecast made j days ahead of the window end
        for lead in range(min(w_o, length - first)):
            stacked[first + lead, lead] = row[lead]

    coverage = np.sum(~np.isnan(stacked), axis=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        prediction = np.nanmedian(stacked, axis=1)
    return prediction, coverage


def sliding_forecast(model, series):
    """Forecast every day of ``series`` from the preceding observed days.

    Each window is fed true observations only; a day's prediction is the
    median of all windows covering it. Windows with masked inputs are
    skipped.
    """
    w_i = model.input_window
    if len(series) < w_i + 1:
        raise InsufficientDataError(
            f"series '{series.zone_id}' is too short to forecast with a "
            f"{w_i}-day input window", required=w_i + 1, available=len(series))

    windows = np.lib.stride_tricks.sliding_window_view(
        series.values[:-1], w_i)
    starts = np.flatnonzero(~np.isnan(windows).any(axis=1))
    predictions = model.predict(windows[starts])
    prediction, coverage = aggregate_overlaps(
        predictions, starts, len(series), w_i)

    logger.debug(
        "%s forecast %d window(s) over '%s'",
        model.architecture.value, len(starts), series.zone_id)
    return ModelForecast(
        architecture=model.architecture.value,
        start_date=series.start_date,
        prediction=prediction,
        coverage=coverage)


def ensemble(forecasts, weights=None):
    """Weighted average of member forecasts.

    Members are combined in a fixed architecture order, so the result does
    not depend on the order of ``forecasts``.
    """
    if not forecasts:
        raise AlignmentError("an ensemble needs at least one member")

    first = forecasts[0]
    for forecast in forecasts[1:]:
        if (len(forecast) != len(first)
                or forecast.start_date != first.start_date):
            raise AlignmentError(
                f"{forecast.architecture} forecast does not cover the same "
                f"days as {first.architecture}")

    architectures = [f.architecture.upper() for f in forecasts]
    if len(set(architectures)) != len(architectures):
        raise AlignmentError("ensemble members must have distinct architectures")

    if weights is None:
        weights = {a: conf.ENSEMBLE_WEIGHTS.get(a, 0.0) for a in architectures}
    weights = {str(k).upper(): v for k, v in weights.items()}
    if set(weights) != set(architectures):
        raise InvalidWeights(
            f"weights given for {', '.join(sorted(weights))} but members are "
            f"{', '.join(sorted(architectures))}")
    weights = get_formatted_weights(weights)

    order = [a for a in ArchitectureId.values if a in weights]
    by_arch = {f.architecture.upper(): f for f in forecasts}
    prediction = np.zeros(len(first))
    for arch in order:
        prediction = prediction + weights[arch] * by_arch[arch].prediction

    return EnsembleForecast(
        weights={arch: weights[arch] for arch in order},
        start_date=first.start_date,
        prediction=prediction,
        members=[by_arch[arch] for arch in order])


def forecast_all(models, series, weights=None):
    """Sliding forecasts of every model combined into an ensemble."""
    forecasts = [sliding_forecast(model, series) for model in models]
    return ensemble(forecasts, weights)


def _fmt(value):
    return "" if not np.isfinite(value) else repr(float(value))


def forecast_csv_text(series, forecast):
    """The forecast export,
    ``date,observed,fcnn,cnn,lstm,ensemble,coverage``. Members that are not
    part of the ensemble are left empty."""
    if len(series) != len(forecast) or series.start_date != forecast.start_date:
        raise AlignmentError("forecast is not aligned with the series")

    members = {m.architecture: m.prediction for m in forecast.members}
    empty = np.full(len(series), np.nan)
    frame = pd.DataFrame({
        "date": [d.strftime("%Y-%m-%d") for d in series.dates],
        "observed": [_fmt(v) for v in series.values],
        "fcnn": [_fmt(v) for v in members.get("FCNN", empty)],
        "cnn": [_fmt(v) for v in members.get("CNN", empty)],
        "lstm": [_fmt(v) for v in members.get("LSTM", empty)],
        "ensemble": [_fmt(v) for v in forecast.prediction],
        "coverage": forecast.coverage,
    })
    buf = StringIO()
    frame.to_csv(buf, index=False)
    return buf.getvalue()


def read_forecast_csv(path):
    """Read a forecast export back into a date-indexed frame of floats."""
    frame = pd.read_csv(path, parse_dates=["date"], index_col="date")
    missing = set(FORECAST_CSV_HEADER[1:]) - set(frame.columns)
    if missing:
        raise AlignmentError(
            f"'{path}' lacks column(s) {', '.join(sorted(missing))}")
    return frame
