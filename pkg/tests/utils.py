import datetime
import os
import shutil
import tempfile

import numpy as np

from ntlchange.forecast import ModelForecast, ensemble
from ntlchange.ingest import NtlSeries
from ntlchange.synth import baseline_curve

FIXTURE_START = datetime.date(2020, 1, 1)


def make_series(values, start_date=FIXTURE_START, zone_id="zone",
                gap_mask=None):
    return NtlSeries(zone_id, start_date, values, gap_mask)


def make_temp_dir():
    return tempfile.mkdtemp(prefix="ntlchange-tests-")


def remove_temp_dir(path):
    shutil.rmtree(path, ignore_errors=True)


def write_text(directory, name, text):
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path


def read_text(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def trailing_mean(values, window):
    """Trailing mean with partial head windows, exact zeros where the whole
    window is zero."""
    values = np.asarray(values, dtype=float)
    sums = np.convolve(values, np.ones(window))[:len(values)]
    counts = np.minimum(np.arange(len(values)) + 1, window)
    return sums / counts


def single_member(prediction, start_date, architecture="LSTM"):
    prediction = np.asarray(prediction, dtype=float)
    coverage = np.where(np.isnan(prediction), 0, 1)
    member = ModelForecast(architecture, start_date, prediction, coverage)
    return ensemble([member], {architecture: 1.0})


def oracle_forecast(spec, observed, raw, window=None, input_window=60):
    """A forecast that knows the scenario baseline.

    ``raw`` is the generated series and ``observed`` the (possibly smoothed)
    series that is monitored. The prediction is ``observed`` minus the
    smoothed departure from the baseline, so the residual is exactly zero
    wherever the scenario does not depart from its baseline.
    """
    departure = raw.values - baseline_curve(spec)
    if window is not None:
        departure = trailing_mean(departure, window)
    prediction = observed.values - departure
    prediction[:input_window] = np.nan
    return single_member(prediction, observed.start_date)


class CopyLastModel:
    """Stand-in forecaster repeating the last input value."""

    def __init__(self, input_window, output_window, architecture="FCNN"):
        from ntlchange.models import ArchitectureId
        self.input_window = input_window
        self.output_window = output_window
        self.architecture = ArchitectureId(architecture)
        self.calls = 0

    def predict(self, inputs):
        self.calls += 1
        inputs = np.atleast_2d(inputs)
        return np.repeat(inputs[:, -1:], self.output_window, axis=1)
