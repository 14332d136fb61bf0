import numpy as np
import pandas as pd

from ntlchange.forecast import read_forecast_csv
from ntlchange.management.base import NtlBaseCommand
from ntlchange.management.commands.ntl_eval import read_report
from ntlchange.utils import AlignmentError

OBSERVED_PREDICTED_FILE = "observed_predicted.csv"
RESIDUAL_FILE = "residual.csv"
PHASE_BANDS_FILE = "phase_bands.csv"
RATE_SCATTER_FILE = "rate_scatter.csv"


def _csv(frame):
    return frame.to_csv(index=False, float_format="%.10g")


def observed_predicted_frame(forecast):
    frame = forecast.reset_index()
    frame["date"] = frame["date"].dt.strftime("%Y-%m-%d")
    return frame[["date", "observed", "fcnn", "cnn", "lstm", "ensemble"]]


def residual_frame(report):
    r = report.residuals
    tau = report.tau if np.ndim(report.tau) else np.full(len(report), report.tau)
    return pd.DataFrame({
        "date": [r.date_at(t).isoformat() for t in range(len(report))],
        "r": r.values,
        "squared": r.values**2,
        "tau": np.asarray(tau, dtype=float),
        "flagged": report.flags.astype(int),
        "persistent": report.persistent_flags.astype(int),
        "confidence": report.confidence,
    })


def phase_bands_frame(report):
    """Contiguous runs of one phase label, one row per band."""
    phases = list(report.phases)
    rows = []
    start = 0
    for t in range(1, len(phases) + 1):
        if t == len(phases) or phases[t] != phases[start]:
            rows.append({
                "phase": phases[start],
                "start": report.residuals.date_at(start).isoformat(),
                "end": report.residuals.date_at(t - 1).isoformat(),
                "days": t - start,
            })
            start = t
    return pd.DataFrame(rows, columns=["phase", "start", "end", "days"])


def rate_scatter_frame(report):
    r = report.residuals
    return pd.DataFrame([
        {
            "zone_id": report.zone_id,
            "start": r.date_at(seg.start).isoformat(),
            "end": r.date_at(seg.end).isoformat(),
            "start_rate": seg.start_rate,
            "end_rate": seg.end_rate,
            "mean_severity": seg.mean_severity,
            "direction": seg.direction,
        }
        for seg in report.segments],
        columns=["zone_id", "start", "end", "start_rate", "end_rate",
                 "mean_severity", "direction"])


class Command(NtlBaseCommand):
    help = ("Write tidy CSV series of a forecast export and a change report "
            "for plotting: observed vs predicted, residuals, phase bands and "
            "the start-rate vs end-rate scatter.")

    def add_command_arguments(self, parser):
        parser.add_argument("--forecast", dest="forecast", metavar="PATH")
        parser.add_argument("--report", dest="report", metavar="PATH")

    def run(self, config, **options):
        forecast = read_forecast_csv(
            self.require(options.get("forecast"), "--forecast"))
        report = read_report(self.require(options.get("report"), "--report"))
        if (len(forecast) != len(report)
                or forecast.index[0].date() != report.start_date):
            raise AlignmentError(
                "forecast export and change report cover different days")

        with self.bundle(config) as bundle:
            bundle.write_text(
                OBSERVED_PREDICTED_FILE,
                _csv(observed_predicted_frame(forecast)))
            bundle.write_text(RESIDUAL_FILE, _csv(residual_frame(report)))
            bundle.write_text(PHASE_BANDS_FILE, _csv(phase_bands_frame(report)))
            bundle.write_text(
                RATE_SCATTER_FILE, _csv(rate_scatter_frame(report)))

        self.success(
            f"Wrote plot data of '{report.zone_id}' to {config.out}")
