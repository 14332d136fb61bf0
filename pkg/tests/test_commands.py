import datetime
import json
import os
from io import StringIO

import numpy as np
import pytest
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from ntlchange.evaluation import ground_truth_csv_text
from ntlchange.forecast import FORECAST_CSV_HEADER, read_forecast_csv
from ntlchange.ingest import load_zone_csv, write_zone_csv
from ntlchange.management.commands.ntl_eval import read_report
from ntlchange.management.commands.ntl_train import (checkpoint_name,
                                                     parse_architectures,
                                                     training_log_name)
from ntlchange.synth import load_scenario
from tests.factories import GroundTruthEventFactory
from tests.mixins import NumpyAssertionMixin, TempDirMixin
from tests.utils import (FIXTURE_START, csv_text, make_series, read_text,
                         write_text)

FAST_TRAINING = dict(
    input_window=12, output_window=4, epochs="FCNN=1,CNN=1,LSTM=1")

# day 199 of the fixture series
TRAINING_END = "2020-07-18"


def fixture_series(n=260):
    t = np.arange(n)
    values = 20 + 2 * np.sin(2 * np.pi * t / 30)
    values[200:] -= 8
    return make_series(values)


class CommandTestMixin(TempDirMixin):
    def call(self, name, **options):
        stdout, stderr = StringIO(), StringIO()
        call_command(name, stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue(), stderr.getvalue()

    def out_path(self, *names):
        return os.path.join(self.temp_dir, *names)


class ParseArchitecturesTest(SimpleTestCase):
    def test_parse(self):
        self.assertEqual(parse_architectures(None), ["FCNN", "CNN", "LSTM"])
        self.assertEqual(parse_architectures("lstm, cnn"), ["LSTM", "CNN"])
        with self.assertRaises(CommandError):
            parse_architectures("LSTM,GRU")

    def test_file_names(self):
        self.assertEqual(checkpoint_name("FCNN"), "fcnn.json")
        self.assertEqual(training_log_name("LSTM"), "lstm_training_log.csv")


class IngestCommandTest(NumpyAssertionMixin, CommandTestMixin, SimpleTestCase):
    def test_zone_csv(self):
        path = write_zone_csv(
            make_series([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], zone_id="beira"),
            self.out_path("raw.csv"))
        stdout, _ = self.call(
            "ntl_ingest", zone_csv=path, zone_id="beira",
            smoothing_window_days=3, out=self.out_path("out"))
        self.assertIn("Wrote 6 day(s) of 'beira'", stdout)
        series = load_zone_csv(self.out_path("out", "beira.csv"))
        self.assertArrayAlmostEqual(series.values, [1, 1.5, 2, 3, 4, 5])

    def test_no_smoothing(self):
        path = write_zone_csv(
            make_series([1.0, 2.0, np.nan, 4.0]), self.out_path("zone.csv"))
        self.call("ntl_ingest", zone_csv=path, smooth=False,
                  out=self.out_path("out"))
        series = load_zone_csv(self.out_path("out", "zone.csv"))
        self.assertArrayEqual(series.gap_mask, [False, False, True, False])
        self.assertArrayEqual(series.values, [1.0, 2.0, np.nan, 4.0])

    def test_pixels(self):
        header = ("date", "pixel_id", "radiance", "latitude",
                  "pixel_height_deg", "pixel_width_deg", "quality")
        size = 1 / 240
        path = write_text(self.temp_dir, "pixels.csv", csv_text(header, [
            ("2020-01-01", "a", 10.0, 0.0, size, size, "good"),
            ("2020-01-01", "b", 20.0, 0.0, size, size, "good"),
            ("2020-01-02", "a", 30.0, 0.0, size, size, "good"),
            ("2020-01-02", "b", "", 0.0, size, size, "missing"),
        ]))
        self.call("ntl_ingest", pixels=path, zone_id="beira", smooth=False,
                  out=self.out_path("out"))
        series = load_zone_csv(self.out_path("out", "beira.csv"))
        self.assertEqual(series.start_date, FIXTURE_START)
        self.assertArrayAlmostEqual(series.values, [15.0, 30.0])

    def test_source_required(self):
        with self.assertRaisesRegex(CommandError, "--pixels or --zone-csv"):
            self.call("ntl_ingest", out=self.temp_dir)

    def test_invalid_rows(self):
        path = write_text(self.temp_dir, "zone.csv",
                          "date,radiance,gap\n2020-01-01,abc,0\n")
        with self.assertRaisesRegex(CommandError, "radiance"):
            self.call("ntl_ingest", zone_csv=path, out=self.temp_dir)


class SimulateCommandTest(NumpyAssertionMixin, CommandTestMixin, SimpleTestCase):
    def test_preset(self):
        stdout, _ = self.call(
            "ntl_simulate", preset="disaster", seed=3, gap_fraction=0.05,
            out=self.temp_dir)
        self.assertIn("seed 3", stdout)

        series = load_zone_csv(self.out_path("synthetic-disaster.csv"))
        self.assertEqual(len(series), 1826)
        self.assertEqual(int(series.gap_mask.sum()), 91)

        spec = load_scenario(self.out_path("synthetic-disaster_scenario.json"))
        self.assertEqual(spec.seed, 3)

        run = json.loads(read_text(self.out_path("synthetic-disaster_run.json")))
        self.assertEqual(run["series"], "synthetic-disaster.csv")
        self.assertEqual(run["ground_truth"], "synthetic-disaster_truth.csv")
        self.assertEqual(run["training_end"], "2018-07-01")
        self.assertEqual(
            read_text(self.out_path("synthetic-disaster_truth.csv"))
            .splitlines()[1],
            "synthetic-disaster,2018-07-02,2018-12-28,disaster,daily")

    def test_scenario_file(self):
        path = write_text(self.temp_dir, "aleppo.json", json.dumps(
            {"preset": "conflict", "zone_id": "aleppo", "noise_sigma": 0}))
        self.call("ntl_simulate", scenario=path, out=self.out_path("out"))
        self.assertTrue(os.path.exists(self.out_path("out", "aleppo.csv")))

    def test_source_required(self):
        with self.assertRaisesRegex(CommandError, "--scenario or --preset"):
            self.call("ntl_simulate", out=self.temp_dir)

    def test_invalid_scenario(self):
        path = write_text(self.temp_dir, "bad.json", json.dumps(
            {"preset": "conflict", "depth": -1}))
        with self.assertRaises(CommandError):
            self.call("ntl_simulate", scenario=path, out=self.out_path("out"))
        self.assertFalse(os.path.exists(self.out_path("out")))


class PipelineCommandTest(NumpyAssertionMixin, CommandTestMixin, SimpleTestCase):
    """Train, detect, evaluate and plot a short series with tiny windows."""

    def setUp(self):
        super().setUp()
        self.series_path = write_zone_csv(
            fixture_series(), self.out_path("zone.csv"))

    def train(self, **options):
        options = {
            "series": self.series_path, "training_end": TRAINING_END,
            "out": self.temp_dir, **FAST_TRAINING, **options}
        return self.call("ntl_train", **options)

    def detect(self, **options):
        options = {
            "series": self.series_path, "training_end": TRAINING_END,
            "input_window": 12, "output_window": 4, "out": self.temp_dir,
            **options}
        return self.call("ntl_detect", **options)

    def test_pipeline(self):
        stdout, stderr = self.train()
        self.assertIn("fewer than the recommended", stderr)
        for arch in ("fcnn", "cnn", "lstm"):
            self.assertIn(f"{arch.upper()}: 1 epoch(s)", stdout)
            checkpoint = json.loads(read_text(self.out_path(f"{arch}.json")))
            self.assertEqual(checkpoint["windows"], {"input": 12, "output": 4})
            log = read_text(self.out_path(f"{arch}_training_log.csv"))
            self.assertEqual(len(log.splitlines()), 2)

        stdout, _ = self.detect()
        self.assertIn("'zone':", stdout)
        forecast = read_forecast_csv(self.out_path("forecast.csv"))
        self.assertEqual(list(forecast.columns), list(FORECAST_CSV_HEADER[1:]))
        self.assertEqual(len(forecast), 260)
        self.assertFalse(forecast["coverage"].iloc[:12].any())
        self.assertTrue(forecast["ensemble"].iloc[12:].notna().all())

        report = json.loads(read_text(self.out_path("report.json")))
        self.assertEqual(report["training_end"], TRAINING_END)
        self.assertEqual(report["weights"],
                         {"FCNN": 0.3, "CNN": 0.2, "LSTM": 0.5})
        self.assertEqual(report["summary"]["steps"], 260)

        truth = write_text(self.temp_dir, "truth.csv", ground_truth_csv_text([
            GroundTruthEventFactory(
                start=datetime.date(2020, 7, 19), end=None)]))
        stdout, _ = self.call(
            "ntl_eval", report=self.out_path("report.json"),
            ground_truth=truth, out=self.temp_dir)
        for detector in ("ensemble", "FCNN", "CNN", "LSTM"):
            self.assertIn(f"zone 2020-07-19 {detector}: recall", stdout)
        scores = json.loads(read_text(self.out_path("eval.json")))
        self.assertEqual(scores["format"], "ntlchange-eval/1")
        event, = scores["events"]
        self.assertEqual(set(event["detectors"]),
                         {"ensemble", "FCNN", "CNN", "LSTM"})
        self.assertEqual(
            read_report(self.out_path("report.json")).detectors,
            ["ensemble", "FCNN", "CNN", "LSTM"])
        for detector, result in event["detectors"].items():
            self.assertEqual(result["detector"], detector)
            self.assertEqual(result["truth_steps"], 60)
            self.assertTrue(0 <= result["recall"] <= 1)

        plot_dir = self.out_path("plots")
        self.call("ntl_plot", forecast=self.out_path("forecast.csv"),
                  report=self.out_path("report.json"), out=plot_dir)
        self.assertEqual(sorted(os.listdir(plot_dir)), [
            "observed_predicted.csv", "phase_bands.csv", "rate_scatter.csv",
            "residual.csv"])
        residual = read_text(os.path.join(plot_dir, "residual.csv"))
        self.assertEqual(len(residual.splitlines()), 261)
        self.assertTrue(residual.startswith("date,r,squared,tau,"))
        bands = read_text(os.path.join(plot_dir, "phase_bands.csv"))
        self.assertTrue(bands.splitlines()[1].startswith("baseline,2020-01-01,"))

    def test_repeated_run_writes_the_same_report(self):
        reports = []
        for run in ("first", "second"):
            out = self.out_path(run)
            self.train(out=out)
            self.detect(out=out)
            with open(os.path.join(out, "report.json"), "rb") as f:
                reports.append(f.read())
        self.assertEqual(reports[0], reports[1])

    def test_subset_of_members(self):
        self.train(architectures="lstm")
        self.assertFalse(os.path.exists(self.out_path("fcnn.json")))
        self.detect(architectures="lstm", mode="streaming")
        report = json.loads(read_text(self.out_path("report.json")))
        self.assertEqual(report["weights"], {"LSTM": 1.0})
        self.assertEqual(report["settings"]["mode"], "streaming")

    def test_train_requires_series_and_training_end(self):
        with self.assertRaisesRegex(CommandError, "--series is required"):
            self.call("ntl_train", out=self.temp_dir)
        with self.assertRaisesRegex(CommandError, "training end"):
            self.call("ntl_train", series=self.series_path, out=self.temp_dir)

    def test_train_unknown_architecture(self):
        with self.assertRaises(CommandError):
            self.train(architectures="GRU")

    def test_missing_checkpoint(self):
        with self.assertRaisesRegex(CommandError, "missing checkpoint"):
            self.detect()
        self.assertFalse(os.path.exists(self.out_path("report.json")))

    def test_window_mismatch(self):
        self.train(architectures="fcnn")
        with self.assertRaisesRegex(CommandError, "maps 12 to 4 days"):
            self.detect(architectures="fcnn", input_window=16)

    def test_eval_needs_event_of_the_zone(self):
        self.train(architectures="fcnn")
        self.detect(architectures="fcnn")
        truth = write_text(self.temp_dir, "truth.csv", ground_truth_csv_text(
            [GroundTruthEventFactory(zone_id="other")]))
        with self.assertRaisesRegex(CommandError, "no ground-truth event"):
            self.call("ntl_eval", report=self.out_path("report.json"),
                      ground_truth=truth, out=self.temp_dir)

    def test_plot_misaligned(self):
        self.train(architectures="fcnn")
        self.detect(architectures="fcnn")
        lines = read_text(self.out_path("forecast.csv")).splitlines()
        short = write_text(
            self.temp_dir, "short.csv", "\n".join(lines[:-1]) + "\n")
        plot_dir = self.out_path("plots")
        with self.assertRaisesRegex(CommandError, "different days"):
            self.call("ntl_plot", forecast=short,
                      report=self.out_path("report.json"), out=plot_dir)
        self.assertFalse(os.path.exists(plot_dir))

    def test_invalid_run_config(self):
        config = write_text(self.temp_dir, "run.json", json.dumps({"seed": -1}))
        with self.assertRaisesRegex(CommandError, r"ntlchange-run\.E004"):
            self.call("ntl_train", config=config)


@pytest.mark.slow
class PresetPipelineTest(CommandTestMixin, SimpleTestCase):
    def test_run_config_written_by_simulate(self):
        self.call("ntl_simulate", preset="disaster", seed=1, out=self.temp_dir)
        config = self.out_path("synthetic-disaster_run.json")
        self.call("ntl_train", config=config, out=self.temp_dir, jobs=3,
                  **FAST_TRAINING)
        self.call("ntl_detect", config=config, out=self.temp_dir,
                  input_window=12, output_window=4)
        self.call("ntl_eval", config=config,
                  report=self.out_path("report.json"), out=self.temp_dir)

        event, = json.loads(read_text(self.out_path("eval.json")))["events"]
        self.assertEqual(event["start"], "2018-07-02")
        self.assertEqual(
            event["detectors"]["ensemble"]["truth_steps"], 180)


@pytest.mark.slow
class TrainedDisasterTest(CommandTestMixin, SimpleTestCase):
    def test_drop_found_at_onset(self):
        self.call("ntl_simulate", preset="disaster", seed=0, out=self.temp_dir)
        config = self.out_path("synthetic-disaster_run.json")
        self.call("ntl_train", config=config, out=self.temp_dir, jobs=3,
                  epochs="FCNN=5,CNN=3,LSTM=2")
        self.call("ntl_detect", config=config, out=self.temp_dir, scope="all")
        self.call("ntl_eval", config=config,
                  report=self.out_path("report.json"), out=self.temp_dir)

        event, = json.loads(read_text(self.out_path("eval.json")))["events"]
        result = event["detectors"]["ensemble"]
        self.assertIsNotNone(result["delay"])
        self.assertLessEqual(result["delay"], 3)
        self.assertGreaterEqual(result["recall"], 0.1)

        report = read_report(self.out_path("report.json"))
        onset = (datetime.date(2018, 7, 2) - report.start_date).days
        seg = next(s for s in report.segments if s.start <= onset + 3 <= s.end)
        self.assertEqual(seg.direction, -1)
