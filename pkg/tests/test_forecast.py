import datetime
import random

import numpy as np
from django.test import SimpleTestCase

from ntlchange.forecast import (FORECAST_CSV_HEADER, ModelForecast,
                                aggregate_overlaps, ensemble, forecast_all,
                                forecast_csv_text, read_forecast_csv,
                                sliding_forecast)
from ntlchange.utils import (AlignmentError, InsufficientDataError,
                             InvalidWeights)
from tests.mixins import NumpyAssertionMixin, TempDirMixin
from tests.utils import (FIXTURE_START, CopyLastModel, make_series,
                         single_member, write_text)

nan = np.nan


def member(architecture, prediction, start_date=FIXTURE_START):
    prediction = np.asarray(prediction, dtype=float)
    return ModelForecast(
        architecture, start_date, prediction,
        np.where(np.isnan(prediction), 0, 1))


class AggregateOverlapsTest(NumpyAssertionMixin, SimpleTestCase):
    def test_median_of_covering_windows(self):
        prediction, coverage = aggregate_overlaps(
            [[1, 2], [3, 4], [5, 6]], starts=[0, 1, 2], length=6, w_i=2)
        self.assertArrayEqual(prediction, [nan, nan, 1, 2.5, 4.5, 6])
        self.assertArrayEqual(coverage, [0, 0, 1, 2, 2, 1])

    def test_odd_number_of_windows(self):
        prediction, coverage = aggregate_overlaps(
            [[9, 9, 1], [9, 5, 9], [3, 9, 9]], starts=[0, 1, 2], length=5,
            w_i=2)
        self.assertEqual(prediction[4], 3)
        self.assertEqual(coverage[4], 3)

    def test_windows_past_the_end_truncated(self):
        prediction, coverage = aggregate_overlaps(
            [[1, 2, 3]], starts=[2], length=4, w_i=1)
        self.assertArrayEqual(prediction, [nan, nan, nan, 1])
        self.assertArrayEqual(coverage, [0, 0, 0, 1])


class SlidingForecastTest(NumpyAssertionMixin, SimpleTestCase):
    def test_coverage_starts_after_input_window(self):
        model = CopyLastModel(3, 2)
        forecast = sliding_forecast(model, make_series(np.arange(10.0)))
        self.assertEqual(forecast.architecture, "FCNN")
        self.assertEqual(forecast.start_date, FIXTURE_START)
        self.assertArrayEqual(
            forecast.coverage, [0, 0, 0, 1, 2, 2, 2, 2, 2, 2])
        self.assertArrayEqual(
            forecast.prediction,
            [nan, nan, nan, 2, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5])
        self.assertArrayEqual(forecast.covered, forecast.coverage > 0)

    def test_last_day_never_an_input(self):
        values = np.arange(10.0)
        values[-1] = 1000.0
        forecast = sliding_forecast(CopyLastModel(3, 2), make_series(values))
        self.assertEqual(forecast.prediction[-1], 7.5)

    def test_windows_with_gaps_skipped(self):
        values = np.arange(10.0)
        values[5] = nan
        forecast = sliding_forecast(CopyLastModel(3, 2), make_series(values))
        self.assertArrayEqual(
            forecast.prediction,
            [nan, nan, nan, 2, 2.5, 3.5, 4, nan, nan, 8])
        self.assertArrayEqual(
            forecast.coverage, [0, 0, 0, 1, 2, 2, 1, 0, 0, 1])

    def test_too_short(self):
        with self.assertRaises(InsufficientDataError):
            sliding_forecast(CopyLastModel(3, 2), make_series([1.0, 2, 3]))


class EnsembleTest(NumpyAssertionMixin, SimpleTestCase):
    def setUp(self):
        self.members = [
            member("FCNN", [1.0, 2.0, nan]),
            member("CNN", [3.0, 2.0, nan]),
            member("LSTM", [5.0, 2.0, 4.0]),
        ]

    def test_default_weights(self):
        result = ensemble(self.members)
        self.assertEqual(list(result.weights), ["FCNN", "CNN", "LSTM"])
        self.assertAlmostEqual(result.weights["LSTM"], 0.5)
        self.assertAlmostEqual(result.weights["FCNN"], 0.3)
        self.assertAlmostEqual(result.weights["CNN"], 0.2)
        self.assertArrayAlmostEqual(result.prediction, [3.4, 2.0, nan])
        self.assertArrayEqual(result.coverage, [1, 1, 0])

    def test_member_order_irrelevant(self):
        weights = {"lstm": 2, "fcnn": 1, "cnn": 1}
        expected = ensemble(self.members, weights).prediction
        shuffled = list(self.members)
        for seed in range(5):
            random.Random(seed).shuffle(shuffled)
            self.assertArrayEqual(
                ensemble(shuffled, weights).prediction, expected)

    def test_weights_renormalized(self):
        result = ensemble(self.members[::2], {"FCNN": 1, "LSTM": 3})
        self.assertEqual(result.weights, {"FCNN": 0.25, "LSTM": 0.75})
        self.assertArrayAlmostEqual(result.prediction, [4.0, 2.0, nan])

    def test_within_member_range(self):
        result = ensemble(self.members, {"FCNN": 0.6, "CNN": 0.1, "LSTM": 0.3})
        stacked = np.array([m.prediction for m in self.members])[:, :2]
        self.assertTrue(np.all(result.prediction[:2] >= stacked.min(axis=0)))
        self.assertTrue(np.all(result.prediction[:2] <= stacked.max(axis=0)))

    def test_member_lookup(self):
        result = ensemble(self.members[1:])
        self.assertIs(result.member("lstm"), self.members[2])
        with self.assertRaises(KeyError):
            result.member("FCNN")

    def test_no_members(self):
        with self.assertRaises(AlignmentError):
            ensemble([])

    def test_misaligned_members(self):
        for other in (member("CNN", [1.0, 2.0]),
                      member("CNN", [1.0, 2.0, 3.0],
                             start_date=datetime.date(2020, 1, 2))):
            with self.subTest(other=other):
                with self.assertRaises(AlignmentError):
                    ensemble([self.members[0], other])

    def test_duplicate_architecture(self):
        with self.assertRaises(AlignmentError):
            ensemble([self.members[0], member("fcnn", [1.0, 1.0, 1.0])])

    def test_invalid_weights(self):
        for weights in ({"FCNN": 1, "CNN": 1},
                        {"FCNN": 1, "CNN": 1, "LSTM": 1, "GRU": 1},
                        {"FCNN": -1, "CNN": 1, "LSTM": 1},
                        {"FCNN": 0, "CNN": 0, "LSTM": 0}):
            with self.subTest(weights=weights):
                with self.assertRaises(InvalidWeights):
                    ensemble(self.members, weights)

    def test_forecast_all(self):
        models = [CopyLastModel(3, 2, "LSTM"), CopyLastModel(3, 2, "FCNN")]
        series = make_series(np.arange(10.0))
        result = forecast_all(models, series, {"FCNN": 1, "LSTM": 1})
        self.assertEqual([m.architecture for m in result.members],
                         ["FCNN", "LSTM"])
        self.assertArrayAlmostEqual(
            result.prediction, sliding_forecast(models[0], series).prediction)


class ForecastCSVTest(NumpyAssertionMixin, TempDirMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.series = make_series([1.0, nan, 3.0, 4.5])
        self.forecast = single_member([nan, nan, 2.0, 3.25], FIXTURE_START)

    def test_text(self):
        lines = forecast_csv_text(self.series, self.forecast).splitlines()
        self.assertEqual(lines[0], ",".join(FORECAST_CSV_HEADER))
        self.assertEqual(lines[1], "2020-01-01,1.0,,,,,0")
        self.assertEqual(lines[2], "2020-01-02,,,,,,0")
        self.assertEqual(lines[4], "2020-01-04,4.5,,,3.25,3.25,1")

    def test_read_back(self):
        path = write_text(
            self.temp_dir, "forecast.csv",
            forecast_csv_text(self.series, self.forecast))
        frame = read_forecast_csv(path)
        self.assertEqual(len(frame), 4)
        self.assertEqual(frame.index[0].date(), FIXTURE_START)
        self.assertArrayEqual(frame["ensemble"].to_numpy(),
                              [nan, nan, 2.0, 3.25])
        self.assertTrue(frame["fcnn"].isna().all())

    def test_misaligned(self):
        with self.assertRaises(AlignmentError):
            forecast_csv_text(self.series.slice(1), self.forecast)

    def test_missing_columns(self):
        path = write_text(
            self.temp_dir, "forecast.csv", "date,observed\n2020-01-01,1.0\n")
        with self.assertRaises(AlignmentError):
            read_forecast_csv(path)
