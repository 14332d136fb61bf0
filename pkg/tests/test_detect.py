import datetime
import json

import numpy as np
import pytest
from django.test import SimpleTestCase

from ntlchange.detect import (ChangeReport, ChangeSegment, Phase,
                              ResidualSeries, StreamingThreshold,
                              baseline_median, change_points, confidence,
                              confidences, detect_changes, member_flags,
                              persistent_flags, phase_labels, residuals,
                              segment, streaming_threshold, threshold)
from ntlchange.utils import (AlignmentError, DomainError, InputError,
                             InsufficientDataError, dump_json)
from tests.mixins import NumpyAssertionMixin
from tests.utils import FIXTURE_START, make_series, single_member

nan = np.nan


def residual_series(values, observed=None):
    values = np.asarray(values, dtype=float)
    if observed is None:
        observed = 20 + values
    observed = np.asarray(observed, dtype=float)
    return ResidualSeries(
        start_date=FIXTURE_START, observed=observed,
        predicted=observed - values, values=values)


class ResidualsTest(NumpyAssertionMixin, SimpleTestCase):
    def test_observed_minus_predicted(self):
        series = make_series([4.0, nan, 6.0, 8.0])
        forecast = single_member([nan, 5.0, 5.0, 9.0], FIXTURE_START)
        res = residuals(series, forecast)
        self.assertArrayEqual(res.values, [nan, nan, 1.0, -1.0])
        self.assertArrayEqual(res.defined, [False, False, True, True])
        self.assertArrayEqual(res.squared[2:], [1.0, 1.0])
        self.assertEqual(res.date_at(3), datetime.date(2020, 1, 4))

    def test_misaligned(self):
        series = make_series([4.0, 5.0, 6.0])
        for forecast in (
                single_member([1.0, 2.0], FIXTURE_START),
                single_member([1.0, 2.0, 3.0], datetime.date(2019, 12, 31))):
            with self.subTest(forecast=forecast):
                with self.assertRaises(AlignmentError):
                    residuals(series, forecast)


class ThresholdTest(NumpyAssertionMixin, SimpleTestCase):
    def test_top_quarter(self):
        result = threshold([1.0, 2.0, 3.0, 4.0], percent=25)
        self.assertAlmostEqual(result.tau, 10.75)
        self.assertArrayEqual(result.flags, [False, False, False, True])

    def test_all_equal_flags_nothing(self):
        result = threshold([2.0, -2.0, 2.0, 2.0], percent=25)
        self.assertEqual(result.tau, 4.0)
        self.assertFalse(result.flags.any())

    def test_ties_at_tau_flag_most_recent(self):
        result = threshold([0, 0, 0, 10, 10, 10, 10, 10], percent=25)
        self.assertEqual(result.tau, 100.0)
        self.assertEqual(list(np.flatnonzero(result.flags)), [6, 7])

    def test_undefined_steps_ignored(self):
        result = threshold(residual_series([nan, 1.0, 2.0, 3.0, 4.0]), 25)
        self.assertArrayEqual(
            result.flags, [False, False, False, False, True])

    def test_scope(self):
        result = threshold(
            [10.0, 1.0, 2.0, 3.0, 4.0], percent=25,
            scope=[False, True, True, True, True])
        self.assertAlmostEqual(result.tau, 10.75)
        self.assertEqual(list(np.flatnonzero(result.flags)), [4])

    def test_invalid_percent(self):
        for percent in (0, 100, -5, 150):
            with self.subTest(percent=percent):
                with self.assertRaises(DomainError):
                    threshold([1.0, 2.0], percent=percent)

    def test_nothing_defined(self):
        with self.assertRaises(InsufficientDataError):
            threshold([nan, nan])

    def test_default_percent(self):
        values = np.random.default_rng(0).normal(size=100)
        self.assertEqual(int(threshold(values).flags.sum()), 25)


class StreamingThresholdTest(NumpyAssertionMixin, SimpleTestCase):
    def test_trailing_window(self):
        state = StreamingThreshold(percent=25, window_days=4)
        self.assertEqual(
            [state.update(r) for r in (1, 2, 3, 4)],
            [False, True, True, True])
        self.assertAlmostEqual(state.tau, 10.75)

        # the window now holds 4, 9, 16, 0
        self.assertFalse(state.update(0))
        self.assertAlmostEqual(state.tau, 10.75)

    def test_undefined_step(self):
        state = StreamingThreshold(percent=25, window_days=4)
        state.update(1.0)
        self.assertFalse(state.update(nan))
        self.assertEqual(state.tau, 1.0)

    def test_series(self):
        flags, taus = streaming_threshold(
            [nan, 1, 2, 3, 4], percent=25, window_days=4)
        self.assertArrayEqual(flags, [False, False, True, True, True])
        self.assertTrue(np.isnan(taus[0]))
        self.assertAlmostEqual(taus[-1], 10.75)

    def test_scope(self):
        flags, _ = streaming_threshold(
            [100, 1, 2], percent=25, window_days=4, scope=[False, True, True])
        self.assertArrayEqual(flags, [False, False, True])

    def test_invalid(self):
        with self.assertRaises(DomainError):
            StreamingThreshold(percent=25, window_days=0)
        with self.assertRaises(DomainError):
            StreamingThreshold(percent=100)
        with self.assertRaises(InsufficientDataError):
            streaming_threshold([nan, nan])


@pytest.mark.parametrize("seed", range(10))
def test_streaming_flags_are_causal(seed):
    values = np.random.default_rng(seed).normal(size=200)
    full, _ = streaming_threshold(values, percent=25, window_days=30)
    for cut in (40, 120, 199):
        prefix, _ = streaming_threshold(values[:cut], percent=25,
                                        window_days=30)
        np.testing.assert_array_equal(prefix, full[:cut])


class SegmentTest(NumpyAssertionMixin, SimpleTestCase):
    def setUp(self):
        r = np.zeros(30)
        r[5:15] = [-1, -2, -3, -4, -6, -5, -4, -3, -2, -1]
        r[20:23] = 2
        r[25] = 3
        self.res = residual_series(r)
        self.flags = np.zeros(30, dtype=bool)
        self.flags[[5, 6, 7, 8, 9, 10, 13, 14, 20, 21, 22, 25]] = True

    def test_runs_and_transients(self):
        segments = segment(self.flags, self.res)
        self.assertEqual(len(segments), 1)
        seg = segments[0]
        self.assertEqual((seg.start, seg.inflection, seg.end), (5, 9, 14))
        self.assertEqual(seg.length, 10)
        self.assertEqual(seg.flagged_days, 8)
        self.assertEqual(seg.direction, -1)
        self.assertAlmostEqual(seg.mean_severity, 3.0)
        self.assertAlmostEqual(seg.start_rate, -1.0)
        self.assertAlmostEqual(seg.end_rate, 5 / 6)
        self.assertFalse(seg.open_ended)
        self.assertEqual(
            list(seg.flagged_steps(self.flags)), [5, 6, 7, 8, 9, 10, 13, 14])

    def test_gap_tolerance(self):
        self.assertEqual(
            segment(self.flags, self.res, gap_tolerance=1), [])
        segments = segment(
            self.flags, self.res, min_persistence=3, gap_tolerance=1)
        self.assertEqual([(s.start, s.end) for s in segments],
                         [(5, 10), (20, 22)])
        self.assertEqual(segments[1].direction, 1)

    def test_open_ended(self):
        flags = np.zeros(30, dtype=bool)
        flags[20:] = True
        seg, = segment(flags, residual_series(np.ones(30)))
        self.assertTrue(seg.open_ended)
        self.assertEqual(seg.end, 29)

    def test_no_flags(self):
        self.assertEqual(segment(np.zeros(30, dtype=bool), self.res), [])

    def test_persistent_flags(self):
        kept = persistent_flags(self.flags, segment(self.flags, self.res))
        self.assertEqual(
            list(np.flatnonzero(kept)), [5, 6, 7, 8, 9, 10, 13, 14])

    def test_invalid(self):
        with self.assertRaises(DomainError):
            segment(self.flags, self.res, min_persistence=0)
        with self.assertRaises(DomainError):
            segment(self.flags, self.res, gap_tolerance=-1)
        with self.assertRaises(AlignmentError):
            segment(self.flags[:-1], self.res)


def make_segment(start, inflection, end):
    return ChangeSegment(
        start=start, inflection=inflection, end=end, start_rate=0.0,
        end_rate=0.0, mean_severity=1.0, direction=-1)


class PhaseLabelsTest(SimpleTestCase):
    def setUp(self):
        self.observed = np.full(20, 10.0)
        self.observed[10:15] = [8, 6, 4, 5, 8]
        self.observed[15] = 9.5

    def labels(self, segments, observed=None):
        observed = self.observed if observed is None else observed
        return list(phase_labels(
            residual_series(np.zeros(20), observed), segments, 10.0,
            band=0.1))

    def test_labels(self):
        labels = self.labels([make_segment(10, 12, 15)])
        self.assertEqual(labels[:10], [Phase.BASELINE] * 10)
        self.assertEqual(labels[10:13], [Phase.CHANGE] * 3)
        self.assertEqual(labels[13:15], [Phase.CONTINUING_RECOVERY] * 2)
        self.assertEqual(labels[15:], [Phase.FULL_RECOVERY] * 5)

    def test_next_segment_restarts_change(self):
        labels = self.labels(
            [make_segment(17, 17, 18), make_segment(10, 12, 15)])
        self.assertEqual(labels[15:17], [Phase.FULL_RECOVERY] * 2)
        self.assertEqual(labels[17], Phase.CHANGE)
        self.assertEqual(labels[18:], [Phase.FULL_RECOVERY] * 2)

    def test_gap_does_not_recover(self):
        observed = self.observed.copy()
        observed[15] = nan
        labels = self.labels([make_segment(10, 12, 15)], observed)
        self.assertEqual(labels[15], Phase.CONTINUING_RECOVERY)
        self.assertEqual(labels[16], Phase.FULL_RECOVERY)

    def test_no_segments(self):
        self.assertEqual(self.labels([]), [Phase.BASELINE] * 20)


class ConfidenceTest(SimpleTestCase):
    def test_members_over_their_threshold(self):
        members = {"FCNN": [0.0, 5.0, 0.0], "LSTM": [0.0, 5.0, nan]}
        taus = {"FCNN": 4.0, "LSTM": 30.0}
        self.assertEqual(
            [confidence(members, taus, t) for t in range(3)], [0, 1, 0])

    def test_per_step_taus(self):
        members = {"FCNN": [3.0, 3.0]}
        taus = {"FCNN": np.array([10.0, 1.0])}
        self.assertEqual(confidence(members, taus, 0), 0)
        self.assertEqual(confidence(members, taus, 1), 1)

    def test_confidences_count_strict_exceedance(self):
        members = {"FCNN": [2.0, 3.0, nan, 3.0], "CNN": [2.0, 2.0, 4.0, 1.0]}
        taus = {"FCNN": 4.0, "CNN": 4.0}
        self.assertEqual(
            list(confidences(members, taus, 4)), [0, 1, 1, 1])
        self.assertEqual(
            list(confidences(members, taus, 4,
                             scope=[True, True, False, True])), [0, 1, 0, 1])

    def test_member_flags(self):
        flags, taus = member_flags(
            {"FCNN": [1.0, 2.0, 3.0, 4.0], "CNN": [4.0, 3.0, 2.0, 1.0]},
            percent=25, mode="batch")
        self.assertEqual(list(np.flatnonzero(flags["FCNN"])), [3])
        self.assertEqual(list(np.flatnonzero(flags["CNN"])), [0])
        self.assertAlmostEqual(taus["CNN"], 10.75)

    def test_change_points(self):
        res = residual_series([0.0, -3.0, 2.0])
        points = change_points(
            res, [False, True, True], confidences=np.array([0, 2, 1]))
        self.assertEqual([p.index for p in points], [1, 2])
        self.assertEqual(points[0].date, datetime.date(2020, 1, 2))
        self.assertEqual(points[0].severity, 3.0)
        self.assertEqual(points[0].direction, -1)
        self.assertEqual(points[1].confidence, 1)


class BaselineMedianTest(SimpleTestCase):
    def test_training_span_only(self):
        series = make_series([1.0, nan, 3.0, 100.0])
        self.assertEqual(baseline_median(series, 2), 2.0)

    def test_no_observation(self):
        with self.assertRaises(InsufficientDataError):
            baseline_median(make_series([nan, nan, 3.0]), 1)


def drop_scenario():
    values = np.full(100, 10.0)
    values[70:90] = 4.0
    series = make_series(values)
    prediction = np.full(100, 10.0)
    prediction[:10] = nan
    return series, single_member(prediction, FIXTURE_START)


class DetectChangesTest(NumpyAssertionMixin, SimpleTestCase):
    def test_batch(self):
        series, forecast = drop_scenario()
        report = detect_changes(
            series, forecast, training_end_index=49, scope="all")
        self.assertEqual(report.tau, 0.0)
        self.assertEqual(list(np.flatnonzero(report.flags)), list(range(70, 90)))
        self.assertEqual(report.baseline_median, 10.0)
        self.assertEqual(report.training_end, datetime.date(2020, 2, 19))

        seg, = report.segments
        self.assertEqual((seg.start, seg.inflection, seg.end), (70, 70, 89))
        self.assertEqual(seg.direction, -1)
        self.assertEqual(seg.mean_severity, 6.0)

        self.assertEqual(report.phases[69], Phase.BASELINE)
        self.assertEqual(report.phases[70], Phase.CHANGE)
        self.assertEqual(
            set(report.phases[71:90]), {Phase.CONTINUING_RECOVERY.value})
        self.assertEqual(set(report.phases[90:]), {Phase.FULL_RECOVERY.value})

        self.assertArrayEqual(report.confidence, report.flags.astype(int))
        points = report.change_points
        self.assertEqual(len(points), 20)
        self.assertEqual(points[0].date, datetime.date(2020, 3, 11))

    def test_test_scope(self):
        series, forecast = drop_scenario()
        report = detect_changes(
            series, forecast, training_end_index=49, scope="test")
        self.assertEqual(report.tau, 36.0)
        self.assertEqual(list(np.flatnonzero(report.flags)), list(range(78, 90)))
        seg, = report.segments
        self.assertEqual((seg.start, seg.end), (78, 89))

    def test_default_scope_is_the_test_span(self):
        series, forecast = drop_scenario()
        default = detect_changes(series, forecast, training_end_index=49)
        test = detect_changes(
            series, forecast, training_end_index=49, scope="test")
        self.assertEqual(default.settings["scope"], "test")
        self.assertEqual(default.tau, test.tau)
        self.assertArrayEqual(default.flags, test.flags)
        self.assertEqual(default.segments, test.segments)

    def test_tie_flags_carry_no_confidence(self):
        # every flag comes from the tie quota at tau == 36
        series, forecast = drop_scenario()
        report = detect_changes(
            series, forecast, training_end_index=49, scope="test")
        self.assertEqual(report.flags.sum(), 12)
        self.assertEqual(report.confidence.max(), 0)
        self.assertEqual(
            {p.confidence for p in report.change_points}, {0})

    def test_member_detections(self):
        series, forecast = drop_scenario()
        report = detect_changes(series, forecast, training_end_index=49)
        self.assertEqual(report.detectors, ["ensemble", "LSTM"])
        member = report.detection("LSTM")
        self.assertEqual(member.tau, report.tau)
        self.assertArrayEqual(member.flags, report.flags)
        self.assertEqual(member.segments, report.segments)
        self.assertArrayEqual(
            report.detection().persistent_flags, report.persistent_flags)
        with self.assertRaises(InputError):
            report.detection("CNN")

    def test_streaming(self):
        series, forecast = drop_scenario()
        report = detect_changes(
            series, forecast, training_end_index=49, mode="streaming",
            scope="all")
        self.assertEqual(list(np.flatnonzero(report.flags)), list(range(70, 90)))
        self.assertEqual(report.tau.shape, (100,))
        self.assertTrue(np.isnan(report.tau[:10]).all())

        data = report.to_dict()
        self.assertIsNone(data["tau"])
        self.assertIsNone(data["members"]["LSTM"]["tau"])
        self.assertIn("tau", data["steps"][50])

    def test_invalid_settings(self):
        series, forecast = drop_scenario()
        with self.assertRaises(DomainError):
            detect_changes(series, forecast, 49, mode="online")
        with self.assertRaises(DomainError):
            detect_changes(series, forecast, 49, scope="train")
        with self.assertRaises(AlignmentError):
            detect_changes(series.slice(1), forecast, 49)


class ChangeReportTest(NumpyAssertionMixin, SimpleTestCase):
    def setUp(self):
        series, forecast = drop_scenario()
        self.report = detect_changes(series, forecast, training_end_index=49,
                                     scope="all")

    def test_dict(self):
        data = self.report.to_dict()
        self.assertEqual(data["format"], "ntlchange-report/1")
        self.assertEqual(data["zone_id"], "zone")
        self.assertEqual(data["training_end"], "2020-02-19")
        self.assertEqual(data["weights"], {"LSTM": 1.0})
        self.assertEqual(data["summary"], {
            "steps": 100, "flagged_steps": 20, "persistent_flagged_steps": 20,
            "segments": 1})
        self.assertEqual(data["settings"]["percent"], 25.0)
        self.assertEqual(data["settings"]["mode"], "batch")
        self.assertEqual(data["segments"][0]["start"], "2020-03-11")
        self.assertEqual(data["segments"][0]["end"], "2020-03-30")
        self.assertEqual(data["steps"][70]["phase"], "change")
        self.assertEqual(data["steps"][70]["r"], -6.0)
        self.assertNotIn("residual", data["steps"][70])
        self.assertNotIn("tau", data["steps"][0])

    def test_member_entries(self):
        data = self.report.to_dict()
        member = data["members"]["LSTM"]
        self.assertEqual(member["tau"], 0.0)
        self.assertEqual(member["flagged_steps"], 20)
        self.assertEqual(member["persistent_flagged_steps"], 20)
        self.assertEqual(member["segments"], data["segments"])
        self.assertEqual(data["steps"][70]["member_flagged"], {"LSTM": True})
        self.assertEqual(data["steps"][69]["member_flagged"], {"LSTM": False})

    def test_read_back(self):
        data = json.loads(dump_json(self.report.to_dict()))
        self.assertIsNone(data["steps"][0]["ensemble"])
        report = ChangeReport.from_dict(data)
        self.assertEqual(report.training_end_index, 49)
        self.assertEqual(report.segments, self.report.segments)
        self.assertEqual(report.tau, self.report.tau)
        self.assertArrayEqual(report.flags, self.report.flags)
        self.assertEqual(list(report.phases), list(self.report.phases))
        self.assertArrayEqual(report.residuals.values,
                              self.report.residuals.values)
        member = report.detection("LSTM")
        self.assertEqual(member.tau, 0.0)
        self.assertArrayEqual(member.flags, self.report.flags)
        self.assertEqual(member.segments, self.report.segments)

    def test_unknown_format(self):
        data = self.report.to_dict()
        data["format"] = "ntlchange-report/0"
        with self.assertRaises(InputError):
            ChangeReport.from_dict(data)
