import json

from django.core.management.base import CommandError

from ntlchange import defaults
from ntlchange.detect import ChangeReport
from ntlchange.evaluation import evaluate_all, load_ground_truth_csv
from ntlchange.management.base import NtlBaseCommand
from ntlchange.utils import InputError, dump_json

EVAL_FILE = "eval.json"


def read_report(path):
    with open(path, encoding="utf-8") as f:
        try:
            return ChangeReport.from_dict(json.load(f))
        except json.JSONDecodeError as e:
            raise InputError(f"invalid change report '{path}': {e}")


class Command(NtlBaseCommand):
    help = ("Score a change report against ground-truth events: recall, "
            "precision, F-beta and detection delay.")

    def add_command_arguments(self, parser):
        parser.add_argument("--report", dest="report", metavar="PATH")
        parser.add_argument(
            "--ground-truth", dest="ground_truth", metavar="PATH")
        parser.add_argument(
            "--beta", dest="beta", type=float, default=defaults.DEFAULT_F_BETA)
        parser.add_argument(
            "--recovery-band", dest="recovery_band", type=float)
        parser.add_argument(
            "--buffer-years", dest="buffer_years", type=int,
            default=defaults.DEFAULT_YEARLY_BUFFER)

    def run(self, config, **options):
        report = read_report(self.require(options.get("report"), "--report"))
        events = load_ground_truth_csv(
            self.require(config.ground_truth, "--ground-truth"))
        events = [e for e in events if e.zone_id == report.zone_id]
        if not events:
            raise CommandError(
                f"no ground-truth event for zone '{report.zone_id}'")

        results = evaluate_all(
            report, events, beta=options["beta"], band=config.recovery_band,
            buffer_years=options["buffer_years"])

        with self.bundle(config) as bundle:
            bundle.write_text(EVAL_FILE, dump_json({
                "format": defaults.EVAL_FORMAT,
                "zone_id": report.zone_id,
                "events": [
                    {"start": e.start.isoformat(),
                     "end": None if e.end is None else e.end.isoformat(),
                     "change_type": str(e.change_type),
                     "detectors": {
                         detector: r.to_dict()
                         for detector, r in scores.items()}}
                    for e, scores in results],
            }))

        for event, scores in results:
            for detector, result in scores.items():
                self.success(
                    f"{report.zone_id} {event.start} {detector}: recall "
                    f"{result.recall:.4f}, precision {_fmt(result.precision)}, "
                    f"F{options['beta']:g} {_fmt(result.f_beta)}, "
                    f"delay {result.delay}")


def _fmt(value):
    return "undefined" if value is None else f"{value:.4f}"
