import os

from django.core.exceptions import ValidationError
from django.core.management.base import CommandError

from ntlchange.detect import detect_changes
from ntlchange.forecast import forecast_all, forecast_csv_text
from ntlchange.ingest import load_zone_csv
from ntlchange.management.base import NtlBaseCommand
from ntlchange.management.commands.ntl_train import (checkpoint_name,
                                                     parse_architectures)
from ntlchange.models import load_checkpoint
from ntlchange.utils import dump_json

FORECAST_FILE = "forecast.csv"
REPORT_FILE = "report.json"


def load_members(directory, archs, config):
    """Load the checkpoints of ``archs``, which must match the configured
    windows."""
    models = []
    for arch in archs:
        path = os.path.join(directory, checkpoint_name(arch))
        if not os.path.exists(path):
            raise CommandError(f"missing checkpoint '{path}'")
        model = load_checkpoint(path)
        windows = (model.input_window, model.output_window)
        expected = (config.input_window, config.output_window)
        if windows != expected:
            raise ValidationError(
                f"checkpoint '{path}' maps {windows[0]} to {windows[1]} days, "
                f"while the config says {expected[0]} to {expected[1]}",
                code="window_mismatch")
        models.append(model)
    return models


class Command(NtlBaseCommand):
    help = ("Forecast a zone series with trained checkpoints and write the "
            "forecast export and the change report.")

    def add_command_arguments(self, parser):
        parser.add_argument("--series", dest="series", metavar="PATH")
        parser.add_argument("--zone-id", dest="zone_id")
        parser.add_argument(
            "--training-end", dest="training_end", metavar="YYYY-MM-DD")
        parser.add_argument(
            "--checkpoints", dest="checkpoints", metavar="DIR",
            help="Directory of the checkpoints, the output directory if "
                 "omitted.")
        parser.add_argument("--input-window", dest="input_window", type=int)
        parser.add_argument("--output-window", dest="output_window", type=int)
        parser.add_argument(
            "--weights", dest="weights", metavar="ARCH=W,...",
            help="Ensemble weights, e.g. LSTM=0.5,FCNN=0.3,CNN=0.2.")
        parser.add_argument(
            "--architectures", dest="architectures", metavar="ARCH,...",
            help="Ensemble members, the weighted architectures if omitted.")
        parser.add_argument("--percent", dest="percent", type=float)
        parser.add_argument(
            "--mode", dest="mode", choices=("batch", "streaming"))
        parser.add_argument("--scope", dest="scope", choices=("all", "test"))
        parser.add_argument(
            "--streaming-window-days", dest="streaming_window_days", type=int)
        parser.add_argument(
            "--min-persistence", dest="min_persistence", type=int)
        parser.add_argument("--gap-tolerance", dest="gap_tolerance", type=int)
        parser.add_argument(
            "--recovery-band", dest="recovery_band", type=float)

    def run(self, config, **options):
        series = load_zone_csv(
            self.require(config.series, "--series"), zone_id=config.zone_id)
        end = config.training_end_index(series)

        if options.get("architectures"):
            archs = parse_architectures(options["architectures"])
        else:
            archs = [a for a, w in config.weights.items() if w > 0]
        weights = {a: config.weights.get(a, 0.0) for a in archs}

        models = load_members(
            options.get("checkpoints") or config.out, archs, config)
        forecast = forecast_all(models, series, weights)
        report = detect_changes(series, forecast, end, **config.detect_kwargs())

        with self.bundle(config) as bundle:
            bundle.write_text(FORECAST_FILE, forecast_csv_text(series, forecast))
            bundle.write_text(REPORT_FILE, dump_json(report.to_dict()))

        self.success(
            f"'{series.zone_id}': {int(report.flags.sum())} flagged step(s), "
            f"{len(report.segments)} segment(s)")
