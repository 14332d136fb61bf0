from django.core.management.base import CommandError

from ntlchange import defaults
from ntlchange.ingest import load_zone_csv
from ntlchange.management.base import NtlBaseCommand
from ntlchange.models import ArchitectureId, checkpoint_text, train_all
from ntlchange.utils import NumericalError


def checkpoint_name(arch):
    return f"{str(arch).lower()}.json"


def training_log_name(arch):
    return f"{str(arch).lower()}_training_log.csv"


def parse_architectures(value):
    if not value:
        return list(ArchitectureId.values)
    archs = [a.strip().upper() for a in value.split(",") if a.strip()]
    unknown = [a for a in archs if a not in ArchitectureId.values]
    if unknown:
        raise CommandError(
            f"unknown architecture(s) {', '.join(unknown)}, available "
            f"choices are {', '.join(ArchitectureId.values)}")
    return archs


class Command(NtlBaseCommand):
    help = ("Train the FCNN, CNN and LSTM forecasters on the baseline span of "
            "a zone series and write their checkpoints and training logs.")

    def add_command_arguments(self, parser):
        parser.add_argument("--series", dest="series", metavar="PATH")
        parser.add_argument("--zone-id", dest="zone_id")
        parser.add_argument(
            "--training-end", dest="training_end", metavar="YYYY-MM-DD")
        parser.add_argument("--input-window", dest="input_window", type=int)
        parser.add_argument("--output-window", dest="output_window", type=int)
        parser.add_argument(
            "--epochs", dest="epochs", metavar="ARCH=N,...",
            help="Epochs per architecture, e.g. FCNN=70,CNN=90,LSTM=25.")
        parser.add_argument("--batch-size", dest="batch_size", type=int)
        parser.add_argument(
            "--split-fraction", dest="split_fraction", type=float)
        parser.add_argument("--max-norm", dest="max_norm", type=float)
        parser.add_argument("--activity-l2", dest="activity_l2", type=float)
        parser.add_argument(
            "--jobs", dest="jobs", type=int,
            help="Number of architectures trained concurrently.")
        parser.add_argument(
            "--architectures", dest="architectures", metavar="ARCH,...")

    def run(self, config, **options):
        series = load_zone_csv(
            self.require(config.series, "--series"), zone_id=config.zone_id)
        end = config.training_end_index(series)
        baseline = series.slice(0, end + 1)
        if len(baseline) < defaults.MIN_RECOMMENDED_TRAINING_DAYS:
            self.warn(
                f"Baseline of '{series.zone_id}' spans {len(baseline)} days, "
                f"fewer than the recommended "
                f"{defaults.MIN_RECOMMENDED_TRAINING_DAYS}")

        archs = parse_architectures(options.get("architectures"))
        try:
            results = train_all(
                baseline, config.train_config(), architectures=archs,
                jobs=config.jobs)
        except NumericalError as e:
            raise CommandError(f"training failed: {e}")

        with self.bundle(config) as bundle:
            for arch, (model, history) in results.items():
                bundle.write_text(checkpoint_name(arch), checkpoint_text(model))
                bundle.write_text(training_log_name(arch), history.to_csv())

        for arch, (model, history) in results.items():
            self.success(
                f"{arch}: {history.epochs} epoch(s), validation MAE "
                f"{model.val_loss:.6g}")
