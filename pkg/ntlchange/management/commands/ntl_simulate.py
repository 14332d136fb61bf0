import dataclasses

from django.core.management.base import CommandError

from ntlchange import defaults
from ntlchange.evaluation import ground_truth_csv_text
from ntlchange.ingest import zone_csv_text
from ntlchange.management.base import NtlBaseCommand
from ntlchange.synth import PRESETS, generate, inject_gaps, load_scenario
from ntlchange.utils import dump_json


class Command(NtlBaseCommand):
    help = ("Generate a synthetic zone series with its ground truth from a "
            "scenario JSON file or a preset.")

    def add_command_arguments(self, parser):
        source = parser.add_mutually_exclusive_group()
        source.add_argument("--scenario", dest="scenario", metavar="PATH")
        source.add_argument("--preset", dest="preset", choices=sorted(PRESETS))
        parser.add_argument(
            "--gap-fraction", dest="gap_fraction", type=float, default=0.0,
            help="Fraction of days masked at random.")

    def run(self, config, **options):
        if options.get("preset"):
            spec = PRESETS[options["preset"]]()
        elif config.scenario:
            spec = load_scenario(config.scenario)
        else:
            raise CommandError("--scenario or --preset is required")
        if options.get("seed") is not None:
            spec = dataclasses.replace(spec, seed=options["seed"])

        series, event = generate(spec)
        if options["gap_fraction"]:
            series = inject_gaps(series, options["gap_fraction"], seed=spec.seed)

        zone_file = f"{spec.zone_id}.csv"
        truth_file = f"{spec.zone_id}_truth.csv"
        with self.bundle(config) as bundle:
            bundle.write_text(zone_file, zone_csv_text(series))
            bundle.write_text(
                truth_file,
                ground_truth_csv_text([] if event is None else [event]))
            bundle.write_text(f"{spec.zone_id}_scenario.json",
                              dump_json(spec.to_dict()))
            # paths relative to the run config's directory
            bundle.write_text(f"{spec.zone_id}_run.json", dump_json({
                "config_version": defaults.RUN_CONFIG_VERSION,
                "zone_id": spec.zone_id,
                "series": zone_file,
                "ground_truth": truth_file,
                "training_end": spec.training_end.isoformat(),
                "seed": spec.seed,
            }))

        self.success(
            f"Wrote {len(series)} day(s) of '{spec.zone_id}' "
            f"({spec.change}, seed {spec.seed}) to {config.out}")
