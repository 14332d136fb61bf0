from django.core.management.base import CommandError

from ntlchange.ingest import (build_zone_series, load_pixel_csv,
                              load_zone_csv, load_zone_spec, rolling_smooth,
                              zone_csv_text, zone_from_records)
from ntlchange.management.base import NtlBaseCommand


class Command(NtlBaseCommand):
    help = ("Build a smoothed daily zone series from a pixel CSV (with an "
            "optional zone spec) or from a zone CSV.")

    def add_command_arguments(self, parser):
        source = parser.add_mutually_exclusive_group()
        source.add_argument("--pixels", dest="pixels", metavar="PATH")
        source.add_argument("--zone-csv", dest="zone_csv", metavar="PATH")
        parser.add_argument(
            "--zone-spec", dest="zone_spec", metavar="PATH",
            help="JSON zone spec; without it every pixel in the CSV is used.")
        parser.add_argument("--zone-id", dest="zone_id")
        parser.add_argument(
            "--smoothing-window-days", dest="smoothing_window_days", type=int)
        parser.add_argument(
            "--no-smooth", dest="smooth", action="store_false",
            help="Write the daily means without the rolling average.")

    def run(self, config, **options):
        if config.pixels:
            records = load_pixel_csv(config.pixels)
            if config.zone_spec:
                zone = load_zone_spec(config.zone_spec, records=records)
            else:
                zone = zone_from_records(config.zone_id or "zone", records)
            series = build_zone_series(records, zone)
        elif config.zone_csv:
            series = load_zone_csv(config.zone_csv, zone_id=config.zone_id)
        else:
            raise CommandError("--pixels or --zone-csv is required")

        if options.get("smooth", True):
            series = rolling_smooth(series, config.smoothing_window_days)

        with self.bundle(config) as bundle:
            path = bundle.write_text(
                f"{series.zone_id}.csv", zone_csv_text(series))

        self.success(
            f"Wrote {len(series)} day(s) of '{series.zone_id}' "
            f"({int(series.gap_mask.sum())} gap(s)) to {path}")
