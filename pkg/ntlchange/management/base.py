import logging

from django.core.exceptions import ImproperlyConfigured, ValidationError
from django.core.management.base import BaseCommand, CommandError

from ntlchange.runconfig import OVERRIDE_PATHS, RunConfig, parse_mapping
from ntlchange.utils import InvalidWeights, NtlChangeError, OutputBundle

logger = logging.getLogger("ntlchange")

# Exceptions turned into CommandError, i.e. a message and exit status 1
HANDLED_ERRORS = (
    NtlChangeError, ImproperlyConfigured, ValidationError, InvalidWeights,
    OSError)


def _format_error(error):
    if isinstance(error, ValidationError):
        return "; ".join(error.messages)
    return str(error)


class NtlBaseCommand(BaseCommand):
    """Common options and error handling of the ``ntl_*`` commands.

    Subclasses declare their own flags in :meth:`add_command_arguments` and
    do the work in :meth:`run`, which gets the resolved
    :class:`~ntlchange.runconfig.RunConfig`.
    """

    def add_arguments(self, parser):
        parser.add_argument(
            "--config", dest="config", metavar="PATH",
            help="Run config JSON file, overridden by the other flags.")
        parser.add_argument(
            "--seed", dest="seed", type=int, default=None,
            help="Random seed.")
        parser.add_argument(
            "--out", dest="out", metavar="DIR", default=None,
            help="Output directory.")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def get_overrides(self, options):
        overrides = {k: options.get(k) for k in OVERRIDE_PATHS}
        if overrides.get("weights") is not None:
            overrides["weights"] = parse_mapping(overrides["weights"])
        if overrides.get("epochs") is not None:
            overrides["epochs"] = {
                k: int(v) for k, v in parse_mapping(overrides["epochs"]).items()}
        if overrides.get("training_end") is not None:
            overrides["training_end"] = str(overrides["training_end"])
        return overrides

    def handle(self, *args, **options):
        if options.get("verbosity", 1) >= 2:
            logger.setLevel(logging.DEBUG)
        try:
            config = RunConfig.load(
                options.get("config"), **self.get_overrides(options))
            self.run(config, **{
                k: v for k, v in options.items() if k != "config"})
        except HANDLED_ERRORS as e:
            raise CommandError(_format_error(e))

    def run(self, config, **options):
        raise NotImplementedError

    def bundle(self, config):
        return OutputBundle(config.out)

    def require(self, value, flag):
        if not value:
            raise CommandError(f"{flag} is required")
        return value

    def success(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def warn(self, message):
        logger.warning(message)
        self.stderr.write(self.style.WARNING(message))
