"""``ntlchange <subcommand>``: the ``ntl_*`` management commands without a
Django project.

When ``DJANGO_SETTINGS_MODULE`` is not set, a minimal configuration with
only this app installed is used.
"""

import os
import sys

SUBCOMMANDS = ("ingest", "train", "detect", "eval", "simulate", "plot")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {"format": "%(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "simple"},
    },
    "loggers": {
        "ntlchange": {"handlers": ["console"], "level": "INFO"},
    },
}

USAGE = (
    "usage: ntlchange {%s} [options]\n"
    "Run 'ntlchange <subcommand> --help' for the options of a subcommand.\n"
    % ",".join(SUBCOMMANDS))


def configure():
    from django.conf import settings

    if not settings.configured and not os.environ.get("DJANGO_SETTINGS_MODULE"):
        settings.configure(
            INSTALLED_APPS=["ntlchange"],
            USE_TZ=True,
            LOGGING=LOGGING)

    import django
    django.setup()


def main(argv=None):
    argv = list(sys.argv if argv is None else argv)
    if len(argv) < 2 or argv[1] in ("-h", "--help"):
        sys.stdout.write(USAGE)
        return 0 if len(argv) >= 2 else 2
    if argv[1] not in SUBCOMMANDS:
        sys.stderr.write(f"unknown subcommand '{argv[1]}'\n" + USAGE)
        return 2

    configure()

    from django.core.management import execute_from_command_line
    execute_from_command_line(["ntlchange", f"ntl_{argv[1]}", *argv[2:]])
    return 0


if __name__ == "__main__":
    sys.exit(main())
