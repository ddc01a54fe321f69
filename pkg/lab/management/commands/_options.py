"""Flags and error handling shared by the lab commands."""
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from crypto_core.exceptions import SrpsError
from lab.config import load_scenario


def add_scenario_arguments(parser):
    parser.add_argument('--config', help='scenario file of key = value lines')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override one scenario key; repeatable')
    parser.add_argument('--seed', type=int, help='master seed (scenario key seed)')
    parser.add_argument('--runs', type=int, help='independent runs (scenario key runs)')


def add_output_arguments(parser):
    parser.add_argument('--out', help='output directory (default: SRPS_OUTPUT_DIR)')


def add_record_arguments(parser):
    parser.add_argument('--record', action='store_true', help='store the experiment and its runs in the database')
    parser.add_argument('--label', default='', help='label for the recorded experiment')
    parser.add_argument('--dispatch', choices=('inline', 'celery'), help='override SRPS_DISPATCH')


def scenario_from_options(options):
    config = load_scenario(options['config'], options['overrides'])
    if options.get('seed') is not None:
        config = replace(config, master_seed=options['seed'])
    if options.get('runs') is not None:
        config = replace(config, runs=options['runs'])
    return config


def output_from_options(options) -> Path:
    return Path(options['out']) if options.get('out') else Path(settings.SRPS_OUTPUT_DIR)


@contextmanager
def command_errors():
    """Lab errors become ``CommandError`` with the diagnostic, so the exit status is non-zero."""
    try:
        yield
    except SrpsError as e:
        raise CommandError(str(e)) from e
