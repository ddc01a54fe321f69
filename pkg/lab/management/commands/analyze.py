from django.core.management.base import BaseCommand

from lab.config import parse_overrides
from lab.experiments import ANALYSES, analyze

from ._options import add_output_arguments, command_errors, output_from_options


class Command(BaseCommand):
    help = 'Write the analytic detection, false alarm and cost tables as CSV'

    def add_arguments(self, parser):
        parser.add_argument('--figure', required=True, choices=ANALYSES)
        parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='NAME=VALUE',
                            help='override one parameter of the analysis; repeatable')
        add_output_arguments(parser)

    def handle(self, *args, **options):
        with command_errors():
            paths = analyze(options['figure'], output_from_options(options), parse_overrides(options['overrides']))
        for path in paths:
            self.stdout.write(str(path))
        self.stdout.write(self.style.SUCCESS(f"{options['figure']}: {len(paths)} file(s) written"))
