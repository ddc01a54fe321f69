from django.core.management.base import BaseCommand

from lab.config import parse_values
from lab.experiments import record_experiment, sweep

from ._options import (
    add_output_arguments, add_record_arguments, add_scenario_arguments, command_errors, output_from_options,
    scenario_from_options,
)


class Command(BaseCommand):
    help = 'Sweep one scenario key, with and without SRPS, into a stacked summary CSV'

    def add_arguments(self, parser):
        parser.add_argument('variable', help='scenario key to vary, e.g. m or gamma')
        parser.add_argument('values', nargs='*', help='values, comma lists or integer ranges such as 0..4')
        add_scenario_arguments(parser)
        add_output_arguments(parser)
        add_record_arguments(parser)

    def handle(self, *args, **options):
        with command_errors():
            config = scenario_from_options(options)
            variable = options['variable'].strip().lower()
            result = sweep(config, variable, parse_values(options['values']), output_from_options(options),
                           options['dispatch'])
            if options['record']:
                experiment = record_experiment('sweep', config, result.points, options['label'])
                self.stdout.write(f'recorded experiment {experiment.id}')
        self.stdout.write(str(result.path))
        self.stdout.write(self.style.SUCCESS(f'{len(result.frame)} summary row(s) for {variable}'))
