from django.core.management.base import BaseCommand

from lab.experiments import record_experiment, simulate

from ._options import (
    add_output_arguments, add_record_arguments, add_scenario_arguments, command_errors, output_from_options,
    scenario_from_options,
)


class Command(BaseCommand):
    help = 'Run seeded simulations of one scenario and write per-run and summary CSVs'

    def add_arguments(self, parser):
        add_scenario_arguments(parser)
        add_output_arguments(parser)
        add_record_arguments(parser)
        parser.add_argument('--trace', action='store_true', default=None,
                            help='write trace_run_NNN.log files (default: SRPS_TRACE_ENABLED)')

    def handle(self, *args, **options):
        with command_errors():
            config = scenario_from_options(options)
            result = simulate(config, output_from_options(options), options['trace'], options['dispatch'])
            if options['record']:
                experiment = record_experiment('simulate', config, [(config, result.aggregate)], options['label'])
                self.stdout.write(f'recorded experiment {experiment.id}')
        mean = result.aggregate.mean
        self.stdout.write(
            f"{config.runs} run(s), srps={'on' if config.srps else 'off'}, m={config.m_malicious}: "
            f"{mean['packets_sent']:.1f} sent, {mean['delivered']:.1f} delivered, "
            f"{mean['malicious_drops']:.1f} malicious drops per run"
        )
        self.stdout.write(self.style.SUCCESS(f'{len(result.paths)} file(s) written'))
