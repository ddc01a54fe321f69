from django.core.management.base import BaseCommand, CommandError

from lab.validation import LEVELS, REGISTRY, run_level

from ._options import add_scenario_arguments, command_errors, scenario_from_options


class Command(BaseCommand):
    help = 'Run the acceptance checks and report each one; exits non-zero if any fails'

    def add_arguments(self, parser):
        parser.add_argument('--level', choices=LEVELS, default='fast')
        parser.add_argument('--check', dest='checks', action='append', choices=sorted(REGISTRY),
                            help='run only this check; repeatable')
        add_scenario_arguments(parser)

    def handle(self, *args, **options):
        with command_errors():
            base = scenario_from_options({**options, 'runs': None})
            results = run_level(options['level'], base, runs=options['runs'] or 10, seed=options['seed'] or 0,
                                names=options['checks'])
        for result in results:
            status = self.style.SUCCESS('PASS') if result.passed else self.style.ERROR('FAIL')
            self.stdout.write(f'{status} {result.name:<20} {result.seconds:7.1f}s  {result.detail}')
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CommandError(f'{len(failed)} of {len(results)} check(s) failed: {", ".join(failed)}')
        self.stdout.write(self.style.SUCCESS(f'all {len(results)} check(s) passed at level {options["level"]}'))
