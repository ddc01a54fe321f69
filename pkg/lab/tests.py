import io
import logging
import re
import tempfile
from pathlib import Path
from unittest import mock

import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from simnet.exceptions import ConfigurationError
from simnet.runner import run_scenario, run_seed
from simnet.scenario import CONFIG_KEYS, ScenarioConfig

from .config import config_from_settings, load_scenario, parse_config_text, parse_overrides, parse_values, settings_defaults
from .dispatch import dispatch_mode, execute_runs
from .experiments import analysis_arguments, record_experiment, simulate, sweep_points
from .factories import ExperimentFactory, RunRecordFactory
from .models import Experiment, RunRecord
from .output import trace_to, write_csv
from .tasks import run_scenario_task
from .validation import REGISTRY, run_level, selected

SMALL = ['--set', 'n=30', '--set', 'nb=8', '--set', 'horizon_s=30', '--set', 'mu=0.05']


def small(**changes):
    values = dict(n_nodes=30, target_nb=8, horizon=30.0, runs=2, mu=0.05, master_seed=3)
    values.update(changes)
    return ScenarioConfig(**values)


class OutputDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.out = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def run_command(self, *args):
        stdout = io.StringIO()
        call_command(*args, stdout=stdout)
        return stdout.getvalue()


class ConfigParsingTests(SimpleTestCase):
    def test_bindings_keep_their_lines(self):
        found = parse_config_text('# scenario\n\nn = 30  # nodes\n  Medium.PC = 0.02\n')
        self.assertEqual(set(found), {'n', 'medium.pc'})
        self.assertEqual((found['n'].value, found['n'].line), ('30', 3))
        self.assertEqual((found['medium.pc'].line, found['medium.pc'].key_column), (4, 3))

    def test_file_values_reach_the_config(self):
        config = config_from_settings(parse_config_text('m = 2\nsrps = off\nadversary.behaviors = wormhole\n'))
        self.assertEqual((config.m_malicious, config.srps), (2, False))
        self.assertEqual({b.value for b in config.behaviors}, {'wormhole'})

    def test_unknown_key_points_at_the_key(self):
        with self.assertRaises(ConfigurationError) as ctx:
            config_from_settings(parse_config_text('n = 30\n\n   nodes = 5\n'))
        self.assertEqual((ctx.exception.line, ctx.exception.column), (3, 4))
        self.assertIn("'nodes'", str(ctx.exception))

    def test_bad_value_points_at_the_value(self):
        with self.assertRaises(ConfigurationError) as ctx:
            config_from_settings(parse_config_text('n = 30\n  gamma = x\n'))
        self.assertEqual((ctx.exception.line, ctx.exception.column), (2, 11))
        self.assertTrue(str(ctx.exception).startswith('line 2, column 11:'))

    def test_inconsistent_values_are_traced_back(self):
        with self.assertRaises(ConfigurationError) as ctx:
            config_from_settings(parse_config_text('m = 100\nn = 50\n'))
        self.assertEqual((ctx.exception.key, ctx.exception.line, ctx.exception.column), ('m', 1, 5))

    def test_malformed_lines(self):
        for text, line in (('n = 30\n= 5\n', 2), ('n 30\n', 1), ('nodes\n', 1), ('n =\n', 1)):
            with self.assertRaises(ConfigurationError) as ctx:
                parse_config_text(text)
            self.assertEqual(ctx.exception.line, line, text)

    def test_duplicate_key(self):
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config_text('n = 30\nN = 40\n')
        self.assertEqual(ctx.exception.line, 2)
        self.assertIn('line 1', str(ctx.exception))

    def test_overrides(self):
        self.assertEqual(parse_overrides(['m=2', ' Gamma = 4', 'm=3']), {'m': '3', 'gamma': '4'})
        with self.assertRaises(ConfigurationError):
            parse_overrides(['m'])

    def test_sweep_values(self):
        self.assertEqual(parse_values(['0..2', '5,7', ' 9 ']), ['0', '1', '2', '5', '7', '9'])
        for bad in (['4..2'], ['a..b']):
            with self.assertRaises(ConfigurationError):
                parse_values(bad)

    def test_every_key_is_documented_in_the_samples(self):
        readme = (Path(settings.BASE_DIR) / 'scenarios' / 'README.md').read_text()
        for key in CONFIG_KEYS:
            self.assertIn(f'`{key}`', readme)


class PrecedenceTests(SimpleTestCase):
    @override_settings(SRPS_SCENARIO_DEFAULTS={'nb': '12', 'medium_pc': '0.02'})
    def test_settings_sit_between_defaults_and_file(self):
        config = settings_defaults()
        self.assertEqual((config.target_nb, config.pc), (12.0, 0.02))

    @override_settings(SRPS_SCENARIO_DEFAULTS={'nb': 'many'})
    def test_bad_setting_names_the_variable(self):
        with self.assertRaisesRegex(ConfigurationError, '^SRPS_DEFAULT_NB'):
            settings_defaults()

    @override_settings(SRPS_SCENARIO_DEFAULTS={'gamma': '4'})
    def test_flags_win_over_the_file(self):
        with tempfile.NamedTemporaryFile('w', suffix='.conf', delete=False) as handle:
            handle.write('gamma = 5\nbeta = 6\n')
        try:
            config = load_scenario(handle.name, ['gamma=7'])
        finally:
            Path(handle.name).unlink()
        self.assertEqual((config.gamma, config.beta), (7, 6))
        self.assertEqual(load_scenario().gamma, 4)

    def test_missing_file(self):
        with self.assertRaisesRegex(ConfigurationError, 'cannot read'):
            load_scenario('/nonexistent/scenario.conf')

    def test_sample_scenarios_parse(self):
        folder = Path(settings.BASE_DIR) / 'scenarios'
        self.assertEqual(load_scenario(folder / 'defaults.conf'), ScenarioConfig())
        self.assertEqual(load_scenario(folder / 'wormhole_m2.conf').m_malicious, 2)


class OutputTests(OutputDirMixin, SimpleTestCase):
    def test_csv_layout(self):
        path = write_csv(pd.DataFrame({'a': [1, 2], 'b': [0.1, float('nan')]}), self.out / 'x.csv')
        self.assertEqual(path.read_bytes(), b'a,b\n1,0.1\n2,nan\n')

    def test_trace_handler_is_removed(self):
        logger = logging.getLogger('srps.trace')
        level = logger.level
        with trace_to(self.out / 'trace.log'):
            logger.info('%.6f %d %s %s %s', 1.5, 3, 'rdp', 'held', '-')
        logger.info('not traced')
        self.assertEqual((self.out / 'trace.log').read_text(), '1.500000 3 rdp held -\n')
        self.assertEqual(logger.level, level)


class DispatchTests(SimpleTestCase):
    def test_celery_and_inline_agree(self):
        config = small(m_malicious=2)
        inline = execute_runs(config, [1, 0], 'inline')
        pooled = execute_runs(config, [1, 0], 'celery')
        self.assertEqual([m.summary() for m in pooled], [m.summary() for m in inline])
        self.assertEqual(pooled[0].drops_timeline, inline[0].drops_timeline)

    def test_task_runs_one_seed(self):
        config = small()
        payload = run_scenario_task(config.as_config(), 1)
        self.assertEqual(payload, run_scenario(config, run_seed(config.master_seed, 1)).to_payload())

    @override_settings(SRPS_DISPATCH='threads')
    def test_unknown_mode(self):
        with self.assertRaises(ConfigurationError):
            dispatch_mode()


class AnalyzeCommandTests(OutputDirMixin, SimpleTestCase):
    def test_detection_curve(self):
        self.run_command('analyze', '--figure', 'fig9a', '--out', str(self.out))
        frame = pd.read_csv(self.out / 'fig9a.csv')
        self.assertEqual(list(frame.columns)[:3], ['nb', 'p_c', 'g'])
        self.assertEqual(len(frame), 38)

    def test_overrides(self):
        self.run_command('analyze', '--figure', 'fig12', '--set', 'gamma_values=2..8', '--set', 'nb=15',
                         '--out', str(self.out))
        self.assertEqual(list(pd.read_csv(self.out / 'fig12.csv')['gamma']), list(range(2, 9)))

    def test_costs(self):
        self.run_command('analyze', '--figure', 'costs', '--out', str(self.out))
        memory = pd.read_csv(self.out / 'costs_memory.csv')
        self.assertEqual(memory['bytes'].tolist(), [1420])
        packets = pd.read_csv(self.out / 'costs_packets.csv').set_index('packet')
        self.assertEqual(packets.loc[['rdp', 'key_disclosure', 'rrp'], 'modelled_bytes'].tolist(), [47, 12, 18])
        self.assertTrue((self.out / 'costs_compute.csv').exists())

    def test_bad_override_names_the_key(self):
        with self.assertRaisesRegex(CommandError, 'lambda'):
            self.run_command('analyze', '--figure', 'fig9a', '--set', 'lambda=3', '--out', str(self.out))
        with self.assertRaisesRegex(CommandError, 'mu'):
            self.run_command('analyze', '--figure', 'fig9a', '--set', 'mu=2.5', '--out', str(self.out))

    def test_arguments_follow_annotations(self):
        self.assertEqual(analysis_arguments('fig9b', {'r': '25', 'mu': '9'}), {'r': 25.0, 'mu': 9})
        self.assertEqual(analysis_arguments('costs', {'nn': '30'}), {'nn': 30})
        with self.assertRaises(ConfigurationError):
            analysis_arguments('fig10', {})

    def test_repeated_invocations_are_identical(self):
        for attempt in ('a', 'b'):
            self.run_command('analyze', '--figure', 'fig9b', '--out', str(self.out / attempt))
        self.assertEqual((self.out / 'a' / 'fig9b.csv').read_bytes(), (self.out / 'b' / 'fig9b.csv').read_bytes())


class SimulateCommandTests(OutputDirMixin, SimpleTestCase):
    def simulate(self, out, *extra):
        return self.run_command('simulate', *SMALL, '--runs', '2', '--seed', '3', '--out', str(out), *extra)

    def test_files(self):
        self.simulate(self.out)
        names = {p.name for p in self.out.iterdir()}
        self.assertEqual(names, {'run_000_drops.csv', 'run_001_drops.csv', 'runs.csv', 'summary.csv'})
        summary = pd.read_csv(self.out / 'summary.csv')
        self.assertEqual(len(summary), 1)
        self.assertEqual(list(summary.columns[:len(CONFIG_KEYS)]), list(CONFIG_KEYS))
        self.assertIn('malicious_drops_mean', summary.columns)
        self.assertEqual(summary.loc[0, 'runs'], 2)
        self.assertEqual(len(pd.read_csv(self.out / 'runs.csv')), 2)
        self.assertEqual(list(pd.read_csv(self.out / 'run_000_drops.csv').columns), ['time_s', 'cumulative_drops'])

    def test_same_invocation_same_bytes(self):
        self.simulate(self.out / 'a', '--set', 'm=2')
        self.simulate(self.out / 'b', '--set', 'm=2')
        for path in (self.out / 'a').iterdir():
            self.assertEqual(path.read_bytes(), (self.out / 'b' / path.name).read_bytes(), path.name)

    def test_trace_logs(self):
        self.simulate(self.out, '--trace')
        lines = (self.out / 'trace_run_000.log').read_text().splitlines()
        self.assertTrue(lines)
        pattern = re.compile(r'^\d+\.\d{6} \d+ \S+ \S+ \S+$')
        self.assertTrue(all(pattern.match(line) for line in lines))

    def test_config_error_carries_line_and_column(self):
        config = self.out / 'bad.conf'
        config.write_text('n = 30\nnb = eight\n')
        with self.assertRaisesRegex(CommandError, r'^line 2, column 6: '):
            self.run_command('simulate', '--config', str(config), '--out', str(self.out))

    def test_infeasible_topology(self):
        with self.assertRaisesRegex(CommandError, 'colluders'):
            self.run_command('simulate', '--set', 'n=5', '--set', 'nb=2', '--set', 'm=4', '--set', 'horizon_s=5',
                             '--runs', '1', '--out', str(self.out))


class SweepCommandTests(OutputDirMixin, SimpleTestCase):
    def test_one_row_per_value_and_mode(self):
        self.run_command('sweep', 'm', '0..1', *SMALL, '--runs', '1', '--out', str(self.out))
        frame = pd.read_csv(self.out / 'sweep_m.csv')
        self.assertEqual(list(zip(frame['value'], frame['srps'])), [(0, True), (0, False), (1, True), (1, False)])
        self.assertEqual(list(frame.columns[:2]), ['variable', 'value'])

    def test_usage_errors(self):
        for values in ([], ['x'], ['1.5']):
            with self.assertRaises(CommandError):
                self.run_command('sweep', 'm', *values, '--out', str(self.out))
        with self.assertRaisesRegex(CommandError, 'nodes'):
            self.run_command('sweep', 'nodes', '1', '--out', str(self.out))

    def test_points_are_checked_before_running(self):
        self.assertEqual([c.gamma for c in sweep_points(small(), 'gamma', ['2', '3'])], [2, 3])
        with self.assertRaises(ConfigurationError):
            sweep_points(small(), 'srps', ['on'])


class ValidationTests(SimpleTestCase):
    def test_levels(self):
        fast = {c.name for c in selected('fast')}
        full = {c.name for c in selected('full')}
        self.assertEqual(full, set(REGISTRY))
        self.assertLess(fast, full)
        self.assertNotIn('wormhole-impact', fast)

    def test_property_checks_pass(self):
        names = ['costs', 'false-alarm', 'hash-chains', 'snv-chains', 'wormhole-truth', 'wormhole-lie', 'spoof-sybil',
                 'replay']
        results = run_level('fast', names=names)
        self.assertEqual({r.name for r in results}, set(names))
        self.assertTrue(all(r.passed for r in results), [r for r in results if not r.passed])

    @mock.patch('analysis.costs.MEMORY_COEFFICIENTS', (13, 64, 12, 30))
    def test_corrupted_memory_formula_is_caught(self):
        [result] = run_level('fast', names=['costs'])
        self.assertFalse(result.passed)
        self.assertIn('1440', result.detail)

    def test_command_reports_and_exits(self):
        stdout = io.StringIO()
        call_command('validate', '--check', 'costs', '--check', 'false-alarm', stdout=stdout)
        self.assertEqual(stdout.getvalue().count('PASS'), 2)
        with mock.patch('analysis.costs.MEMORY_COEFFICIENTS', (13, 64, 12, 30)):
            with self.assertRaisesRegex(CommandError, 'costs'):
                call_command('validate', '--check', 'costs', stdout=io.StringIO())


class RecordTests(OutputDirMixin, TestCase):
    def test_factories(self):
        record = RunRecordFactory(run_index=4)
        self.assertEqual(str(record), 'run 004 (srps)')
        self.assertEqual(record.seed, f'{record.experiment.master_seed}/4')
        self.assertIn('Simulation', str(ExperimentFactory(label='baseline')))

    def test_simulation_is_recorded(self):
        config = small()
        result = simulate(config, self.out, trace=False, dispatch='inline')
        experiment = record_experiment('simulate', config, [(config, result.aggregate)], 'tiny')
        self.assertEqual(experiment.runs, 2)
        self.assertEqual(experiment.config['n'], 30)
        records = list(experiment.run_records.all())
        self.assertEqual([r.run_index for r in records], [0, 1])
        # no compromised node means no detection rate
        self.assertIsNone(records[0].metrics['detection_rate'])

    def test_commands_record_on_request(self):
        self.run_command('simulate', *SMALL, '--runs', '1', '--out', str(self.out), '--record', '--label', 'cli')
        self.run_command('sweep', 'gamma', '2,3', *SMALL, '--runs', '1', '--out', str(self.out), '--record')
        self.assertEqual(Experiment.objects.filter(kind='simulate', label='cli').count(), 1)
        sweep = Experiment.objects.get(kind='sweep')
        self.assertEqual(sweep.run_records.count(), 4)
        self.assertEqual(RunRecord.objects.count(), 5)
        self.assertEqual({r.metrics['scenario']['gamma'] for r in sweep.run_records.all()}, {2, 3})
