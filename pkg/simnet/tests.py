import json
import math

import numpy as np
import pandas as pd
import pytest
from django.test import SimpleTestCase

from adversary.profiles import Behavior
from protocol_engine.messages import Data, Hello

from .exceptions import ConfigurationError, TopologyError
from .medium import MediumModel, PcMode, deliver_broadcast, transmit
from .metrics import MetricsCollector, RunMetrics
from .runner import aggregate_runs, run_scenario, run_seed, run_seeds
from .scenario import CONFIG_KEYS, ScenarioConfig
from .topology import Topology, expected_side, generate_topology, guard_census, node_ids
from .traffic import TrafficModel, traffic_plan


def small(**changes):
    values = dict(n_nodes=30, target_nb=8, horizon=60.0, runs=1, mu=0.05, master_seed=3)
    values.update(changes)
    return ScenarioConfig(**values)


def data_frame(receiver=2):
    return Data(sender=1, receiver=receiver, src=1, dst=9, seq=1, payload_size=36)


class MediumTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_no_collisions_reach_everyone_in_range(self):
        deliveries = deliver_broadcast(0, data_frame(), [1, 2, 3], MediumModel(p_c=0.0), self.rng, 1.0)
        self.assertEqual([d.receiver for d in deliveries if d.received], [1, 2, 3])
        self.assertAlmostEqual(deliveries[0].at, 1.0 + 0.0072)

    def test_only_listed_neighbours_are_candidates(self):
        deliveries = deliver_broadcast(0, data_frame(), [1, 2], MediumModel(p_c=0.0), self.rng, 0.0)
        self.assertNotIn(3, [d.receiver for d in deliveries])

    def test_receive_fraction_is_binomial(self):
        epsilon = 0.1
        trials = 10_000
        deliveries = deliver_broadcast(0, data_frame(), range(1, trials + 1), MediumModel(p_c=1 - epsilon),
                                       self.rng, 0.0)
        received = sum(d.received for d in deliveries)
        sigma = math.sqrt(trials * epsilon * (1 - epsilon))
        self.assertLess(abs(received - trials * epsilon), 3 * sigma)

    def test_unicast_stops_once_the_receiver_has_it(self):
        deliveries, attempts = transmit(1, data_frame(), [2, 3], MediumModel(p_c=0.0), self.rng, 0.0, receiver=2)
        self.assertEqual(attempts, 1)
        self.assertEqual(sorted(d.receiver for d in deliveries), [2, 3])

    def test_unicast_spends_the_retry_budget(self):
        medium = MediumModel(p_c=0.999999, retries=3)
        deliveries, attempts = transmit(1, data_frame(), [2], medium, self.rng, 0.0, receiver=2)
        self.assertEqual(attempts, 4)
        self.assertEqual(deliveries, [])

    def test_each_neighbour_hears_a_retried_frame_once(self):
        medium = MediumModel(p_c=0.5, retries=6)
        for _ in range(50):
            deliveries, _ = transmit(1, data_frame(), range(2, 12), medium, self.rng, 0.0, receiver=2)
            receivers = [d.receiver for d in deliveries]
            self.assertEqual(len(receivers), len(set(receivers)))

    def test_linear_law(self):
        medium = MediumModel(pc_mode=PcMode.LINEAR, pc_base=0.05 / 3, pc_anchor_nb=1.0).at_density(12)
        self.assertAlmostEqual(medium.p_c, 0.2)
        self.assertEqual(medium.pc_mode, PcMode.FIXED)

    def test_invalid_medium(self):
        with self.assertRaises(ConfigurationError):
            MediumModel(p_c=1.0)
        with self.assertRaises(ConfigurationError):
            MediumModel(bandwidth=0)

    def test_transmission_delay(self):
        self.assertAlmostEqual(MediumModel().transmission_delay(Hello(sender=1, commitment=bytes(8)).wire_size()),
                               8 * 13 / 40_000)


class TrafficTests(SimpleTestCase):
    def test_plan_is_ordered_and_inside_the_horizon(self):
        plan = traffic_plan(TrafficModel(0.5, 0.05), np.random.default_rng(2), 0, range(10), 500.0)
        times = [t for t, _ in plan]
        self.assertEqual(times, sorted(times))
        self.assertLess(times[-1], 500.0)
        self.assertNotIn(0, {dst for _, dst in plan})

    def test_arrival_count_matches_the_rate(self):
        plan = traffic_plan(TrafficModel(1.0, 0.01), np.random.default_rng(3), 0, [1, 2], 10_000.0)
        self.assertLess(abs(len(plan) - 10_000), 4 * math.sqrt(10_000))

    def test_destination_changes_are_rare_at_low_xi(self):
        plan = traffic_plan(TrafficModel(1.0, 1e-6), np.random.default_rng(4), 0, range(50), 100.0)
        self.assertEqual(len({dst for _, dst in plan}), 1)

    def test_no_candidates(self):
        self.assertEqual(traffic_plan(TrafficModel(), np.random.default_rng(0), 0, [0], 100.0), [])


class ScenarioTests(SimpleTestCase):
    def test_defaults(self):
        config = ScenarioConfig()
        self.assertEqual((config.n_nodes, config.range_r, config.bandwidth), (100, 30.0, 40.0))
        self.assertAlmostEqual(config.xi, 0.005)
        self.assertEqual(config.behaviors, frozenset({Behavior.WORMHOLE, Behavior.DROP_DATA}))

    def test_field_side_follows_the_density_identity(self):
        config = ScenarioConfig(n_nodes=100, target_nb=8, range_r=30)
        self.assertAlmostEqual(config.field_side, 30 * math.sqrt(math.pi * 100 / 8))
        self.assertAlmostEqual(config.field_side, expected_side(100, 8, 30))
        self.assertAlmostEqual(config.field_side, 187.9971, places=3)

    def test_derived_forward_threshold(self):
        config = ScenarioConfig()
        tx = 8 * config.largest_frame() / 40_000
        self.assertAlmostEqual(config.resolved_forward_threshold(), 0.01 + 0.002 + 8 * tx)
        self.assertEqual(ScenarioConfig(forward_threshold=0.3).protocol_params().forward_threshold, 0.3)

    def test_protocol_params_carry_the_scenario(self):
        params = ScenarioConfig(gamma=6, srps=False, chain_length=64).protocol_params()
        self.assertEqual((params.gamma, params.srps_enabled, params.chain_length), (6, False, 64))

    def test_coerce_values(self):
        self.assertEqual(ScenarioConfig.coerce('n', '40'), {'n_nodes': 40})
        self.assertEqual(ScenarioConfig.coerce('srps', 'off'), {'srps': False})
        self.assertEqual(ScenarioConfig.coerce('forward_threshold_s', 'auto'), {'forward_threshold': None})
        self.assertEqual(ScenarioConfig.coerce('adversary.behaviors', 'wormhole, selective(0.3)'),
                         {'behaviors': frozenset({Behavior.WORMHOLE, Behavior.SELECTIVE}),
                          'selective_fraction': 0.3})

    def test_unknown_key(self):
        with self.assertRaises(ConfigurationError) as caught:
            ScenarioConfig.coerce('gama', '3')
        self.assertEqual(caught.exception.key, 'gama')

    def test_bad_values(self):
        for key, value in (('n', '2.5'), ('srps', 'maybe'), ('mu', 'fast'), ('adversary.claim', 'fib'),
                           ('adversary.behaviors', 'teleport')):
            with self.assertRaises(ConfigurationError):
                ScenarioConfig.coerce(key, value)

    def test_invalid_scenarios(self):
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(n_nodes=1)
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(m_malicious=100)
        with self.assertRaises(ConfigurationError):
            ScenarioConfig(pc=1.0)

    def test_overrides_reproduce_the_config(self):
        config = ScenarioConfig(gamma=7, m_malicious=2, srps=False)
        self.assertEqual(ScenarioConfig().with_overrides(config.as_config()), config)
        self.assertEqual(list(config.as_config()), list(CONFIG_KEYS))

    def test_lone_wormhole_end_stays_passive(self):
        profile = ScenarioConfig(m_malicious=1).adversary_profile([4])
        self.assertFalse(profile.active)
        pair = ScenarioConfig(m_malicious=2).adversary_profile([4, 9])
        self.assertTrue(pair.has(Behavior.WORMHOLE))

    def test_error_location_in_message(self):
        error = ConfigurationError('bad value', key='n', line=4, column=5)
        self.assertEqual(str(error), 'line 4, column 5: bad value')


class TopologyTests(SimpleTestCase):
    def test_same_seed_same_positions(self):
        config = ScenarioConfig(n_nodes=50, m_malicious=2)
        first = generate_topology(config, np.random.default_rng(5))
        second = generate_topology(config, np.random.default_rng(5))
        self.assertEqual(first.positions, second.positions)
        self.assertEqual(first.malicious, second.malicious)

    def test_links_are_unit_disk(self):
        topology = generate_topology(ScenarioConfig(n_nodes=40), np.random.default_rng(6))
        for a in topology.nodes:
            for b in topology.nodes:
                if a < b:
                    (xa, ya), (xb, yb) = topology.positions[a], topology.positions[b]
                    within = math.hypot(xa - xb, ya - yb) <= topology.range_r
                    self.assertEqual(topology.graph.has_edge(a, b), within)

    def test_connected_with_colluders_more_than_two_hops_apart(self):
        for seed in range(5):
            topology = generate_topology(ScenarioConfig(n_nodes=100, m_malicious=3), np.random.default_rng(seed))
            self.assertEqual(len(topology.malicious), 3)
            for i, a in enumerate(topology.malicious):
                for b in topology.malicious[i + 1:]:
                    self.assertGreaterEqual(topology.hops(a, b), 3)

    def test_infeasible_placement_is_a_configuration_error(self):
        # the whole field fits inside one radio range
        config = ScenarioConfig(n_nodes=6, target_nb=40, m_malicious=2, topology_retries=5)
        with self.assertRaises(TopologyError):
            generate_topology(config, np.random.default_rng(0))

    def test_hardware_ids(self):
        ids = node_ids(20, hardware=True)
        self.assertEqual(len(set(ids)), 20)
        self.assertTrue(all(0 <= i < 2 ** 32 for i in ids))
        topology = generate_topology(ScenarioConfig(n_nodes=20, hw_ids=True), np.random.default_rng(1))
        self.assertEqual(topology.nodes, sorted(ids))

    def test_guard_census_tracks_the_expected_guard_count(self):
        config = ScenarioConfig(n_nodes=100, target_nb=8)
        counts = np.concatenate([guard_census(generate_topology(config, np.random.default_rng(seed)))
                                 for seed in range(10)])
        expected = math.sqrt(3) / math.pi * 8
        self.assertAlmostEqual(counts.mean() / expected, 1.0, delta=0.10)

    @pytest.mark.slow
    def test_guard_census_at_higher_densities(self):
        for nb in (15, 20):
            config = ScenarioConfig(n_nodes=100, target_nb=nb)
            counts = np.concatenate([guard_census(generate_topology(config, np.random.default_rng(seed)))
                                     for seed in range(30)])
            self.assertAlmostEqual(counts.mean() / (math.sqrt(3) / math.pi * nb), 1.0, delta=0.10)


def line_topology(malicious=(1,)):
    positions = {0: (0.0, 0.0), 1: (20.0, 0.0), 2: (40.0, 0.0), 3: (60.0, 0.0)}
    return Topology(positions, 25.0, 0.001, 60.0, malicious)


class MetricsCollectorTests(SimpleTestCase):
    def setUp(self):
        self.collector = MetricsCollector(line_topology(), horizon=100.0, srps=True)

    def test_isolation_latency_waits_for_every_honest_neighbour(self):
        c = self.collector
        c.observe(5.0, 1, 'attack', {'node': 1, 'kind': 'wormhole'})
        c.observe(7.0, 0, 'isolated', {'accused': 1})
        self.assertEqual(c.metrics.isolation_latency, {})
        c.observe(9.0, 2, 'isolated', {'accused': 1})
        metrics = c.finish()
        self.assertEqual(metrics.isolation_latency, {1: 4.0})
        self.assertEqual(metrics.detections, {1: True})

    def test_false_isolations_count_honest_victims(self):
        self.collector.observe(3.0, 3, 'isolated', {'accused': 2})
        self.collector.observe(4.0, 3, 'isolated', {'accused': 2})
        self.assertEqual(self.collector.finish().false_isolations, 1)

    def test_tunnelled_routes(self):
        c = self.collector
        c.observe(1.0, 0, 'route', {'path': (0, 1, 3)})
        c.observe(2.0, 0, 'route', {'path': (0, 1, 2)})
        metrics = c.finish()
        self.assertEqual((metrics.routes_total, metrics.routes_malicious, metrics.routes_via_malicious), (2, 1, 2))
        self.assertAlmostEqual(metrics.malicious_route_fraction, 0.5)

    def test_drops_timeline(self):
        c = self.collector
        for t in (3.0, 6.0):
            c.observe(t, 1, 'lost', {'cause': 'malicious'})
        c.observe(7.0, 2, 'lost', {'cause': 'no_route'})
        metrics = c.finish()
        self.assertEqual(metrics.drops_timeline, [(3.0, 1), (6.0, 2)])
        self.assertEqual(metrics.drops_at(5.0), 1)
        self.assertEqual(metrics.drops_at(2.0), 0)
        self.assertEqual(metrics.lost, {'malicious': 2, 'no_route': 1})

    def test_undetected_colluders_are_reported(self):
        metrics = self.collector.finish()
        self.assertEqual(metrics.detections, {1: False})
        self.assertEqual(metrics.detection_rate, 0.0)

    def test_payload_survives_json(self):
        c = self.collector
        c.observe(5.0, 1, 'attack', {})
        c.observe(6.0, 1, 'lost', {'cause': 'malicious'})
        c.observe(7.0, 0, 'isolated', {'accused': 1})
        c.observe(8.0, 2, 'isolated', {'accused': 1})
        metrics = c.finish()
        self.assertEqual(RunMetrics.from_payload(json.loads(json.dumps(metrics.to_payload()))), metrics)


class SimulationTests(SimpleTestCase):
    def test_same_seed_same_metrics(self):
        config = small(m_malicious=2)
        first, second = run_scenario(config, 9), run_scenario(config, 9)
        self.assertEqual(first.summary(), second.summary())
        self.assertEqual(first.drops_timeline, second.drops_timeline)

    def test_without_a_wormhole_nothing_is_attributed_to_it(self):
        for m in (0, 1):
            metrics = run_scenario(small(m_malicious=m))
            self.assertEqual(metrics.malicious_drops, 0)
            self.assertEqual(metrics.routes_malicious, 0)
            self.assertGreater(metrics.packets_sent, 0)

    def test_packet_accounting(self):
        metrics = run_scenario(small())
        self.assertGreaterEqual(metrics.in_flight, 0)
        self.assertGreater(metrics.delivered, 0)
        self.assertEqual(metrics.packets_sent, metrics.delivered + metrics.lost_total + metrics.in_flight)

    def test_honest_network_isolates_no_one_without_collisions(self):
        metrics = run_scenario(small(pc=0.0))
        self.assertEqual(metrics.false_isolations, 0)

    @pytest.mark.slow
    def test_baseline_wormhole_keeps_dropping(self):
        metrics = run_scenario(small(n_nodes=60, m_malicious=2, srps=False, horizon=300.0, mu=0.1), 4)
        self.assertGreater(metrics.routes_malicious, 0)
        self.assertGreater(metrics.malicious_drops, 0)


class AggregateTests(SimpleTestCase):
    def test_seeds_derive_from_the_master_seed(self):
        config = small(runs=3, master_seed=8)
        spawned = np.random.SeedSequence(8).spawn(3)
        self.assertEqual([s.generate_state(2).tolist() for s in run_seeds(config)],
                         [s.generate_state(2).tolist() for s in spawned])
        self.assertEqual(run_seed(8, 1).generate_state(2).tolist(), spawned[1].generate_state(2).tolist())

    def test_single_run_mean_is_the_run(self):
        config = small(runs=1)
        aggregate = aggregate_runs(config)
        single = run_scenario(config, run_seed(config.master_seed, 0))
        self.assertEqual(aggregate.mean['packets_sent'], single.packets_sent)
        self.assertEqual(aggregate.std['packets_sent'], 0.0)

    def test_repeated_aggregation_is_identical(self):
        config = small(runs=2, horizon=30.0)
        pd.testing.assert_frame_equal(aggregate_runs(config).per_run, aggregate_runs(config).per_run)

    def test_custom_executor_keeps_run_order(self):
        config = small(runs=2, horizon=20.0)
        calls = []

        def execute(cfg, indices):
            calls.append(list(indices))
            return [run_scenario(cfg, run_seed(cfg.master_seed, i)) for i in indices]

        aggregate = aggregate_runs(config, execute)
        self.assertEqual(calls, [[0, 1]])
        self.assertEqual(list(aggregate.per_run['run']), [0, 1])
        self.assertIn('packets_sent_mean', aggregate.summary_row())
