import itertools
import math

import numpy as np
import pytest
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from protocol_engine.counters import Role
from protocol_engine.testing import Wire

from .costs import CostParams, communication_cost, compute_cost, memory_cost, packet_sizes
from .coverage import (
    SQRT3, CoverageParams, area, binomial_tail, density_for, expected_area, expected_guards, guard_counts,
    lens_area, linear_collision_probability, monte_carlo_common_neighbors, monte_carlo_expected_area,
    monte_carlo_lens_overlap, p_alert, p_detect, p_exactly, p_false_alarm_curves, p_misdetection,
    required_density,
)
from .curves import FIGURES, cost_tables, fig9a, fig9b, fig12_analytic
from .exceptions import DomainError

probabilities = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class AreaTests(SimpleTestCase):
    def test_coincident_nodes_share_the_whole_disc(self):
        self.assertAlmostEqual(area(0.0, 30.0), math.pi * 900.0)

    def test_nodes_two_ranges_apart_share_nothing(self):
        self.assertAlmostEqual(area(60.0, 30.0), 0.0)

    def test_value_at_one_range(self):
        self.assertAlmostEqual(area(30.0, 30.0) / 900.0, 0.3623, places=4)
        self.assertAlmostEqual(guard_counts(30.0, 1.0).area_min / 900.0, 0.3623, places=4)

    def test_out_of_domain_distances_rejected(self):
        for x in (-1.0, 60.5):
            with self.assertRaises(DomainError):
                area(x, 30.0)
        with self.assertRaises(DomainError):
            area(1.0, 0.0)

    def test_lens_agrees_at_the_ends(self):
        self.assertAlmostEqual(lens_area(0.0, 10.0), math.pi * 100.0)
        self.assertAlmostEqual(lens_area(20.0, 10.0), 0.0)
        # the printed form subtracts twice the triangle term the geometric lens does
        self.assertLess(area(10.0, 10.0), lens_area(10.0, 10.0))


class ExpectedAreaTests(SimpleTestCase):
    def test_quadrature_at_unit_range(self):
        result = expected_area(1.0)
        self.assertAlmostEqual(result.quadrature, 1.6955, delta=1e-3)
        self.assertAlmostEqual(result.closed_form, SQRT3)

    def test_closed_form_overstates_by_about_two_percent(self):
        result = expected_area(1.0)
        self.assertLess(result.gap, 0)
        self.assertAlmostEqual(result.relative_gap, -0.0211, delta=2e-3)

    def test_scales_with_range_squared(self):
        self.assertAlmostEqual(expected_area(30.0).quadrature / 900.0, expected_area(1.0).quadrature, places=8)

    def test_non_positive_range_rejected(self):
        with self.assertRaises(DomainError):
            expected_area(0.0)


class GuardCountTests(SimpleTestCase):
    def test_twenty_neighbors(self):
        counts = guard_counts(30.0, density_for(20, 30.0))
        self.assertAlmostEqual(counts.nb, 20.0)
        self.assertAlmostEqual(counts.g, 11.027, places=3)
        self.assertAlmostEqual(counts.g_min, 2.2918, places=4)
        self.assertAlmostEqual(counts.guards_per_neighbor, SQRT3 / math.pi)

    def test_rounded_expected_guards(self):
        self.assertEqual(expected_guards(20), 11)
        self.assertEqual(expected_guards(0), 0)
        self.assertEqual(CoverageParams.from_nb(20).g_guards, 11)

    def test_negative_density_rejected(self):
        with self.assertRaises(DomainError):
            guard_counts(30.0, -0.1)

    def test_linear_collision_law(self):
        self.assertAlmostEqual(linear_collision_probability(3), 0.05)
        self.assertAlmostEqual(linear_collision_probability(12), 0.2)
        self.assertAlmostEqual(linear_collision_probability(200), 0.95)


class AlertTests(SimpleTestCase):
    def test_no_events_needed_always_alerts(self):
        self.assertEqual(p_alert(0.3, 0, 7), 1.0)

    def test_threshold_above_events_never_alerts(self):
        self.assertEqual(p_alert(0.99, 8, 7), 0.0)

    def test_certain_observation(self):
        self.assertEqual(p_alert(1.0, 5, 7), 1.0)
        self.assertEqual(p_alert(0.0, 1, 7), 0.0)

    def test_matches_enumeration_of_every_outcome(self):
        alpha, beta, mu = 0.8, 5, 7
        total = 0.0
        for outcome in itertools.product((0, 1), repeat=mu):
            heard = sum(outcome)
            if heard >= beta:
                total += alpha ** heard * (1 - alpha) ** (mu - heard)
        self.assertAlmostEqual(p_alert(alpha, beta, mu), total, places=12)

    def test_out_of_range_probability_rejected(self):
        with self.assertRaises(DomainError):
            p_alert(1.5, 1, 2)
        with self.assertRaises(DomainError):
            p_alert(0.5, -1, 2)


class DetectionTests(SimpleTestCase):
    def test_sum_and_beta_agree_on_a_grid(self):
        for g in range(1, 31):
            for gamma in range(1, g + 1):
                for p in np.linspace(0.0, 1.0, 11):
                    result = p_detect(gamma, g, float(p))
                    self.assertAlmostEqual(result.binomial_sum, result.beta_form, delta=1e-9)

    def test_sum_and_beta_agree_in_log_space(self):
        for gamma in (1, 10, 50, 99):
            result = p_detect(gamma, 120, 0.4)
            self.assertAlmostEqual(result.binomial_sum, result.beta_form, delta=1e-9)

    def test_zero_confidence_detects_always(self):
        self.assertEqual(p_detect(0, 5, 0.1), (1.0, 1.0))

    def test_more_confirmations_than_guards_never_detects(self):
        self.assertEqual(p_detect(6, 5, 0.9), (0.0, 0.0))

    def test_exactly_sums_to_one(self):
        self.assertAlmostEqual(math.fsum(p_exactly(k, 9, 0.3) for k in range(10)), 1.0)
        self.assertEqual(p_exactly(10, 9, 0.3), 0.0)

    @given(g=st.integers(min_value=1, max_value=80), gamma=st.integers(min_value=1, max_value=80), p=probabilities)
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_guards_and_confidence(self, g, gamma, p):
        here = p_detect(gamma, g, p).value
        self.assertLessEqual(here, p_detect(gamma, g + 1, p).value + 1e-12)
        self.assertGreaterEqual(here, p_detect(gamma + 1, g, p).value - 1e-12)

    @given(n=st.integers(min_value=0, max_value=150), k=st.integers(min_value=-2, max_value=160),
           p=probabilities, q=probabilities)
    @settings(max_examples=200, deadline=None)
    def test_tail_is_a_probability_and_grows_with_p(self, n, k, p, q):
        low, high = sorted((p, q))
        tail = binomial_tail(n, k, low)
        self.assertGreaterEqual(tail, 0.0)
        self.assertLessEqual(tail, 1.0)
        self.assertLessEqual(tail, binomial_tail(n, k, high) + 1e-12)


class FalseAlarmTests(SimpleTestCase):
    def test_per_event_rate(self):
        self.assertAlmostEqual(p_false_alarm_curves(CoverageParams(d=0.01, p_c=0.05)).p_fa, 0.045125)

    def test_curves_nest(self):
        curves = p_false_alarm_curves(CoverageParams.from_nb(15, p_c=0.2))
        self.assertLess(curves.p_fa_beta_mu, curves.p_fa)
        self.assertLess(curves.p_fa_gamma, curves.p_fa_beta_mu)

    def test_isolation_false_alarm_stays_negligible_over_the_sweep(self):
        self.assertLess(fig9b()['p_fa_gamma'].max(), 1e-6)

    def test_misdetection_variants(self):
        result = p_misdetection(0.1)
        self.assertAlmostEqual(result.printed, 0.9)
        self.assertAlmostEqual(result.prose, 0.1)


class RequiredDensityTests(SimpleTestCase):
    def test_smallest_sufficient_guard_count(self):
        result = required_density(0.99, 3)
        self.assertGreaterEqual(result.probability, 0.99)
        self.assertLess(p_detect(3, result.g - 1, p_alert(0.95, 5, 7)).value, 0.99)
        self.assertAlmostEqual(result.nb, math.pi * 900 * result.d)

    def test_unreachable_target(self):
        with self.assertRaises(DomainError):
            required_density(1.0, 3, max_guards=10)


class CostTests(SimpleTestCase):
    def test_default_memory(self):
        self.assertEqual(memory_cost(CostParams()), 1420)

    def test_memory_coefficients(self):
        self.assertEqual(memory_cost(CostParams(nn=0, lc=0, rte=0, nbe=0)), 0)
        self.assertEqual(memory_cost(CostParams(nn=1, lc=1, rte=1, nbe=1)), 118)

    def test_negative_sizes_rejected(self):
        with self.assertRaises(DomainError):
            CostParams(nn=-1)

    def test_modelled_packet_sizes(self):
        sizes = packet_sizes()
        self.assertEqual(sizes['rdp'].modelled, 47)
        self.assertEqual(sizes['key_disclosure'].modelled, 12)
        self.assertEqual(sizes['rrp'].modelled, 18)

    def test_engine_deviations_are_reported(self):
        sizes = packet_sizes()
        self.assertEqual(sizes['rdp'].engine, 51)
        self.assertEqual(sizes['key_disclosure'].deviation, 0)
        self.assertGreater(sizes['rrp'].deviation, 0)

    def test_compute_cost_matches_engine_tally(self):
        wire = Wire([(0, 1), (1, 2), (2, 3), (3, 4)]).setup()
        wire.discover(0, 4)
        wire.run()
        cost = compute_cost()
        self.assertEqual(wire.nodes[0].counter.per_role(Role.SOURCE), cost[Role.SOURCE])
        self.assertEqual(wire.nodes[2].counter.per_role(Role.INTERMEDIATE), cost[Role.INTERMEDIATE])
        self.assertEqual(wire.nodes[4].counter.per_role(Role.DESTINATION), cost[Role.DESTINATION])

    def test_communication_along_one_hop(self):
        cost = communication_cost(1)
        self.assertEqual(cost['source'], 59)
        self.assertEqual(cost['destination'], 30)
        self.assertEqual(cost['route_total'], 89)
        with self.assertRaises(DomainError):
            communication_cost(0)


class CurveTests(SimpleTestCase):
    def test_registry(self):
        self.assertEqual(set(FIGURES), {'fig9a', 'fig9b', 'fig12'})

    def test_detection_sweep_columns_agree(self):
        frame = fig9a()
        self.assertEqual(list(frame['nb']), list(range(3, 41)))
        np.testing.assert_allclose(frame['p_detect'], frame['p_detect_beta'], atol=1e-9)
        self.assertTrue((frame['p_detect_wormhole'] >= frame['p_detect']).all())

    def test_single_endpoint_wormhole_is_not_counted(self):
        self.assertTrue((fig9a(m=1)['p_detect_wormhole'] == 0).all())

    def test_detection_falls_with_confidence(self):
        frame = fig12_analytic()
        self.assertTrue(frame['p_detect'].is_monotonic_decreasing)
        self.assertEqual(len(frame), 10)

    def test_cost_tables(self):
        tables = cost_tables()
        self.assertEqual(set(tables), {'costs_memory', 'costs_packets', 'costs_compute'})
        self.assertEqual(int(tables['costs_memory']['bytes'][0]), 1420)
        self.assertEqual(len(tables['costs_compute']), 3)


@pytest.mark.slow
class MonteCarloTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_sampled_mean_area_matches_quadrature(self):
        estimate = monte_carlo_expected_area(30.0, 400_000, self.rng)
        self.assertAlmostEqual(estimate / expected_area(30.0).quadrature, 1.0, delta=0.01)

    def test_sampled_lens(self):
        estimate = monte_carlo_lens_overlap(1.0, 400_000, self.rng)
        self.assertAlmostEqual(estimate, 2.1629, delta=0.03)

    def test_sampled_common_neighbors(self):
        d = density_for(20, 30.0)
        estimate = monte_carlo_common_neighbors(30.0, d, 400_000, self.rng)
        self.assertAlmostEqual(estimate / (d * expected_area(30.0).quadrature), 1.0, delta=0.02)
