import numpy as np
import pytest
from django.test import SimpleTestCase

from analysis.coverage import p_alert
from protocol_engine.actions import Reason, Verdict
from protocol_engine.messages import RDP, RRP, Data
from protocol_engine.params import ProtocolParams
from protocol_engine.testing import Wire

from .exceptions import ProfileError
from .injections import include, inclusion_frames, replay, spoof, sybil
from .node import MaliciousNode
from .profiles import AdversaryProfile, Behavior, Claim, TunnelMode, parse_behaviors
from .testing import (
    INCLUSION_EDGES, LINE, RUSH_EDGES, adversary_wire, buffered_rush_trials, claimed_link_guards, fabricate_accusers, route_tables,
    rush_trial, wormhole_wire,
)
from .wormhole import WormholeLink, build_links, tunnel


class ProfileTests(SimpleTestCase):
    def test_wormhole_needs_two_colluders(self):
        with self.assertRaises(ProfileError):
            AdversaryProfile({Behavior.WORMHOLE}, {3})

    def test_strings_are_coerced(self):
        profile = AdversaryProfile({'rush'}, tunnel_mode='encapsulation', claim='truth')
        self.assertTrue(profile.has(Behavior.RUSH))
        self.assertEqual((profile.tunnel_mode, profile.claim), (TunnelMode.ENCAPSULATION, Claim.TRUTH))

    def test_fraction_outside_unit_interval(self):
        with self.assertRaises(ProfileError):
            AdversaryProfile({Behavior.SELECTIVE}, selective_fraction=1.5)

    def test_parse_behaviors(self):
        self.assertEqual(parse_behaviors('wormhole, selective(0.3)'),
                         (frozenset({Behavior.WORMHOLE, Behavior.SELECTIVE}), 0.3))
        self.assertEqual(parse_behaviors('none'), (frozenset(), None))
        with self.assertRaises(ProfileError):
            parse_behaviors('wormhole, teleport')

    def test_empty_profile_is_inactive(self):
        self.assertFalse(AdversaryProfile().active)
        self.assertTrue(AdversaryProfile(drop_control=True).active)


class TunnelTests(SimpleTestCase):
    def setUp(self):
        self.msg = Data(sender=1, receiver=2, src=1, dst=2, seq=1, payload_size=36)

    def test_out_of_band_is_instant(self):
        action = tunnel(self.msg, WormholeLink(1, 2), 1)
        self.assertEqual((action.peer, action.after), (2, 0.0))

    def test_encapsulation_pays_every_hop(self):
        link = WormholeLink(1, 2, TunnelMode.ENCAPSULATION, hops=4, hop_latency=0.005)
        self.assertAlmostEqual(tunnel(self.msg, link, 2).after, 0.02)
        self.assertEqual(tunnel(self.msg, link, 2).peer, 1)

    def test_non_colluder_gets_nothing(self):
        self.assertIsNone(tunnel(self.msg, WormholeLink(1, 2), 3))
        self.assertIsNone(tunnel(self.msg, WormholeLink(1, 2, established=False), 1))

    def test_every_pair_of_colluders_is_linked(self):
        links = build_links({3, 1, 2}, TunnelMode.ENCAPSULATION, hop_count=lambda a, b: b - a, hop_latency=1.0)
        self.assertEqual([(l.endpoints, l.latency) for l in links],
                         [((1, 2), 1.0), ((1, 3), 2.0), ((2, 3), 1.0)])

    def test_request_emerges_at_the_same_instant(self):
        wire = wormhole_wire()
        wire.discover(0, 14)
        wire.run()
        at, node_id, carried = wire.tunneled[0]
        self.assertEqual(node_id, 10)
        self.assertAlmostEqual(at, 0.001)
        self.assertIsInstance(carried, RDP)

    def test_encapsulated_request_arrives_later(self):
        wire = wormhole_wire(mode=TunnelMode.ENCAPSULATION, hops=4)
        wire.discover(0, 14)
        wire.run()
        self.assertAlmostEqual(wire.tunneled[0][0], 0.001 + 4 * 0.005)


class WormholeTruthTests(SimpleTestCase):
    def setUp(self):
        self.wire = wormhole_wire(claim=Claim.TRUTH)
        self.wire.discover(0, 14)
        self.wire.run()
        self.sn = self.wire.frames(RDP)[0].sn

    def test_request_names_the_far_colluder(self):
        emerged = [f for f in self.wire.frames(RDP) if f.sender == 10]
        self.assertEqual(len(emerged), 1)
        self.assertEqual(emerged[0].prev_hop, 1)
        reaction = self.wire.nodes[14].on_rdp(emerged[0], self.wire.now)
        self.assertEqual((reaction.verdict, reaction.reason), (Verdict.DROPPED, Reason.NOT_NEIGHBOR))

    def test_nobody_answers(self):
        self.assertEqual(self.wire.frames(RRP), [])
        self.assertIsNone(self.wire.nodes[0].state.routes.lookup(14))

    def test_source_rejects_the_reply(self):
        carried = RRP(sender=10, receiver=1, src=0, dst=14, sn=self.sn, snv_value=bytes(8), trail=(14, 10))
        reaction = self.wire.nodes[1].receive_tunneled(carried, self.wire.now)
        reply = reaction.messages[0]
        self.assertEqual((reply.receiver, reply.heard_from), (0, 10))
        verdict = self.wire.nodes[0].on_rrp(reply, self.wire.now)
        self.assertEqual((verdict.verdict, verdict.reason), (Verdict.REJECTED, Reason.NOT_NEIGHBOR))


class WormholeBookkeepingTests(SimpleTestCase):
    def test_far_end_forgets_rounds_past_the_route_timeout(self):
        wire = wormhole_wire(params=ProtocolParams(route_timeout=5.0))
        far = wire.nodes[10]
        for sn in range(1, 201):
            rdp = RDP(sender=1, src=0, dst=14, sn=sn, snv_value=bytes(8), snv_index=10)
            far.receive_tunneled(rdp, float(sn))
        self.assertLessEqual(len(far.wormhole_rounds), 6)
        self.assertIn((0, 14, 200), far.wormhole_rounds)
        self.assertNotIn((0, 14, 1), far.wormhole_rounds)


class WormholeLieTests(SimpleTestCase):
    def test_every_guard_of_the_claimed_link_accuses(self):
        for seed in range(5):
            wire = wormhole_wire(seed=seed)
            wire.discover(0, 14)
            wire.run()
            claimed = next(f for f in wire.frames(RDP) if f.sender == 10).prev_hop
            self.assertNotIn(claimed, (1, 10))
            self.assertLessEqual(claimed_link_guards(wire), fabricate_accusers(wire, 10))

    def test_missed_frames_thin_the_accusers(self):
        p_c = 0.3
        coin = np.random.default_rng(17)
        heard = total = 0
        for seed in range(200):
            wire = wormhole_wire(seed=seed)

            def lossy(msg, peer):
                if isinstance(msg, RDP) and msg.sender == 10 and coin.random() < p_c:
                    return None
                return msg

            wire.tamper = lossy
            wire.discover(0, 14)
            wire.run()
            guards = claimed_link_guards(wire)
            total += len(guards)
            heard += len(guards & fabricate_accusers(wire, 10))
        expected = p_alert(1 - p_c, 1, 1)
        sigma = np.sqrt(expected * (1 - expected) / total)
        self.assertLess(abs(heard / total - expected), 3 * sigma)



class RushTests(SimpleTestCase):
    def test_rusher_forwards_without_waiting(self):
        wire = adversary_wire(RUSH_EDGES, {4: AdversaryProfile({Behavior.RUSH})})
        wire.discover(0, 6)
        wire.run(until=0.005)
        self.assertEqual([f.sender for f in wire.frames(RDP)], [0, 4])

    def test_cut_vertex_is_always_on_the_route(self):
        wire = adversary_wire([(0, 1), (1, 2)], {1: AdversaryProfile({Behavior.RUSH})})
        wire.discover(0, 2)
        wire.run()
        self.assertEqual(wire.events('route', node=0)[0]['path'], (0, 1, 2))

    def test_collecting_node_chooses_among_four(self):
        round_ = buffered_rush_trials(1)[0]
        self.assertEqual(len(round_.entries), 4)
        self.assertEqual(round_.entries[0].heard_from, 4)
        self.assertTrue(round_.flushed)

    def test_relays_slower_than_the_collector_miss_the_round(self):
        sizes = [len(rush_trial(16 * t).entries) for t in range(20)]
        self.assertTrue(all(1 <= size <= 4 for size in sizes))
        self.assertTrue(any(size < 4 for size in sizes))

    @pytest.mark.slow
    def test_capture_rate_with_four_candidates(self):
        trials = 1000
        captured = sum(round_.chosen.heard_from == 4 for round_ in buffered_rush_trials(trials))
        sigma = np.sqrt(trials * 0.25 * 0.75)
        self.assertLess(abs(captured - trials / 4), 3 * sigma)

    def test_randomized_waits_beat_first_heard(self):
        captured = sum(rush_trial(16 * t).chosen.heard_from == 4 for t in range(100))
        self.assertLess(captured, 80)
        self.assertGreater(captured, 25)

    def test_first_heard_baseline_is_always_captured(self):
        captured = sum(rush_trial(16 * t, srps=False).chosen.heard_from == 4 for t in range(50))
        self.assertEqual(captured, 50)


class DataDropTests(SimpleTestCase):
    def selective_node(self, fraction):
        profile = AdversaryProfile({Behavior.SELECTIVE}, selective_fraction=fraction)
        node = MaliciousNode(1, rng=np.random.default_rng(5), profile=profile)
        node.state.neighbors.add_neighbor(2)
        node.state.routes.install(9, 2, 1, 0.0)
        return node

    def test_selective_drops_are_binomial(self):
        node = self.selective_node(0.5)
        packets = 10_000
        drops = sum(
            node.on_data(Data(sender=0, receiver=1, src=0, dst=9, seq=i, payload_size=36), 0.0).verdict
            == Verdict.DROPPED
            for i in range(packets)
        )
        self.assertEqual(drops, node.data_dropped)
        self.assertLess(abs(drops - packets / 2), 3 * np.sqrt(packets / 4))

    def test_packets_for_the_node_itself_are_kept(self):
        node = self.selective_node(1.0)
        reaction = node.on_data(Data(sender=2, receiver=1, src=2, dst=1, seq=1, payload_size=36), 0.0)
        self.assertEqual(reaction.verdict, Verdict.DELIVERED)

    def test_wormhole_swallows_all_data_without_authentication(self):
        wire = wormhole_wire(params=ProtocolParams(srps_enabled=False), extra={Behavior.DROP_DATA})
        for _ in range(3):
            wire.originate(0, 14)
            wire.run()
        self.assertEqual(wire.events('delivered'), [])
        lost = wire.events('lost')
        self.assertEqual(len(lost), 3)
        self.assertEqual({(l['cause'], l['node']) for l in lost}, {('malicious', 1)})
        self.assertEqual(len(wire.events('attack', node=1)), 1)

    def test_dropper_off_the_route_drops_nothing(self):
        wire = adversary_wire(LINE + [(1, 5)], {5: AdversaryProfile({Behavior.DROP_DATA})})
        for _ in range(3):
            wire.originate(0, 4)
            wire.run()
        self.assertEqual(len(wire.events('delivered', node=4)), 3)
        self.assertEqual([l for l in wire.events('lost') if l['cause'] == 'malicious'], [])


class InjectionTests(SimpleTestCase):
    def setUp(self):
        # M=5 overhears the line next to 1 and 2 but never relays control traffic
        profile = AdversaryProfile({Behavior.REPLAY, Behavior.SPOOF, Behavior.SYBIL}, drop_control=True)
        self.wire = adversary_wire(LINE + [(1, 5), (2, 5)], {5: profile})
        self.m = self.wire.nodes[5]

    def receivers_verdicts(self, reaction):
        return [
            (peer, self.wire.nodes[peer].receive(frame, self.wire.now))
            for frame in reaction.messages
            for peer in sorted(self.wire.adjacency[5])
        ]

    def test_replay_of_an_old_request_changes_no_route(self):
        for _ in range(11):
            self.wire.discover(0, 4)
            self.wire.run()
        oldest = self.m.recorded[0]
        self.assertLess(oldest.sn, self.wire.frames(RDP)[-1].sn - 9)
        before = route_tables(self.wire)
        for as_self in (False, True):
            self.wire.apply(5, replay(self.m, self.wire.now, oldest, as_self=as_self))
            self.wire.run()
        self.assertEqual(route_tables(self.wire), before)
        self.assertEqual(self.wire.nodes[2].receive(oldest, self.wire.now).reason, Reason.REPLAY)

    def test_spoofed_stranger_is_refused_by_every_receiver(self):
        reaction = spoof(self.m, victim=4, dst=0, now=0.0)
        for peer, verdict in self.receivers_verdicts(reaction):
            self.assertEqual((verdict.verdict, verdict.reason), (Verdict.DROPPED, Reason.NOT_NEIGHBOR), peer)

    def test_sybil_identities_are_unknown(self):
        reaction = sybil(self.m, [100, 101, 102], dst=4, now=0.0)
        self.assertEqual(len(reaction.messages), 3)
        for peer, verdict in self.receivers_verdicts(reaction):
            self.assertEqual(verdict.reason, Reason.NOT_NEIGHBOR, peer)

    def test_injection_marks_the_attack_once(self):
        self.wire.apply(5, spoof(self.m, victim=4, dst=0, now=0.0))
        self.wire.apply(5, sybil(self.m, [100], dst=4, now=0.0))
        self.assertEqual(len(self.wire.events('attack')), 1)
        self.assertEqual(self.m.attack_started_at, 0.0)


class InclusionTests(SimpleTestCase):
    def test_forged_frames_never_enter_the_route(self):
        profile = AdversaryProfile({Behavior.INCLUDE}, drop_control=True)
        wire = adversary_wire(INCLUSION_EDGES, {4: profile})
        wire.discover(0, 3)
        wire.run()
        m = wire.nodes[4]
        before = route_tables(wire, nodes=(1, 2))
        self.assertEqual(before, {1: {0: (0, 1), 3: (2, 1)}, 2: {0: (1, 1), 3: (3, 1)}})

        overheard = [frame for _, sender, frame in wire.sent if sender in (1, 2)]
        frames = list(inclusion_frames(m, 0, 3, 1, targets=(1, 2), overheard=overheard))
        self.assertGreater(len(frames), 100)
        for frame in frames:
            wire.apply(4, include(m, frame, wire.now))
            wire.run()

        self.assertEqual(route_tables(wire, nodes=(1, 2)), before)
        for node in wire.nodes.values():
            if not node.malicious:
                self.assertNotIn(4, {entry.next_hop for entry in node.state.routes.entries.values()})


class BaselineEquivalenceTests(SimpleTestCase):
    def test_profile_without_behaviours_is_an_honest_node(self):
        honest = Wire(LINE).setup()
        carrier = adversary_wire(LINE, {2: AdversaryProfile()})
        self.assertIsInstance(carrier.nodes[2], MaliciousNode)
        for wire in (honest, carrier):
            wire.originate(0, 4)
            wire.run()
            wire.originate(4, 0)
            wire.run()
        self.assertEqual(carrier.sent, honest.sent)
        self.assertEqual(carrier.notes, honest.notes)
