from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from crypto_core.chains import build_snv_chain, next_auth_key
from crypto_core.primitives import mac, verify_mac

from . import challenge as chal
from .actions import Reason, TimerKind, Verdict
from .counters import Role
from .exceptions import RenewalRequired
from .keys import KeyOracle
from .maintenance import on_repair_request, route_maintenance
from .messages import (
    RDP, RRP, Alert, AccusationKind, Data, KeyDisclosure, RenewalCommit, RenewalProof,
    RepairRequest, RouteError, RouteUpdate,
)
from .monitoring import sign_alert
from .multipath import apply_suppression, rank_routes, reply_priority, select_announcement
from .node import SrpsNode, setup_round
from .params import ChallengeMode, MaintenancePolicy, ProtocolParams
from .state import (
    Accusation, AccusationLedger, DiscoveryRound, ExpiringMap, HeldPacket, PairChainRecord, ReplyCandidate,
    RequestBufferEntry, RouteEntry, WatchBuffer, WatchEntry,
)
from .testing import Wire

ORACLE = KeyOracle(b'test')
LINE = [(0, 1), (1, 2), (2, 3), (3, 4)]


def signed(node, msg):
    """Sign ``msg`` with the node's next chain key; returns the frame and its disclosure."""
    key = next_auth_key(node.state.chain)
    frame = replace(msg, nbr_mac=mac(key, msg.auth_payload()))
    return frame, KeyDisclosure(sender=node.id, receiver=msg.receiver, key=key)


def data(sender, receiver, src=1, dst=9, seq=1, prev_hop=None, payload_size=32):
    return Data(sender=sender, receiver=receiver, src=src, dst=dst, seq=seq, payload_size=payload_size,
                prev_hop=prev_hop)


class NeighborSetupTests(SimpleTestCase):
    def test_star_learns_peers_and_commitments(self):
        wire = Wire([(0, 1), (0, 2), (0, 3)]).setup()
        hub = wire.nodes[0]
        self.assertEqual(hub.state.neighbors.one_hop, {1, 2, 3})
        for peer in (1, 2, 3):
            self.assertEqual(hub.state.neighbors.commitments[peer],
                             wire.nodes[peer].state.chain.current_commitment)
        self.assertEqual(wire.nodes[1].state.neighbors.two_hop[0], {1, 2, 3})
        self.assertTrue(wire.nodes[2].state.neighbors.knows_link(0, 3))
        hub.state.neighbors.check()

    def test_isolated_node_has_no_neighbours(self):
        wire = Wire([(0, 1)], nodes=[7]).setup()
        self.assertEqual(wire.nodes[7].state.neighbors.one_hop, set())

    def test_neighbor_list_from_stranger_is_dropped(self):
        wire = Wire([(0, 1)], nodes=[7]).setup()
        reaction = wire.nodes[0].on_neighbor_list(wire.nodes[7].neighbor_list())
        self.assertEqual(reaction.reason, Reason.NOT_NEIGHBOR)

    def test_setup_round_absorbs_every_reply(self):
        node = SrpsNode(0, oracle=ORACLE, rng=np.random.default_rng(0))
        peers = [SrpsNode(i, oracle=ORACLE, rng=np.random.default_rng(i)) for i in (4, 5)]
        replies = [reply for peer in peers for reply in peer.on_hello(node.hello()).messages]
        table = setup_round(node, replies)
        self.assertEqual(table.one_hop, {4, 5})
        self.assertEqual(table.commitments[5], peers[1].state.chain.current_commitment)


class DiscoveryInitiationTests(SimpleTestCase):
    def setUp(self):
        self.node = SrpsNode(0, ProtocolParams(snv_length=10), ORACLE, np.random.default_rng(0))

    def test_requests_walk_the_chain_two_at_a_time(self):
        first = self.node.initiate_discovery(9, 0.0).messages[0]
        second = self.node.initiate_discovery(9, 1.0).messages[0]
        chain = build_snv_chain(ORACLE.shared_key(0, 9), first.sn, 10)
        self.assertEqual((first.snv_index, first.snv_value), (10, chain.value_at(10)))
        self.assertEqual((second.snv_index, second.snv_value), (8, chain.value_at(8)))
        self.assertGreater(second.sn, first.sn)

    def test_request_carries_valid_end_to_end_mac(self):
        rdp = self.node.initiate_discovery(9, 0.0).messages[0]
        self.assertTrue(verify_mac(ORACLE.shared_key(0, 9), rdp.core(), rdp.e2e_mac))
        self.assertIsNone(rdp.receiver)

    def test_request_is_followed_by_its_key(self):
        reaction = self.node.initiate_discovery(9, 0.0)
        rdp, disclosure = reaction.messages
        self.assertIsInstance(disclosure, KeyDisclosure)
        self.assertTrue(verify_mac(disclosure.key, rdp.auth_payload(), rdp.nbr_mac))
        delays = [send.after for send in reaction.sends]
        self.assertLess(delays[0], delays[1])

    def test_spent_chain_requires_renewal(self):
        node = SrpsNode(0, ProtocolParams(snv_length=4), ORACLE, np.random.default_rng(0))
        node.initiate_discovery(9, 0.0)
        node.initiate_discovery(9, 1.0)
        with self.assertRaises(RenewalRequired):
            node.initiate_discovery(9, 2.0)

    def test_request_route_restarts_a_spent_chain(self):
        node = SrpsNode(0, ProtocolParams(snv_length=4), ORACLE, np.random.default_rng(0))
        node.initiate_discovery(9, 0.0)
        node.initiate_discovery(9, 1.0)
        reaction = node.request_route(9, 2.0)
        self.assertEqual(reaction.messages[0].snv_index, 4)
        self.assertIn('chain_restart', [event for event, _ in reaction.notes])


class RequestReceptionTests(SimpleTestCase):
    def setUp(self):
        self.wire = Wire([(1, 2)]).setup()
        self.a, self.b = self.wire.nodes[1], self.wire.nodes[2]

    def test_stranger_is_dropped(self):
        stranger = SrpsNode(5, self.wire.params, ORACLE)
        rdp = stranger.initiate_discovery(9, 0.0).messages[0]
        reaction = self.b.on_rdp(rdp, 0.001)
        self.assertEqual((reaction.verdict, reaction.reason), (Verdict.DROPPED, Reason.NOT_NEIGHBOR))

    def test_older_sequence_number_is_a_replay(self):
        self.b.state.last_sn[(1, 9)] = 10
        rdp = self.a.initiate_discovery(9, 0.0).messages[0]
        self.assertEqual(self.b.on_rdp(rdp, 0.001).reason, Reason.REPLAY)

    def test_request_is_held_until_its_key_arrives(self):
        rdp, disclosure = self.a.initiate_discovery(9, 0.0).messages
        self.assertEqual(self.b.on_rdp(rdp, 0.001).verdict, Verdict.HELD)
        self.assertNotIn((1, 9, rdp.sn), self.b.state.rounds)
        reaction = self.b.on_key_disclosure(disclosure, 0.011)
        self.assertEqual(reaction.verdict, Verdict.ACCEPTED)
        self.assertEqual(len(self.b.state.rounds[(1, 9, rdp.sn)].entries), 1)
        self.assertIn(TimerKind.FLUSH, [timer.timer for timer in reaction.timers])

    def test_random_key_is_rejected(self):
        rdp, _ = self.a.initiate_discovery(9, 0.0).messages
        self.b.on_rdp(rdp, 0.001)
        forged = KeyDisclosure(sender=1, key=bytes(8))
        reaction = self.b.on_key_disclosure(forged, 0.011)
        self.assertEqual((reaction.verdict, reaction.reason), (Verdict.REJECTED, Reason.UNVERIFIED))
        self.assertEqual(len(self.b.state.held[1]), 1)

    def test_altered_request_is_reported_at_expiry(self):
        rdp, disclosure = self.a.initiate_discovery(9, 0.0).messages
        self.b.on_rdp(replace(rdp, snv_value=bytes(8)), 0.001)
        self.b.on_key_disclosure(disclosure, 0.011)
        self.assertNotIn((1, 9, rdp.sn), self.b.state.rounds)
        reaction = self.b.on_timer(TimerKind.HELD_EXPIRY, 1, 0.6)
        self.assertEqual(reaction.reason, Reason.BAD_NBR_MAC)
        accusation = self.b.state.ledger.history[-1]
        self.assertEqual((accusation.accused, accusation.kind), (1, AccusationKind.CHANGE))

    def test_undisclosed_packet_expires_without_accusation(self):
        rdp, _ = self.a.initiate_discovery(9, 0.0).messages
        self.b.on_rdp(rdp, 0.001)
        reaction = self.b.on_timer(TimerKind.HELD_EXPIRY, 1, 0.6)
        self.assertEqual(reaction.reason, Reason.UNVERIFIED)
        self.assertFalse(self.b.state.ledger.history)

    def test_replayed_copy_does_not_frame_its_sender(self):
        rdp, disclosure = self.a.initiate_discovery(9, 0.0).messages
        self.b.on_rdp(rdp, 0.001)
        self.b.on_key_disclosure(disclosure, 0.011)
        commitment = self.b.state.neighbors.commitments[1]
        # an altered recording that slipped past the duplicate check, then a later key from node 1
        self.b.state.held[1].append(HeldPacket(replace(rdp, snv_value=bytes(8)), 0.02, commitment))
        _, later = self.a.initiate_discovery(8, 0.1).messages
        self.b.on_key_disclosure(later, 0.111)
        reaction = self.b.on_timer(TimerKind.HELD_EXPIRY, 1, 0.6)
        self.assertEqual((reaction.verdict, reaction.reason), (Verdict.DROPPED, Reason.REPLAY))
        self.assertFalse(self.b.state.ledger.history)
        self.assertNotIn(1, self.b.state.held)

    def test_copy_behind_the_last_sequence_number_is_a_replay(self):
        old, _ = self.a.initiate_discovery(9, 0.0).messages
        self.b.state.held[1].append(HeldPacket(replace(old, snv_value=bytes(8)), 0.02,
                                               self.b.state.neighbors.commitments[1]))
        self.b.state.last_sn[(1, 9)] = old.sn + 5
        _, key = self.a.initiate_discovery(8, 0.1).messages
        self.b.on_key_disclosure(key, 0.111)
        self.assertEqual(self.b.on_timer(TimerKind.HELD_EXPIRY, 1, 0.6).reason, Reason.REPLAY)
        self.assertFalse(self.b.state.ledger.history)

    def test_packet_under_a_later_key_waits_for_it(self):
        first, first_key = self.a.initiate_discovery(9, 0.0).messages
        second, second_key = self.a.initiate_discovery(8, 0.0).messages
        self.b.on_rdp(first, 0.001)
        self.b.on_rdp(second, 0.002)
        self.b.on_key_disclosure(first_key, 0.011)
        self.assertIn((1, 9, first.sn), self.b.state.rounds)
        self.assertNotIn((1, 8, second.sn), self.b.state.rounds)
        self.b.on_key_disclosure(second_key, 0.012)
        self.assertIn((1, 8, second.sn), self.b.state.rounds)

    def test_frame_under_an_already_disclosed_key_is_a_replay(self):
        rdp, disclosure = self.a.initiate_discovery(9, 0.0).messages
        self.b.on_key_disclosure(disclosure, 0.011)
        reaction = self.b.on_rdp(rdp, 0.02)
        self.assertEqual((reaction.verdict, reaction.reason), (Verdict.DROPPED, Reason.REPLAY))
        self.assertEqual(self.b.state.held[1], [])

    def test_missed_disclosure_is_covered_by_the_next(self):
        first, _ = self.a.initiate_discovery(9, 0.0).messages
        second, second_key = self.a.initiate_discovery(8, 0.0).messages
        self.b.on_rdp(first, 0.001)
        self.b.on_rdp(second, 0.002)
        self.b.on_key_disclosure(second_key, 0.012)
        self.assertIn((1, 9, first.sn), self.b.state.rounds)
        self.assertIn((1, 8, second.sn), self.b.state.rounds)

    def test_flush_forwards_with_previous_hop(self):
        rdp, disclosure = self.a.initiate_discovery(9, 0.0).messages
        self.b.on_rdp(rdp, 0.001)
        self.b.on_key_disclosure(disclosure, 0.011)
        reaction = self.b.on_timer(TimerKind.FLUSH, (1, 9, rdp.sn), 0.2)
        self.assertEqual(reaction.verdict, Verdict.FORWARDED)
        forward = reaction.messages[0]
        self.assertEqual((forward.sender, forward.prev_hop, forward.trail), (2, 1, (1, 2)))
        self.assertEqual(self.b.on_timer(TimerKind.FLUSH, (1, 9, rdp.sn), 0.3).verdict, Verdict.IGNORED)


class SelectionTests(SimpleTestCase):
    @staticmethod
    def entries(origins, suppressed=()):
        return [RequestBufferEntry(rdp=None, heard_from=o, second_hop=None, received_at=0.0,
                                   suppressed=o in suppressed) for o in origins]

    def test_single_entry_is_chosen(self):
        entries = self.entries([4])
        self.assertIs(select_announcement(entries, np.random.default_rng(0)), entries[0])

    def test_choice_is_uniform(self):
        rng = np.random.default_rng(1)
        entries = self.entries([1, 2, 3])
        picks = [select_announcement(entries, rng).heard_from for _ in range(30000)]
        for origin in (1, 2, 3):
            self.assertAlmostEqual(picks.count(origin) / len(picks), 1 / 3, delta=0.015)

    def test_suppressed_entries_are_never_chosen(self):
        rng = np.random.default_rng(2)
        entries = self.entries([1, 2, 3], suppressed={2})
        picks = {select_announcement(entries, rng).heard_from for _ in range(2000)}
        self.assertEqual(picks, {1, 3})

    def test_everything_suppressed(self):
        self.assertIsNone(select_announcement(self.entries([1, 2], suppressed={1, 2}), np.random.default_rng(0)))

    def test_baseline_takes_the_first_copy(self):
        entries = self.entries([5, 6, 7])
        self.assertIs(select_announcement(entries, np.random.default_rng(0), first_heard=True), entries[0])

    def test_overheard_forward_suppresses_matching_entries(self):
        round_ = DiscoveryRound(src=1, dst=9, sn=1, started_at=0.0, entries=self.entries([1, 2]))
        self.assertEqual(apply_suppression(round_, 1), 1)
        self.assertEqual([e.suppressed for e in round_.entries], [True, False])
        self.assertIn(1, round_.overheard_origins)
        self.assertEqual(apply_suppression(round_, None), 0)

    def test_replies_ranked_by_arrival_within_tau(self):
        replies = [ReplyCandidate(0.8, 7, 1), ReplyCandidate(0.0, 5, 1), ReplyCandidate(0.2, 6, 1)]
        self.assertEqual([r.next_hop for r in reply_priority(replies, 0.5)], [5, 6])
        self.assertEqual(rank_routes(replies, 1.0), [5, 6, 7])
        self.assertEqual(reply_priority([], 0.5), [])


class ReplyTests(SimpleTestCase):
    def test_destination_answers_with_the_next_chain_value(self):
        wire = Wire([(0, 1)], ProtocolParams(snv_length=10)).setup()
        wire.discover(0, 1)
        wire.run()
        rdp, rrp = wire.frames(RDP)[0], wire.frames(RRP)[0]
        chain = build_snv_chain(ORACLE.shared_key(0, 1), rdp.sn, 10)
        self.assertEqual(rrp.snv_value, chain.value_at(9))
        self.assertEqual(wire.nodes[1].state.reply_index[(0, 1)], 9)
        self.assertEqual(wire.nodes[0].state.routes.lookup(1).next_hop, 1)

    def test_second_request_uses_the_following_pair(self):
        wire = Wire([(0, 1)], ProtocolParams(snv_length=10)).setup()
        wire.discover(0, 1)
        wire.run()
        wire.discover(0, 1)
        wire.run()
        first, second = wire.frames(RRP)
        chain = build_snv_chain(ORACLE.shared_key(0, 1), wire.frames(RDP)[0].sn, 10)
        self.assertEqual(second.snv_value, chain.value_at(7))
        self.assertEqual(len(wire.events('route', node=0)), 2)

    def test_line_installs_routes_both_ways(self):
        wire = Wire(LINE).setup()
        wire.discover(0, 4)
        wire.run()
        middle = wire.nodes[2].state.routes
        self.assertEqual(middle.lookup(0).next_hop, 1)
        self.assertEqual(middle.lookup(4).next_hop, 3)
        route = wire.events('route', node=0)[0]
        self.assertEqual(route['path'], (0, 1, 2, 3, 4))
        self.assertEqual(route['hops'], 4)


class IntermediateReplyTests(SimpleTestCase):
    def setUp(self):
        self.wire = Wire([(1, 2), (2, 3)]).setup()
        self.a, self.b, self.c = (self.wire.nodes[i] for i in (1, 2, 3))
        self.rdp, disclosure = self.a.initiate_discovery(9, 0.0).messages
        self.b.on_rdp(self.rdp, 0.001)
        self.b.on_key_disclosure(disclosure, 0.011)
        self.b.on_timer(TimerKind.FLUSH, (1, 9, self.rdp.sn), 0.1)
        self.chain = build_snv_chain(ORACLE.shared_key(1, 9), self.rdp.sn, self.wire.params.snv_length)

    def reply(self, value, at):
        rrp = RRP(sender=3, receiver=2, src=1, dst=9, sn=self.rdp.sn, snv_value=value, relay_to=1)
        frame, disclosure = signed(self.c, rrp)
        self.assertEqual(self.b.on_rrp(frame, at).verdict, Verdict.HELD)
        return self.b.on_key_disclosure(disclosure, at + 0.01)

    def test_valid_reply_installs_both_routes(self):
        reaction = self.reply(self.chain.value_at(self.rdp.snv_index - 1), 0.2)
        routes = self.b.state.routes
        self.assertEqual(routes.lookup(9).next_hop, 3)
        self.assertEqual(routes.lookup(1).next_hop, 1)
        record = self.b.state.pair_chains[(1, 9)]
        self.assertFalse(record.pending)
        self.assertEqual(record.stored_index, self.rdp.snv_index - 1)
        forwards = [m for m in reaction.messages if isinstance(m, RRP)]
        self.assertEqual([(m.receiver, m.heard_from) for m in forwards], [(1, 3)])

    def test_bad_chain_value_is_rejected(self):
        self.reply(bytes(8), 0.2)
        self.assertNotIn(9, self.b.state.routes)
        self.assertTrue(self.b.state.pair_chains[(1, 9)].pending)

    def test_second_copy_is_not_forwarded(self):
        value = self.chain.value_at(self.rdp.snv_index - 1)
        self.reply(value, 0.2)
        again = self.reply(value, 0.3)
        self.assertEqual([m for m in again.messages if isinstance(m, RRP)], [])


class ChallengeTests(SimpleTestCase):
    key = ORACLE.shared_key(2, 1)

    def test_correct_answer_is_accepted(self):
        ct = chal.challenge_ciphertext(self.key, 2, 1, 77)
        answer = chal.answer_challenge(self.key, ct, 1)
        self.assertTrue(chal.response_valid(self.key, answer, 2, 1, 77))

    def test_echoed_challenge_is_refused(self):
        ct = chal.challenge_ciphertext(self.key, 2, 1, 77)
        self.assertFalse(chal.response_valid(self.key, ct, 2, 1, 77))

    def test_wrong_key_cannot_answer(self):
        ct = chal.challenge_ciphertext(self.key, 2, 1, 77)
        outsider = ORACLE.shared_key(5, 6)
        answer = chal.answer_challenge(outsider, ct, 1)
        self.assertTrue(answer is None or not chal.response_valid(self.key, answer, 2, 1, 77))

    def test_challenge_addressed_to_another_source_is_refused(self):
        ct = chal.challenge_ciphertext(self.key, 2, 1, 77)
        self.assertIsNone(chal.answer_challenge(self.key, ct, 3))

    def test_version2_defers_the_forward_route(self):
        wire = Wire([(0, 1), (1, 2)], ProtocolParams(challenge_mode=ChallengeMode.VERSION2)).setup()
        wire.originate(0, 2)
        wire.run()
        middle = wire.nodes[1].state
        self.assertIn((0, 2), middle.verified_pairs)
        self.assertEqual(middle.routes.lookup(2).next_hop, 2)
        self.assertEqual(len(wire.events('delivered', node=2)), 1)

    def test_on_demand_challenge_exposes_a_planted_route(self):
        wire = Wire([(1, 2)], ProtocolParams(challenge_mode=ChallengeMode.ON_DEMAND)).setup()
        planted = PairChainRecord(peer_pair=(1, 9), sn=0, stored_v=b'\x11' * 8, stored_index=64,
                                  pending=False, heard_from=7, second_hop=8, reply_from=6)
        wire.nodes[2].state.pair_chains[(1, 9)] = planted
        wire.discover(1, 9)
        wire.run(until=1.0)
        self.assertEqual(wire.nodes[1].state.suspects, {6, 7, 8})
        self.assertEqual(len(wire.events('fake_route', node=1)), 1)
        self.assertEqual(wire.nodes[2].state.pair_chains[(1, 9)].sn, wire.frames(RDP)[0].sn)


class RenewalTests(SimpleTestCase):
    def setUp(self):
        self.wire = Wire([(0, 1), (1, 2), (2, 3)], ProtocolParams(snv_length=4)).setup()

    def test_honest_renewal_is_adopted_along_the_route(self):
        self.wire.discover(0, 3)
        self.wire.run()
        adopted = {details['node'] for details in self.wire.events('renewal') if details['adopted']}
        self.assertEqual(adopted, {0, 1, 2})
        record = self.wire.nodes[1].state.pair_chains[(0, 3)]
        self.assertEqual(record.stored_index, 4)
        self.assertEqual(self.wire.nodes[0].state.snv_chains[(0, 3)].offset, 1)

        self.wire.discover(0, 3)
        self.wire.run()
        self.assertEqual(len(self.wire.events('route', node=0)), 2)
        self.assertEqual(self.wire.frames(RDP)[-1].snv_index, 3)

    def test_altered_commitment_is_refused_by_the_destination(self):
        def corrupt(msg, peer):
            if isinstance(msg, RenewalCommit) and peer == 2:
                return replace(msg, ct=bytes(16))
            return msg

        self.wire.tamper = corrupt
        self.wire.discover(0, 3)
        self.wire.run()
        self.assertFalse(any(d['adopted'] for d in self.wire.events('renewal')))
        self.assertEqual(self.wire.nodes[0].state.snv_chains[(0, 3)].offset, 0)

    def test_wrong_proof_is_refused(self):
        def corrupt(msg, peer):
            if isinstance(msg, RenewalProof) and peer == 1:
                return replace(msg, proof=bytes(8))
            return msg

        self.wire.tamper = corrupt
        self.wire.discover(0, 3)
        self.wire.run()
        verdicts = {d['node']: d['adopted'] for d in self.wire.events('renewal')}
        self.assertTrue(verdicts[2])
        self.assertFalse(verdicts[1])
        self.assertNotIn(0, verdicts)
        self.assertEqual(self.wire.nodes[1].state.pair_chains[(0, 3)].stored_index, 3)
        self.assertEqual(self.wire.nodes[0].state.snv_chains[(0, 3)].offset, 0)


class WatchTests(SimpleTestCase):
    def setUp(self):
        # node 3 guards the link 1 -> 2; node 4 only hears node 1
        self.wire = Wire([(1, 2), (2, 3), (1, 3), (1, 4)], ProtocolParams(beta=2, gamma=2)).setup()
        self.guard = self.wire.nodes[3]

    def record(self, msg, at=0.0):
        reaction = self.guard.receive(msg, at)
        return reaction

    def test_guard_records_with_deadline(self):
        reaction = self.record(data(1, 2))
        entry = self.guard.state.watch.find((Data.kind, 1, 9, 1), 1)
        self.assertEqual(entry.expected_forwarder, 2)
        self.assertAlmostEqual(entry.deadline, self.wire.params.forward_threshold)
        self.assertIn(TimerKind.WATCH_DEADLINE, [t.timer for t in reaction.timers])

    def test_non_guard_keeps_nothing(self):
        outsider = self.wire.nodes[4]
        self.assertIsNone(outsider.watch.watch_record(data(1, 2), 0.0))
        self.assertEqual(len(outsider.state.watch), 0)

    def test_final_hop_is_not_expected_to_forward(self):
        self.record(data(1, 2, dst=2))
        entry = self.guard.state.watch.find((Data.kind, 1, 2, 1), 1)
        self.assertIsNone(entry.expected_forwarder)

    def test_buffer_evicts_oldest(self):
        buffer = WatchBuffer(2)
        for seq in range(3):
            buffer.add(WatchEntry(key=('k', seq), content_digest=b'', expected_forwarder=None, origin_hop=1,
                                  recorded_at=0.0, deadline=1.0))
        self.assertEqual(len(buffer), 2)
        self.assertIsNone(buffer.find(('k', 0), 1))
        self.assertIsNotNone(buffer.find(('k', 2), 1))

    def test_missing_forward_is_a_drop(self):
        reaction = self.record(data(1, 2))
        entry_id = reaction.timers[0].key
        self.guard.on_timer(TimerKind.WATCH_DEADLINE, entry_id, 0.06)
        accusation = self.guard.state.ledger.history[-1]
        self.assertEqual((accusation.accused, accusation.kind), (2, AccusationKind.DROP))

    def test_faithful_forward_satisfies_the_guard(self):
        reaction = self.record(data(1, 2))
        self.assertEqual(self.guard.watch.watch_check(data(2, 5, prev_hop=1), 0.01), [])
        self.guard.on_timer(TimerKind.WATCH_DEADLINE, reaction.timers[0].key, 0.06)
        self.assertFalse(self.guard.state.ledger.history)

    def test_altered_forward_is_a_change(self):
        self.record(data(1, 2))
        found = self.guard.watch.watch_check(data(2, 5, prev_hop=1, payload_size=64), 0.01)
        self.assertEqual(found, [AccusationKind.CHANGE])

    def test_forward_of_a_packet_never_sent_is_fabricated(self):
        found = self.guard.watch.watch_check(data(2, 5, prev_hop=1, seq=42), 0.01)
        self.assertEqual(found, [AccusationKind.FABRICATE])

    def test_beta_events_raise_an_alert(self):
        for seq in (1, 2):
            reaction = self.record(data(1, 2, seq=seq), at=seq)
            self.guard.on_timer(TimerKind.WATCH_DEADLINE, reaction.timers[0].key, seq + 0.06)
        self.assertEqual(self.guard.state.ledger.mal_c(2, 2.1), 2)
        self.assertIn(2, self.guard.state.ledger.alerted)
        self.assertEqual(self.guard.state.ledger.alerts_received[2], {3})

    def test_alert_reaches_the_neighbours_of_the_accused(self):
        reaction = self.guard.on_timer(TimerKind.WATCH_DEADLINE, self.record(data(1, 2)).timers[0].key, 0.06)
        self.guard.watch.accuse(2, AccusationKind.DROP, 0.1, None, reaction)
        alerts = [m for m in reaction.messages if isinstance(m, Alert)]
        self.assertEqual([(a.receiver, a.accused, a.target) for a in alerts], [(1, 2, 1)])
        self.assertTrue(verify_mac(self.wire.oracle.shared_key(3, 1), alerts[0].core(), alerts[0].e2e_mac))


class DuplicateReplyTests(SimpleTestCase):
    def setUp(self):
        self.wire = Wire([(1, 2), (2, 3), (1, 3)]).setup()
        self.watcher = self.wire.nodes[3]
        self.watcher.state.routes.install(9, 2, 1, 0.0)

    @staticmethod
    def rrp(heard_from):
        return RRP(sender=2, receiver=1, src=1, dst=9, sn=1, snv_value=bytes(8), heard_from=heard_from)

    def test_two_replies_within_tau(self):
        self.assertFalse(self.watcher.watch.duplicate_reply_watch(self.rrp(5), 0.0))
        self.assertTrue(self.watcher.watch.duplicate_reply_watch(self.rrp(6), 0.1))
        self.assertNotIn(9, self.watcher.state.routes)

    def test_retransmission_is_not_a_duplicate(self):
        self.watcher.watch.duplicate_reply_watch(self.rrp(5), 0.0)
        self.assertFalse(self.watcher.watch.duplicate_reply_watch(self.rrp(5), 0.1))

    def test_replies_after_tau_are_fine(self):
        self.watcher.watch.duplicate_reply_watch(self.rrp(5), 0.0)
        self.assertFalse(self.watcher.watch.duplicate_reply_watch(self.rrp(6), 1.0))
        self.assertIn(9, self.watcher.state.routes)

    def test_reply_watch_keeps_only_the_last_tau(self):
        tau = self.wire.params.tau
        for sn in range(500):
            rrp = RRP(sender=2, receiver=1, src=1, dst=9, sn=sn, snv_value=bytes(8), heard_from=5)
            self.watcher.watch.duplicate_reply_watch(rrp, sn * 0.1)
        self.assertLessEqual(len(self.watcher.state.reply_watch), int(tau / 0.1) + 2)


class ExpiringMapTests(SimpleTestCase):
    def test_entries_lapse_after_ttl(self):
        table = ExpiringMap(1.0)
        for t in range(1000):
            table.put(('k', t), t, float(t))
        self.assertEqual(len(table), 2)
        self.assertIsNone(table.get(('k', 5)))
        self.assertEqual(table.get(('k', 999)), 999)
        self.assertEqual(table.written_at(('k', 998)), 998.0)

    def test_rewrite_refreshes_an_entry(self):
        table = ExpiringMap(1.0)
        table.put('a', 1, 0.0)
        table.put('b', 2, 0.5)
        table.put('a', 3, 0.9)
        table.put('c', 4, 1.8)
        self.assertNotIn('b', table)
        self.assertEqual(table.get('a'), 3)

    def test_node_tables_follow_protocol_timers(self):
        params = ProtocolParams()
        st = SrpsNode(0, params, ORACLE).state
        self.assertEqual(st.reply_watch.ttl, params.tau)
        self.assertEqual(st.errors_sent.ttl, params.error_interval)
        self.assertEqual(st.challenge_return.ttl, params.route_timeout)
        self.assertEqual(st.verified.ttl, params.route_timeout)

    def test_released_packets_do_not_pile_up(self):
        wire = Wire([(1, 2)], ProtocolParams(route_timeout=5.0)).setup()
        a, b = wire.nodes[1], wire.nodes[2]
        for step in range(100):
            rdp, disclosure = a.initiate_discovery(100 + step, step * 1.0).messages
            b.on_rdp(rdp, step * 1.0 + 0.001)
            b.on_key_disclosure(disclosure, step * 1.0 + 0.011)
        self.assertLessEqual(len(b.state.verified), 6)


class AlertTests(SimpleTestCase):
    def setUp(self):
        edges = [(0, 1), (0, 2), (0, 3), (0, 4), (1, 4), (2, 4), (3, 4)]
        self.wire = Wire(edges, ProtocolParams(gamma=3)).setup()
        self.hub = self.wire.nodes[0]

    def alert(self, guard, accused=4, sender=None):
        msg = Alert(sender=guard if sender is None else sender, receiver=0, guard=guard, accused=accused,
                    accusation=AccusationKind.DROP, target=0)
        return self.hub.receive(sign_alert(self.wire.oracle, msg), 1.0)

    def test_isolation_needs_gamma_distinct_guards(self):
        self.alert(1)
        self.alert(1)
        self.alert(2)
        self.assertNotIn(4, self.hub.state.ledger.isolated)
        reaction = self.alert(3)
        self.assertIn(4, self.hub.state.ledger.isolated)
        self.assertNotIn(4, self.hub.state.neighbors.one_hop)
        self.assertIn('isolated', [event for event, _ in reaction.notes])

    def test_isolated_sender_is_ignored(self):
        for guard in (1, 2, 3):
            self.alert(guard)
        reaction = self.hub.receive(data(4, 0, dst=0), 2.0)
        self.assertEqual(reaction.reason, Reason.ISOLATED)

    def test_alert_about_self_is_ignored(self):
        reaction = self.wire.nodes[1].receive(Alert(sender=0, receiver=1, guard=0, accused=1,
                                                    accusation=AccusationKind.DROP, target=1), 1.0)
        self.assertEqual(reaction.verdict, Verdict.IGNORED)

    def test_unsigned_alert_is_rejected(self):
        reaction = self.hub.receive(Alert(sender=1, receiver=0, guard=1, accused=4,
                                          accusation=AccusationKind.DROP, target=0), 1.0)
        self.assertEqual((reaction.verdict, reaction.reason), (Verdict.REJECTED, Reason.BAD_E2E_MAC))
        self.assertEqual(self.hub.state.ledger.alerts_received[4], set())

    def test_relay_cannot_rewrite_the_guard(self):
        honest = sign_alert(self.wire.oracle, Alert(sender=1, receiver=0, guard=1, accused=4,
                                                    accusation=AccusationKind.DROP, target=0))
        reaction = self.hub.receive(replace(honest, guard=2), 1.0)
        self.assertEqual(reaction.reason, Reason.BAD_E2E_MAC)

    def test_guard_must_neighbour_the_accused(self):
        wire = Wire([(0, 1), (0, 4)]).setup()
        msg = sign_alert(wire.oracle, Alert(sender=1, receiver=0, guard=1, accused=4,
                                            accusation=AccusationKind.DROP, target=0))
        self.assertEqual(wire.nodes[0].receive(msg, 1.0).reason, Reason.UNVERIFIED)

    def test_forged_guards_cannot_isolate_an_honest_node(self):
        wire = Wire([(0, 1), (0, 2), (1, 3), (2, 3), (1, 2)], ProtocolParams(gamma=3)).setup()
        for target in (1, 2):
            for guard in (100, 101, 102):
                forged = Alert(sender=3, receiver=target, guard=guard, accused=0,
                               accusation=AccusationKind.DROP, target=target)
                wire.nodes[target].receive(forged, 1.0)
                # tagged with the key node 3 really holds
                keyed = replace(forged, e2e_mac=mac(wire.oracle.shared_key(3, target), forged.core()))
                wire.nodes[target].receive(keyed, 1.0)
            own = sign_alert(wire.oracle, Alert(sender=3, receiver=target, guard=3, accused=0,
                                                accusation=AccusationKind.DROP, target=target))
            self.assertEqual(wire.nodes[target].receive(own, 1.0).reason, Reason.UNVERIFIED)
        for target in (1, 2):
            ledger = wire.nodes[target].state.ledger
            self.assertNotIn(0, ledger.isolated)
            self.assertFalse(ledger.alerts_received[0])
            self.assertIn(0, wire.nodes[target].state.neighbors.one_hop)

    def test_ledger_window_and_threshold(self):
        ledger = AccusationLedger(beta=3, gamma=2, window=10.0)
        crossed = [ledger.record(Accusation(1, 9, AccusationKind.DROP, t)) for t in (0.0, 1.0, 2.0, 3.0)]
        self.assertEqual(crossed, [False, False, True, False])
        self.assertEqual(ledger.mal_c(9, 11.5), 2)
        self.assertFalse(ledger.add_alert(9, 1))
        self.assertFalse(ledger.add_alert(9, 1))
        self.assertTrue(ledger.add_alert(9, 2))

    def test_ledger_forgets_events_outside_the_window(self):
        ledger = AccusationLedger(beta=100, gamma=2, window=10.0)
        for t in range(1000):
            ledger.record(Accusation(1, t % 50, AccusationKind.DROP, float(t)))
        self.assertLessEqual(len(ledger.history), 11)
        self.assertLessEqual(len(ledger.events), 11)
        self.assertLessEqual(sum(len(events) for events in ledger.events.values()), 11)
        self.assertEqual(ledger.mal_c(3, 999.0), 0)
        self.assertEqual(ledger.history[-1].accused, 999 % 50)


class MaintenanceTests(SimpleTestCase):
    def source(self, policy):
        wire = Wire([(0, 1), (0, 2)], ProtocolParams(maintenance_policy=policy)).setup()
        node = wire.nodes[0]
        node.state.routes.install(9, 1, 1, 0.0)
        node.state.alternates[9] = [RouteEntry(2, 1, 0.0)]
        return node

    def test_alternate_policy_switches_route(self):
        node = self.source(MaintenancePolicy.ALTERNATE)
        reaction = route_maintenance(node, 9, 0.1)
        self.assertEqual(reaction.verdict, Verdict.INSTALLED)
        self.assertEqual(node.state.routes.lookup(9).next_hop, 2)

    def test_alternate_policy_without_alternates_rediscovers(self):
        node = self.source(MaintenancePolicy.ALTERNATE)
        node.state.alternates[9] = []
        reaction = route_maintenance(node, 9, 0.1)
        self.assertIsInstance(reaction.messages[0], RDP)
        self.assertIn('rediscover', [event for event, _ in reaction.notes])

    def test_rediscover_policy_ignores_alternates(self):
        node = self.source(MaintenancePolicy.REDISCOVER)
        reaction = route_maintenance(node, 9, 0.1)
        self.assertIsInstance(reaction.messages[0], RDP)
        self.assertNotIn(9, node.state.routes)

    def test_local_repair_asks_the_reporter(self):
        node = self.source(MaintenancePolicy.LOCAL_REPAIR)
        error = RouteError(sender=1, receiver=0, origin=1, target=0, src=0, dst=9, sn=1, upstream=True,
                           broken_link=(1, 5), second_hop=6)
        reaction = route_maintenance(node, 9, 0.1, error=error)
        request = reaction.messages[0]
        self.assertIsInstance(request, RepairRequest)
        self.assertEqual((request.receiver, request.target, request.faulty, request.bypass_to), (1, 1, 5, 6))
        again = route_maintenance(node, 9, 0.2, error=error)
        self.assertIsInstance(again.messages[0], RDP)

    def test_reporter_with_a_bypass_updates_the_route(self):
        wire = Wire([(0, 1), (1, 5)]).setup()
        reporter = wire.nodes[1]
        reporter.state.routes.install(6, 5, 2, 0.0)
        request = RepairRequest(sender=0, receiver=1, origin=0, target=1, src=0, dst=9, sn=1, upstream=False,
                                faulty=7, bypass_to=6)
        reaction = on_repair_request(reporter, request, 0.1)
        self.assertEqual(reporter.state.routes.lookup(9).next_hop, 5)
        update = reaction.messages[0]
        self.assertIsInstance(update, RouteUpdate)
        self.assertEqual((update.receiver, update.target), (5, 6))
        self.assertIn('repaired', [event for event, _ in reaction.notes])

    def test_broken_forward_reports_upstream(self):
        wire = Wire(LINE).setup()
        wire.originate(0, 4)
        wire.run()
        wire.nodes[2].state.routes.remove(4)
        wire.originate(0, 4)
        wire.run()
        self.assertEqual(len(wire.events('route_error', node=2)), 1)
        self.assertEqual(len(wire.events('rediscover', node=0)), 1)


class OperationCountTests(SimpleTestCase):
    def test_per_role_costs_of_one_discovery(self):
        wire = Wire(LINE).setup()
        wire.discover(0, 4)
        wire.run()
        self.assertEqual(wire.nodes[0].counter.per_role(Role.SOURCE), (3, 2))
        for middle in (1, 2, 3):
            self.assertEqual(wire.nodes[middle].counter.per_role(Role.INTERMEDIATE), (2, 3))
        self.assertEqual(wire.nodes[4].counter.per_role(Role.DESTINATION), (5, 1))


class LivenessTests(SimpleTestCase):
    def test_honest_line_delivers_everything(self):
        wire = Wire(LINE).setup()
        for _ in range(3):
            wire.originate(0, 4)
            wire.run()
        self.assertEqual(len(wire.events('delivered', node=4)), 3)
        for node in wire.nodes.values():
            self.assertFalse(node.state.ledger.history)

    def test_baseline_delivers_without_authentication(self):
        wire = Wire(LINE, ProtocolParams(srps_enabled=False)).setup()
        wire.originate(0, 4)
        wire.run()
        self.assertEqual(len(wire.events('delivered', node=4)), 1)
        self.assertEqual(wire.frames(KeyDisclosure), [])

    @settings(max_examples=8, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 1000))
    def test_any_line_finds_the_only_path(self, length, seed):
        edges = [(i, i + 1) for i in range(length - 1)]
        wire = Wire(edges, seed=seed).setup()
        wire.discover(0, length - 1)
        wire.run()
        route = wire.events('route', node=0)[0]
        self.assertEqual(route['path'], tuple(range(length)))


class ReplayTests(SimpleTestCase):
    def test_old_request_replayed_later_is_refused(self):
        wire = Wire(LINE).setup()
        wire.discover(0, 4)
        wire.run()
        old = wire.frames(RDP)[0]
        wire.discover(0, 4)
        wire.run()
        replies = len(wire.frames(RRP))
        reaction = wire.nodes[1].receive(old, wire.now + 1.0)
        self.assertEqual(reaction.reason, Reason.REPLAY)
        self.assertEqual(len(wire.frames(RRP)), replies)

    def test_destination_ignores_stale_request(self):
        wire = Wire([(0, 1)]).setup()
        wire.discover(0, 1)
        wire.run()
        old = wire.frames(RDP)[0]
        wire.discover(0, 1)
        wire.run()
        reaction = wire.nodes[1].generate_rrp(old, wire.now + 1.0)
        self.assertEqual(reaction.reason, Reason.STALE)
