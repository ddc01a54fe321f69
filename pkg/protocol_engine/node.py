"""
The per-node SRPS state machine.

Handlers take a frame (or timer) and the current simulated time, mutate the
node's own state and return a ``Reaction``: the verdict, the frames to send,
the timers to arm and notes for the metrics collector. Nothing here touches
another node; all interaction flows through whoever drives the nodes.
"""
import logging
from dataclasses import replace
from typing import Optional

import numpy as np

from crypto_core.chains import (
    build_snv_chain, derive_commitment, next_auth_key, verify_and_advance,
)
from crypto_core.primitives import encrypt, hash_f, mac, verify_mac

from . import challenge as chal
from .actions import Reaction, Reason, TimerKind, Verdict, dropped
from .counters import OpCounter, Role
from .exceptions import RenewalRequired
from .keys import KeyOracle
from .maintenance import complete_local_repair, on_repair_request, route_maintenance
from .messages import (
    RDP, RRP, Alert, Challenge, ChallengeResponse, CommitmentRollover, Data,
    FakeRouteReport, Hello, HelloReply, KeyDisclosure, Message, MessageKind,
    NeighborList, RenewalCommit, RenewalProof, RenewalValue, RepairRequest,
    RouteError, RoutedControl, RouteUpdate, packet_key,
)
from .monitoring import NeighborWatch
from .multipath import apply_suppression, reply_priority, select_announcement
from .params import ChallengeMode, ProtocolParams
from .state import (
    AccusationKind, AccusationLedger, DiscoveryRound, ExpiringMap, HeldPacket, NodeState, PairChainRecord,
    PendingDiscovery, RenewalState, ReplyCandidate, RequestBufferEntry,
    RouteEntry, RoutingTable, WatchBuffer,
)
from .trace import trace

logger = logging.getLogger('srps.engine')

_ROUND_LIMIT = 512


class SrpsNode:
    """One sensor node running SRPS (or the plain flooding baseline when ``srps_enabled`` is off)."""

    malicious = False

    def __init__(self, node_id: int, params: Optional[ProtocolParams] = None,
                 oracle: Optional[KeyOracle] = None, rng=None, counter: Optional[OpCounter] = None):
        self.id = node_id
        self.params = params or ProtocolParams()
        self.oracle = oracle or KeyOracle(b'srps-lab')
        self.rng = rng if rng is not None else np.random.default_rng()
        self.counter = counter or OpCounter()
        self.epoch = 0
        p = self.params
        self.state = NodeState(
            node_id=node_id,
            chain=derive_commitment(self.oracle.commitment_seed(node_id, 0), p.chain_length),
            routes=RoutingTable(p.route_timeout),
            watch=WatchBuffer(p.watch_capacity),
            ledger=AccusationLedger(p.beta, p.gamma, p.t_window),
            verified=ExpiringMap(p.route_timeout),
            reply_watch=ExpiringMap(p.tau),
            challenge_return=ExpiringMap(p.route_timeout),
            errors_sent=ExpiringMap(p.error_interval),
        )
        self.watch = NeighborWatch(self)
        self._handlers = {
            MessageKind.HELLO: self.on_hello,
            MessageKind.HELLO_REPLY: self.on_hello_reply,
            MessageKind.NEIGHBOR_LIST: self.on_neighbor_list,
            MessageKind.KEY_DISCLOSURE: self.on_key_disclosure,
            MessageKind.COMMITMENT_ROLLOVER: self.on_commitment_rollover,
            MessageKind.RDP: self.on_rdp,
            MessageKind.RRP: self.on_rrp,
            MessageKind.ALERT: self.on_alert,
            MessageKind.DATA: self.on_data,
        }
        self._timers = {
            TimerKind.FLUSH: self.flush_request_buffer,
            TimerKind.WATCH_DEADLINE: self.watch.on_deadline,
            TimerKind.REPLY_WINDOW: self._close_reply_window,
            TimerKind.DISCOVERY_TIMEOUT: self._discovery_timeout,
            TimerKind.HELD_EXPIRY: self._expire_held,
            TimerKind.CHALLENGE_TIMEOUT: self._challenge_timeout,
        }

    def __repr__(self):
        return f'<{type(self).__name__} {self.id}>'

    @property
    def srps(self) -> bool:
        return self.params.srps_enabled

    # ------------------------------------------------------------------ setup

    def hello(self) -> Hello:
        return Hello(sender=self.id, commitment=self.state.chain.current_commitment)

    def on_hello(self, msg: Hello, now: float = 0.0) -> Reaction:
        self.state.neighbors.add_neighbor(msg.sender, msg.commitment)
        reply = HelloReply(sender=self.id, receiver=msg.sender, commitment=self.state.chain.current_commitment)
        return Reaction(Verdict.ACCEPTED).send(reply)

    def on_hello_reply(self, msg: HelloReply, now: float = 0.0) -> Reaction:
        self.state.neighbors.add_neighbor(msg.sender, msg.commitment)
        return Reaction(Verdict.ACCEPTED)

    def neighbor_list(self) -> NeighborList:
        return NeighborList(sender=self.id, neighbors=frozenset(self.state.neighbors.one_hop))

    def on_neighbor_list(self, msg: NeighborList, now: float = 0.0) -> Reaction:
        if msg.sender not in self.state.neighbors.one_hop:
            return dropped(Reason.NOT_NEIGHBOR)
        self.state.neighbors.set_neighbor_list(msg.sender, msg.neighbors)
        return Reaction(Verdict.ACCEPTED)

    # ------------------------------------------------------------- dispatch

    def receive(self, msg: Message, now: float) -> Reaction:
        """Entry point for every frame this node hears."""
        if msg.sender in self.state.ledger.isolated:
            return self._done(now, msg, dropped(Reason.ISOLATED))
        observed = self.watch.observe(msg, now) if self.srps else None
        addressed = msg.receiver is None or msg.receiver == self.id or isinstance(msg, KeyDisclosure)
        if not addressed:
            reaction = Reaction(Verdict.IGNORED)
        elif isinstance(msg, RoutedControl):
            reaction = self.on_routed_control(msg, now)
        else:
            handler = self._handlers.get(msg.kind)
            reaction = handler(msg, now) if handler else Reaction(Verdict.IGNORED)
        if observed is not None:
            reaction.extend(observed)
        if addressed:
            self._done(now, msg, reaction)
        return reaction

    def on_timer(self, timer: TimerKind, key, now: float) -> Reaction:
        reaction = self._timers[timer](key, now)
        trace(now, self.id, f'timer:{timer.value}', reaction.verdict.value, reaction.reason)
        return reaction

    def _done(self, now, msg, reaction) -> Reaction:
        trace(now, self.id, msg.kind.value, reaction.verdict.value, reaction.reason)
        return reaction

    # ------------------------------------------------------ authentication

    def _send(self, reaction: Reaction, msg: Message, now: float, after: Optional[float] = None):
        delay = self.params.processing_delay if after is None else after
        reaction.send(msg, delay)
        if self.srps:
            self.watch.record_own(msg, now + delay, reaction)

    def _rollover(self, reaction: Reaction, final: bytes, now: float):
        """The chain just spent its last key: announce the next chain's commitment under that key."""
        self.epoch += 1
        self.state.chain = derive_commitment(self.oracle.commitment_seed(self.id, self.epoch),
                                             self.params.chain_length)
        notice = CommitmentRollover(sender=self.id, new_commitment=self.state.chain.current_commitment)
        reaction.send(replace(notice, nbr_mac=mac(final, notice.auth_payload())), self.params.processing_delay)
        reaction.note('rollover', node=self.id, epoch=self.epoch, at=now)
        logger.info('node %d rolled its commitment chain over (epoch %d)', self.id, self.epoch)

    def _authenticated_send(self, reaction: Reaction, msg, now: float, role: Optional[Role] = None):
        """Send ``msg`` under the neighbourhood MAC and disclose its key afterwards."""
        if not self.srps:
            self._send(reaction, msg, now)
            return msg
        key = next_auth_key(self.state.chain)
        signed = replace(msg, nbr_mac=mac(key, msg.auth_payload()))
        if role is not None:
            self.counter.hash(role)
            self.counter.mac(role)
        self._send(reaction, signed, now)
        if self.state.chain.exhausted:
            self._rollover(reaction, key, now)
        p = self.params
        disclosure = KeyDisclosure(sender=self.id, receiver=msg.receiver, key=key)
        reaction.send(disclosure, p.processing_delay + p.disclosure_delay)
        return signed

    def _under_disclosed_key(self, msg: Message) -> bool:
        """A MAC under a key the sender already disclosed can only be a recording."""
        key = self.state.neighbors.commitments.get(msg.sender)
        if key is None or not msg.nbr_mac:
            return False
        for _ in range(self.params.max_gap):
            if verify_mac(key, msg.auth_payload(), msg.nbr_mac):
                return True
            key = hash_f(key)
        return False

    def _hold(self, msg: Message, now: float) -> Reaction:
        if self._under_disclosed_key(msg):
            return dropped(Reason.REPLAY)
        held = self.state.held[msg.sender]
        held.append(HeldPacket(msg, now, self.state.neighbors.commitments.get(msg.sender)))
        reaction = Reaction(Verdict.HELD)
        if len(held) == 1:
            reaction.schedule(self.params.held_timeout, TimerKind.HELD_EXPIRY, msg.sender)
        return reaction

    def on_key_disclosure(self, msg: KeyDisclosure, now: float) -> Reaction:
        nbrs = self.state.neighbors
        if msg.sender not in nbrs.one_hop:
            return dropped(Reason.NOT_NEIGHBOR)
        stored = nbrs.commitments.get(msg.sender)
        if stored is None:
            return Reaction(Verdict.REJECTED, Reason.UNVERIFIED)
        if msg.key == stored:
            return Reaction(Verdict.IGNORED, Reason.DUPLICATE)
        accepted, gap = verify_and_advance(stored, msg.key, self.params.max_gap)
        if not accepted:
            return Reaction(Verdict.REJECTED, Reason.UNVERIFIED)
        nbrs.commitments[msg.sender] = msg.key
        # a gap > 1 means earlier disclosures were missed; their keys hash out of this one
        keys = [hash_f(msg.key, i) for i in range(gap)]

        reaction = Reaction(Verdict.ACCEPTED)
        waiting = []
        for held in self.state.held.pop(msg.sender, []):
            packet = held.message
            if any(verify_mac(k, packet.auth_payload(), packet.nbr_mac) for k in keys):
                reaction.extend(self._release(packet, now))
            else:
                # may belong to a key not disclosed yet
                waiting.append(held)
        if waiting:
            self.state.held[msg.sender] = waiting
        return reaction

    def _release(self, packet: Message, now: float) -> Reaction:
        key = packet_key(packet)
        if key is not None:
            self.state.verified.put((packet.sender, key), True, now)
        if isinstance(packet, RDP):
            reaction = self._accept_rdp(packet, now)
        elif isinstance(packet, RRP):
            reaction = self._accept_rrp(packet, now)
        elif isinstance(packet, CommitmentRollover):
            self.state.neighbors.commitments[packet.sender] = packet.new_commitment
            reaction = Reaction(Verdict.ACCEPTED)
        else:
            reaction = Reaction(Verdict.IGNORED)
        trace(now, self.id, f'{packet.kind.value}:verified', reaction.verdict.value, reaction.reason)
        return reaction

    def _expire_held(self, sender, now: float) -> Reaction:
        """Drop packets whose key never showed up; if the sender kept disclosing keys, they were forged.

        Only a fresh packet counts against the sender: a copy of one already verified from it, or one
        behind the pair's last sequence number, is somebody else's replay.
        """
        held = self.state.held.get(sender, [])
        waiting = [h for h in held if now - h.received_at < self.params.held_timeout]
        expired = [h for h in held if now - h.received_at >= self.params.held_timeout]
        reaction = Reaction(Verdict.DROPPED if expired else Verdict.IGNORED, Reason.UNVERIFIED if expired else None)
        current = self.state.neighbors.commitments.get(sender)
        for stale in expired:
            if current is None or current == stale.commitment:
                continue
            packet = stale.message
            if not self._fresh(packet):
                reaction.reason = Reason.REPLAY
                continue
            reaction.reason = Reason.BAD_NBR_MAC
            reaction.note('tampered', node=self.id, sender=sender, kind=packet.kind.value, at=now)
            self.watch.accuse(sender, AccusationKind.CHANGE, now, packet_key(packet), reaction)
        if waiting:
            self.state.held[sender] = waiting
            oldest = min(h.received_at for h in waiting)
            reaction.schedule(oldest + self.params.held_timeout - now, TimerKind.HELD_EXPIRY, sender)
        else:
            self.state.held.pop(sender, None)
        return reaction

    def _fresh(self, packet: Message) -> bool:
        key = packet_key(packet)
        if key is None:
            return True
        if (packet.sender, key) in self.state.verified:
            return False
        last = self.state.last_sn.get((packet.src, packet.dst))
        return last is None or packet.sn >= last

    def on_commitment_rollover(self, msg: CommitmentRollover, now: float) -> Reaction:
        if msg.sender not in self.state.neighbors.one_hop:
            return dropped(Reason.NOT_NEIGHBOR)
        if not self.srps:
            return Reaction(Verdict.IGNORED)
        return self._hold(msg, now)

    # ------------------------------------------------------ route discovery

    def _next_sn(self) -> int:
        self.state.sn_counter += 1
        return self.state.sn_counter

    def initiate_discovery(self, dst: int, now: float) -> Reaction:
        """Broadcast a fresh RDP toward ``dst``; raises RenewalRequired when the pair chain is spent."""
        st = self.state
        pair = (self.id, dst)
        shared = self.oracle.shared_key(self.id, dst)
        sn = self._next_sn()

        chain = st.snv_chains.get(pair)
        if chain is None:
            chain = build_snv_chain(shared, sn, self.params.snv_length)
            st.snv_chains[pair] = chain
        indices = chain.current_indices()
        if indices is None:
            raise RenewalRequired(f'SNV chain of pair {pair} is exhausted')
        req_idx, rep_idx = indices
        chain.advance()
        self.counter.mac(Role.SOURCE)   # RSN
        self.counter.hash(Role.SOURCE)  # SNV

        rdp = RDP(sender=self.id, src=self.id, dst=dst, sn=sn, snv_value=chain.value_at(req_idx),
                  snv_index=req_idx, trail=(self.id,))
        rdp = replace(rdp, e2e_mac=mac(shared, rdp.core()))
        self.counter.mac(Role.SOURCE)

        st.last_sn[pair] = sn
        previous = st.pending.get(dst)
        st.pending[dst] = PendingDiscovery(
            dst=dst, sn=sn, started_at=now,
            snv_request=chain.value_at(req_idx), snv_reply=chain.value_at(rep_idx),
            queued=previous.queued if previous is not None else [],
        )
        reaction = Reaction(Verdict.ACCEPTED)
        self._authenticated_send(reaction, rdp, now, role=Role.SOURCE)
        reaction.schedule(self.params.discovery_timeout, TimerKind.DISCOVERY_TIMEOUT, (dst, sn))
        reaction.note('discovery', src=self.id, dst=dst, sn=sn, at=now)
        logger.debug('node %d starts discovery of %d (sn=%d, snv index %d)', self.id, dst, sn, req_idx)
        return reaction

    def request_route(self, dst: int, now: float) -> Reaction:
        """Discover a route, restarting the pair chain when it is spent and could not be renewed."""
        try:
            return self.initiate_discovery(dst, now)
        except RenewalRequired:
            self.state.snv_chains.pop((self.id, dst), None)
            reaction = self.initiate_discovery(dst, now)
            return reaction.note('chain_restart', src=self.id, dst=dst, at=now)

    def on_rdp(self, msg: RDP, now: float) -> Reaction:
        st = self.state
        if msg.src == self.id:
            return dropped(Reason.DUPLICATE)
        if self.srps:
            if msg.sender not in st.neighbors.one_hop:
                return dropped(Reason.NOT_NEIGHBOR)
            if msg.prev_hop is not None and not st.neighbors.knows_link(msg.sender, msg.prev_hop):
                return dropped(Reason.NOT_NEIGHBOR)
        last = st.last_sn.get((msg.src, msg.dst))
        if last is not None and msg.sn < last:
            return dropped(Reason.REPLAY)
        round_ = st.rounds.get((msg.src, msg.dst, msg.sn))
        if round_ is not None and msg.dst != self.id:
            if round_.flushed:
                return dropped(Reason.DUPLICATE)
            if any(entry.heard_from == msg.sender for entry in round_.entries):
                return dropped(Reason.DUPLICATE)
        if not self.srps:
            return self._accept_rdp(msg, now)
        return self._hold(msg, now)

    def _check_pair_record(self, msg: RDP) -> Optional[Reason]:
        rec = self.state.pair_chains.get((msg.src, msg.dst))
        if rec is None:
            return None
        if msg.sn == rec.sn:
            expected = rec.stored_v if rec.pending else hash_f(rec.stored_v)
            return None if msg.snv_value == expected else Reason.BAD_SNV
        accepted, gap = verify_and_advance(rec.stored_v, msg.snv_value, self.params.max_gap)
        if not accepted or rec.stored_index - msg.snv_index != gap:
            return Reason.BAD_SNV
        return None

    def _store_pair_record(self, msg: RDP):
        pair = (msg.src, msg.dst)
        rec = self.state.pair_chains.get(pair)
        if rec is None or msg.sn > rec.sn:
            self.state.pair_chains[pair] = PairChainRecord(
                peer_pair=pair, sn=msg.sn, stored_v=msg.snv_value, stored_index=msg.snv_index,
                pending=True, heard_from=msg.sender, second_hop=msg.prev_hop,
            )

    def _round(self, msg: RDP, now: float) -> DiscoveryRound:
        rounds = self.state.rounds
        key = (msg.src, msg.dst, msg.sn)
        round_ = rounds.get(key)
        if round_ is None:
            if len(rounds) >= _ROUND_LIMIT:
                horizon = now - self.params.route_timeout
                for stale in [k for k, r in rounds.items() if r.started_at < horizon]:
                    del rounds[stale]
            round_ = rounds[key] = DiscoveryRound(src=msg.src, dst=msg.dst, sn=msg.sn, started_at=now)
        return round_

    def _accept_rdp(self, msg: RDP, now: float, skip_snv: bool = False) -> Reaction:
        st = self.state
        if msg.dst == self.id:
            return self.generate_rrp(msg, now)
        if self.srps:
            self.counter.hash(Role.INTERMEDIATE)  # key check
            self.counter.mac(Role.INTERMEDIATE)   # neighbourhood MAC
        round_ = self._round(msg, now)
        if round_.flushed:
            return dropped(Reason.DUPLICATE)
        if self.srps and not skip_snv:
            reason = self._check_pair_record(msg)
            if reason is not None:
                if self.params.challenge_mode == ChallengeMode.ON_DEMAND:
                    return self._challenge_fake_route(msg, now)
                return Reaction(Verdict.REJECTED, reason)
        if self.srps:
            self._store_pair_record(msg)
        pair = (msg.src, msg.dst)
        st.last_sn[pair] = max(st.last_sn.get(pair, msg.sn), msg.sn)

        if self.srps:
            apply_suppression(round_, msg.prev_hop)
        entry = RequestBufferEntry(rdp=msg, heard_from=msg.sender, second_hop=msg.prev_hop, received_at=now,
                                   suppressed=self.srps and msg.sender in round_.overheard_origins)
        round_.entries.append(entry)
        reaction = Reaction(Verdict.BUFFERED)
        key = (msg.src, msg.dst, msg.sn)
        if len(round_.entries) == 1:
            reaction.schedule(self.params.wait_time(self.rng), TimerKind.FLUSH, key)
        elif self.srps and len(round_.entries) >= self.params.n_r:
            reaction.extend(self.flush_request_buffer(key, now))
        return reaction

    def flush_request_buffer(self, key, now: float) -> Reaction:
        """T_r expired or N_r copies arrived: rebroadcast one surviving announcement."""
        round_ = self.state.rounds.get(key)
        if round_ is None or round_.flushed:
            return Reaction(Verdict.IGNORED)
        round_.flushed = True
        chosen = select_announcement(round_.entries, self.rng, first_heard=not self.srps)
        if chosen is None:
            return dropped(Reason.SUPPRESSED)
        round_.chosen = chosen
        rdp = chosen.rdp
        forward = replace(rdp, sender=self.id, receiver=None, prev_hop=chosen.heard_from, nbr_mac=b'',
                          trail=rdp.trail + (self.id,))
        reaction = Reaction(Verdict.FORWARDED)
        self._authenticated_send(reaction, forward, now, role=Role.INTERMEDIATE)
        return reaction

    def _destination_chain(self, msg: RDP):
        """The pair chain a request's SNV belongs to, rebuilt from v_0 on a first request."""
        st = self.state
        pair = (msg.src, msg.dst)
        self.counter.mac(Role.DESTINATION)  # RSN
        chain = st.snv_chains.get(pair)
        if chain is not None and 1 <= msg.snv_index <= chain.length_n and chain.value_at(msg.snv_index) == msg.snv_value:
            return chain
        if msg.snv_index < 2:
            return None
        fresh = build_snv_chain(self.oracle.shared_key(msg.src, msg.dst), msg.sn, msg.snv_index)
        if fresh.value_at(msg.snv_index) != msg.snv_value:
            return None
        st.snv_chains[pair] = fresh
        return fresh

    def generate_rrp(self, msg: RDP, now: float) -> Reaction:
        """Destination side: authenticate the request end to end and answer each distinct copy."""
        st = self.state
        pair = (msg.src, msg.dst)
        shared = self.oracle.shared_key(msg.src, msg.dst)
        if self.srps:
            self.counter.mac(Role.DESTINATION)  # neighbourhood MAC
            self.counter.mac(Role.DESTINATION)  # end-to-end MAC
            if not verify_mac(shared, msg.core(), msg.e2e_mac):
                return Reaction(Verdict.IGNORED, Reason.BAD_E2E_MAC)
        last = st.last_sn.get(pair)
        if last is not None and msg.sn < last:
            return Reaction(Verdict.IGNORED, Reason.STALE)

        round_ = self._round(msg, now)
        if msg.sender in round_.replies_sent:
            return dropped(Reason.DUPLICATE)
        limit = self.params.max_replies if self.srps else 1
        if len(round_.replies_sent) >= limit:
            return dropped(Reason.DUPLICATE)

        if self.srps:
            chain = self._destination_chain(msg)
            if chain is None:
                return Reaction(Verdict.REJECTED, Reason.BAD_SNV)
            reply_value = chain.value_at(msg.snv_index - 1)
            st.reply_index[pair] = msg.snv_index - 1
        else:
            reply_value = msg.snv_value
        st.last_sn[pair] = msg.sn
        round_.replies_sent.add(msg.sender)

        if len(round_.replies_sent) == 1 or st.routes.lookup(msg.src, now) is None:
            st.routes.install(msg.src, msg.sender, msg.sn, now, second_hop=msg.prev_hop)

        rrp = RRP(sender=self.id, receiver=msg.sender, src=msg.src, dst=msg.dst, sn=msg.sn,
                  snv_value=reply_value, relay_to=msg.prev_hop, heard_from=None,
                  trail=msg.trail + (self.id,))
        rrp = replace(rrp, e2e_mac=mac(shared, rrp.core()))
        if self.srps:
            self.counter.mac(Role.DESTINATION)
        reaction = Reaction(Verdict.ACCEPTED)
        self._authenticated_send(reaction, rrp, now, role=Role.DESTINATION)
        reaction.note('reply', src=msg.src, dst=msg.dst, sn=msg.sn, via=msg.sender, at=now)
        return reaction

    def on_rrp(self, msg: RRP, now: float) -> Reaction:
        nbrs = self.state.neighbors
        if self.srps:
            if msg.sender not in nbrs.one_hop:
                return dropped(Reason.NOT_NEIGHBOR)
            if msg.heard_from is not None and not nbrs.knows_link(msg.sender, msg.heard_from):
                return Reaction(Verdict.REJECTED, Reason.NOT_NEIGHBOR)
            return self._hold(msg, now)
        return self._accept_rrp(msg, now)

    def _accept_rrp(self, msg: RRP, now: float) -> Reaction:
        st = self.state
        if msg.src == self.id:
            return self._reply_at_source(msg, now)
        round_ = st.rounds.get((msg.src, msg.dst, msg.sn))
        if round_ is None or round_.chosen is None:
            return Reaction(Verdict.REJECTED, Reason.NO_REQUEST)
        if round_.reply_forwarded:
            return dropped(Reason.DUPLICATE)
        if msg.relay_to is not None and msg.relay_to != round_.heard_from:
            return Reaction(Verdict.REJECTED, Reason.NO_REQUEST)

        pair = (msg.src, msg.dst)
        if self.srps:
            rec = st.pair_chains.get(pair)
            if rec is None or rec.sn != msg.sn or not rec.pending:
                return Reaction(Verdict.REJECTED, Reason.NO_REQUEST)
            self.counter.hash(Role.INTERMEDIATE)
            if hash_f(msg.snv_value) != rec.stored_v:
                return Reaction(Verdict.REJECTED, Reason.BAD_SNV)
            rec.stored_v = msg.snv_value
            rec.stored_index -= 1
            rec.pending = False
            rec.heard_from = round_.heard_from
            rec.second_hop = round_.second_hop
            rec.reply_from = msg.sender

        round_.reply_forwarded = True
        round_.reply_from = msg.sender
        reaction = Reaction(Verdict.INSTALLED)
        st.routes.install(msg.src, round_.heard_from, msg.sn, now, second_hop=round_.second_hop)

        version2 = (self.srps and self.params.challenge_mode == ChallengeMode.VERSION2
                    and pair not in st.verified_pairs)
        if version2:
            round_.pending_reply = msg
            st.deferred.setdefault(pair, [])
            reaction.extend(self._send_challenge(msg.src, msg.dst, msg.sn, round_.heard_from, now))
        else:
            st.routes.install(msg.dst, msg.sender, msg.sn, now, second_hop=msg.heard_from)

        forward = RRP(sender=self.id, receiver=round_.heard_from, src=msg.src, dst=msg.dst, sn=msg.sn,
                      snv_value=msg.snv_value, e2e_mac=msg.e2e_mac, relay_to=round_.second_hop,
                      heard_from=msg.sender, trail=msg.trail + (self.id,))
        self._authenticated_send(reaction, forward, now)
        return reaction

    def _reply_at_source(self, msg: RRP, now: float) -> Reaction:
        st = self.state
        pending = st.pending.get(msg.dst)
        if pending is None or pending.sn != msg.sn:
            return Reaction(Verdict.REJECTED, Reason.NO_REQUEST)
        if self.srps:
            shared = self.oracle.shared_key(self.id, msg.dst)
            if not verify_mac(shared, msg.core(), msg.e2e_mac):
                return Reaction(Verdict.REJECTED, Reason.BAD_E2E_MAC)
            if msg.snv_value != pending.snv_reply:
                return Reaction(Verdict.REJECTED, Reason.BAD_SNV)
        if pending.first_reply_at is not None and now - pending.first_reply_at > self.params.tau:
            return dropped(Reason.LATE)
        if any(reply.next_hop == msg.sender for reply in pending.replies):
            return dropped(Reason.DUPLICATE)

        pending.replies.append(ReplyCandidate(now, msg.sender, msg.sn, msg.heard_from, msg.trail))
        reaction = Reaction(Verdict.INSTALLED)
        if pending.first_reply_at is None:
            pending.first_reply_at = now
            st.repairs_pending.pop(msg.dst, None)
            st.routes.install(msg.dst, msg.sender, msg.sn, now, second_hop=msg.heard_from)
            reaction.schedule(self.params.tau, TimerKind.REPLY_WINDOW, msg.dst)
            path = msg.trail[:msg.trail.index(msg.dst) + 1] if msg.dst in msg.trail else msg.trail
            reaction.note('route', src=self.id, dst=msg.dst, sn=msg.sn, path=path, hops=len(path) - 1, at=now)
            for packet in pending.queued:
                self._send(reaction, replace(packet, receiver=msg.sender), now)
            pending.queued = []
            if msg.dst in st.repairs:
                reaction.extend(complete_local_repair(self, msg.dst, now))
            chain = st.snv_chains.get((self.id, msg.dst))
            if self.srps and chain is not None and chain.needs_renewal and not chain.exhausted:
                reaction.extend(self.renewal_flow(msg.dst, now))
        return reaction

    def _close_reply_window(self, dst, now: float) -> Reaction:
        st = self.state
        pending = st.pending.pop(dst, None)
        if pending is None:
            return Reaction(Verdict.IGNORED)
        ranked = reply_priority(pending.replies, self.params.tau)
        st.alternates[dst] = [RouteEntry(r.next_hop, r.sn, r.arrived_at, r.second_hop) for r in ranked[1:]]
        return Reaction(Verdict.ACCEPTED)

    def _discovery_timeout(self, key, now: float) -> Reaction:
        dst, sn = key
        st = self.state
        pending = st.pending.get(dst)
        if pending is None or pending.sn != sn or pending.first_reply_at is not None:
            return Reaction(Verdict.IGNORED)
        del st.pending[dst]
        reaction = dropped(Reason.NO_ROUTE)
        for packet in pending.queued:
            reaction.note('lost', cause='no_route', src=packet.src, dst=packet.dst, seq=packet.seq, at=now)
        if dst in st.repairs:
            src, final = st.repairs.pop(dst)
            reaction.extend(self._report_broken_route(src, final, None, now))
        return reaction

    def reply_priority(self, dst) -> list:
        pending = self.state.pending.get(dst)
        return reply_priority(pending.replies, self.params.tau) if pending else []

    # ------------------------------------------------------------ data plane

    def _usable(self, entry: Optional[RouteEntry]) -> bool:
        return (entry is not None and entry.next_hop in self.state.neighbors.one_hop
                and entry.next_hop not in self.state.ledger.isolated)

    def originate_data(self, dst: int, now: float, payload_size: int) -> Reaction:
        st = self.state
        st.data_seq += 1
        packet = Data(sender=self.id, src=self.id, dst=dst, seq=st.data_seq, payload_size=payload_size,
                      created_at=now, trail=(self.id,))
        reaction = Reaction(Verdict.ACCEPTED)
        reaction.note('sent', src=self.id, dst=dst, seq=packet.seq, at=now)

        entry = st.routes.lookup(dst, now)
        if entry is not None and not self._usable(entry):
            reaction.extend(route_maintenance(self, dst, now))
            entry = st.routes.lookup(dst, now)
        if self._usable(entry):
            self._send(reaction, replace(packet, receiver=entry.next_hop), now)
            reaction.verdict = Verdict.FORWARDED
            return reaction

        pending = st.pending.get(dst)
        if pending is None:
            reaction.extend(self.request_route(dst, now))
            pending = st.pending[dst]
        if len(pending.queued) >= self.params.queue_limit:
            reaction.note('lost', cause='queue', src=self.id, dst=dst, seq=packet.seq, at=now)
        else:
            pending.queued.append(packet)
        reaction.verdict = Verdict.BUFFERED
        return reaction

    def on_data(self, msg: Data, now: float) -> Reaction:
        st = self.state
        if msg.dst == self.id:
            reaction = Reaction(Verdict.DELIVERED)
            return reaction.note('delivered', src=msg.src, dst=msg.dst, seq=msg.seq,
                                 latency=now - msg.created_at, hops=len(msg.trail), at=now)
        entry = st.routes.lookup(msg.dst, now, refresh=True)
        if not self._usable(entry):
            pair = (msg.src, msg.dst)
            if pair in st.deferred:
                st.deferred[pair].append(msg)
                return Reaction(Verdict.HELD)
            reaction = dropped(Reason.NO_ROUTE)
            reaction.note('lost', cause='no_route', src=msg.src, dst=msg.dst, seq=msg.seq, at=now)
            broken = st.broken_routes.get(msg.dst) or entry
            return reaction.extend(self._report_broken_route(msg.src, msg.dst, broken, now))
        return self._forward_data(msg, entry.next_hop, now)

    def _forward_data(self, msg: Data, next_hop: int, now: float) -> Reaction:
        forward = replace(msg, sender=self.id, receiver=next_hop, prev_hop=msg.sender, trail=msg.trail + (self.id,))
        reaction = Reaction(Verdict.FORWARDED)
        self._send(reaction, forward, now)
        return reaction

    def _report_broken_route(self, src: int, dst: int, broken: Optional[RouteEntry], now: float) -> Reaction:
        """Tell the source its route to ``dst`` through this node no longer works."""
        st = self.state
        reaction = Reaction(Verdict.IGNORED)
        if src == self.id:
            return reaction.extend(route_maintenance(self, dst, now))
        last = st.errors_sent.get((src, dst))
        if last is not None and now - last < self.params.error_interval:
            return reaction
        upstream = st.routes.lookup(src)
        if not self._usable(upstream):
            return reaction
        st.errors_sent.put((src, dst), now, now)
        error = RouteError(
            sender=self.id, receiver=upstream.next_hop, origin=self.id, target=src, src=src, dst=dst,
            sn=upstream.sn, upstream=True,
            broken_link=(self.id, broken.next_hop if broken else None),
            second_hop=broken.second_hop if broken else None,
        )
        self._send(reaction, error, now)
        return reaction.note('route_error', node=self.id, src=src, dst=dst, at=now)

    # ------------------------------------------------------- routed control

    def _control_next_hop(self, msg: RoutedControl, now: float) -> Optional[int]:
        st = self.state
        round_ = st.rounds.get((msg.src, msg.dst, msg.sn))
        if msg.upstream:
            for endpoint in (msg.target, msg.src):
                entry = st.routes.lookup(endpoint)
                if self._usable(entry):
                    return entry.next_hop
            return round_.heard_from if round_ is not None else None
        back = st.challenge_return.get((msg.target, msg.src, msg.dst, msg.sn))
        if back is not None:
            return back
        for endpoint in (msg.target, msg.dst):
            entry = st.routes.lookup(endpoint)
            if self._usable(entry):
                return entry.next_hop
        return round_.reply_from if round_ is not None else None

    def on_routed_control(self, msg: RoutedControl, now: float) -> Reaction:
        if msg.sender not in self.state.neighbors.one_hop:
            return dropped(Reason.NOT_NEIGHBOR)
        if msg.target == self.id:
            return self._control_at_target(msg, now)

        reaction = Reaction(Verdict.FORWARDED)
        self._control_in_transit(msg, now, reaction)
        next_hop = self._control_next_hop(msg, now)
        if next_hop is None:
            reaction.verdict, reaction.reason = Verdict.DROPPED, Reason.NO_ROUTE
            return reaction
        relayed = replace(msg, sender=self.id, receiver=next_hop, trail=msg.trail + (self.id,))
        self._send(reaction, relayed, now)
        return reaction

    def _control_in_transit(self, msg: RoutedControl, now: float, reaction: Reaction):
        st = self.state
        pair = (msg.src, msg.dst)
        if isinstance(msg, Challenge):
            st.challenge_return.put((msg.origin, msg.src, msg.dst, msg.sn), msg.sender, now)
        elif isinstance(msg, RenewalCommit):
            st.renewals[pair] = RenewalState(sn=msg.sn, ciphertext=msg.ct)
        elif isinstance(msg, RenewalValue):
            renewal = st.renewals.get(pair)
            if renewal is not None and renewal.sn == msg.sn:
                renewal.u_n = msg.u_n
        elif isinstance(msg, RenewalProof):
            adopted = self._adopt_renewal(pair, msg)
            reaction.note('renewal', node=self.id, src=msg.src, dst=msg.dst, adopted=adopted, at=now)
            if not adopted:
                reaction.reason = Reason.BAD_RENEWAL
        elif isinstance(msg, RouteUpdate):
            toward = st.routes.lookup(msg.target)
            if toward is not None:
                st.routes.install(msg.dst, toward.next_hop, msg.sn, now, second_hop=toward.second_hop)
            st.routes.install(msg.src, msg.sender, msg.sn, now)

    def _control_at_target(self, msg: RoutedControl, now: float) -> Reaction:
        if isinstance(msg, Challenge):
            return self._answer_challenge(msg, now)
        if isinstance(msg, ChallengeResponse):
            return self._on_challenge_response(msg, now)
        if isinstance(msg, FakeRouteReport):
            hops = {h for h in msg.hops if h is not None}
            self.state.suspects.update(hops)
            reaction = Reaction(Verdict.ACCEPTED)
            return reaction.note('fake_route', reporter=msg.origin, hops=tuple(msg.hops), at=now)
        if isinstance(msg, RenewalCommit):
            return self._renewal_at_destination(msg, now)
        if isinstance(msg, RenewalValue):
            renewal = self.state.renewals.get((msg.src, msg.dst))
            if renewal is not None and renewal.sn == msg.sn:
                renewal.u_n = msg.u_n
            return Reaction(Verdict.ACCEPTED)
        if isinstance(msg, RenewalProof):
            return self._renewal_at_source(msg, now)
        if isinstance(msg, RouteError):
            return route_maintenance(self, msg.dst, now, error=msg)
        if isinstance(msg, RepairRequest):
            return on_repair_request(self, msg, now)
        if isinstance(msg, RouteUpdate):
            self.state.routes.install(msg.src, msg.sender, msg.sn, now)
            return Reaction(Verdict.INSTALLED)
        return Reaction(Verdict.IGNORED)

    # ------------------------------------------------------------ challenges

    def _send_challenge(self, src: int, dst: int, sn: int, toward: int, now: float) -> Reaction:
        nonce = int(self.rng.integers(0, 2 ** 63))
        self.state.challenged[(src, dst, sn)] = nonce
        ct = chal.challenge_ciphertext(self.oracle.shared_key(self.id, src), self.id, src, nonce)
        message = Challenge(sender=self.id, receiver=toward, origin=self.id, target=src, src=src, dst=dst,
                            sn=sn, upstream=True, ct=ct)
        reaction = Reaction(Verdict.ACCEPTED)
        self._send(reaction, message, now)
        reaction.schedule(self.params.discovery_timeout, TimerKind.CHALLENGE_TIMEOUT, (src, dst, sn))
        return reaction

    def _challenge_fake_route(self, msg: RDP, now: float) -> Reaction:
        """A request conflicts with the stored chain: ask the source whether it is genuine."""
        key = (msg.src, msg.dst, msg.sn)
        if key in self.state.challenged:
            return Reaction(Verdict.REJECTED, Reason.BAD_SNV)
        self.state.challenged_requests[key] = msg
        reaction = self._send_challenge(msg.src, msg.dst, msg.sn, msg.sender, now)
        reaction.verdict, reaction.reason = Verdict.HELD, Reason.BAD_SNV
        return reaction

    def _answer_challenge(self, msg: Challenge, now: float) -> Reaction:
        st = self.state
        answer = chal.answer_challenge(self.oracle.shared_key(self.id, msg.origin), msg.ct, self.id)
        if answer is None:
            return Reaction(Verdict.REJECTED, Reason.BAD_CHALLENGE)
        response = ChallengeResponse(sender=self.id, receiver=msg.sender, origin=self.id, target=msg.origin,
                                     src=msg.src, dst=msg.dst, sn=msg.sn, upstream=False, ct=answer)
        reaction = Reaction(Verdict.ACCEPTED)
        self._send(reaction, response, now)
        return reaction

    def challenge_accepted(self, msg: ChallengeResponse) -> bool:
        nonce = self.state.challenged.get((msg.src, msg.dst, msg.sn))
        if nonce is None:
            return False
        return chal.response_valid(self.oracle.shared_key(self.id, msg.src), msg.ct, self.id, msg.src, nonce)

    def _on_challenge_response(self, msg: ChallengeResponse, now: float) -> Reaction:
        st = self.state
        key = (msg.src, msg.dst, msg.sn)
        pair = (msg.src, msg.dst)
        if not self.challenge_accepted(msg):
            return Reaction(Verdict.REJECTED, Reason.BAD_CHALLENGE)
        del st.challenged[key]
        reaction = Reaction(Verdict.ACCEPTED)

        request = st.challenged_requests.pop(key, None)
        if request is not None:
            fake = st.pair_chains.pop(pair, None)
            reaction.extend(self._accept_rdp(request, now, skip_snv=True))
            if fake is not None:
                report = FakeRouteReport(sender=self.id, receiver=request.sender, origin=self.id, target=msg.src,
                                         src=msg.src, dst=msg.dst, sn=msg.sn, upstream=True,
                                         hops=(fake.heard_from, fake.second_hop, fake.reply_from))
                self._send(reaction, report, now)
            return reaction

        round_ = st.rounds.get(key)
        if round_ is not None and round_.pending_reply is not None:
            reply = round_.pending_reply
            st.routes.install(msg.dst, reply.sender, msg.sn, now, second_hop=reply.heard_from)
            round_.pending_reply = None
            reaction.verdict = Verdict.INSTALLED
        st.verified_pairs.add(pair)
        for packet in st.deferred.pop(pair, []):
            reaction.extend(self.on_data(packet, now))
        return reaction

    def _challenge_timeout(self, key, now: float) -> Reaction:
        st = self.state
        if st.challenged.pop(key, None) is None:
            return Reaction(Verdict.IGNORED)
        st.challenged_requests.pop(key, None)
        reaction = Reaction(Verdict.REJECTED, Reason.BAD_CHALLENGE)
        for packet in st.deferred.pop(key[:2], []):
            reaction.note('lost', cause='no_route', src=packet.src, dst=packet.dst, seq=packet.seq, at=now)
        return reaction

    # --------------------------------------------------------------- renewal

    def renewal_flow(self, dst: int, now: float) -> Reaction:
        """Source side: commit to a fresh chain u along the established route."""
        st = self.state
        pair = (self.id, dst)
        chain = st.snv_chains.get(pair)
        route = st.routes.lookup(dst, now)
        if chain is None or not self._usable(route) or pair in st.renewals:
            return Reaction(Verdict.IGNORED, Reason.NO_ROUTE)
        last_reply = chain.current_indices()[0] + 1
        n = self.params.snv_length
        sn = self._next_sn()
        fresh = build_snv_chain(self.oracle.shared_key(self.id, dst), sn, n, offset=1)
        proof = chain.value_at(last_reply - 1)
        ct = encrypt(proof, fresh.value_at(n))
        st.renewals[pair] = RenewalState(sn=sn, ciphertext=ct, chain=fresh, proof=proof)
        st.last_sn[pair] = sn
        commit = RenewalCommit(sender=self.id, receiver=route.next_hop, origin=self.id, target=dst, src=self.id,
                               dst=dst, sn=sn, upstream=False, ct=ct)
        reaction = Reaction(Verdict.ACCEPTED)
        self._send(reaction, commit, now)
        logger.debug('node %d renews the chain shared with %d (sn=%d)', self.id, dst, sn)
        return reaction

    def _renewal_at_destination(self, msg: RenewalCommit, now: float) -> Reaction:
        st = self.state
        pair = (msg.src, msg.dst)
        chain = st.snv_chains.get(pair)
        last_reply = st.reply_index.get(pair)
        if chain is None or last_reply is None or last_reply < 1:
            return Reaction(Verdict.REJECTED, Reason.BAD_RENEWAL)
        n = self.params.snv_length
        proof = chain.value_at(last_reply - 1)
        fresh = build_snv_chain(self.oracle.shared_key(msg.src, msg.dst), msg.sn, n, offset=1)
        u_n = fresh.value_at(n)
        if encrypt(proof, u_n) != msg.ct:
            return Reaction(Verdict.REJECTED, Reason.BAD_RENEWAL)
        st.snv_chains[pair] = fresh
        st.last_sn[pair] = msg.sn
        reaction = Reaction(Verdict.ACCEPTED)
        common = dict(sender=self.id, receiver=msg.sender, origin=self.id, target=msg.src, src=msg.src,
                      dst=msg.dst, sn=msg.sn, upstream=True)
        self._send(reaction, RenewalValue(u_n=u_n, **common), now)
        self._send(reaction, RenewalProof(proof=proof, **common), now)
        return reaction

    def _adopt_renewal(self, pair, msg: RenewalProof) -> bool:
        """Intermediate side: check F(proof) against the stored value and the committed ciphertext."""
        st = self.state
        renewal = st.renewals.pop(pair, None)
        rec = st.pair_chains.get(pair)
        if renewal is None or rec is None or renewal.sn != msg.sn or renewal.u_n is None:
            return False
        if hash_f(msg.proof) != rec.stored_v or encrypt(msg.proof, renewal.u_n) != renewal.ciphertext:
            return False
        rec.stored_v = renewal.u_n
        rec.stored_index = self.params.snv_length
        rec.sn = msg.sn
        rec.pending = False
        st.last_sn[pair] = max(st.last_sn.get(pair, msg.sn), msg.sn)
        return True

    def _renewal_at_source(self, msg: RenewalProof, now: float) -> Reaction:
        st = self.state
        pair = (msg.src, msg.dst)
        renewal = st.renewals.get(pair)
        if renewal is None or renewal.sn != msg.sn or msg.proof != renewal.proof:
            return Reaction(Verdict.REJECTED, Reason.BAD_RENEWAL)
        expected = renewal.chain.value_at(self.params.snv_length)
        if renewal.u_n is not None and renewal.u_n != expected:
            return Reaction(Verdict.REJECTED, Reason.BAD_RENEWAL)
        st.renewals.pop(pair)
        st.snv_chains[pair] = renewal.chain
        reaction = Reaction(Verdict.ACCEPTED)
        return reaction.note('renewal', node=self.id, src=msg.src, dst=msg.dst, adopted=True, at=now)

    # ---------------------------------------------------------------- alerts

    def on_alert(self, msg: Alert, now: float) -> Reaction:
        st = self.state
        if msg.sender not in st.neighbors.one_hop:
            return dropped(Reason.NOT_NEIGHBOR)
        if msg.target != self.id:
            if msg.target not in st.neighbors.one_hop:
                return dropped(Reason.NO_ROUTE)
            reaction = Reaction(Verdict.FORWARDED)
            self._send(reaction, replace(msg, sender=self.id, receiver=msg.target), now)
            return reaction
        if msg.accused == self.id or msg.accused in st.ledger.isolated:
            return Reaction(Verdict.IGNORED)
        if not verify_mac(self.oracle.shared_key(msg.guard, self.id), msg.core(), msg.e2e_mac):
            return Reaction(Verdict.REJECTED, Reason.BAD_E2E_MAC)
        if msg.guard not in st.neighbors.two_hop.get(msg.accused, ()):
            # only a neighbour of the accused can have watched it
            return Reaction(Verdict.REJECTED, Reason.UNVERIFIED)
        reaction = Reaction(Verdict.ACCEPTED)
        if st.ledger.add_alert(msg.accused, msg.guard):
            reaction.extend(self.isolate(msg.accused, now))
        return reaction

    def isolate(self, accused: int, now: float) -> Reaction:
        """Cut ``accused`` off: forget it as a neighbour, purge routes through it, refuse its traffic."""
        st = self.state
        st.ledger.isolated.add(accused)
        st.neighbors.remove(accused)
        st.broken_routes.update(st.routes.purge_via(accused))
        for dst, alternates in list(st.alternates.items()):
            st.alternates[dst] = [a for a in alternates if a.next_hop != accused]
        st.held.pop(accused, None)
        logger.info('node %d isolates %d at %.3f', self.id, accused, now)
        reaction = Reaction(Verdict.ACCEPTED)
        return reaction.note('isolated', node=self.id, accused=accused, at=now)


def setup_round(node: SrpsNode, neighbor_replies):
    """Trusted setup: absorb the HELLO replies of every neighbour and return the resulting table."""
    for reply in neighbor_replies:
        node.on_hello_reply(reply)
    return node.state.neighbors
