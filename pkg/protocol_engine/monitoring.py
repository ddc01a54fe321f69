"""
Local monitoring by guards.

A node overhearing a unicast from X to A, while being a neighbour of both,
is a guard of the link X->A. It time-stamps the packet in its watch buffer
and expects A to forward it before the deadline, unchanged and claiming X as
its previous hop. A forward that claims a previous hop the guard knows never
sent the packet is a fabrication.
"""
import logging
from collections import OrderedDict
from dataclasses import replace
from typing import Optional

from crypto_core.primitives import mac

from .actions import Reaction, TimerKind, Verdict
from .messages import RRP, Alert, Data, Message, claimed_origin, packet_key
from .state import Accusation, AccusationKind, WatchEntry

logger = logging.getLogger('srps.engine')

_FORWARD_LOG_SIZE = 1024


def sign_alert(oracle, alert: Alert) -> Alert:
    return replace(alert, e2e_mac=mac(oracle.shared_key(alert.guard, alert.target), alert.core()))


class NeighborWatch:
    """Guard duties of one node: watch buffer upkeep, accusations and alerts."""

    def __init__(self, node):
        self.node = node
        # (forwarder, packet key) -> time heard, for packets a neighbour already passed on
        self._forwarded: OrderedDict = OrderedDict()

    @property
    def state(self):
        return self.node.state

    @property
    def params(self):
        return self.node.params

    def _watched(self, msg: Message) -> bool:
        if isinstance(msg, Data):
            return self.params.monitor_data
        return packet_key(msg) is not None

    def _is_final_hop(self, msg: Message) -> bool:
        if isinstance(msg, RRP):
            return msg.receiver == msg.src
        if isinstance(msg, Data):
            return msg.receiver == msg.dst
        return True

    def observe(self, msg: Message, now: float) -> Optional[Reaction]:
        """Run every guard check for a frame heard from a neighbour."""
        if not self._watched(msg) or msg.sender not in self.state.neighbors.one_hop:
            return None
        reaction = Reaction(Verdict.IGNORED)
        key = packet_key(msg)
        for kind in self.watch_check(msg, now):
            self.accuse(msg.sender, kind, now, key, reaction)
        if isinstance(msg, RRP) and self.duplicate_reply_watch(msg, now):
            self.accuse(msg.sender, AccusationKind.DUPLICATE_REPLY, now, key, reaction)
        self.watch_record(msg, now, reaction)
        return reaction

    def record_own(self, msg: Message, sent_at: float, reaction: Reaction):
        """A sender guards its own link to the next hop."""
        if self._watched(msg):
            self.watch_record(msg, sent_at, reaction, own=True)

    def watch_record(self, msg: Message, now: float, reaction: Optional[Reaction] = None,
                     own: bool = False) -> Optional[WatchEntry]:
        me = self.node.id
        one_hop = self.state.neighbors.one_hop
        sender, receiver = msg.sender, msg.receiver
        if not own and sender not in one_hop:
            return None
        key = packet_key(msg)
        if self.state.watch.find(key, sender) is not None:
            # link-layer retransmission of a packet already on record
            return None

        expected = None
        if receiver is not None:
            if receiver == me or receiver not in one_hop:
                return None
            if not self._is_final_hop(msg) and receiver not in self.state.ledger.isolated:
                expected = receiver

        satisfied = expected is None or (expected, key) in self._forwarded
        entry = WatchEntry(
            key=key,
            content_digest=msg.content_digest(),
            expected_forwarder=expected,
            origin_hop=sender,
            recorded_at=now,
            deadline=now + self.params.forward_threshold,
            satisfied=satisfied,
            receiver_is_final=receiver is not None and expected is None,
        )
        entry_id = self.state.watch.add(entry)
        if entry_id is not None and not satisfied and reaction is not None:
            reaction.schedule(entry.deadline - now, TimerKind.WATCH_DEADLINE, entry_id)
        return entry

    def watch_check(self, msg: Message, now: float) -> list[AccusationKind]:
        """Judge a forward by ``msg.sender`` against what this guard recorded."""
        forwarder = msg.sender
        key = packet_key(msg)
        digest = msg.content_digest()
        found = []

        self._forwarded[(forwarder, key)] = now
        self._forwarded.move_to_end((forwarder, key))
        while len(self._forwarded) > _FORWARD_LOG_SIZE:
            self._forwarded.popitem(last=False)

        for entry in self.state.watch.matching(key):
            if entry.expected_forwarder == forwarder and not entry.satisfied:
                entry.satisfied = True
                if entry.content_digest != digest:
                    found.append(AccusationKind.CHANGE)

        origin = claimed_origin(msg)
        if origin is not None and origin != forwarder and self._observes_link(origin, forwarder):
            if self.state.watch.find(key, origin) is None:
                found.append(AccusationKind.FABRICATE)
        return found

    def _observes_link(self, a, b) -> bool:
        me = self.node.id
        one_hop = self.state.neighbors.one_hop
        return (a == me or a in one_hop) and (b == me or b in one_hop)

    def duplicate_reply_watch(self, msg: RRP, now: float) -> bool:
        """True when ``msg.sender`` forwards a second, different reply for the same request within tau."""
        if msg.sender == msg.dst:
            return False
        ident = (msg.sender, msg.src, msg.dst, msg.sn)
        signature = (msg.receiver, msg.heard_from)
        seen = self.state.reply_watch.get(ident)
        if seen is not None and now - seen[0] <= self.params.tau:
            if seen[1] == signature:
                return False
            self._purge_pair_routes(msg.sender, msg.src, msg.dst)
            return True
        self.state.reply_watch.put(ident, (now, signature), now)
        return False

    def _purge_pair_routes(self, via, src, dst):
        routes = self.state.routes
        for endpoint in (src, dst):
            entry = routes.lookup(endpoint)
            if entry is not None and entry.next_hop == via:
                routes.remove(endpoint)

    def on_deadline(self, entry_id: int, now: float) -> Reaction:
        entry = self.state.watch.pop(entry_id)
        reaction = Reaction(Verdict.IGNORED)
        if entry is None or entry.satisfied or entry.expected_forwarder is None:
            return reaction
        if (entry.expected_forwarder, entry.key) in self._forwarded:
            return reaction
        if entry.expected_forwarder in self.state.ledger.isolated:
            return reaction
        self.accuse(entry.expected_forwarder, AccusationKind.DROP, now, entry.key, reaction)
        return reaction

    def accuse(self, accused, kind: AccusationKind, now: float, key, reaction: Reaction):
        ledger = self.state.ledger
        if accused in ledger.isolated or accused == self.node.id:
            return
        crossed = ledger.record(Accusation(self.node.id, accused, kind, now, key))
        reaction.note('accusation', guard=self.node.id, accused=accused, kind=kind.value, at=now)
        logger.debug('node %d accuses %d of %s at %.3f', self.node.id, accused, kind.value, now)
        if crossed:
            self.raise_alert(accused, kind, now, reaction)

    def raise_alert(self, accused, kind: AccusationKind, now: float, reaction: Reaction):
        """Inform every neighbour of the accused through unicasts; this guard's own alert counts too."""
        me = self.node.id
        nbrs = self.state.neighbors
        reaction.note('alert', guard=me, accused=accused, at=now)
        logger.info('node %d alerts the neighbourhood of %d (%s)', me, accused, kind.value)

        targets = sorted(nbrs.two_hop.get(accused, set()) - {me, accused})
        for target in targets:
            if target in nbrs.one_hop:
                relay = target
            else:
                relay = next(
                    (r for r in sorted(nbrs.one_hop)
                     if r != accused and r not in self.state.ledger.isolated
                     and target in nbrs.two_hop.get(r, ())),
                    None,
                )
                if relay is None:
                    continue
            alert = Alert(sender=me, receiver=relay, guard=me, accused=accused, accusation=kind, target=target)
            reaction.send(sign_alert(self.node.oracle, alert), self.params.processing_delay)

        if self.state.ledger.add_alert(accused, me):
            reaction.extend(self.node.isolate(accused, now))
