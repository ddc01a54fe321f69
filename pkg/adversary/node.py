"""
A compromised node: a legitimate insider running SRPS with its own keys, plus
whatever its adversary profile scripts on top.

Nothing here reaches into another node. Influence flows through frames on the
medium and through ``Tunnel`` actions that whoever drives the nodes carries to
the far colluder, which picks them up in ``receive_tunneled``.
"""
import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional

from protocol_engine.actions import Reaction, Reason, Verdict, dropped
from protocol_engine.messages import RDP, RRP, Data, Message
from protocol_engine.node import SrpsNode
from protocol_engine.state import ExpiringMap
from protocol_engine.trace import trace

from .profiles import AdversaryProfile, Behavior, Claim
from .wormhole import WormholeLink, tunnel

logger = logging.getLogger('srps.adversary')

_RECORD_LIMIT = 256


@dataclass
class WormholeRound:
    """One request as seen by a wormhole endpoint."""
    ingress: bool
    partner: Optional[int] = None
    # ingress side: where the request came from, to route the reply back
    heard_from: Optional[int] = None
    prev_hop: Optional[int] = None
    reply_tunneled: bool = False


class MaliciousNode(SrpsNode):
    malicious = True

    def __init__(self, node_id: int, params=None, oracle=None, rng=None, counter=None,
                 profile: Optional[AdversaryProfile] = None):
        super().__init__(node_id, params, oracle, rng, counter)
        self.profile = profile or AdversaryProfile()
        self.links: dict[int, WormholeLink] = {}
        # (src, dst, sn) -> WormholeRound, for as long as a route could still use it
        self.wormhole_rounds = ExpiringMap(self.params.route_timeout)
        # destination -> colluder that holds the route onward
        self.tunnel_routes: dict[int, int] = {}
        self.recorded: deque = deque(maxlen=_RECORD_LIMIT)
        self.attack_started_at: Optional[float] = None
        self.data_dropped = 0

    def connect(self, link: WormholeLink):
        peer = link.other(self.id)
        if peer is not None:
            self.links[peer] = link

    def mark_attack(self, reaction: Reaction, kind: str, now: float):
        if self.attack_started_at is None:
            self.attack_started_at = now
            reaction.note('attack', node=self.id, kind=kind, at=now)
            logger.info('node %d starts a %s attack at %.3f', self.id, kind, now)

    @property
    def _tunnels_requests(self) -> bool:
        return self.profile.has(Behavior.WORMHOLE) and bool(self.links)

    def _claim(self, partner: int, exclude=()) -> int:
        """Previous hop to name for a packet that really came out of the tunnel."""
        if self.profile.claim == Claim.TRUTH:
            return partner
        candidates = sorted(n for n in self.state.neighbors.one_hop
                            if n not in self.profile.colluders and n not in exclude)
        if not candidates:
            return partner
        return candidates[int(self.rng.integers(len(candidates)))]

    # ------------------------------------------------------------- dispatch

    def receive(self, msg: Message, now: float) -> Reaction:
        if isinstance(msg, RDP) and msg.sender != self.id and msg.sender not in self.state.ledger.isolated:
            self.recorded.append(msg)
            if self._tunnels_requests and self.id not in (msg.src, msg.dst):
                return self._done(now, msg, self._tunnel_request(msg, now))
        return super().receive(msg, now)

    def receive_tunneled(self, msg: Message, now: float) -> Reaction:
        """A colluder pushed ``msg`` through a wormhole to this node."""
        if isinstance(msg, (RDP, RRP)):
            reaction = self.wormhole_relay(msg, now)
        elif isinstance(msg, Data):
            reaction = self._emerge_data(msg, now)
        else:
            reaction = Reaction(Verdict.IGNORED)
        trace(now, self.id, f'tunnel:{msg.kind.value}', reaction.verdict.value, reaction.reason)
        return reaction

    # ------------------------------------------------------------- wormhole

    def _tunnel_to(self, reaction: Reaction, msg: Message, peer: int):
        action = tunnel(msg, self.links[peer], self.id)
        if action is not None:
            reaction.tunnel(action.message, action.peer, action.after)

    def _tunnel_request(self, msg: RDP, now: float) -> Reaction:
        """Ingress: whisk a request heard on the radio to every colluder."""
        key = (msg.src, msg.dst, msg.sn)
        if key in self.wormhole_rounds:
            return dropped(Reason.DUPLICATE)
        ingress = WormholeRound(ingress=True, heard_from=msg.sender, prev_hop=msg.prev_hop)
        self.wormhole_rounds.put(key, ingress, now)
        reaction = Reaction(Verdict.FORWARDED)
        carried = replace(msg, sender=self.id, receiver=None, trail=msg.trail + (self.id,))
        for peer in sorted(self.links):
            self._tunnel_to(reaction, carried, peer)
        self.mark_attack(reaction, 'wormhole', now)
        return reaction

    def wormhole_relay(self, msg: Message, now: float) -> Reaction:
        """Re-emit a tunnelled request or reply as if the far colluder were a neighbour."""
        if isinstance(msg, RDP):
            return self._emerge_request(msg, now)
        return self._emerge_reply(msg, now)

    def _emerge_request(self, msg: RDP, now: float) -> Reaction:
        key = (msg.src, msg.dst, msg.sn)
        if key in self.wormhole_rounds:
            return dropped(Reason.DUPLICATE)
        partner = msg.sender
        self.wormhole_rounds.put(key, WormholeRound(ingress=False, partner=partner), now)
        self.tunnel_routes[msg.src] = partner
        forward = replace(msg, sender=self.id, receiver=None, prev_hop=self._claim(partner), nbr_mac=b'',
                          trail=msg.trail + (self.id,))
        reaction = Reaction(Verdict.FORWARDED)
        self._authenticated_send(reaction, forward, now)
        self.mark_attack(reaction, 'wormhole', now)
        logger.debug('node %d re-emits request %s claiming %s', self.id, key, forward.prev_hop)
        return reaction

    def on_rrp(self, msg: RRP, now: float) -> Reaction:
        w = self.wormhole_rounds.get((msg.src, msg.dst, msg.sn))
        if w is None or w.ingress:
            return super().on_rrp(msg, now)
        # egress: hand the reply back through the tunnel unverified
        if w.reply_tunneled:
            return dropped(Reason.DUPLICATE)
        w.reply_tunneled = True
        self.state.routes.install(msg.dst, msg.sender, msg.sn, now)
        reaction = Reaction(Verdict.FORWARDED)
        self._tunnel_to(reaction, replace(msg, sender=self.id, receiver=w.partner, trail=msg.trail + (self.id,)),
                        w.partner)
        return reaction

    def _emerge_reply(self, msg: RRP, now: float) -> Reaction:
        w = self.wormhole_rounds.get((msg.src, msg.dst, msg.sn))
        if w is None or not w.ingress:
            return Reaction(Verdict.IGNORED, Reason.NO_REQUEST)
        if w.reply_tunneled:
            return dropped(Reason.DUPLICATE)
        w.reply_tunneled = True
        partner = msg.sender
        self.tunnel_routes[msg.dst] = partner
        self.state.routes.install(msg.src, w.heard_from, msg.sn, now)
        forward = RRP(sender=self.id, receiver=w.heard_from, src=msg.src, dst=msg.dst, sn=msg.sn,
                      snv_value=msg.snv_value, e2e_mac=msg.e2e_mac, relay_to=w.prev_hop,
                      heard_from=self._claim(partner, exclude={w.heard_from}), trail=msg.trail + (self.id,))
        reaction = Reaction(Verdict.FORWARDED)
        self._authenticated_send(reaction, forward, now)
        return reaction

    # ---------------------------------------------------------------- rushing

    def on_rdp(self, msg: RDP, now: float) -> Reaction:
        if not self.profile.has(Behavior.RUSH) or self.id in (msg.src, msg.dst):
            return super().on_rdp(msg, now)
        key = (msg.src, msg.dst, msg.sn)
        round_ = self.state.rounds.get(key)
        if round_ is not None and round_.flushed:
            return dropped(Reason.DUPLICATE)
        # no neighbour authentication, no collect window
        reaction = self._accept_rdp(msg, now, skip_snv=True)
        reaction.extend(self.flush_request_buffer(key, now))
        reaction.verdict = Verdict.FORWARDED
        self.mark_attack(reaction, 'rush', now)
        return reaction

    def flush_request_buffer(self, key, now: float) -> Reaction:
        if not self.profile.drop_control:
            return super().flush_request_buffer(key, now)
        round_ = self.state.rounds.get(key)
        if round_ is None or round_.flushed:
            return Reaction(Verdict.IGNORED)
        round_.flushed = True
        reaction = dropped(Reason.ATTACK)
        self.mark_attack(reaction, 'drop_control', now)
        return reaction

    # ------------------------------------------------------------ data plane

    def _drops(self, msg: Data) -> bool:
        if self.profile.has(Behavior.DROP_DATA):
            return True
        if self.profile.has(Behavior.SELECTIVE):
            return bool(self.rng.random() < self.profile.selective_fraction)
        return False

    def drop_data(self, msg: Data, now: float) -> Reaction:
        self.data_dropped += 1
        reaction = dropped(Reason.ATTACK)
        self.mark_attack(reaction, 'drop_data', now)
        return reaction.note('lost', cause='malicious', node=self.id, src=msg.src, dst=msg.dst,
                             seq=msg.seq, at=now)

    def on_data(self, msg: Data, now: float) -> Reaction:
        if msg.dst == self.id:
            return super().on_data(msg, now)
        if self._drops(msg):
            return self.drop_data(msg, now)
        partner = self.tunnel_routes.get(msg.dst)
        if partner is not None and partner in self.links:
            reaction = Reaction(Verdict.FORWARDED)
            carried = replace(msg, sender=self.id, receiver=partner, prev_hop=msg.sender,
                              trail=msg.trail + (self.id,))
            self._tunnel_to(reaction, carried, partner)
            return reaction
        return super().on_data(msg, now)

    def _emerge_data(self, msg: Data, now: float) -> Reaction:
        if msg.dst == self.id:
            return super().on_data(msg, now)
        entry = self.state.routes.lookup(msg.dst, now, refresh=True)
        if not self._usable(entry):
            reaction = dropped(Reason.NO_ROUTE)
            return reaction.note('lost', cause='no_route', src=msg.src, dst=msg.dst, seq=msg.seq, at=now)
        forward = replace(msg, sender=self.id, receiver=entry.next_hop,
                          prev_hop=self._claim(msg.sender, exclude={entry.next_hop}), trail=msg.trail + (self.id,))
        reaction = Reaction(Verdict.FORWARDED)
        self._send(reaction, forward, now)
        return reaction


def node_factory(profiles: dict):
    """Build honest nodes, or compromised ones for the ids that carry a profile."""
    def build(node_id, *args, **kwargs):
        profile = profiles.get(node_id)
        if profile is None:
            return SrpsNode(node_id, *args, **kwargs)
        return MaliciousNode(node_id, *args, profile=profile, **kwargs)
    return build


def connect_colluders(nodes: dict, links):
    for link in links:
        for endpoint in link.endpoints:
            node = nodes.get(endpoint)
            if isinstance(node, MaliciousNode):
                node.connect(link)
