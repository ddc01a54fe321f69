"""
Scripted injections a compromised node can put on the medium.

Each returns the node's ``Reaction`` carrying the forged frames; the driver
delivers them like any other transmission. The node only ever uses what an
insider has: its own chain keys, overheard frames and random bytes. It never
holds another pair's shared key.
"""
import logging
from dataclasses import replace
from itertools import product
from typing import Iterable, Iterator, Optional

from crypto_core.constants import HASH_BYTES, MAC_BYTES

from protocol_engine.actions import Reaction, Verdict
from protocol_engine.messages import RDP, RRP, Message

from .node import MaliciousNode

logger = logging.getLogger('srps.adversary')


def replay(node: MaliciousNode, now: float, recorded: Optional[RDP] = None, as_self: bool = False) -> Reaction:
    """Put an overheard request back on the air, verbatim or re-signed under the node's own identity."""
    if recorded is None:
        if not node.recorded:
            return Reaction(Verdict.IGNORED)
        recorded = node.recorded[0]
    reaction = Reaction(Verdict.ACCEPTED)
    if as_self:
        frame = replace(recorded, sender=node.id, receiver=None, prev_hop=recorded.sender, nbr_mac=b'',
                        trail=recorded.trail + (node.id,))
        node._authenticated_send(reaction, frame, now)
    else:
        reaction.send(recorded, node.params.processing_delay)
    node.mark_attack(reaction, 'replay', now)
    logger.debug('node %d replays request sn=%d of %d', node.id, recorded.sn, recorded.src)
    return reaction


def _forged_request(node: MaliciousNode, identity: int, dst: int) -> RDP:
    rng = node.rng
    return RDP(sender=identity, src=identity, dst=dst, sn=int(rng.integers(1, 2 ** 31)),
               snv_value=rng.bytes(HASH_BYTES), snv_index=node.params.snv_length,
               e2e_mac=rng.bytes(MAC_BYTES), nbr_mac=rng.bytes(MAC_BYTES), trail=(node.id,))


def spoof(node: MaliciousNode, victim: int, dst: int, now: float) -> Reaction:
    """Broadcast a request that claims to come from ``victim``."""
    reaction = Reaction(Verdict.ACCEPTED)
    reaction.send(_forged_request(node, victim, dst), node.params.processing_delay)
    node.mark_attack(reaction, 'spoof', now)
    return reaction


def sybil(node: MaliciousNode, fake_ids: Iterable[int], dst: int, now: float) -> Reaction:
    """One forged request per invented identity."""
    reaction = Reaction(Verdict.ACCEPTED)
    for identity in fake_ids:
        reaction.send(_forged_request(node, identity, dst), node.params.processing_delay)
    node.mark_attack(reaction, 'sybil', now)
    return reaction


def include(node: MaliciousNode, frame: Message, now: float) -> Reaction:
    """Sign a forged request or reply with the node's own key and send it, trying to enter a route."""
    reaction = Reaction(Verdict.ACCEPTED)
    node._authenticated_send(reaction, replace(frame, sender=node.id, nbr_mac=b''), now)
    node.mark_attack(reaction, 'include', now)
    return reaction


def inclusion_frames(node: MaliciousNode, src: int, dst: int, sn: int, targets: Iterable[int],
                     overheard: Iterable[Message] = ()) -> Iterator[Message]:
    """
    The finite action set of an inclusion attacker against the route between ``src`` and ``dst``.

    Field values come from what the node overheard plus one random value each;
    sequence numbers cover the current request and the next one.
    """
    overheard = list(overheard)
    values = {m.snv_value for m in overheard if isinstance(m, (RDP, RRP))} | {node.rng.bytes(HASH_BYTES)}
    macs = {m.e2e_mac for m in overheard if isinstance(m, (RDP, RRP))} | {node.rng.bytes(MAC_BYTES)}
    indices = {m.snv_index for m in overheard if isinstance(m, RDP)} or {node.params.snv_length}
    claims = sorted({src, dst} | set(node.state.neighbors.one_hop)) + [None]
    values, macs = sorted(values), sorted(macs)

    for value, tag, number in product(values, macs, (sn, sn + 1)):
        for index in sorted(indices):
            for claim in claims:
                yield RDP(sender=node.id, src=src, dst=dst, sn=number, snv_value=value, snv_index=index,
                          e2e_mac=tag, prev_hop=claim, trail=(node.id,))
        for target in targets:
            for claim in claims:
                yield RRP(sender=node.id, receiver=target, src=src, dst=dst, sn=number, snv_value=value,
                          e2e_mac=tag, relay_to=claim, heard_from=claim, trail=(node.id,))
