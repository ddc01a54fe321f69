"""
Tunnels between colluding nodes.

An out-of-band tunnel delivers instantly; an encapsulated one costs the
colluders' multi-hop route, one hop latency per hop.
"""
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional

from protocol_engine.actions import Tunnel
from protocol_engine.messages import Message

from .profiles import TunnelMode


@dataclass
class WormholeLink:
    endpoint_a: int
    endpoint_b: int
    mode: TunnelMode = TunnelMode.OUT_OF_BAND
    hops: int = 1
    hop_latency: float = 0.0
    established: bool = True

    @property
    def latency(self) -> float:
        if self.mode == TunnelMode.OUT_OF_BAND:
            return 0.0
        return self.hops * self.hop_latency

    @property
    def endpoints(self) -> tuple[int, int]:
        return self.endpoint_a, self.endpoint_b

    def other(self, node_id: int) -> Optional[int]:
        if node_id == self.endpoint_a:
            return self.endpoint_b
        if node_id == self.endpoint_b:
            return self.endpoint_a
        return None


def build_links(colluders, mode: TunnelMode = TunnelMode.OUT_OF_BAND,
                hop_count: Optional[Callable[[int, int], int]] = None, hop_latency: float = 0.0) -> list[WormholeLink]:
    """Every colluder reaches every other one."""
    links = []
    for a, b in combinations(sorted(colluders), 2):
        hops = hop_count(a, b) if hop_count is not None else 1
        links.append(WormholeLink(a, b, mode, hops, hop_latency))
    return links


def tunnel(msg: Message, link: WormholeLink, sender: int) -> Optional[Tunnel]:
    """Carry ``msg`` to the far end of ``link``; a sender that is not an endpoint gets nothing."""
    peer = link.other(sender)
    if peer is None or not link.established:
        return None
    return Tunnel(msg, peer, link.latency)
