"""
The radio medium: every frame collides at each receiver independently with
probability p_c, and nothing else goes wrong. No carrier sensing, no queues,
no capture.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional

import numpy as np

from analysis.coverage import linear_collision_probability

from .exceptions import ConfigurationError


class PcMode(str, Enum):
    FIXED = 'fixed'
    LINEAR = 'linear'


@dataclass(frozen=True)
class MediumModel:
    p_c: float = 0.01
    bandwidth: float = 40.0
    pc_mode: PcMode = PcMode.FIXED
    # LINEAR: p_c = base * nb / anchor_nb, capped
    pc_base: float = 0.05
    pc_anchor_nb: float = 3.0
    retries: int = 3

    def __post_init__(self):
        object.__setattr__(self, 'pc_mode', PcMode(self.pc_mode))
        if not 0.0 <= self.p_c < 1.0:
            raise ConfigurationError(f'collision probability {self.p_c} outside [0, 1)', key='medium.pc')
        if self.bandwidth <= 0:
            raise ConfigurationError(f'bandwidth must be positive, got {self.bandwidth}', key='bw_kbps')
        if self.retries < 0:
            raise ConfigurationError(f'retries must be non-negative, got {self.retries}', key='medium.retries')

    def at_density(self, nb: float) -> 'MediumModel':
        """Resolve the collision probability for a network with ``nb`` neighbours per node."""
        if self.pc_mode == PcMode.FIXED:
            return self
        p_c = linear_collision_probability(nb, self.pc_base, self.pc_anchor_nb)
        return MediumModel(p_c, self.bandwidth, PcMode.FIXED, retries=self.retries)

    def transmission_delay(self, size_bytes: int) -> float:
        return 8 * size_bytes / (self.bandwidth * 1000)


class Delivery(NamedTuple):
    receiver: int
    received: bool
    at: float
    attempt: int = 0


def deliver_broadcast(sender: int, msg, neighbors: Iterable[int], medium: MediumModel,
                      rng: np.random.Generator, now: float) -> list[Delivery]:
    """One transmission: each neighbour in range flips its own collision coin."""
    at = now + medium.transmission_delay(msg.wire_size())
    receivers = sorted(n for n in neighbors if n != sender)
    if not receivers:
        return []
    coins = rng.random(len(receivers))
    return [Delivery(n, bool(c >= medium.p_c), at) for n, c in zip(receivers, coins)]


def transmit(sender: int, msg, neighbors: Iterable[int], medium: MediumModel, rng: np.random.Generator,
             now: float, receiver: Optional[int] = None) -> tuple[list[Delivery], int]:
    """
    Send ``msg`` with link-layer retries when it is addressed to ``receiver``.

    Attempts repeat until the addressee gets the frame or the retry budget is
    spent. Every neighbour hears a frame at most once, on the first attempt its
    coin comes up. Returns the successful deliveries and the attempts used.
    """
    neighbors = sorted(n for n in neighbors if n != sender)
    if receiver is None or receiver not in neighbors:
        return [d for d in deliver_broadcast(sender, msg, neighbors, medium, rng, now) if d.received], 1

    tx = medium.transmission_delay(msg.wire_size())
    pending = list(neighbors)
    delivered = []
    for attempt in range(medium.retries + 1):
        coins = rng.random(len(pending))
        at = now + (attempt + 1) * tx
        heard = [n for n, c in zip(pending, coins) if c >= medium.p_c]
        delivered.extend(Delivery(n, True, at, attempt) for n in heard)
        pending = [n for n in pending if n not in heard]
        if receiver not in pending:
            return delivered, attempt + 1
    return delivered, medium.retries + 1
