"""Memory, computation and communication costs of SRPS as the cost model counts them."""
from dataclasses import dataclass

from crypto_core.constants import FLAG_BYTES, ID_BYTES, KEY_BYTES, MAC_BYTES, SN_BYTES, SNV_BYTES
from protocol_engine.counters import Role
from protocol_engine.messages import RDP, RRP, KeyDisclosure

from .exceptions import DomainError

# bytes per neighbour, per SNV chain, per route table entry and per buffered entry
MEMORY_COEFFICIENTS = (12, 64, 12, 30)

COMPUTE_COST = {
    Role.SOURCE: (3, 2),
    Role.INTERMEDIATE: (2, 3),
    Role.DESTINATION: (5, 1),
}


@dataclass(frozen=True)
class CostParams:
    nn: int = 20
    lc: int = 10
    rte: int = 20
    nbe: int = 10
    id_b: int = ID_BYTES
    key_b: int = KEY_BYTES
    mac_b: int = MAC_BYTES
    sn_b: int = SN_BYTES
    snv_b: int = SNV_BYTES

    def __post_init__(self):
        for name in ('nn', 'lc', 'rte', 'nbe', 'id_b', 'key_b', 'mac_b', 'sn_b', 'snv_b'):
            if getattr(self, name) < 0:
                raise DomainError(f'{name} must be non-negative')


def memory_cost(params: CostParams) -> int:
    """Bytes a node needs for neighbours, SNV chains, routes and buffered entries."""
    counts = (params.nn, params.lc, params.rte, params.nbe)
    return sum(c * n for c, n in zip(MEMORY_COEFFICIENTS, counts))


@dataclass(frozen=True)
class PacketSize:
    name: str
    modelled: int
    engine: int
    note: str = ''

    @property
    def deviation(self) -> int:
        return self.engine - self.modelled


def _engine_sizes() -> dict:
    rdp = RDP(sender=0, src=0, dst=1, sn=1, snv_value=bytes(8), snv_index=2)
    rrp = RRP(sender=0, receiver=1, src=0, dst=1, sn=1, snv_value=bytes(8))
    return {
        'rdp': rdp.wire_size(),
        'key_disclosure': KeyDisclosure(sender=0, key=bytes(KEY_BYTES)).wire_size(),
        'rrp': rrp.wire_size(),
    }


def packet_sizes(params: CostParams = CostParams()) -> dict[str, PacketSize]:
    """Modelled packet layouts next to what the engine actually puts on the air."""
    p = params
    engine = _engine_sizes()
    return {
        'rdp': PacketSize('rdp', 3 * p.id_b + FLAG_BYTES + p.sn_b + p.snv_b + 2 * p.mac_b, engine['rdp'],
                          'engine carries the forwarder and its previous hop as separate IDs'),
        'key_disclosure': PacketSize('key_disclosure', p.id_b + p.key_b, engine['key_disclosure']),
        'rrp': PacketSize('rrp', 2 * p.id_b + p.mac_b, engine['rrp'],
                          'modelled as IDs plus RSN; engine adds SN, SNV, both MACs and hop IDs'),
    }


def compute_cost() -> dict[Role, tuple[int, int]]:
    """(MAC, hash) operations per role in one discovery."""
    return dict(COMPUTE_COST)


def communication_cost(route_hops: int, params: CostParams = CostParams()) -> dict[str, int]:
    """
    Bytes put on the air for one discovery along a route of ``route_hops`` hops.

    Every node that floods the request also broadcasts its key; every node on the
    reply path sends the reply and its key.
    """
    if route_hops < 1:
        raise DomainError('a route has at least one hop')
    sizes = packet_sizes(params)
    key = sizes['key_disclosure'].modelled
    per_request = sizes['rdp'].modelled + key
    per_reply = sizes['rrp'].modelled + key
    return {
        'source': per_request,
        'intermediate': per_request + per_reply,
        'destination': per_reply,
        'route_total': route_hops * per_request + route_hops * per_reply,
    }
