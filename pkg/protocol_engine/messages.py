"""
Wire messages exchanged by SRPS nodes.

Every frame carries ``sender`` (the transmitting node) and, for unicast
frames, ``receiver``. Radio frames are always heard by every neighbour in
range; ``receiver`` only names who must act on it. ``trail`` is simulator
bookkeeping (the hops a packet really traversed) and is excluded from MACs,
digests and wire sizes.
"""
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Optional

from crypto_core.constants import (
    FLAG_BYTES, HASH_BYTES, ID_BYTES, KEY_BYTES, MAC_BYTES, SN_BYTES, SNV_BYTES,
)
from crypto_core.primitives import encode_id, encode_sn, hash_f

NodeId = int

REQ = b'\x01'
REP = b'\x02'
ALR = b'\x03'


class MessageKind(str, Enum):
    HELLO = 'hello'
    HELLO_REPLY = 'hello_reply'
    NEIGHBOR_LIST = 'neighbor_list'
    KEY_DISCLOSURE = 'key_disclosure'
    COMMITMENT_ROLLOVER = 'commitment_rollover'
    RDP = 'rdp'
    RRP = 'rrp'
    CHALLENGE = 'challenge'
    CHALLENGE_RESPONSE = 'challenge_response'
    FAKE_ROUTE_REPORT = 'fake_route_report'
    RENEWAL_COMMIT = 'renewal_commit'
    RENEWAL_VALUE = 'renewal_value'
    RENEWAL_PROOF = 'renewal_proof'
    ROUTE_ERROR = 'route_error'
    REPAIR_REQUEST = 'repair_request'
    ROUTE_UPDATE = 'route_update'
    ALERT = 'alert'
    DATA = 'data'


class AccusationKind(str, Enum):
    DROP = 'drop'
    CHANGE = 'change'
    FABRICATE = 'fabricate'
    DUPLICATE_REPLY = 'duplicate_reply'


def _opt_id(node_id: Optional[NodeId]) -> bytes:
    return encode_id(node_id) if node_id is not None else b'\xff' * ID_BYTES


@dataclass(frozen=True, kw_only=True)
class Message:
    kind: ClassVar[MessageKind]
    sender: NodeId
    receiver: Optional[NodeId] = None
    trail: tuple = field(default=(), compare=False, repr=False)

    @property
    def is_broadcast(self) -> bool:
        return self.receiver is None

    def wire_size(self) -> int:
        return FLAG_BYTES + 2 * ID_BYTES


@dataclass(frozen=True, kw_only=True)
class Hello(Message):
    kind = MessageKind.HELLO
    commitment: bytes

    def wire_size(self):
        return FLAG_BYTES + ID_BYTES + HASH_BYTES


@dataclass(frozen=True, kw_only=True)
class HelloReply(Message):
    kind = MessageKind.HELLO_REPLY
    commitment: bytes

    def wire_size(self):
        return FLAG_BYTES + 2 * ID_BYTES + HASH_BYTES


@dataclass(frozen=True, kw_only=True)
class NeighborList(Message):
    kind = MessageKind.NEIGHBOR_LIST
    neighbors: frozenset

    def wire_size(self):
        return FLAG_BYTES + ID_BYTES * (1 + len(self.neighbors))


@dataclass(frozen=True, kw_only=True)
class KeyDisclosure(Message):
    kind = MessageKind.KEY_DISCLOSURE
    key: bytes

    def wire_size(self):
        # sender ID + key
        return ID_BYTES + KEY_BYTES


@dataclass(frozen=True, kw_only=True)
class CommitmentRollover(Message):
    kind = MessageKind.COMMITMENT_ROLLOVER
    new_commitment: bytes
    nbr_mac: bytes = b''

    def auth_payload(self) -> bytes:
        return b'ROLL' + encode_id(self.sender) + self.new_commitment

    def wire_size(self):
        return FLAG_BYTES + ID_BYTES + HASH_BYTES + MAC_BYTES


@dataclass(frozen=True, kw_only=True)
class RDP(Message):
    """Route discovery packet: REQ | src | dst | SN | SNV, end-to-end and neighbourhood MACs."""
    kind = MessageKind.RDP
    src: NodeId
    dst: NodeId
    sn: int
    snv_value: bytes
    snv_index: int
    e2e_mac: bytes = b''
    prev_hop: Optional[NodeId] = None
    nbr_mac: bytes = b''

    @property
    def forwarder(self) -> NodeId:
        return self.sender

    def core(self) -> bytes:
        return (REQ + encode_id(self.src) + encode_id(self.dst) + encode_sn(self.sn)
                + self.snv_value + struct.pack('>H', self.snv_index))

    def auth_payload(self) -> bytes:
        return self.core() + self.e2e_mac + encode_id(self.sender) + _opt_id(self.prev_hop)

    def content_digest(self) -> bytes:
        return hash_f(self.core() + self.e2e_mac)

    def wire_size(self):
        # forwarder and heard-from IDs both travel; the cost model counts one of them
        return FLAG_BYTES + 4 * ID_BYTES + SN_BYTES + SNV_BYTES + 2 * MAC_BYTES


@dataclass(frozen=True, kw_only=True)
class RRP(Message):
    """Route reply packet: REP | src | dst | SN | SNV, unicast hop by hop back to the source."""
    kind = MessageKind.RRP
    src: NodeId
    dst: NodeId
    sn: int
    snv_value: bytes
    e2e_mac: bytes = b''
    relay_to: Optional[NodeId] = None
    heard_from: Optional[NodeId] = None
    nbr_mac: bytes = b''

    @property
    def forwarder(self) -> NodeId:
        return self.sender

    def core(self) -> bytes:
        return REP + encode_id(self.src) + encode_id(self.dst) + encode_sn(self.sn) + self.snv_value

    def auth_payload(self) -> bytes:
        return (self.core() + self.e2e_mac + encode_id(self.sender) + _opt_id(self.receiver)
                + _opt_id(self.relay_to) + _opt_id(self.heard_from))

    def content_digest(self) -> bytes:
        return hash_f(self.core() + self.e2e_mac)

    def wire_size(self):
        return FLAG_BYTES + 6 * ID_BYTES + SN_BYTES + SNV_BYTES + 2 * MAC_BYTES


@dataclass(frozen=True, kw_only=True)
class RoutedControl(Message):
    """
    Control message travelling hop by hop along the discovery state of (src, dst, sn).

    ``upstream`` messages head toward the source, the others toward the destination.
    """
    origin: NodeId
    target: NodeId
    src: NodeId
    dst: NodeId
    sn: int
    upstream: bool

    def wire_size(self):
        return FLAG_BYTES + 6 * ID_BYTES + SN_BYTES


@dataclass(frozen=True, kw_only=True)
class Challenge(RoutedControl):
    kind = MessageKind.CHALLENGE
    ct: bytes

    def wire_size(self):
        return super().wire_size() + len(self.ct)


@dataclass(frozen=True, kw_only=True)
class ChallengeResponse(RoutedControl):
    kind = MessageKind.CHALLENGE_RESPONSE
    ct: bytes

    def wire_size(self):
        return super().wire_size() + len(self.ct)


@dataclass(frozen=True, kw_only=True)
class FakeRouteReport(RoutedControl):
    kind = MessageKind.FAKE_ROUTE_REPORT
    hops: tuple

    def wire_size(self):
        return super().wire_size() + ID_BYTES * len(self.hops)


@dataclass(frozen=True, kw_only=True)
class RenewalCommit(RoutedControl):
    kind = MessageKind.RENEWAL_COMMIT
    ct: bytes

    def wire_size(self):
        return super().wire_size() + len(self.ct)


@dataclass(frozen=True, kw_only=True)
class RenewalValue(RoutedControl):
    kind = MessageKind.RENEWAL_VALUE
    u_n: bytes

    def wire_size(self):
        return super().wire_size() + HASH_BYTES


@dataclass(frozen=True, kw_only=True)
class RenewalProof(RoutedControl):
    kind = MessageKind.RENEWAL_PROOF
    proof: bytes

    def wire_size(self):
        return super().wire_size() + HASH_BYTES


@dataclass(frozen=True, kw_only=True)
class RouteError(RoutedControl):
    kind = MessageKind.ROUTE_ERROR
    broken_link: tuple
    second_hop: Optional[NodeId] = None


@dataclass(frozen=True, kw_only=True)
class RepairRequest(RoutedControl):
    kind = MessageKind.REPAIR_REQUEST
    faulty: NodeId
    bypass_to: Optional[NodeId] = None


@dataclass(frozen=True, kw_only=True)
class RouteUpdate(RoutedControl):
    kind = MessageKind.ROUTE_UPDATE


@dataclass(frozen=True, kw_only=True)
class Alert(Message):
    kind = MessageKind.ALERT
    guard: NodeId
    accused: NodeId
    accusation: AccusationKind
    target: NodeId
    # under the key the guard shares with the target; relays cannot alter or forge it
    e2e_mac: bytes = b''

    def core(self) -> bytes:
        return (ALR + encode_id(self.guard) + encode_id(self.accused) + encode_id(self.target)
                + self.accusation.value.encode())

    def wire_size(self):
        return 2 * FLAG_BYTES + 5 * ID_BYTES + MAC_BYTES


@dataclass(frozen=True, kw_only=True)
class Data(Message):
    kind = MessageKind.DATA
    src: NodeId
    dst: NodeId
    seq: int
    payload_size: int
    prev_hop: Optional[NodeId] = None
    created_at: float = field(default=0.0, compare=False)

    def content_digest(self) -> bytes:
        return hash_f(b'DATA' + encode_id(self.src) + encode_id(self.dst)
                      + encode_sn(self.seq) + struct.pack('>H', self.payload_size))

    def wire_size(self):
        return self.payload_size


def packet_key(msg: Message) -> Optional[tuple]:
    """Identity of a forwarded packet as tracked in watch buffers."""
    if isinstance(msg, RDP):
        return (MessageKind.RDP, msg.src, msg.dst, msg.sn)
    if isinstance(msg, RRP):
        return (MessageKind.RRP, msg.src, msg.dst, msg.sn)
    if isinstance(msg, Data):
        return (MessageKind.DATA, msg.src, msg.dst, msg.seq)
    return None


def claimed_origin(msg: Message) -> Optional[NodeId]:
    """The hop a forwarder claims it received ``msg`` from."""
    if isinstance(msg, (RDP, Data)):
        return msg.prev_hop
    if isinstance(msg, RRP):
        return msg.heard_from
    return None
