"""Per-node tables: neighbours, routes, pair chains, buffers and the accusation ledger."""
from collections import OrderedDict, defaultdict, deque
from dataclasses import dataclass, field
from typing import Optional

from crypto_core.chains import ChainState, SnvChain

from .messages import RDP, RRP, AccusationKind, Message, NodeId


@dataclass
class NeighborTable:
    one_hop: set = field(default_factory=set)
    two_hop: dict = field(default_factory=dict)
    commitments: dict = field(default_factory=dict)

    def add_neighbor(self, node_id: NodeId, commitment: Optional[bytes] = None):
        self.one_hop.add(node_id)
        if commitment is not None:
            self.commitments[node_id] = commitment

    def set_neighbor_list(self, node_id: NodeId, neighbors):
        if node_id in self.one_hop:
            self.two_hop[node_id] = set(neighbors)

    def knows_link(self, a: NodeId, b: NodeId) -> bool:
        """True when this node believes a and b are neighbours of each other."""
        return b in self.two_hop.get(a, ())

    def remove(self, node_id: NodeId):
        self.one_hop.discard(node_id)
        self.two_hop.pop(node_id, None)
        self.commitments.pop(node_id, None)
        for neighbors in self.two_hop.values():
            neighbors.discard(node_id)

    def check(self):
        assert set(self.commitments) <= self.one_hop
        assert set(self.two_hop) <= self.one_hop


@dataclass
class RouteEntry:
    next_hop: NodeId
    sn: int
    installed_at: float
    second_hop: Optional[NodeId] = None


class RoutingTable:
    """destination -> (next hop, SN); entries older than the route timeout are evicted lazily."""

    def __init__(self, timeout: float = float('inf')):
        self.timeout = timeout
        self.entries: dict[NodeId, RouteEntry] = {}

    def install(self, destination: NodeId, next_hop: NodeId, sn: int, now: float, second_hop=None):
        self.entries[destination] = RouteEntry(next_hop, sn, now, second_hop)

    def lookup(self, destination: NodeId, now: Optional[float] = None, refresh: bool = False) -> Optional[RouteEntry]:
        entry = self.entries.get(destination)
        if entry is None:
            return None
        if now is not None and now - entry.installed_at > self.timeout:
            del self.entries[destination]
            return None
        if refresh and now is not None:
            entry.installed_at = now
        return entry

    def remove(self, destination: NodeId):
        self.entries.pop(destination, None)

    def purge_via(self, node_id: NodeId) -> dict[NodeId, RouteEntry]:
        dropped = {dst: entry for dst, entry in self.entries.items() if entry.next_hop == node_id or dst == node_id}
        for dst in dropped:
            del self.entries[dst]
        return dropped

    def __contains__(self, destination):
        return destination in self.entries

    def __len__(self):
        return len(self.entries)


@dataclass
class PairChainRecord:
    peer_pair: tuple
    sn: int
    stored_v: bytes
    stored_index: int
    pending: bool = True
    # hops the request that set this record came through, for fake-route tracing
    heard_from: Optional[NodeId] = None
    second_hop: Optional[NodeId] = None
    reply_from: Optional[NodeId] = None


@dataclass
class RequestBufferEntry:
    rdp: RDP
    heard_from: NodeId
    second_hop: Optional[NodeId]
    received_at: float
    suppressed: bool = False


@dataclass
class DiscoveryRound:
    """A node's view of one request (src, dst, sn) while it collects, forwards and relays the reply."""
    src: NodeId
    dst: NodeId
    sn: int
    started_at: float
    entries: list = field(default_factory=list)
    flushed: bool = False
    chosen: Optional[RequestBufferEntry] = None
    # prev hops of announcements already forwarded by neighbours
    overheard_origins: set = field(default_factory=set)
    reply_forwarded: bool = False
    reply_from: Optional[NodeId] = None
    replies_sent: set = field(default_factory=set)
    pending_reply: Optional[RRP] = None

    @property
    def heard_from(self) -> Optional[NodeId]:
        return self.chosen.heard_from if self.chosen else None

    @property
    def second_hop(self) -> Optional[NodeId]:
        return self.chosen.second_hop if self.chosen else None


@dataclass
class WatchEntry:
    key: tuple
    content_digest: bytes
    expected_forwarder: Optional[NodeId]
    origin_hop: NodeId
    recorded_at: float
    deadline: float
    satisfied: bool = False
    receiver_is_final: bool = False


class WatchBuffer:
    """Bounded FIFO of overheard packets; the oldest entry is evicted at capacity."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: OrderedDict[int, WatchEntry] = OrderedDict()
        self._by_key: dict[tuple, list[int]] = defaultdict(list)
        self._next_id = 0

    def add(self, entry: WatchEntry) -> Optional[int]:
        if self.capacity <= 0:
            return None
        while len(self._entries) >= self.capacity:
            old_id, old = self._entries.popitem(last=False)
            self._unindex(old_id, old)
        entry_id = self._next_id
        self._next_id += 1
        self._entries[entry_id] = entry
        self._by_key[entry.key].append(entry_id)
        return entry_id

    def _unindex(self, entry_id, entry):
        ids = self._by_key.get(entry.key)
        if ids:
            ids.remove(entry_id)
            if not ids:
                del self._by_key[entry.key]

    def get(self, entry_id: int) -> Optional[WatchEntry]:
        return self._entries.get(entry_id)

    def pop(self, entry_id: int) -> Optional[WatchEntry]:
        entry = self._entries.pop(entry_id, None)
        if entry is not None:
            self._unindex(entry_id, entry)
        return entry

    def matching(self, key: tuple) -> list[WatchEntry]:
        return [self._entries[i] for i in self._by_key.get(key, ())]

    def find(self, key: tuple, origin_hop: NodeId) -> Optional[WatchEntry]:
        for entry in self.matching(key):
            if entry.origin_hop == origin_hop:
                return entry
        return None

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())


class ExpiringMap:
    """Insertion-ordered table whose entries lapse ``ttl`` seconds after they were last written."""

    def __init__(self, ttl: float):
        self.ttl = ttl
        self._items: OrderedDict = OrderedDict()

    def put(self, key, value, now: float):
        self._items[key] = (now, value)
        self._items.move_to_end(key)
        self.expire(now)

    def expire(self, now: float):
        while self._items:
            written, _ = next(iter(self._items.values()))
            if now - written <= self.ttl:
                break
            self._items.popitem(last=False)

    def get(self, key, default=None):
        item = self._items.get(key)
        return default if item is None else item[1]

    def written_at(self, key) -> Optional[float]:
        item = self._items.get(key)
        return None if item is None else item[0]

    def __contains__(self, key):
        return key in self._items

    def __len__(self):
        return len(self._items)


@dataclass
class Accusation:
    guard: NodeId
    accused: NodeId
    kind: AccusationKind
    at: float
    key: Optional[tuple] = None


class AccusationLedger:
    """Mal_C per neighbour over a sliding window, distinct alerting guards, and the isolated set.

    Events and history older than the window are dropped whenever a new accusation is recorded.
    """

    def __init__(self, beta: int, gamma: int, window: float):
        self.beta = beta
        self.gamma = gamma
        self.window = window
        self.events: dict[NodeId, deque] = defaultdict(deque)
        self.alerts_received: dict[NodeId, set] = defaultdict(set)
        self.alerted: set = set()
        self.isolated: set = set()
        self.history: deque[Accusation] = deque()

    def _lapsed(self, at: float, now: float) -> bool:
        return now - at > self.window

    def prune(self, now: float):
        while self.history and self._lapsed(self.history[0].at, now):
            self.history.popleft()
        for accused in list(self.events):
            events = self.events[accused]
            while events and self._lapsed(events[0], now):
                events.popleft()
            if not events:
                del self.events[accused]

    def mal_c(self, accused: NodeId, now: float) -> int:
        events = self.events.get(accused)
        if events is None:
            return 0
        while events and self._lapsed(events[0], now):
            events.popleft()
        return len(events)

    def record(self, accusation: Accusation) -> bool:
        """Count one malicious event; True when this crosses beta for the first time."""
        self.prune(accusation.at)
        self.history.append(accusation)
        self.events[accusation.accused].append(accusation.at)
        if accusation.accused in self.alerted:
            return False
        if self.mal_c(accusation.accused, accusation.at) >= self.beta:
            self.alerted.add(accusation.accused)
            return True
        return False

    def add_alert(self, accused: NodeId, guard: NodeId) -> bool:
        """Register an alerting guard; True when the accused has just been isolated."""
        if accused in self.isolated:
            return False
        self.alerts_received[accused].add(guard)
        if len(self.alerts_received[accused]) >= self.gamma:
            self.isolated.add(accused)
            return True
        return False


@dataclass
class PendingDiscovery:
    dst: NodeId
    sn: int
    started_at: float
    snv_request: bytes
    snv_reply: bytes
    first_reply_at: Optional[float] = None
    replies: list = field(default_factory=list)
    queued: list = field(default_factory=list)


@dataclass
class ReplyCandidate:
    arrived_at: float
    next_hop: NodeId
    sn: int
    second_hop: Optional[NodeId] = None
    trail: tuple = ()


@dataclass
class RenewalState:
    sn: int
    ciphertext: Optional[bytes] = None
    u_n: Optional[bytes] = None
    # source and destination side: the chain that replaces the exhausted one
    chain: Optional[SnvChain] = None
    proof: Optional[bytes] = None


@dataclass
class HeldPacket:
    message: Message
    received_at: float
    # sender commitment when the packet arrived
    commitment: Optional[bytes] = None


@dataclass
class NodeState:
    node_id: NodeId
    chain: ChainState
    neighbors: NeighborTable = field(default_factory=NeighborTable)
    routes: RoutingTable = field(default_factory=RoutingTable)
    alternates: dict = field(default_factory=dict)
    pair_chains: dict = field(default_factory=dict)
    snv_chains: dict = field(default_factory=dict)
    last_sn: dict = field(default_factory=dict)
    rounds: dict = field(default_factory=dict)
    pending: dict = field(default_factory=dict)
    held: dict = field(default_factory=lambda: defaultdict(list))
    # (sender, packet key) of held packets already released
    verified: ExpiringMap = field(default_factory=lambda: ExpiringMap(50.0))
    watch: WatchBuffer = field(default_factory=lambda: WatchBuffer(64))
    ledger: AccusationLedger = field(default_factory=lambda: AccusationLedger(5, 3, 200.0))
    reply_watch: ExpiringMap = field(default_factory=lambda: ExpiringMap(0.5))
    renewals: dict = field(default_factory=dict)
    suspects: set = field(default_factory=set)
    # destination side: reply index last used per pair
    reply_index: dict = field(default_factory=dict)
    # challenge bookkeeping
    challenge_return: ExpiringMap = field(default_factory=lambda: ExpiringMap(50.0))
    challenged: dict = field(default_factory=dict)
    challenged_requests: dict = field(default_factory=dict)
    verified_pairs: set = field(default_factory=set)
    deferred: dict = field(default_factory=dict)
    # maintenance bookkeeping
    broken_routes: dict = field(default_factory=dict)
    repairs: dict = field(default_factory=dict)
    repairs_pending: dict = field(default_factory=dict)
    errors_sent: ExpiringMap = field(default_factory=lambda: ExpiringMap(1.0))
    data_seq: int = 0
    sn_counter: int = 0
