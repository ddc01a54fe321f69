"""
A lossless, collision-free radio for driving nodes without the simulator.

Every frame reaches all neighbours of its sender at the instant it is sent,
and tunnelled frames reach the named colluder after the tunnel latency;
timers and delayed sends go through one time-ordered queue. Useful for tests
and for replaying protocol flows step by step.
"""
import heapq
from collections import defaultdict
from itertools import count
from typing import Callable, Optional

import numpy as np

from .actions import Reaction, Send, Tunnel
from .counters import OpCounter
from .keys import KeyOracle
from .node import SrpsNode, setup_round
from .params import ProtocolParams


class Wire:
    def __init__(self, edges, params: Optional[ProtocolParams] = None, nodes=(), node_factory: Callable = SrpsNode,
                 secret: bytes = b'test', seed: int = 0):
        self.adjacency = defaultdict(set)
        for a, b in edges:
            self.adjacency[a].add(b)
            self.adjacency[b].add(a)
        for node_id in nodes:
            self.adjacency.setdefault(node_id, set())
        self.params = params or ProtocolParams()
        self.oracle = KeyOracle(secret)
        self.nodes = {
            node_id: node_factory(node_id, self.params, self.oracle, np.random.default_rng(seed + node_id), OpCounter())
            for node_id in sorted(self.adjacency)
        }
        self.now = 0.0
        self.sent = []
        self.notes = []
        self.tunneled = []
        # (frame, receiver) -> frame to deliver, or None to lose it
        self.tamper: Optional[Callable] = None
        self._queue = []
        self._seq = count()

    def setup(self):
        """HELLO exchange followed by neighbour lists."""
        for node in self.nodes.values():
            hello = node.hello()
            setup_round(node, [reply for peer in sorted(self.adjacency[node.id])
                               for reply in self.nodes[peer].on_hello(hello).messages])
        for node in self.nodes.values():
            listing = node.neighbor_list()
            for peer in sorted(self.adjacency[node.id]):
                self.nodes[peer].on_neighbor_list(listing)
        return self

    def apply(self, node_id: int, reaction: Reaction) -> Reaction:
        for event, details in reaction.notes:
            self.notes.append((self.now, node_id, event, details))
        for action in reaction.actions:
            if isinstance(action, Send):
                self._push(self.now + action.after, 'frame', node_id, action.message)
            elif isinstance(action, Tunnel):
                self._push(self.now + action.after, 'tunnel', action.peer, action.message)
            else:
                self._push(self.now + action.after, 'timer', node_id, (action.timer, action.key))
        return reaction

    def _push(self, at: float, kind: str, node_id: int, payload):
        heapq.heappush(self._queue, (at, next(self._seq), kind, node_id, payload))

    def discover(self, src: int, dst: int) -> Reaction:
        return self.apply(src, self.nodes[src].request_route(dst, self.now))

    def originate(self, src: int, dst: int, payload_size: int = 32) -> Reaction:
        return self.apply(src, self.nodes[src].originate_data(dst, self.now, payload_size))

    def run(self, until: Optional[float] = None):
        while self._queue:
            at, _, kind, node_id, payload = self._queue[0]
            if until is not None and at > until:
                break
            heapq.heappop(self._queue)
            self.now = at
            if kind == 'timer':
                timer, key = payload
                self.apply(node_id, self.nodes[node_id].on_timer(timer, key, at))
            elif kind == 'tunnel':
                self.tunneled.append((at, node_id, payload))
                self.apply(node_id, self.nodes[node_id].receive_tunneled(payload, at))
            else:
                self._deliver(node_id, payload)
        if until is not None:
            self.now = max(self.now, until)
        return self

    def _deliver(self, sender: int, msg):
        self.sent.append((self.now, sender, msg))
        for peer in sorted(self.adjacency[sender]):
            frame = self.tamper(msg, peer) if self.tamper else msg
            if frame is not None:
                self.apply(peer, self.nodes[peer].receive(frame, self.now))

    def events(self, name: str, node: Optional[int] = None) -> list:
        return [details for _, at_node, event, details in self.notes
                if event == name and (node is None or at_node == node)]

    def frames(self, kind) -> list:
        return [msg for _, _, msg in self.sent if isinstance(msg, kind)]
