"""
One simulated run on a simpy event loop.

Nodes never see the loop: they hand back reactions, and the simulation turns
each ``Send`` into a radio transmission, each ``Schedule`` into a timer and
each ``Tunnel`` into a wormhole delivery. Every random draw comes from a
stream spawned off the run's seed, so a run replays exactly.
"""
import logging
from typing import Optional, Union

import numpy as np
import simpy

from adversary.injections import include, replay, spoof, sybil
from adversary.node import MaliciousNode, connect_colluders, node_factory
from adversary.profiles import Behavior, TunnelMode
from adversary.wormhole import build_links
from protocol_engine.actions import Reaction, Send, Tunnel, Verdict
from protocol_engine.counters import OpCounter
from protocol_engine.keys import KeyOracle
from protocol_engine.messages import RDP, Data
from protocol_engine.node import setup_round

from .medium import transmit
from .metrics import MetricsCollector, RunMetrics
from .topology import Topology, generate_topology
from .traffic import traffic_plan

logger = logging.getLogger('srps.simnet')

INJECTIONS = (Behavior.REPLAY, Behavior.SPOOF, Behavior.SYBIL, Behavior.INCLUDE)
SYBIL_IDENTITIES = 2


class Simulation:
    def __init__(self, config, seed: Union[int, np.random.SeedSequence], topology: Optional[Topology] = None):
        sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        topology_seq, medium_seq, traffic_seq, node_seq, adversary_seq = sequence.spawn(5)
        self.config = config
        self.topology = topology or generate_topology(config, np.random.default_rng(topology_seq))
        self.params = config.protocol_params()
        self.medium = config.medium_model()
        self.medium_rng = np.random.default_rng(medium_seq)
        self.traffic_seq = traffic_seq
        self.adversary_rng = np.random.default_rng(adversary_seq)
        self.env = simpy.Environment()
        self.collector = MetricsCollector(self.topology, config.horizon, config.srps)

        malicious = self.topology.malicious
        profiles = {m: config.adversary_profile(malicious) for m in malicious}
        oracle = KeyOracle(sequence.generate_state(4).tobytes())
        build = node_factory(profiles)
        ids = self.topology.nodes
        self.nodes = {
            node_id: build(node_id, self.params, oracle, np.random.default_rng(s), OpCounter())
            for node_id, s in zip(ids, node_seq.spawn(len(ids)))
        }
        self.links = []
        if any(p.has(Behavior.WORMHOLE) for p in profiles.values()):
            self.links = build_links(malicious, config.tunnel_mode, self._hop_count, self._hop_latency())
            connect_colluders(self.nodes, self.links)
        self.neighbors = {node_id: sorted(self.topology.neighbors(node_id)) for node_id in ids}

    def _hop_count(self, a: int, b: int) -> int:
        if self.config.tunnel_mode == TunnelMode.OUT_OF_BAND:
            return 1
        return self.topology.hops(a, b)

    def _hop_latency(self) -> float:
        return self.config.processing_delay + self.medium.transmission_delay(self.config.largest_frame())

    # ------------------------------------------------------------ setup

    def setup(self):
        """Trusted, collision-free HELLO exchange and neighbour lists, before time zero."""
        for node_id, node in self.nodes.items():
            hello = node.hello()
            setup_round(node, [reply for peer in self.neighbors[node_id]
                               for reply in self.nodes[peer].on_hello(hello).messages])
        for node_id, node in self.nodes.items():
            listing = node.neighbor_list()
            for peer in self.neighbors[node_id]:
                self.nodes[peer].on_neighbor_list(listing)
        return self

    # ---------------------------------------------------------- reactions

    def apply(self, node_id: int, reaction: Reaction) -> Reaction:
        now = self.env.now
        for event, details in reaction.notes:
            self.collector.observe(now, node_id, event, details)
        for action in reaction.actions:
            if isinstance(action, Send):
                self.env.process(self._transmit(node_id, action.message, action.after))
            elif isinstance(action, Tunnel):
                self.env.process(self._tunnel(action.peer, action.message, action.after))
            else:
                self.env.process(self._timer(node_id, action.timer, action.key, action.after))
        return reaction

    def _transmit(self, sender: int, msg, after: float):
        if after > 0:
            yield self.env.timeout(after)
        start = self.env.now
        deliveries, attempts = transmit(sender, msg, self.neighbors[sender], self.medium, self.medium_rng, start,
                                        receiver=msg.receiver)
        for at in sorted({d.at for d in deliveries}):
            if at > self.env.now:
                yield self.env.timeout(at - self.env.now)
            for delivery in deliveries:
                if delivery.at == at:
                    node = self.nodes[delivery.receiver]
                    self.apply(delivery.receiver, node.receive(msg, self.env.now))
        if isinstance(msg, Data) and msg.receiver is not None \
                and msg.receiver not in {d.receiver for d in deliveries}:
            yield self.env.timeout(max(0.0, start + attempts * self.medium.transmission_delay(msg.wire_size())
                                       - self.env.now))
            self.collector.observe(self.env.now, sender, 'lost', {
                'cause': 'collision', 'src': msg.src, 'dst': msg.dst, 'seq': msg.seq, 'at': self.env.now,
            })

    def _timer(self, node_id: int, timer, key, after: float):
        yield self.env.timeout(after)
        self.apply(node_id, self.nodes[node_id].on_timer(timer, key, self.env.now))

    def _tunnel(self, peer: int, msg, after: float):
        yield self.env.timeout(after)
        self.apply(peer, self.nodes[peer].receive_tunneled(msg, self.env.now))

    # ------------------------------------------------------------ traffic

    def _source(self, src: int, plan):
        for at, dst in plan:
            yield self.env.timeout(at - self.env.now)
            self.apply(src, self.nodes[src].originate_data(dst, self.env.now, self.config.data_size))

    def _injector(self, node: MaliciousNode):
        rng = self.adversary_rng
        honest = self.topology.honest
        interval = self.config.inject_interval
        fakes = []
        while len(fakes) < SYBIL_IDENTITIES:
            candidate = int(rng.integers(1, 2 ** 31))
            if candidate not in self.nodes and candidate not in fakes:
                fakes.append(candidate)
        yield self.env.timeout(interval * (1 + float(rng.random())))
        while True:
            now = self.env.now
            reaction = Reaction(Verdict.ACCEPTED)
            dst = honest[int(rng.integers(len(honest)))]
            if node.profile.has(Behavior.REPLAY):
                reaction.extend(replay(node, now))
            if node.profile.has(Behavior.SPOOF):
                victims = [n for n in self.neighbors[node.id] if n in honest and n != dst]
                if victims:
                    reaction.extend(spoof(node, victims[int(rng.integers(len(victims)))], dst, now))
            if node.profile.has(Behavior.SYBIL):
                reaction.extend(sybil(node, fakes, dst, now))
            if node.profile.has(Behavior.INCLUDE):
                overheard = [m for m in node.recorded if isinstance(m, RDP)]
                if overheard:
                    reaction.extend(include(node, overheard[-1], now))
            self.apply(node.id, reaction)
            yield self.env.timeout(interval)

    # --------------------------------------------------------------- run

    def start(self):
        honest = self.topology.honest
        model = self.config.traffic_model()
        for src, seq in zip(honest, self.traffic_seq.spawn(len(honest))):
            plan = traffic_plan(model, np.random.default_rng(seq), src, honest, self.config.horizon)
            if plan:
                self.env.process(self._source(src, plan))
        for node in self.nodes.values():
            if isinstance(node, MaliciousNode) and any(node.profile.has(b) for b in INJECTIONS):
                self.env.process(self._injector(node))
        return self

    def run(self) -> RunMetrics:
        self.setup().start()
        self.env.run(until=self.config.horizon)
        metrics = self.collector.finish()
        logger.info('run done: %d sent, %d delivered, %d malicious drops, %d/%d tunnelled routes, isolated %s',
                    metrics.packets_sent, metrics.delivered, metrics.malicious_drops, metrics.routes_malicious,
                    metrics.routes_total, sorted(metrics.isolation_latency))
        return metrics
