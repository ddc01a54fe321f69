"""
Random sensor fields: uniform placement on a square sized for the target
neighbour count, unit-disk links, colluders kept more than two hops apart.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np

from crypto_core.primitives import node_id_from_hardware

from .exceptions import ConfigurationError, TopologyError

logger = logging.getLogger('srps.simnet')

# colluders must be at least this many hops apart
MIN_COLLUDER_HOPS = 3


@dataclass
class Topology:
    positions: dict
    range_r: float
    density_d: float
    field_side: float
    malicious: tuple = ()
    graph: Optional[nx.Graph] = field(default=None, repr=False)

    def __post_init__(self):
        if self.graph is None:
            self.graph = nx.random_geometric_graph(sorted(self.positions), self.range_r, pos=self.positions)
        self.malicious = tuple(sorted(self.malicious))

    @property
    def nodes(self) -> list:
        return sorted(self.graph.nodes)

    @property
    def honest(self) -> list:
        bad = set(self.malicious)
        return [n for n in self.nodes if n not in bad]

    def neighbors(self, node) -> set:
        return set(self.graph.neighbors(node))

    def hops(self, a, b) -> int:
        return nx.shortest_path_length(self.graph, a, b)

    def mean_degree(self) -> float:
        return 2 * self.graph.number_of_edges() / self.graph.number_of_nodes()

    def is_interior(self, node) -> bool:
        x, y = self.positions[node]
        r, side = self.range_r, self.field_side
        return r <= x <= side - r and r <= y <= side - r


def node_ids(n: int, hardware: bool = False) -> list[int]:
    if not hardware:
        return list(range(n))
    ids = [node_id_from_hardware(b'\x02\x00' + i.to_bytes(4, 'big')) for i in range(n)]
    if len(set(ids)) != n:
        raise ConfigurationError('hardware-derived IDs collide', key='hw_ids')
    return ids


def place_malicious(graph: nx.Graph, m: int, rng: np.random.Generator) -> Optional[tuple]:
    """Greedy random choice of ``m`` nodes pairwise more than two hops apart, or None."""
    if m == 0:
        return ()
    chosen = []
    blocked = set()
    order = sorted(graph.nodes)
    for index in rng.permutation(len(order)):
        node = order[int(index)]
        if node in blocked:
            continue
        chosen.append(node)
        if len(chosen) == m:
            return tuple(sorted(chosen))
        blocked.update(nx.single_source_shortest_path_length(graph, node, cutoff=MIN_COLLUDER_HOPS - 1))
    return None


def generate_topology(config, rng: np.random.Generator) -> Topology:
    """Place ``config.n_nodes`` nodes until the field is connected and the colluders fit."""
    side = config.field_side
    ids = node_ids(config.n_nodes, config.hw_ids)
    for attempt in range(1, config.topology_retries + 1):
        coords = rng.uniform(0.0, side, size=(len(ids), 2))
        positions = {node: (float(x), float(y)) for node, (x, y) in zip(ids, coords)}
        graph = nx.random_geometric_graph(ids, config.range_r, pos=positions)
        if not nx.is_connected(graph):
            continue
        malicious = place_malicious(graph, config.m_malicious, rng)
        if malicious is None:
            continue
        topology = Topology(positions, config.range_r, config.density, side, malicious, graph)
        logger.info('topology after %d attempt(s): %d nodes, side %.1f m, mean degree %.2f, malicious %s',
                    attempt, len(ids), side, topology.mean_degree(), list(malicious))
        return topology
    raise TopologyError(
        f'no connected placement of {config.n_nodes} nodes with {config.m_malicious} colluders '
        f'{MIN_COLLUDER_HOPS}+ hops apart in {config.topology_retries} attempts',
        key='m',
    )


def guard_census(topology: Topology) -> np.ndarray:
    """Common neighbours of every link whose endpoints both lie at least one range from the border."""
    counts = []
    for a, b in sorted(topology.graph.edges):
        if topology.is_interior(a) and topology.is_interior(b):
            counts.append(len(set(nx.common_neighbors(topology.graph, a, b))))
    return np.asarray(counts, dtype=float)


def expected_side(n: int, nb: float, r: float) -> float:
    """Field side that gives ``nb`` neighbours on average: side = r sqrt(pi n / nb)."""
    return r * math.sqrt(math.pi * n / nb)
