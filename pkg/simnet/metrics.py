"""Turns the notes nodes attach to their reactions into per-run metrics."""
import bisect
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

import pandas as pd

LOSS_CAUSES = ('collision', 'no_route', 'queue', 'malicious')


@dataclass
class RunMetrics:
    horizon: float
    srps: bool
    malicious: tuple = ()
    packets_sent: int = 0
    delivered: int = 0
    lost: dict = field(default_factory=dict)
    # (time, cumulative packets dropped by compromised nodes)
    drops_timeline: list = field(default_factory=list)
    routes_total: int = 0
    # routes using a hop between nodes that are not radio neighbours
    routes_malicious: int = 0
    routes_via_malicious: int = 0
    attack_started: dict = field(default_factory=dict)
    isolation_latency: dict = field(default_factory=dict)
    detections: dict = field(default_factory=dict)
    accusations: dict = field(default_factory=dict)
    false_isolations: int = 0
    latency_sum: float = 0.0

    @property
    def malicious_drops(self) -> int:
        return self.drops_timeline[-1][1] if self.drops_timeline else 0

    def drops_at(self, t: float) -> int:
        """Cumulative malicious drops up to and including ``t``."""
        times = [at for at, _ in self.drops_timeline]
        index = bisect.bisect_right(times, t)
        return self.drops_timeline[index - 1][1] if index else 0

    @property
    def lost_total(self) -> int:
        return sum(self.lost.values())

    @property
    def in_flight(self) -> int:
        return self.packets_sent - self.delivered - self.lost_total

    @property
    def drop_fraction(self) -> float:
        return self.malicious_drops / self.packets_sent if self.packets_sent else 0.0

    @property
    def malicious_route_fraction(self) -> float:
        return self.routes_malicious / self.routes_total if self.routes_total else 0.0

    @property
    def detection_rate(self) -> float:
        if not self.detections:
            return math.nan
        return sum(self.detections.values()) / len(self.detections)

    def summary(self) -> dict:
        """Flat row for the summary CSV; columns keep this order."""
        latencies = list(self.isolation_latency.values())
        row = {
            'packets_sent': self.packets_sent,
            'delivered': self.delivered,
            'delivery_ratio': self.delivered / self.packets_sent if self.packets_sent else 0.0,
            'mean_latency_s': self.latency_sum / self.delivered if self.delivered else math.nan,
        }
        row.update({f'lost_{cause}': self.lost.get(cause, 0) for cause in LOSS_CAUSES})
        row.update({
            'in_flight': self.in_flight,
            'malicious_drops': self.malicious_drops,
            'drop_fraction': self.drop_fraction,
            'routes_total': self.routes_total,
            'routes_malicious': self.routes_malicious,
            'routes_via_malicious': self.routes_via_malicious,
            'malicious_route_fraction': self.malicious_route_fraction,
            'detected': sum(self.detections.values()),
            'detection_rate': self.detection_rate,
            'isolated_all': len(latencies),
            'isolation_latency_mean_s': sum(latencies) / len(latencies) if latencies else math.nan,
            'isolation_latency_max_s': max(latencies) if latencies else math.nan,
            'accusations': sum(self.accusations.values()),
            'false_isolations': self.false_isolations,
        })
        return row

    def drops_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.drops_timeline, columns=['time_s', 'cumulative_drops'])

    def to_payload(self) -> dict:
        """JSON-safe form; integer keys become strings."""
        data = asdict(self)
        for name in ('attack_started', 'isolation_latency', 'detections'):
            data[name] = {str(k): v for k, v in data[name].items()}
        data['malicious'] = list(self.malicious)
        data['drops_timeline'] = [list(p) for p in self.drops_timeline]
        return data

    @classmethod
    def from_payload(cls, data: dict) -> 'RunMetrics':
        data = dict(data)
        for name in ('attack_started', 'isolation_latency', 'detections'):
            data[name] = {int(k): v for k, v in data[name].items()}
        data['malicious'] = tuple(data['malicious'])
        data['drops_timeline'] = [tuple(p) for p in data['drops_timeline']]
        return cls(**data)


class MetricsCollector:
    """Fed every note in event order by the simulator."""

    def __init__(self, topology, horizon: float, srps: bool):
        self.topology = topology
        self.malicious = set(topology.malicious)
        self.metrics = RunMetrics(horizon=horizon, srps=srps, malicious=tuple(topology.malicious))
        self.lost = Counter()
        self.accusations = Counter()
        self.isolated_by = defaultdict(set)
        self.false_pairs = set()
        self._handlers = {
            'sent': self._sent,
            'delivered': self._delivered,
            'lost': self._lost,
            'route': self._route,
            'attack': self._attack,
            'accusation': self._accusation,
            'isolated': self._isolated,
        }

    def observe(self, now: float, node: int, event: str, details: dict):
        handler = self._handlers.get(event)
        if handler is not None:
            handler(now, node, details)

    def _honest(self, node) -> bool:
        return node not in self.malicious

    def _sent(self, now, node, details):
        self.metrics.packets_sent += 1

    def _delivered(self, now, node, details):
        self.metrics.delivered += 1
        self.metrics.latency_sum += details.get('latency', 0.0)

    def _lost(self, now, node, details):
        cause = details.get('cause', 'unknown')
        self.lost[cause] += 1
        if cause == 'malicious':
            drops = self.metrics.malicious_drops + 1
            self.metrics.drops_timeline.append((now, drops))

    def _route(self, now, node, details):
        if not self._honest(node):
            return
        path = tuple(details.get('path', ()))
        m = self.metrics
        m.routes_total += 1
        graph = self.topology.graph
        if any(not graph.has_edge(a, b) for a, b in zip(path, path[1:])):
            m.routes_malicious += 1
        if any(hop in self.malicious for hop in path):
            m.routes_via_malicious += 1

    def _attack(self, now, node, details):
        self.metrics.attack_started.setdefault(node, now)
        self._check_isolation(node, now)

    def _accusation(self, now, node, details):
        self.accusations[details.get('kind', 'unknown')] += 1

    def _isolated(self, now, node, details):
        if not self._honest(node):
            return
        accused = details['accused']
        if self._honest(accused):
            self.false_pairs.add((node, accused))
            return
        self.isolated_by[accused].add(node)
        self.metrics.detections[accused] = True
        self._check_isolation(accused, now)

    def _check_isolation(self, accused, now: float):
        m = self.metrics
        started = m.attack_started.get(accused)
        if started is None or accused in m.isolation_latency:
            return
        neighbours = {n for n in self.topology.neighbors(accused) if self._honest(n)}
        if neighbours <= self.isolated_by[accused]:
            m.isolation_latency[accused] = now - started

    def finish(self) -> RunMetrics:
        m = self.metrics
        for node in self.malicious:
            m.detections.setdefault(node, False)
        m.detections = dict(sorted(m.detections.items()))
        m.attack_started = dict(sorted(m.attack_started.items()))
        m.isolation_latency = dict(sorted(m.isolation_latency.items()))
        m.lost = dict(sorted(self.lost.items()))
        m.accusations = dict(sorted(self.accusations.items()))
        m.false_isolations = len(self.false_pairs)
        return m

