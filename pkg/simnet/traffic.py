"""Per-node data traffic: exponential inter-arrivals, with the destination re-drawn at exponential times."""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class TrafficModel:
    mu: float = 0.1
    xi: float = 1 / 200

    def __post_init__(self):
        if self.mu <= 0 or self.xi <= 0:
            raise ConfigurationError(f'traffic rates must be positive (mu={self.mu}, xi={self.xi})', key='mu')


def traffic_plan(model: TrafficModel, rng: np.random.Generator, src: int, candidates: Sequence[int],
                 horizon: float) -> list[tuple[float, int]]:
    """Every (time, destination) this source originates before ``horizon``."""
    choices = sorted(c for c in candidates if c != src)
    if not choices:
        return []

    def draw():
        return int(choices[int(rng.integers(len(choices)))])

    plan = []
    dst = draw()
    change_at = rng.exponential(1.0 / model.xi)
    t = rng.exponential(1.0 / model.mu)
    while t < horizon:
        while change_at <= t:
            dst = draw()
            change_at += rng.exponential(1.0 / model.xi)
        plan.append((float(t), dst))
        t += rng.exponential(1.0 / model.mu)
    return plan
