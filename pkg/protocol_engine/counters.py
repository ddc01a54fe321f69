"""Per-role tallies of MAC and hash steps, following the cost model's accounting of one discovery."""
from collections import Counter
from enum import Enum


class Role(str, Enum):
    SOURCE = 'source'
    INTERMEDIATE = 'intermediate'
    DESTINATION = 'destination'


class OpCounter:
    def __init__(self):
        self.counts: Counter = Counter()

    def mac(self, role: Role, n: int = 1):
        self.counts[(role, 'mac')] += n

    def hash(self, role: Role, n: int = 1):
        self.counts[(role, 'hash')] += n

    def per_role(self, role: Role) -> tuple[int, int]:
        return self.counts[(role, 'mac')], self.counts[(role, 'hash')]

    def reset(self):
        self.counts.clear()
