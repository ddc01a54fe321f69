"""What a compromised node does besides running the protocol with its own legitimate keys."""
import re
from dataclasses import dataclass, field
from enum import Enum

from .exceptions import ProfileError


class Behavior(str, Enum):
    WORMHOLE = 'wormhole'
    RUSH = 'rush'
    REPLAY = 'replay'
    SPOOF = 'spoof'
    SYBIL = 'sybil'
    INCLUDE = 'include'
    DROP_DATA = 'drop_data'
    SELECTIVE = 'selective'


class TunnelMode(str, Enum):
    OUT_OF_BAND = 'out_of_band'
    ENCAPSULATION = 'encapsulation'


class Claim(str, Enum):
    """Which previous hop a wormhole endpoint names when it re-emits a tunnelled packet."""
    TRUTH = 'truth'
    LIE = 'lie'


_SELECTIVE = re.compile(r'^selective\s*[(:]\s*([0-9.]+)\s*\)?$')


@dataclass(frozen=True)
class AdversaryProfile:
    behaviors: frozenset = field(default_factory=frozenset)
    colluders: frozenset = field(default_factory=frozenset)
    tunnel_mode: TunnelMode = TunnelMode.OUT_OF_BAND
    claim: Claim = Claim.LIE
    selective_fraction: float = 0.5
    # forward route requests and replies faithfully unless set
    drop_control: bool = False

    def __post_init__(self):
        try:
            behaviors = frozenset(Behavior(b) for b in self.behaviors)
            tunnel_mode = TunnelMode(self.tunnel_mode)
            claim = Claim(self.claim)
        except ValueError as e:
            raise ProfileError(str(e)) from e
        object.__setattr__(self, 'behaviors', behaviors)
        object.__setattr__(self, 'colluders', frozenset(int(c) for c in self.colluders))
        object.__setattr__(self, 'tunnel_mode', tunnel_mode)
        object.__setattr__(self, 'claim', claim)
        if Behavior.WORMHOLE in behaviors and len(self.colluders) < 2:
            raise ProfileError('a wormhole needs at least two colluders')
        if not 0.0 <= self.selective_fraction <= 1.0:
            raise ProfileError(f'selective fraction {self.selective_fraction} is outside [0, 1]')

    def has(self, behavior: Behavior) -> bool:
        return behavior in self.behaviors

    @property
    def active(self) -> bool:
        return bool(self.behaviors) or self.drop_control


def parse_behaviors(text: str) -> tuple[frozenset, float | None]:
    """
    Parse a comma separated behaviour list such as ``wormhole, drop_data`` or ``selective(0.3)``.

    Returns the behaviour set and the selective fraction when one was given.
    """
    behaviors = set()
    fraction = None
    for raw in text.split(','):
        item = raw.strip().lower()
        if not item or item == 'none':
            continue
        match = _SELECTIVE.match(item)
        if match:
            behaviors.add(Behavior.SELECTIVE)
            try:
                fraction = float(match.group(1))
            except ValueError as e:
                raise ProfileError(f'bad selective fraction in {raw.strip()!r}') from e
            continue
        try:
            behaviors.add(Behavior(item))
        except ValueError:
            raise ProfileError(f'unknown adversary behaviour {raw.strip()!r}') from None
    return frozenset(behaviors), fraction
