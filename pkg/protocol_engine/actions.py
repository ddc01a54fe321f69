"""What a handler hands back to whoever drives the node: frames to send, timers to arm, a verdict."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .messages import Message


class Verdict(str, Enum):
    ACCEPTED = 'accepted'
    BUFFERED = 'buffered'
    HELD = 'held'
    FORWARDED = 'forwarded'
    DELIVERED = 'delivered'
    INSTALLED = 'installed'
    DROPPED = 'dropped'
    REJECTED = 'rejected'
    IGNORED = 'ignored'


class Reason(str, Enum):
    NOT_NEIGHBOR = 'not-neighbor'
    REPLAY = 'replay'
    DUPLICATE = 'duplicate'
    BAD_SNV = 'bad-snv'
    BAD_NBR_MAC = 'bad-nbr-mac'
    BAD_E2E_MAC = 'bad-e2e-mac'
    NO_REQUEST = 'no-request'
    ISOLATED = 'isolated'
    UNVERIFIED = 'unverified'
    STALE = 'stale'
    NO_ROUTE = 'no-route'
    SUPPRESSED = 'suppressed'
    LATE = 'late'
    BAD_CHALLENGE = 'bad-challenge'
    BAD_RENEWAL = 'bad-renewal'
    ATTACK = 'attack'


class TimerKind(str, Enum):
    FLUSH = 'flush'
    WATCH_DEADLINE = 'watch_deadline'
    REPLY_WINDOW = 'reply_window'
    DISCOVERY_TIMEOUT = 'discovery_timeout'
    HELD_EXPIRY = 'held_expiry'
    CHALLENGE_TIMEOUT = 'challenge_timeout'


@dataclass(frozen=True)
class Send:
    message: Message
    after: float = 0.0


@dataclass(frozen=True)
class Schedule:
    after: float
    timer: TimerKind
    key: Any = None


@dataclass(frozen=True)
class Tunnel:
    """Hand a frame straight to a colluding node, off the radio medium."""
    message: Message
    peer: int
    after: float = 0.0


@dataclass
class Reaction:
    verdict: Verdict
    reason: Optional[Reason] = None
    actions: list = field(default_factory=list)
    # (event, details) pairs for the metrics collector
    notes: list = field(default_factory=list)

    def send(self, message: Message, after: float = 0.0):
        self.actions.append(Send(message, after))
        return self

    def schedule(self, after: float, timer: TimerKind, key=None):
        self.actions.append(Schedule(after, timer, key))
        return self

    def tunnel(self, message: Message, peer: int, after: float = 0.0):
        self.actions.append(Tunnel(message, peer, after))
        return self

    def note(self, event: str, **details):
        self.notes.append((event, details))
        return self

    def extend(self, other: 'Reaction'):
        self.actions.extend(other.actions)
        self.notes.extend(other.notes)
        return self

    @property
    def sends(self) -> list:
        return [a for a in self.actions if isinstance(a, Send)]

    @property
    def timers(self) -> list:
        return [a for a in self.actions if isinstance(a, Schedule)]

    @property
    def messages(self) -> list:
        return [a.message for a in self.sends]

    @property
    def tunnels(self) -> list:
        return [a for a in self.actions if isinstance(a, Tunnel)]


def dropped(reason: Reason) -> Reaction:
    return Reaction(Verdict.DROPPED, reason)
