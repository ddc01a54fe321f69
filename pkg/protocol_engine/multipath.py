"""
Wait-while-collect selection and reply ranking for disjoint multipath discovery.

A node buffers every announcement of a request, drops the ones whose previous
hop a neighbour has already forwarded, and rebroadcasts one survivor chosen
uniformly at random. The initiator ranks replies by arrival time.
"""
from typing import Optional

from .state import DiscoveryRound, ReplyCandidate, RequestBufferEntry


def apply_suppression(round_: DiscoveryRound, forwarded_origin) -> int:
    """A neighbour forwarded an announcement it heard from ``forwarded_origin``; drop ours from there."""
    if forwarded_origin is None:
        return 0
    round_.overheard_origins.add(forwarded_origin)
    hit = 0
    for entry in round_.entries:
        if not entry.suppressed and entry.heard_from == forwarded_origin:
            entry.suppressed = True
            hit += 1
    return hit


def select_announcement(entries: list, rng, first_heard: bool = False) -> Optional[RequestBufferEntry]:
    """Pick the announcement to rebroadcast; None when every entry was suppressed."""
    if first_heard:
        return entries[0] if entries else None
    candidates = [entry for entry in entries if not entry.suppressed]
    if not candidates:
        return None
    return candidates[int(rng.integers(len(candidates)))]


def reply_priority(replies: list, tau: float) -> list:
    """Replies inside the acceptance window, fastest first regardless of hop count."""
    if not replies:
        return []
    first = min(reply.arrived_at for reply in replies)
    admitted = [reply for reply in replies if reply.arrived_at - first <= tau]
    return sorted(admitted, key=lambda reply: reply.arrived_at)


def rank_routes(replies: list, tau: float) -> list:
    return [reply.next_hop for reply in reply_priority(replies, tau)]


__all__ = ['apply_suppression', 'select_announcement', 'reply_priority', 'rank_routes', 'ReplyCandidate']
