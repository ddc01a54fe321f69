"""
Route maintenance at the source once an established route breaks.

Three policies: switch to a stored alternate disjoint route, rediscover from
scratch, or ask the node in front of the faulty hop to discover a bypass to
the hop behind it.
"""
import logging
from typing import Optional

from .actions import Reaction, Verdict
from .messages import RepairRequest, RouteError, RouteUpdate
from .params import MaintenancePolicy

logger = logging.getLogger('srps.engine')


def _rediscover(node, dst, now: float) -> Reaction:
    if dst in node.state.pending:
        return Reaction(Verdict.IGNORED)
    reaction = node.request_route(dst, now)
    return reaction.note('rediscover', src=node.id, dst=dst, at=now)


def switch_to_alternate(node, dst, now: float) -> bool:
    st = node.state
    alternates = st.alternates.get(dst, [])
    while alternates:
        candidate = alternates.pop(0)
        fresh = now - candidate.installed_at <= node.params.route_timeout
        if fresh and node._usable(candidate) and candidate.next_hop not in st.suspects:
            st.routes.install(dst, candidate.next_hop, candidate.sn, candidate.installed_at, candidate.second_hop)
            return True
    return False


def route_maintenance(node, dst, now: float, error: Optional[RouteError] = None) -> Reaction:
    """React at the source to a broken route toward ``dst``."""
    st = node.state
    policy = node.params.maintenance_policy

    if policy == MaintenancePolicy.LOCAL_REPAIR and error is not None:
        attempted = st.repairs_pending.get(dst)
        if attempted is None and error.second_hop is not None and node._usable(st.routes.lookup(dst)):
            st.repairs_pending[dst] = now
            faulty = error.broken_link[1] if len(error.broken_link) > 1 else None
            request = RepairRequest(
                sender=node.id, receiver=st.routes.lookup(dst).next_hop, origin=node.id, target=error.origin,
                src=node.id, dst=dst, sn=error.sn, upstream=False, faulty=faulty, bypass_to=error.second_hop,
            )
            reaction = Reaction(Verdict.ACCEPTED)
            node._send(reaction, request, now)
            logger.debug('node %d asks %d to repair around %s', node.id, error.origin, faulty)
            return reaction.note('repair', src=node.id, dst=dst, reporter=error.origin, at=now)
        st.repairs_pending.pop(dst, None)

    st.routes.remove(dst)
    if policy == MaintenancePolicy.ALTERNATE and switch_to_alternate(node, dst, now):
        reaction = Reaction(Verdict.INSTALLED)
        return reaction.note('alternate', src=node.id, dst=dst, at=now)
    return _rediscover(node, dst, now)


def on_repair_request(node, msg: RepairRequest, now: float) -> Reaction:
    """The node in front of the faulty hop discovers its own route to the hop behind it."""
    st = node.state
    bypass = msg.bypass_to
    if bypass is None or bypass == node.id:
        return Reaction(Verdict.IGNORED)
    st.repairs[bypass] = (msg.src, msg.dst)
    if node._usable(st.routes.lookup(bypass, now)):
        return complete_local_repair(node, bypass, now)
    if bypass in st.pending:
        return Reaction(Verdict.ACCEPTED)
    return node.request_route(bypass, now)


def complete_local_repair(node, bypass, now: float) -> Reaction:
    """The bypass route exists: point the broken pair at it and tell the hops along it."""
    st = node.state
    src, dst = st.repairs.pop(bypass)
    toward = st.routes.lookup(bypass, now)
    reaction = Reaction(Verdict.INSTALLED)
    st.broken_routes.pop(dst, None)
    if bypass == dst:
        return reaction.note('repaired', node=node.id, src=src, dst=dst, at=now)
    st.routes.install(dst, toward.next_hop, toward.sn, now, second_hop=toward.second_hop)
    update = RouteUpdate(sender=node.id, receiver=toward.next_hop, origin=node.id, target=bypass,
                         src=src, dst=dst, sn=toward.sn, upstream=False)
    node._send(reaction, update, now)
    return reaction.note('repaired', node=node.id, src=src, dst=dst, at=now)
