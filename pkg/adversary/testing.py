"""
Small hand-built attack scenarios on the lossless test radio.

Shared by the adversary tests and the acceptance checks of the lab.
"""
import itertools

from protocol_engine.messages import AccusationKind, MessageKind
from protocol_engine.params import ProtocolParams
from protocol_engine.testing import Wire

from .node import connect_colluders, node_factory
from .profiles import AdversaryProfile, Behavior, Claim, TunnelMode
from .wormhole import build_links

LINE = [(0, 1), (1, 2), (2, 3), (3, 4)]

# S=0 next to M1=1; M2=10 next to X=11, guards 12 and 13, and D=14
WORMHOLE_EDGES = [(0, 1), (10, 11), (10, 12), (10, 13), (11, 12), (11, 13), (10, 14)]

# S=0 reaches X=5 through honest relays 1, 2, 3 and the rusher 4; D=6 sits behind X
RUSH_EDGES = [(0, 1), (0, 2), (0, 3), (0, 4), (1, 5), (2, 5), (3, 5), (4, 5), (5, 6)]
RUSHER = 4

# S=0, X=1, A=2, D=3 on a line; M=4 hears both X and A
INCLUSION_EDGES = [(0, 1), (1, 2), (2, 3), (1, 4), (2, 4)]


def adversary_wire(edges, profiles, params=None, links=(), seed=0) -> Wire:
    wire = Wire(edges, params, node_factory=node_factory(profiles), seed=seed)
    connect_colluders(wire.nodes, links)
    return wire.setup()


def wormhole_wire(claim=Claim.LIE, params=None, extra=(), mode=TunnelMode.OUT_OF_BAND, hops=1, seed=0) -> Wire:
    colluders = {1, 10}
    profile = AdversaryProfile({Behavior.WORMHOLE, *extra}, colluders, tunnel_mode=mode, claim=claim)
    links = build_links(colluders, mode, hop_count=lambda a, b: hops, hop_latency=0.005)
    return adversary_wire(WORMHOLE_EDGES, {1: profile, 10: profile}, params, links, seed=seed)


def route_tables(wire, nodes=None) -> dict:
    """``{node: {dst: (next_hop, sn)}}`` for every honest node."""
    return {
        node_id: {dst: (entry.next_hop, entry.sn) for dst, entry in node.state.routes.entries.items()}
        for node_id, node in wire.nodes.items()
        if not node.malicious and (nodes is None or node_id in nodes)
    }


def fabricate_accusers(wire, accused) -> set:
    return {
        node_id for node_id, node in wire.nodes.items()
        if any(a.accused == accused and a.kind == AccusationKind.FABRICATE and a.key[0] == MessageKind.RDP
               for a in node.state.ledger.history)
    }


def claimed_link_guards(wire, far_end: int = 10) -> set:
    """Honest guards of the link the far wormhole end claims to have heard the request on."""
    claimed = next(f for f in wire.sent if f[1] == far_end and f[2].kind == MessageKind.RDP)[2].prev_hop
    return ({claimed} | (wire.adjacency[claimed] & wire.adjacency[far_end])) - {1, far_end}


def rush_trial(seed, srps=True):
    """X's round after one discovery, every node on its own random wait; ``chosen.heard_from`` won."""
    params = ProtocolParams(srps_enabled=srps, n_r=4, chain_length=64)
    wire = adversary_wire(RUSH_EDGES, {RUSHER: AdversaryProfile({Behavior.RUSH})}, params, seed=seed)
    wire.discover(0, 6)
    key = (0, 6, wire.nodes[0].state.pending[6].sn)
    # X starts waiting before t_min and waits at most t_max
    wire.run(until=params.t_max + 2 * params.t_min if srps else 0.05)
    return wire.nodes[5].state.rounds[key]


def buffered_rush_trials(count, candidates=4) -> list:
    """The first ``count`` rounds, by seed, in which X held ``candidates`` announcements when it chose."""
    rounds = []
    for seed in itertools.count(0, 16):
        round_ = rush_trial(seed)
        if len(round_.entries) == candidates:
            rounds.append(round_)
            if len(rounds) == count:
                return rounds
