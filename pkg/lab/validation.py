"""
Acceptance checks run by ``manage.py validate``.

Each check either returns a one-line finding or raises ``CheckFailed``. The
fast level caps Monte Carlo loops at ``FAST_TRIALS`` and leaves out the
simulation studies; the full level runs everything at its nominal size.
"""
import logging
import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from adversary.injections import include, inclusion_frames, replay, spoof, sybil
from adversary.profiles import AdversaryProfile, Behavior, Claim
from adversary.testing import (
    INCLUSION_EDGES, LINE, RUSHER, adversary_wire, buffered_rush_trials, claimed_link_guards, fabricate_accusers,
    route_tables, rush_trial, wormhole_wire,
)
from analysis.costs import CostParams, compute_cost, memory_cost, packet_sizes
from analysis.coverage import (
    AREA_MIN_COEFF, area, expected_area, monte_carlo_expected_area, monte_carlo_lens_overlap, p_detect,
)
from analysis.curves import fig9b, fig12_analytic
from crypto_core.chains import (
    build_snv_chain, derive_commitment, max_requests, next_auth_key, snv_indices, verify_and_advance,
)
from crypto_core.constants import MAC_BYTES
from crypto_core.exceptions import ChainExhausted, SrpsError
from crypto_core.primitives import decrypt, encrypt, hash_f, mac, verify_mac
from protocol_engine.actions import Reason, Verdict
from protocol_engine.counters import Role
from protocol_engine.messages import RDP, RRP
from protocol_engine.testing import Wire
from simnet.runner import aggregate_runs
from simnet.scenario import ScenarioConfig
from simnet.topology import generate_topology, guard_census

from .exceptions import CheckFailed
from .experiments import analyze, simulate

logger = logging.getLogger('srps.lab')

LEVELS = ('fast', 'full')
FAST_TRIALS = 10_000
GAMMAS = tuple(range(2, 9))


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass(frozen=True)
class Check:
    name: str
    title: str
    level: str
    run: Callable


@dataclass
class Context:
    level: str = 'fast'
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    runs: int = 10
    seed: int = 0
    cache: dict = field(default_factory=dict)

    def trials(self, nominal: int) -> int:
        return nominal if self.level == 'full' else min(nominal, FAST_TRIALS)

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


REGISTRY: dict[str, Check] = {}


def check(name: str, title: str, level: str = 'fast'):
    def register(func):
        REGISTRY[name] = Check(name, title, level, func)
        return func
    return register


def expect(condition: bool, message: str):
    if not condition:
        raise CheckFailed(message)


def selected(level: str, names=None) -> list[Check]:
    if level not in LEVELS:
        raise CheckFailed(f'unknown level {level!r}; expected one of {", ".join(LEVELS)}')
    unknown = set(names or ()) - set(REGISTRY)
    if unknown:
        raise CheckFailed(f'unknown check(s): {", ".join(sorted(unknown))}')
    return [c for c in REGISTRY.values()
            if (level == 'full' or c.level == 'fast') and (not names or c.name in names)]


def run_checks(context: Context, names=None) -> list[CheckResult]:
    results = []
    for item in selected(context.level, names):
        started = time.perf_counter()
        try:
            passed, detail = True, item.run(context)
        except CheckFailed as e:
            passed, detail = False, str(e)
        except SrpsError as e:
            passed, detail = False, f'{type(e).__name__}: {e}'
        elapsed = time.perf_counter() - started
        logger.info('%s %s (%.1fs): %s', 'PASS' if passed else 'FAIL', item.name, elapsed, detail)
        results.append(CheckResult(item.name, passed, detail, elapsed))
    return results


# ------------------------------------------------------------------- costs

@check('costs', 'memory, packet and per-role operation costs')
def check_costs(ctx: Context) -> str:
    memory = memory_cost(CostParams(nn=20, lc=10, rte=20, nbe=10))
    expect(memory == 1420, f'memory_cost(20, 10, 20, 10) = {memory}, expected 1420')
    sizes = packet_sizes()
    modelled = tuple(sizes[name].modelled for name in ('rdp', 'key_disclosure', 'rrp'))
    expect(modelled == (47, 12, 18), f'packet sizes {modelled}, expected (47, 12, 18)')

    wire = Wire(LINE).setup()
    wire.discover(0, 4)
    wire.run()
    counted = {
        Role.SOURCE: wire.nodes[0].counter.per_role(Role.SOURCE),
        Role.INTERMEDIATE: wire.nodes[2].counter.per_role(Role.INTERMEDIATE),
        Role.DESTINATION: wire.nodes[4].counter.per_role(Role.DESTINATION),
    }
    expected = compute_cost()
    for role, ops in counted.items():
        expect(ops == expected[role], f'{role.value}: engine counted {ops} (MAC, hash), model says {expected[role]}')
    return f'memory {memory} B, packets {modelled} B, ops ' + ', '.join(f'{r.value} {o}' for r, o in counted.items())


# ------------------------------------------------------------ probabilities

@check('binomial-beta', 'binomial tail equals the regularized incomplete Beta')
def check_binomial_beta(ctx: Context) -> str:
    worst, where = 0.0, None
    for g in range(31):
        for gamma in range(g + 1):
            for p in np.round(np.arange(1, 100) / 100, 2):
                result = p_detect(gamma, g, float(p))
                gap = abs(result.binomial_sum - result.beta_form)
                if gap > worst:
                    worst, where = gap, (g, gamma, float(p))
    expect(worst <= 1e-9, f'largest gap {worst:.3e} at (g, gamma, p) = {where}')
    return f'largest gap {worst:.2e}'


@check('geometry', 'common coverage area and its expectation')
def check_geometry(ctx: Context) -> str:
    r = 30.0
    full = area(0.0, r)
    expect(abs(full - math.pi * r * r) <= 1e-12 * math.pi * r * r, f'area(0, r) = {full}, expected pi r^2')
    expect(abs(area(2 * r, r)) <= 1e-12 * math.pi * r * r, f'area(2r, r) = {area(2 * r, r)}, expected 0')
    at_r = area(r, r) / (r * r)
    expect(abs(at_r - AREA_MIN_COEFF) <= 0.005, f'area(r, r)/r^2 = {at_r:.4f}, expected {AREA_MIN_COEFF} +/- 0.005')

    mean = expected_area(r)
    samples = ctx.trials(1_000_000)
    sampled = monte_carlo_expected_area(r, samples, ctx.rng(1))
    relative = sampled / mean.quadrature - 1.0
    expect(abs(relative) <= 0.02, f'quadrature {mean.quadrature / r ** 2:.4f} r^2 vs sampled '
                                  f'{sampled / r ** 2:.4f} r^2 ({relative:+.2%})')
    lens = monte_carlo_lens_overlap(1.0, samples, ctx.rng(2))
    return (f'E[Area] = {mean.quadrature / r ** 2:.4f} r^2 (sampled {sampled / r ** 2:.4f}), '
            f'sqrt(3) closed form off by {mean.relative_gap:+.2%}; true lens mean {lens:.4f} r^2')


@check('guard-density', 'guards per link in random topologies')
def check_guard_density(ctx: Context) -> str:
    findings = []
    for nb in (8, 15, 20):
        config = replace(ctx.base, target_nb=nb, m_malicious=0)
        rng = ctx.rng(10 + nb)
        counts = np.concatenate([guard_census(generate_topology(config, rng)) for _ in range(30)])
        expected = math.sqrt(3) / math.pi * nb
        ratio = counts.mean() / expected
        expect(abs(ratio - 1.0) <= 0.10, f'NB={nb}: {counts.mean():.2f} guards per link, expected {expected:.2f}')
        findings.append(f'NB={nb} {counts.mean():.2f}/{expected:.2f}')
    return ', '.join(findings)


@check('false-alarm', 'isolation false alarm stays negligible over the neighbour sweep')
def check_false_alarm(ctx: Context) -> str:
    worst = fig9b()['p_fa_gamma'].max()
    expect(worst < 1e-6, f'largest isolation false alarm {worst:.3e}')
    return f'largest isolation false alarm {worst:.3e}'


# ------------------------------------------------------------------ crypto

@check('hash-chains', 'commitment chains and bounded-gap verification')
def check_hash_chains(ctx: Context) -> str:
    seed = ctx.rng(20).bytes(8)
    chain = derive_commitment(seed, 64)
    stored = chain.current_commitment
    disclosed = []
    while not chain.exhausted:
        key = next_auth_key(chain)
        accepted, gap = verify_and_advance(stored, key, max_gap=1)
        expect(accepted and gap == 1, f'disclosure {len(disclosed) + 1} did not verify against its predecessor')
        disclosed.append(key)
        stored = key
    expect(stored == seed, 'the last disclosure is not the chain seed')
    try:
        next_auth_key(chain)
    except ChainExhausted:
        pass
    else:
        raise CheckFailed('an exhausted chain disclosed another key')

    anchor = derive_commitment(seed, 64).current_commitment
    for distance in range(1, 6):
        accepted, gap = verify_and_advance(anchor, disclosed[distance - 1], max_gap=3)
        expect(accepted == (distance <= 3), f'gap {distance} {"accepted" if accepted else "rejected"} with bound 3')
        expect(gap == (distance if distance <= 3 else None), f'gap {distance} reported as {gap}')
    return f'{len(disclosed)} disclosures verified, gaps 1-3 accepted and 4-5 rejected'


@check('snv-chains', 'SNV index arithmetic, exhaustion and renewal')
def check_snv_chains(ctx: Context) -> str:
    for n in range(2, 101):
        for i in range(1, max_requests(n) + 1):
            expect(snv_indices(i, n) == (n - 2 * (i - 1), n - 2 * i + 1), f'snv_indices({i}, {n}) = {snv_indices(i, n)}')
        expect(snv_indices(max_requests(n) + 1, n) is None, f'chain of {n} not exhausted after {max_requests(n)}')

    key = ctx.rng(21).bytes(8)
    chain = build_snv_chain(key, 7, 20)
    for _ in range(max_requests(20)):
        req, rep = chain.current_indices()
        expect(hash_f(chain.value_at(rep)) == chain.value_at(req), f'reply value {rep} does not hash onto {req}')
        chain.advance()
    expect(chain.exhausted, 'chain of 20 still has indices after 10 requests')

    renewed = build_snv_chain(key, 17, 20, offset=1)
    req, _ = renewed.current_indices()
    expect(req == 19, f'renewed chain starts at {req}, expected 19')
    expect(hash_f(renewed.value_at(req)) == renewed.value_at(20), 'first renewed request does not verify against u_n')
    return 'indices for n <= 100, a full chain of 20 and the renewed anchor verified'


@check('cipher', 'encrypt/decrypt round trip on random pairs')
def check_cipher(ctx: Context) -> str:
    rng = ctx.rng(22)
    pairs = ctx.trials(10_000)
    for trial in range(pairs):
        key = rng.bytes(8)
        message = rng.bytes(int(rng.integers(0, 33)))
        expect(decrypt(key, encrypt(key, message)) == message, f'round trip {trial} failed')
    return f'{pairs} pairs'


@check('mac-fuzz', 'single-bit tampering never passes the MAC')
def check_mac_fuzz(ctx: Context) -> str:
    rng = ctx.rng(23)
    key = rng.bytes(8)
    trials = ctx.trials(1_000_000)
    accepted = 0
    for _ in range(trials):
        payload = bytearray(rng.bytes(24))
        tag = mac(key, bytes(payload))
        bit = int(rng.integers(len(payload) * 8))
        payload[bit // 8] ^= 1 << (bit % 8)
        accepted += verify_mac(key, bytes(payload), tag)
    expect(accepted == 0, f'{accepted} tampered payloads accepted out of {trials}')
    expect(len(tag) == MAC_BYTES, f'tags are {len(tag)} bytes')
    return f'0 false accepts in {trials} trials'


# ---------------------------------------------------------------- security

@check('replay', 'replayed requests never change a routing table')
def check_replay(ctx: Context) -> str:
    wire = adversary_wire(LINE + [(1, 5), (2, 5)], {5: AdversaryProfile({Behavior.REPLAY}, drop_control=True)})
    node = wire.nodes[5]
    for _ in range(11):
        wire.discover(0, 4)
        wire.run()
    before = route_tables(wire)
    recorded = [m for m in node.recorded if isinstance(m, RDP)]
    expect(recorded, 'the replaying node overheard no request')
    for frame in recorded:
        for as_self in (False, True):
            wire.apply(5, replay(node, wire.now, frame, as_self=as_self))
            wire.run()
    expect(route_tables(wire) == before, 'a replayed request changed a routing table')
    return f'{2 * len(recorded)} replays, routing tables unchanged'


@check('inclusion', 'forged requests and replies never alter the routes at X and A')
def check_inclusion(ctx: Context) -> str:
    wire = adversary_wire(INCLUSION_EDGES, {4: AdversaryProfile({Behavior.INCLUDE}, drop_control=True)})
    wire.discover(0, 3)
    wire.run()
    node = wire.nodes[4]
    before = route_tables(wire, nodes=(1, 2))
    overheard = [frame for _, sender, frame in wire.sent if sender in (1, 2)]
    frames = list(inclusion_frames(node, 0, 3, 1, targets=(1, 2), overheard=overheard))
    for frame in frames:
        wire.apply(4, include(node, frame, wire.now))
        wire.run()
    expect(route_tables(wire, nodes=(1, 2)) == before, 'an inclusion frame altered the route at X or A')
    for node_id, honest in wire.nodes.items():
        if not honest.malicious:
            hops = {entry.next_hop for entry in honest.state.routes.entries.values()}
            expect(4 not in hops, f'node {node_id} routes through the attacker')
    return f'{len(frames)} forged frames, routes at X and A unchanged'


@check('wormhole-truth', 'a wormhole that names its real previous hop is refused')
def check_wormhole_truth(ctx: Context) -> str:
    wire = wormhole_wire(claim=Claim.TRUTH)
    wire.discover(0, 14)
    wire.run()
    emerged = [f for f in wire.frames(RDP) if f.sender == 10]
    expect(len(emerged) == 1, f'{len(emerged)} requests emerged at the far end')
    verdict = wire.nodes[14].on_rdp(emerged[0], wire.now)
    expect(verdict.reason == Reason.NOT_NEIGHBOR, f'destination answered the tunnelled request with {verdict.reason}')

    sn = wire.frames(RDP)[0].sn
    carried = RRP(sender=10, receiver=1, src=0, dst=14, sn=sn, snv_value=bytes(8), trail=(14, 10))
    reply = wire.nodes[1].receive_tunneled(carried, wire.now).messages[0]
    verdict = wire.nodes[0].on_rrp(reply, wire.now)
    expect((verdict.verdict, verdict.reason) == (Verdict.REJECTED, Reason.NOT_NEIGHBOR),
           f'source answered the tunnelled reply with {verdict.verdict}/{verdict.reason}')
    return 'request and reply refused as not-neighbor'


@check('wormhole-lie', 'every guard of a falsely claimed link accuses the far end')
def check_wormhole_lie(ctx: Context) -> str:
    guards_total = 0
    for seed in range(20):
        wire = wormhole_wire(seed=seed)
        wire.discover(0, 14)
        wire.run()
        guards = claimed_link_guards(wire)
        missing = guards - fabricate_accusers(wire, 10)
        expect(not missing, f'seed {seed}: guards {sorted(missing)} did not accuse the far end')
        guards_total += len(guards)
    return f'{guards_total} guards over 20 discoveries, all accused'


@check('spoof-sybil', 'spoofed and Sybil requests are refused by every receiver')
def check_spoof_sybil(ctx: Context) -> str:
    profile = AdversaryProfile({Behavior.SPOOF, Behavior.SYBIL}, drop_control=True)
    wire = adversary_wire(LINE + [(1, 5), (2, 5)], {5: profile})
    node = wire.nodes[5]
    frames = [*spoof(node, victim=4, dst=0, now=0.0).messages, *sybil(node, [100, 101, 102], dst=4, now=0.0).messages]
    for frame in frames:
        for peer in sorted(wire.adjacency[5]):
            verdict = wire.nodes[peer].receive(frame, wire.now)
            expect(verdict.reason == Reason.NOT_NEIGHBOR,
                   f'node {peer} answered a forged request from {frame.sender} with {verdict.reason}')
    return f'{len(frames)} forged requests refused by {len(wire.adjacency[5])} receivers'


@check('rushing', 'randomized forwarding bounds route capture by a rusher')
def check_rushing(ctx: Context) -> str:
    trials = ctx.trials(1000)
    captured = sum(round_.chosen.heard_from == RUSHER for round_ in buffered_rush_trials(trials))
    sigma = math.sqrt(trials * 0.25 * 0.75)
    expect(abs(captured - trials / 4) <= 3 * sigma, f'rusher captured {captured}/{trials}, expected about {trials / 4}')
    baseline = sum(rush_trial(16 * t, srps=False).chosen.heard_from == RUSHER for t in range(100))
    expect(baseline == 100, f'first-heard forwarding let honest relays win {100 - baseline} of 100 rounds')
    return f'captured {captured}/{trials} with four buffered candidates, 100/100 first-heard'


# ------------------------------------------------------------- determinism

@check('determinism', 'repeated invocations write identical files')
def check_determinism(ctx: Context) -> str:
    config = replace(ctx.base, n_nodes=30, target_nb=8, horizon=60.0, runs=2, mu=0.05, m_malicious=2,
                     master_seed=ctx.seed)
    with tempfile.TemporaryDirectory() as tmp:
        outputs = []
        for attempt in ('a', 'b'):
            out = Path(tmp) / attempt
            paths = analyze('fig9a', out) + analyze('costs', out)
            paths += simulate(config, out, trace=False, dispatch='inline').paths
            outputs.append({p.name: p.read_bytes() for p in paths})
        differing = sorted(name for name in outputs[0] if outputs[0][name] != outputs[1].get(name))
        expect(not differing, f'files differ between identical invocations: {", ".join(differing)}')
        return f'{len(outputs[0])} files identical across two invocations'


# -------------------------------------------------------------- simulation

def _gamma_study(ctx: Context) -> dict:
    if 'gamma' not in ctx.cache:
        ctx.cache['gamma'] = {
            gamma: aggregate_runs(replace(ctx.base, target_nb=15, m_malicious=2, gamma=gamma, runs=ctx.runs,
                                          srps=True))
            for gamma in GAMMAS
        }
    return ctx.cache['gamma']


@check('detection-vs-gamma', 'detection falls with the confidence index and tracks the analytic curve', 'full')
def check_detection_vs_gamma(ctx: Context) -> str:
    study = _gamma_study(ctx)
    scenario = replace(ctx.base, target_nb=15)
    p_c = scenario.medium_model().p_c
    analytic = fig12_analytic(gamma_values=GAMMAS, nb=15, beta=scenario.beta, pc_base=p_c, pc_anchor_nb=15, m=2)
    analytic = dict(zip(analytic['gamma'], analytic['p_detect']))
    simulated = {}
    for gamma, aggregate in study.items():
        rates = [m.detection_rate for m in aggregate.runs if not math.isnan(m.detection_rate)]
        simulated[gamma] = float(np.mean(rates)) if rates else 0.0
    slack = 1.0 / (2 * ctx.runs)
    for low, high in zip(GAMMAS, GAMMAS[1:]):
        expect(analytic[high] <= analytic[low], f'analytic detection rises from gamma {low} to {high}')
        expect(simulated[high] <= simulated[low] + slack,
               f'simulated detection rises from {simulated[low]:.2f} at gamma {low} to {simulated[high]:.2f}')
    for gamma in GAMMAS:
        expect(abs(simulated[gamma] - analytic[gamma]) <= 0.15,
               f'gamma {gamma}: simulated {simulated[gamma]:.2f}, analytic {analytic[gamma]:.2f}')
    return ', '.join(f'{g}: {simulated[g]:.2f}/{analytic[g]:.2f}' for g in GAMMAS)


@check('isolation-latency', 'median isolation latency stays under 30 s', 'full')
def check_isolation_latency(ctx: Context) -> str:
    medians = {}
    for gamma, aggregate in _gamma_study(ctx).items():
        latencies = []
        for metrics in aggregate.runs:
            for node in metrics.attack_started:
                latencies.append(metrics.isolation_latency.get(node, math.inf))
        expect(latencies, f'gamma {gamma}: no attack started in {ctx.runs} runs')
        medians[gamma] = float(np.median(latencies))
        expect(medians[gamma] < 30.0, f'gamma {gamma}: median isolation latency {medians[gamma]:.1f} s')
    return ', '.join(f'{g}: {m:.1f}s' for g, m in medians.items())


def _drops_after_isolation(config: ScenarioConfig, metrics) -> int:
    isolated_at = []
    for node, started in metrics.attack_started.items():
        latency = metrics.isolation_latency.get(node)
        if latency is None:
            raise CheckFailed(f'M={len(metrics.malicious)}: node {node} attacked at {started:.1f} s, never isolated')
        isolated_at.append(started + latency)
    if not isolated_at:
        return 0
    cutoff = max(isolated_at) + config.route_timeout + 10.0
    return metrics.malicious_drops - metrics.drops_at(cutoff)


@check('wormhole-impact', 'wormhole drops grow without SRPS and stop after isolation with it', 'full')
def check_wormhole_impact(ctx: Context) -> str:
    findings = []
    for m in (0, 1):
        aggregate = aggregate_runs(replace(ctx.base, m_malicious=m, runs=ctx.runs, srps=True))
        drops = sum(r.malicious_drops for r in aggregate.runs)
        routes = sum(r.routes_malicious for r in aggregate.runs)
        expect(drops == 0 and routes == 0, f'M={m}: {drops} wormhole drops, {routes} tunnelled routes')
        findings.append(f'M={m} clean')
    for m in (2, 4):
        config = replace(ctx.base, m_malicious=m, runs=ctx.runs)
        baseline = aggregate_runs(replace(config, srps=False))
        half = sum(r.drops_at(config.horizon / 2) for r in baseline.runs)
        total = sum(r.malicious_drops for r in baseline.runs)
        expect(total > 0 and total >= 2 * half, f'M={m} baseline: {half} drops at half horizon, {total} at the end')
        protected = aggregate_runs(replace(config, srps=True))
        late = sum(_drops_after_isolation(config, r) for r in protected.runs)
        expect(late == 0, f'M={m} srps: {late} drops after isolation settled')
        findings.append(f'M={m} baseline {half}->{total}, srps late drops 0')
    return ', '.join(findings)


def run_level(level: str, base: Optional[ScenarioConfig] = None, runs: int = 10, seed: int = 0,
              names=None) -> list[CheckResult]:
    return run_checks(Context(level=level, base=base or ScenarioConfig(), runs=runs, seed=seed), names)
