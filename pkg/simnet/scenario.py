"""
Scenario configuration: one frozen record per simulated setting.

Defaults follow the lab's standard input parameters (100 nodes, range 30 m,
40 kbps, one packet per 10 s, a new destination every 200 s). File keys are
the short symbols used in scenario files; ``CONFIG_KEYS`` maps them onto
fields.
"""
import math
from dataclasses import MISSING, dataclass, field, fields, replace
from enum import Enum
from typing import Any, Mapping, Optional

from adversary.exceptions import ProfileError
from adversary.profiles import AdversaryProfile, Behavior, Claim, TunnelMode, parse_behaviors
from crypto_core.constants import DEFAULT_MAX_GAP, HASH_BYTES
from protocol_engine.messages import RRP
from protocol_engine.params import ChallengeMode, MaintenancePolicy, ProtocolParams

from .exceptions import ConfigurationError
from .medium import MediumModel, PcMode
from .traffic import TrafficModel

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


@dataclass(frozen=True)
class ScenarioConfig:
    n_nodes: int = 100
    target_nb: float = 8.0
    range_r: float = 30.0
    gamma: int = 3
    beta: int = 5
    mu: float = 0.1
    xi: float = 1 / 200
    t_window: float = 200.0
    tau: float = 0.5
    route_timeout: float = 50.0
    bandwidth: float = 40.0
    m_malicious: int = 0

    # adversary
    behaviors: frozenset = field(default_factory=lambda: frozenset({Behavior.WORMHOLE, Behavior.DROP_DATA}))
    tunnel_mode: TunnelMode = TunnelMode.OUT_OF_BAND
    claim: Claim = Claim.LIE
    selective_fraction: float = 0.5
    drop_control: bool = False
    inject_interval: float = 10.0

    srps: bool = True
    horizon: float = 2000.0
    runs: int = 30
    master_seed: int = 0

    # protocol
    n_r: int = 5
    t_min: float = 0.05
    t_max: float = 0.25
    chain_length: int = 128
    snv_length: int = 64
    max_gap: int = DEFAULT_MAX_GAP
    forward_threshold: Optional[float] = None
    watch_capacity: int = 256
    processing_delay: float = 0.001
    data_size: int = 36
    discovery_timeout: float = 2.0
    maintenance_policy: MaintenancePolicy = MaintenancePolicy.ALTERNATE
    challenge_mode: ChallengeMode = ChallengeMode.OFF
    monitor_data: bool = True
    hw_ids: bool = False

    # medium
    pc_mode: PcMode = PcMode.FIXED
    pc: float = 0.01
    pc_slope: float = 0.05 / 3
    retries: int = 3

    topology_retries: int = 200

    def __post_init__(self):
        try:
            object.__setattr__(self, 'behaviors', frozenset(Behavior(b) for b in self.behaviors))
            for name in ('tunnel_mode', 'claim', 'maintenance_policy', 'challenge_mode', 'pc_mode'):
                enum = type(_DEFAULTS[name])
                object.__setattr__(self, name, enum(getattr(self, name)))
        except ValueError as e:
            raise ConfigurationError(str(e)) from e
        checks = (
            (self.n_nodes >= 2, 'n', 'at least two nodes are needed'),
            (0 <= self.m_malicious < self.n_nodes, 'm', 'malicious count must lie in [0, n)'),
            (self.range_r > 0, 'r', 'range must be positive'),
            (self.target_nb > 0, 'nb', 'neighbour count must be positive'),
            (self.gamma >= 1, 'gamma', 'gamma must be at least 1'),
            (self.beta >= 1, 'beta', 'beta must be at least 1'),
            (self.t_window > 0, 't', 'the accusation window must be positive'),
            (self.horizon > 0, 'horizon_s', 'horizon must be positive'),
            (self.runs >= 1, 'runs', 'at least one run is needed'),
            (0 <= self.t_min <= self.t_max, 't_min', 't_min must not exceed t_max'),
            (self.n_r >= 1, 'n_r', 'n_r must be at least 1'),
            (self.chain_length >= 2, 'chain_length', 'chain_length must be at least 2'),
            (self.data_size > 0, 'data_size', 'data_size must be positive'),
            (self.inject_interval > 0, 'adversary.inject_interval_s', 'injection interval must be positive'),
            (self.topology_retries >= 1, 'topology_retries', 'at least one placement attempt is needed'),
        )
        for ok, key, message in checks:
            if not ok:
                raise ConfigurationError(message, key=key)
        # validated here so a bad medium is reported before any run starts
        self.medium_model()
        self.traffic_model()

    # ------------------------------------------------------------ derived

    @property
    def density(self) -> float:
        return self.target_nb / (math.pi * self.range_r ** 2)

    @property
    def field_side(self) -> float:
        return math.sqrt(self.n_nodes / self.density)

    def medium_model(self) -> MediumModel:
        return MediumModel(p_c=self.pc, bandwidth=self.bandwidth, pc_mode=self.pc_mode,
                           pc_base=self.pc_slope, pc_anchor_nb=1.0, retries=self.retries).at_density(self.target_nb)

    def traffic_model(self) -> TrafficModel:
        return TrafficModel(self.mu, self.xi)

    def largest_frame(self) -> int:
        reply = RRP(sender=0, receiver=1, src=0, dst=1, sn=1, snv_value=bytes(HASH_BYTES), relay_to=2, heard_from=3)
        return max(reply.wire_size(), self.data_size)

    def resolved_forward_threshold(self) -> float:
        """
        Watch deadline: the key disclosure, two processing steps and every
        attempt of the forward and of the frame it answers.
        """
        if self.forward_threshold is not None:
            return self.forward_threshold
        params = ProtocolParams()
        tx = self.medium_model().transmission_delay(self.largest_frame())
        return params.disclosure_delay + 2 * self.processing_delay + (self.retries + 1) * 2 * tx

    def protocol_params(self) -> ProtocolParams:
        return ProtocolParams(
            srps_enabled=self.srps,
            t_min=self.t_min,
            t_max=self.t_max,
            n_r=self.n_r,
            chain_length=self.chain_length,
            snv_length=self.snv_length,
            max_gap=self.max_gap,
            processing_delay=self.processing_delay,
            forward_threshold=self.resolved_forward_threshold(),
            watch_capacity=self.watch_capacity,
            beta=self.beta,
            gamma=self.gamma,
            t_window=self.t_window,
            monitor_data=self.monitor_data,
            tau=self.tau,
            route_timeout=self.route_timeout,
            discovery_timeout=self.discovery_timeout,
            challenge_mode=self.challenge_mode,
            maintenance_policy=self.maintenance_policy,
        )

    def adversary_profile(self, colluders) -> AdversaryProfile:
        colluders = frozenset(colluders)
        if Behavior.WORMHOLE in self.behaviors and len(colluders) < 2:
            # a lone wormhole end has no tunnel and runs the protocol as written
            return AdversaryProfile(colluders=colluders)
        try:
            return AdversaryProfile(
                behaviors=self.behaviors,
                colluders=colluders,
                tunnel_mode=self.tunnel_mode,
                claim=self.claim,
                selective_fraction=self.selective_fraction,
                drop_control=self.drop_control,
            )
        except ProfileError as e:
            raise ConfigurationError(str(e), key='adversary.behaviors') from e

    # ------------------------------------------------------ config files

    @classmethod
    def coerce(cls, key: str, value: Any) -> dict[str, Any]:
        """Field values for one ``key = value`` binding."""
        name = CONFIG_KEYS.get(key)
        if name is None:
            raise ConfigurationError(f'unknown key {key!r}', key=key)
        if name == 'behaviors':
            try:
                behaviors, fraction = parse_behaviors(str(value))
            except ProfileError as e:
                raise ConfigurationError(str(e), key=key) from e
            values = {'behaviors': behaviors}
            if fraction is not None:
                values['selective_fraction'] = fraction
            return values
        default = _DEFAULTS[name]
        text = str(value).strip()
        try:
            if default is None:
                coerced = None if text.lower() in ('', 'none', 'auto') else float(text)
            elif isinstance(default, bool):
                lowered = text.lower()
                if lowered not in _TRUE | _FALSE:
                    raise ValueError(f'expected a boolean, got {text!r}')
                coerced = lowered in _TRUE
            elif isinstance(default, Enum):
                coerced = type(default)(text.lower())
            elif isinstance(default, int):
                number = float(text)
                if not number.is_integer():
                    raise ValueError(f'expected an integer, got {text!r}')
                coerced = int(number)
            else:
                coerced = float(text)
        except ValueError as e:
            raise ConfigurationError(f'bad value for {key}: {e}', key=key) from e
        return {name: coerced}

    def with_overrides(self, bindings: Mapping[str, Any]) -> 'ScenarioConfig':
        changes = {}
        for key, value in bindings.items():
            changes.update(self.coerce(key, value))
        return replace(self, **changes)

    def as_config(self) -> dict[str, Any]:
        """File-key view with plain values, in documented key order."""
        out = {}
        for key, name in CONFIG_KEYS.items():
            value = getattr(self, name)
            if name == 'behaviors':
                value = ','.join(sorted(b.value for b in value)) or 'none'
            elif isinstance(value, Enum):
                value = value.value
            out[key] = value
        return out


_DEFAULTS = {f.name: (f.default_factory() if f.default_factory is not MISSING else f.default)
             for f in fields(ScenarioConfig)}

CONFIG_KEYS = {
    'n': 'n_nodes',
    'nb': 'target_nb',
    'r': 'range_r',
    'gamma': 'gamma',
    'beta': 'beta',
    'mu': 'mu',
    'xi': 'xi',
    't': 't_window',
    'tau': 'tau',
    'route_timeout_s': 'route_timeout',
    'bw_kbps': 'bandwidth',
    'm': 'm_malicious',
    'runs': 'runs',
    'seed': 'master_seed',
    'srps': 'srps',
    'horizon_s': 'horizon',
    'n_r': 'n_r',
    't_min': 't_min',
    't_max': 't_max',
    'chain_length': 'chain_length',
    'snv_length': 'snv_length',
    'max_gap': 'max_gap',
    'forward_threshold_s': 'forward_threshold',
    'watch_capacity': 'watch_capacity',
    'processing_delay_s': 'processing_delay',
    'data_size': 'data_size',
    'discovery_timeout_s': 'discovery_timeout',
    'maintenance_policy': 'maintenance_policy',
    'challenge_mode': 'challenge_mode',
    'monitor_data': 'monitor_data',
    'hw_ids': 'hw_ids',
    'medium.pc_mode': 'pc_mode',
    'medium.pc': 'pc',
    'medium.pc_slope': 'pc_slope',
    'medium.retries': 'retries',
    'adversary.behaviors': 'behaviors',
    'adversary.tunnel_mode': 'tunnel_mode',
    'adversary.claim': 'claim',
    'adversary.selective_fraction': 'selective_fraction',
    'adversary.drop_control': 'drop_control',
    'adversary.inject_interval_s': 'inject_interval',
}
