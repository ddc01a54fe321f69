from dataclasses import dataclass
from enum import Enum

from crypto_core.constants import DEFAULT_MAX_GAP


class ChallengeMode(str, Enum):
    OFF = 'off'
    VERSION2 = 'version2'
    ON_DEMAND = 'on_demand'


class MaintenancePolicy(str, Enum):
    ALTERNATE = 'alternate'
    REDISCOVER = 'rediscover'
    LOCAL_REPAIR = 'local_repair'


@dataclass(frozen=True)
class ProtocolParams:
    """Knobs of one node's protocol behaviour; defaults are the lab's documented choices."""
    srps_enabled: bool = True

    # Wait-while-collect
    t_min: float = 0.05
    t_max: float = 0.25
    n_r: int = 5

    # Chains
    chain_length: int = 4096
    snv_length: int = 64
    max_gap: int = DEFAULT_MAX_GAP

    # Delays
    processing_delay: float = 0.001
    disclosure_delay: float = 0.01
    held_timeout: float = 0.5

    # Neighbour watch
    forward_threshold: float = 0.05
    watch_capacity: int = 256
    beta: int = 5
    gamma: int = 3
    t_window: float = 200.0
    monitor_data: bool = True

    # Discovery and maintenance
    tau: float = 0.5
    route_timeout: float = 50.0
    discovery_timeout: float = 2.0
    challenge_mode: ChallengeMode = ChallengeMode.OFF
    maintenance_policy: MaintenancePolicy = MaintenancePolicy.ALTERNATE
    max_replies: int = 5
    error_interval: float = 1.0
    queue_limit: int = 64

    # Baseline flooding: first-heard copy, rebroadcast after a short jitter
    baseline_jitter: float = 0.01

    def wait_time(self, rng) -> float:
        if not self.srps_enabled:
            return float(rng.uniform(0.0, self.baseline_jitter))
        return float(rng.uniform(self.t_min, self.t_max))
